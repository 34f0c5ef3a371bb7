//! Five-way ID/OOD node partitions driven by a splitting factor.
//!
//! Nodes are ordered by ascending `(sigma, node id)`. The leading
//! `round(id_fraction * n)` nodes are in-distribution and get shuffled into
//! Train / ValidIn / TestIn; the rest stay in order and are cut into
//! ValidOut (less shifted) followed by TestOut (most shifted). Subset sizes
//! come from largest-remainder apportionment, so every size is within one
//! of its fractional target and the sizes always sum to `n`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::metrics::{ShiftType, SigmaProvenance, SigmaScores};

pub const SPLIT_FORMAT_VERSION: &str = "1";

/// Generator and shuffle used for the in-distribution permutation. Any
/// implementation reproducing this description reproduces the splits.
pub const SPLIT_PRNG: &str =
    "ChaCha8 (rand_chacha 0.3, seed_from_u64); Fisher-Yates from the last index down, j = next_u64() mod (i + 1)";

const FRACTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    ValidIn,
    TestIn,
    ValidOut,
    TestOut,
}

impl Subset {
    pub const ALL: [Subset; 5] = [
        Subset::Train,
        Subset::ValidIn,
        Subset::TestIn,
        Subset::ValidOut,
        Subset::TestOut,
    ];

    pub fn is_id(self) -> bool {
        matches!(self, Subset::Train | Subset::ValidIn | Subset::TestIn)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::ValidIn => "valid_in",
            Subset::TestIn => "test_in",
            Subset::ValidOut => "valid_out",
            Subset::TestOut => "test_out",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Subset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Subset sizes as fractions of all nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub id_fraction: f64,
    pub train: f64,
    pub valid_in: f64,
    pub test_in: f64,
    pub valid_out: f64,
    pub test_out: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig::with_id_fraction(0.5, 0)
    }
}

impl SplitConfig {
    /// Keeps Train:ValidIn:TestIn at 3:1:1 and ValidOut:TestOut at 1:4.
    pub fn with_id_fraction(id_fraction: f64, seed: u64) -> Self {
        let ood = 1.0 - id_fraction;
        SplitConfig {
            id_fraction,
            train: 0.6 * id_fraction,
            valid_in: 0.2 * id_fraction,
            test_in: 0.2 * id_fraction,
            valid_out: 0.2 * ood,
            test_out: 0.8 * ood,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("id_fraction", self.id_fraction),
            ("train", self.train),
            ("valid_in", self.valid_in),
            ("test_in", self.test_in),
            ("valid_out", self.valid_out),
            ("test_out", self.test_out),
        ];
        for (name, f) in fractions {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {f}"
                )));
            }
        }
        let id_sum = self.train + self.valid_in + self.test_in;
        if (id_sum - self.id_fraction).abs() > FRACTION_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "train + valid_in + test_in = {id_sum} but id_fraction = {}",
                self.id_fraction
            )));
        }
        let ood_sum = self.valid_out + self.test_out;
        if (ood_sum - (1.0 - self.id_fraction)).abs() > FRACTION_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "valid_out + test_out = {ood_sum} but 1 - id_fraction = {}",
                1.0 - self.id_fraction
            )));
        }
        Ok(())
    }
}

/// Split provenance stored alongside the partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMetadata {
    pub version: String,
    pub toolkit_version: String,
    pub num_nodes: usize,
    pub shift_type: ShiftType,
    pub config: SplitConfig,
    pub prng: String,
    pub sigma_provenance: SigmaProvenance,
    /// Free-form entries added by callers, e.g. the run configuration hash.
    pub annotations: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    subsets: Vec<Subset>,
    pub metadata: SplitMetadata,
}

impl SplitAssignment {
    pub fn num_nodes(&self) -> usize {
        self.subsets.len()
    }

    pub fn subset(&self, node: usize) -> Subset {
        self.subsets[node]
    }

    pub fn subsets(&self) -> &[Subset] {
        &self.subsets
    }

    /// Nodes of `subset` in ascending id order.
    pub fn nodes(&self, subset: Subset) -> Vec<usize> {
        (0..self.subsets.len())
            .filter(|&i| self.subsets[i] == subset)
            .collect()
    }

    pub fn id_nodes(&self) -> Vec<usize> {
        (0..self.subsets.len())
            .filter(|&i| self.subsets[i].is_id())
            .collect()
    }

    pub fn ood_nodes(&self) -> Vec<usize> {
        (0..self.subsets.len())
            .filter(|&i| !self.subsets[i].is_id())
            .collect()
    }

    /// Sizes in [`Subset::ALL`] order.
    pub fn sizes(&self) -> [usize; 5] {
        let mut sizes = [0; 5];
        for s in &self.subsets {
            sizes[s.index()] += 1;
        }
        sizes
    }

    /// Checks that every ID node precedes every OOD node and every ValidOut
    /// node precedes every TestOut node in the `(sigma, id)` order.
    pub fn check_ordering(&self, sigma: &[f64]) -> std::result::Result<(), String> {
        if sigma.len() != self.subsets.len() {
            return Err(format!(
                "sigma covers {} nodes, split {}",
                sigma.len(),
                self.subsets.len()
            ));
        }
        let order = crate::metrics::ascending_order(sigma);
        let mut phase = 0u8;
        for &node in &order {
            let rank = match self.subsets[node] {
                s if s.is_id() => 0,
                Subset::ValidOut => 1,
                _ => 2,
            };
            if rank < phase {
                return Err(format!(
                    "node {node} ({}) is out of sigma order",
                    self.subsets[node]
                ));
            }
            phase = rank;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = SplitFile::from(self);
        serde_json::to_string_pretty(&file).expect("split serializes") + "\n"
    }

    pub fn from_json(text: &str, source: &Path, expected_nodes: Option<usize>) -> Result<Self> {
        let file: SplitFile = serde_json::from_str(text).map_err(|e| Error::json(source, e))?;
        if file.version != SPLIT_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: file.version,
                expected: SPLIT_FORMAT_VERSION.into(),
            });
        }
        let n = file.num_nodes;
        if let Some(expected) = expected_nodes {
            if expected != n {
                return Err(Error::NodeCountMismatch { expected, found: n });
            }
        }
        let lists = [
            (Subset::Train, &file.subsets.train),
            (Subset::ValidIn, &file.subsets.valid_in),
            (Subset::TestIn, &file.subsets.test_in),
            (Subset::ValidOut, &file.subsets.valid_out),
            (Subset::TestOut, &file.subsets.test_out),
        ];
        let listed: usize = lists.iter().map(|(_, l)| l.len()).sum();
        if listed != n {
            return Err(Error::NodeCountMismatch {
                expected: n,
                found: listed,
            });
        }
        let mut subsets: Vec<Option<Subset>> = vec![None; n];
        for (subset, list) in lists {
            for &node in list {
                let slot = subsets.get_mut(node as usize).ok_or_else(|| {
                    Error::MalformedSplit(format!("node {node} out of range for {n} nodes"))
                })?;
                if slot.replace(subset).is_some() {
                    return Err(Error::MalformedSplit(format!("node {node} listed twice")));
                }
            }
        }
        let subsets = subsets
            .into_iter()
            .map(|s| s.expect("count matches and no duplicates"))
            .collect();
        let f = file.config;
        let config = SplitConfig {
            id_fraction: f.id_fraction,
            train: f.train,
            valid_in: f.valid_in,
            test_in: f.test_in,
            valid_out: f.valid_out,
            test_out: f.test_out,
            seed: file.seed,
        };
        Ok(SplitAssignment {
            subsets,
            metadata: SplitMetadata {
                version: file.version,
                toolkit_version: file.toolkit_version,
                num_nodes: n,
                shift_type: file.shift_type,
                config,
                prng: file.prng,
                sigma_provenance: file.sigma_provenance,
                annotations: file.annotations,
            },
        })
    }

    /// Writes `node_id,subset` rows after a header row, with `preamble`
    /// lines first as `#` comments.
    pub fn to_csv(&self, preamble: &[String]) -> String {
        let mut out = String::new();
        for line in preamble {
            out.push_str(&format!("# {line}\n"));
        }
        out.push_str("node_id,subset\n");
        for (i, s) in self.subsets.iter().enumerate() {
            out.push_str(&format!("{i},{s}\n"));
        }
        out
    }
}

pub fn write_split(split: &SplitAssignment, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(split.to_json().as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads a split file; with `expected_nodes`, also checks it against the
/// size of the graph it will be used with.
pub fn read_split(
    path: impl AsRef<Path>,
    expected_nodes: Option<usize>,
) -> Result<SplitAssignment> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SplitAssignment::from_json(&text, path, expected_nodes)
}

#[derive(Serialize, Deserialize)]
struct SplitFractions {
    id_fraction: f64,
    train: f64,
    valid_in: f64,
    test_in: f64,
    valid_out: f64,
    test_out: f64,
}

#[derive(Serialize, Deserialize)]
struct SubsetLists {
    train: Vec<NodeId>,
    valid_in: Vec<NodeId>,
    test_in: Vec<NodeId>,
    valid_out: Vec<NodeId>,
    test_out: Vec<NodeId>,
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    version: String,
    toolkit_version: String,
    shift_type: ShiftType,
    num_nodes: usize,
    config: SplitFractions,
    seed: u64,
    prng: String,
    sigma_provenance: SigmaProvenance,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    annotations: BTreeMap<String, serde_json::Value>,
    subsets: SubsetLists,
}

impl From<&SplitAssignment> for SplitFile {
    fn from(split: &SplitAssignment) -> Self {
        let list = |s| split.nodes(s).into_iter().map(|i| i as NodeId).collect();
        let m = &split.metadata;
        SplitFile {
            version: m.version.clone(),
            toolkit_version: m.toolkit_version.clone(),
            shift_type: m.shift_type,
            num_nodes: m.num_nodes,
            config: SplitFractions {
                id_fraction: m.config.id_fraction,
                train: m.config.train,
                valid_in: m.config.valid_in,
                test_in: m.config.test_in,
                valid_out: m.config.valid_out,
                test_out: m.config.test_out,
            },
            seed: m.config.seed,
            prng: m.prng.clone(),
            sigma_provenance: m.sigma_provenance.clone(),
            annotations: m.annotations.clone(),
            subsets: SubsetLists {
                train: list(Subset::Train),
                valid_in: list(Subset::ValidIn),
                test_in: list(Subset::TestIn),
                valid_out: list(Subset::ValidOut),
                test_out: list(Subset::TestOut),
            },
        }
    }
}

/// Distributes `total` items over `weights` by largest remainder. Equal
/// remainders favor the later entry, so leftovers drift towards the end.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if total == 0 {
        return vec![0; weights.len()];
    }
    if sum.is_nan() || sum <= 0.0 {
        let mut sizes = vec![0; weights.len()];
        *sizes.last_mut().unwrap() = total;
        return sizes;
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut by_remainder: Vec<usize> = (0..weights.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(b.cmp(&a))
    });
    for &i in by_remainder
        .iter()
        .cycle()
        .take(total.saturating_sub(assigned))
    {
        sizes[i] += 1;
    }
    sizes
}

/// Sizes of the five subsets for `n` nodes, in [`Subset::ALL`] order.
pub fn subset_sizes(n: usize, config: &SplitConfig) -> [usize; 5] {
    let n_id = ((config.id_fraction * n as f64).round() as usize).min(n);
    let id = largest_remainder(n_id, &[config.train, config.valid_in, config.test_in]);
    let ood = largest_remainder(n - n_id, &[config.valid_out, config.test_out]);
    [id[0], id[1], id[2], ood[0], ood[1]]
}

fn shuffle(nodes: &mut [usize], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..nodes.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        nodes.swap(i, j);
    }
}

pub fn generate_split(sigma: &SigmaScores, config: &SplitConfig) -> Result<SplitAssignment> {
    config.validate()?;
    let n = sigma.len();
    let sizes = subset_sizes(n, config);
    for (subset, &size) in Subset::ALL.iter().zip(&sizes) {
        if size == 0 {
            log::warn!("split of {n} nodes leaves {subset} empty");
        }
    }

    let order = sigma.ascending_order();
    let n_id = sizes[0] + sizes[1] + sizes[2];
    let mut id_part = order[..n_id].to_vec();
    shuffle(&mut id_part, config.seed);

    let mut subsets = vec![Subset::TestOut; n];
    let mut cursor = 0;
    for (&subset, &size) in Subset::ALL[..3].iter().zip(&sizes[..3]) {
        for &node in &id_part[cursor..cursor + size] {
            subsets[node] = subset;
        }
        cursor += size;
    }
    for &node in &order[n_id..n_id + sizes[3]] {
        subsets[node] = Subset::ValidOut;
    }

    Ok(SplitAssignment {
        subsets,
        metadata: SplitMetadata {
            version: SPLIT_FORMAT_VERSION.into(),
            toolkit_version: env!("CARGO_PKG_VERSION").into(),
            num_nodes: n,
            shift_type: sigma.shift_type,
            config: *config,
            prng: SPLIT_PRNG.into(),
            sigma_provenance: sigma.provenance.clone(),
            annotations: BTreeMap::new(),
        },
    })
}
