//! How a split shifts class balance, degrees and pairwise distances.
//!
//! Pairwise distances are measured in the whole graph, so a path between two
//! ID nodes may pass through OOD nodes.

use std::collections::HashSet;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeLabels};
use crate::metrics::{bfs_distances, ShiftType, UNREACHABLE};
use crate::split::{SplitAssignment, Subset};

pub const DEFAULT_MAX_PAIRS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Id,
    Ood,
}

impl Part {
    pub fn nodes(self, split: &SplitAssignment) -> Vec<usize> {
        match self {
            Part::Id => split.id_nodes(),
            Part::Ood => split.ood_nodes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBalance {
    /// A subset name, or `id` / `ood` for the two parts.
    pub group: String,
    pub count: usize,
    /// `None` for an empty group.
    pub frequencies: Option<Vec<f64>>,
}

fn balance_of(group: &str, nodes: &[usize], labels: &NodeLabels) -> ClassBalance {
    let frequencies = if nodes.is_empty() {
        None
    } else {
        let mut counts = vec![0usize; labels.num_classes()];
        for &i in nodes {
            counts[labels.get(i)] += 1;
        }
        Some(
            counts
                .iter()
                .map(|&c| c as f64 / nodes.len() as f64)
                .collect(),
        )
    };
    ClassBalance {
        group: group.into(),
        count: nodes.len(),
        frequencies,
    }
}

/// Class frequencies for each of the five subsets followed by the ID and
/// OOD parts.
pub fn class_balance(labels: &NodeLabels, split: &SplitAssignment) -> Result<Vec<ClassBalance>> {
    if labels.len() != split.num_nodes() {
        return Err(Error::NodeCountMismatch {
            expected: split.num_nodes(),
            found: labels.len(),
        });
    }
    let mut out: Vec<ClassBalance> = Subset::ALL
        .iter()
        .map(|&s| balance_of(s.as_str(), &split.nodes(s), labels))
        .collect();
    out.push(balance_of("id", &split.id_nodes(), labels));
    out.push(balance_of("ood", &split.ood_nodes(), labels));
    Ok(out)
}

/// Degree histograms over power-of-two bins: `[0, 1), [1, 2), [2, 4), ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeDistribution {
    /// `bin_edges[k]..bin_edges[k + 1]` is bin `k`.
    pub bin_edges: Vec<usize>,
    pub id: Vec<u64>,
    pub ood: Vec<u64>,
}

impl DegreeDistribution {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("degree_from,degree_to,id,ood\n");
        for k in 0..self.id.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.bin_edges[k],
                self.bin_edges[k + 1],
                self.id[k],
                self.ood[k]
            ));
        }
        out
    }
}

fn degree_bin(d: usize) -> usize {
    if d == 0 {
        0
    } else {
        1 + d.ilog2() as usize
    }
}

pub fn degree_distribution(graph: &Graph, split: &SplitAssignment) -> DegreeDistribution {
    let max_degree = (0..graph.num_nodes())
        .map(|i| graph.degree(i))
        .max()
        .unwrap_or(0);
    let bins = degree_bin(max_degree) + 1;
    let mut bin_edges = vec![0];
    bin_edges.extend((0..bins).map(|k| 1usize << k));
    let mut id = vec![0u64; bins];
    let mut ood = vec![0u64; bins];
    for node in 0..graph.num_nodes() {
        let bin = degree_bin(graph.degree(node));
        if split.subset(node).is_id() {
            id[bin] += 1;
        } else {
            ood[bin] += 1;
        }
    }
    DegreeDistribution { bin_edges, id, ood }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    pub part: Part,
    pub mode: DistanceMode,
    pub part_size: usize,
    /// Pairs measured: all of them in exact mode, the sample size otherwise.
    pub pairs: u64,
    pub seed: u64,
    /// `counts[h]` pairs at `h` hops.
    pub counts: Vec<u64>,
    pub unreachable: u64,
    /// Mean hop distance over reachable pairs.
    pub mean: Option<f64>,
}

impl DistanceHistogram {
    fn from_counts(
        part: Part,
        mode: DistanceMode,
        part_size: usize,
        seed: u64,
        counts: Vec<u64>,
        unreachable: u64,
    ) -> Self {
        let reachable: u64 = counts.iter().sum();
        let mean = (reachable > 0).then(|| {
            let total: u64 = counts.iter().enumerate().map(|(h, &c)| h as u64 * c).sum();
            total as f64 / reachable as f64
        });
        DistanceHistogram {
            part,
            mode,
            part_size,
            pairs: reachable + unreachable,
            seed,
            counts,
            unreachable,
            mean,
        }
    }
}

fn add_distance(counts: &mut Vec<u64>, unreachable: &mut u64, d: u32) {
    if d == UNREACHABLE {
        *unreachable += 1;
    } else {
        let d = d as usize;
        if counts.len() <= d {
            counts.resize(d + 1, 0);
        }
        counts[d] += 1;
    }
}

fn merge(mut a: (Vec<u64>, u64), b: (Vec<u64>, u64)) -> (Vec<u64>, u64) {
    if a.0.len() < b.0.len() {
        a.0.resize(b.0.len(), 0);
    }
    for (x, y) in a.0.iter_mut().zip(&b.0) {
        *x += y;
    }
    (a.0, a.1 + b.1)
}

/// Start of row `a` in the row-major enumeration of pairs `a < b` over `p`
/// items.
fn pair_offset(a: u64, p: u64) -> u64 {
    a * p - a * (a + 1) / 2
}

fn decode_pair(k: u64, p: u64) -> (usize, usize) {
    let (mut lo, mut hi) = (0u64, p - 2);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if pair_offset(mid, p) <= k {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let b = lo + 1 + (k - pair_offset(lo, p));
    (lo as usize, b as usize)
}

/// Floyd's algorithm: `k` distinct values from `0..m`, sorted.
fn sample_distinct(m: u64, k: u64, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = HashSet::with_capacity(k as usize);
    for j in m - k..m {
        let t = rng.next_u64() % (j + 1);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    let mut out: Vec<u64> = chosen.into_iter().collect();
    out.sort_unstable();
    out
}

/// Histogram of hop distances between distinct nodes of `part`. All pairs
/// are measured when there are at most `max_pairs` of them; otherwise
/// `max_pairs` distinct pairs are drawn uniformly with `seed` before any
/// distance is computed.
pub fn distance_distribution(
    graph: &Graph,
    split: &SplitAssignment,
    part: Part,
    max_pairs: u64,
    seed: u64,
) -> Result<DistanceHistogram> {
    let nodes = part.nodes(split);
    if nodes.is_empty() {
        return Err(Error::EmptySet(format!("{part:?} part")));
    }
    let p = nodes.len() as u64;
    let total_pairs = p * (p - 1) / 2;

    if total_pairs <= max_pairs {
        let (counts, unreachable) = (0..nodes.len())
            .into_par_iter()
            .map(|a| {
                let dist = bfs_distances(graph, nodes[a]).expect("part nodes are in the graph");
                let mut local = (Vec::new(), 0u64);
                for &b in &nodes[a + 1..] {
                    add_distance(&mut local.0, &mut local.1, dist[b]);
                }
                local
            })
            .reduce(|| (Vec::new(), 0), merge);
        return Ok(DistanceHistogram::from_counts(
            part,
            DistanceMode::Exact,
            nodes.len(),
            seed,
            counts,
            unreachable,
        ));
    }

    let sample = sample_distinct(total_pairs, max_pairs, seed);
    // Group targets by source so every source needs one BFS.
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for k in sample {
        let (a, b) = decode_pair(k, p);
        match groups.last_mut() {
            Some((src, targets)) if *src == a => targets.push(b),
            _ => groups.push((a, vec![b])),
        }
    }
    let (counts, unreachable) = groups
        .par_iter()
        .map(|(a, targets)| {
            let dist = bfs_distances(graph, nodes[*a]).expect("part nodes are in the graph");
            let mut local = (Vec::new(), 0u64);
            for &b in targets {
                add_distance(&mut local.0, &mut local.1, dist[nodes[b]]);
            }
            local
        })
        .reduce(|| (Vec::new(), 0), merge);
    Ok(DistanceHistogram::from_counts(
        part,
        DistanceMode::Sampled,
        nodes.len(),
        seed,
        counts,
        unreachable,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub shift_type: ShiftType,
    pub num_nodes: usize,
    pub subset_sizes: Vec<(Subset, usize)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub class_balance: Option<Vec<ClassBalance>>,
    pub degree: DegreeDistribution,
    pub distance_id: DistanceHistogram,
    pub distance_ood: DistanceHistogram,
    pub mean_distance_id: Option<f64>,
    pub mean_distance_ood: Option<f64>,
}

impl ShiftReport {
    pub fn distance_csv(&self) -> String {
        let len = self
            .distance_id
            .counts
            .len()
            .max(self.distance_ood.counts.len());
        let mut out = String::from("hops,id,ood\n");
        for h in 0..len {
            let id = self.distance_id.counts.get(h).copied().unwrap_or(0);
            let ood = self.distance_ood.counts.get(h).copied().unwrap_or(0);
            out.push_str(&format!("{h},{id},{ood}\n"));
        }
        out.push_str(&format!(
            "unreachable,{},{}\n",
            self.distance_id.unreachable, self.distance_ood.unreachable
        ));
        out
    }
}

pub fn analyze(
    graph: &Graph,
    labels: Option<&NodeLabels>,
    split: &SplitAssignment,
    max_pairs: u64,
    seed: u64,
) -> Result<ShiftReport> {
    if graph.num_nodes() != split.num_nodes() {
        return Err(Error::NodeCountMismatch {
            expected: graph.num_nodes(),
            found: split.num_nodes(),
        });
    }
    let class_balance = labels.map(|l| class_balance(l, split)).transpose()?;
    let distance_id = distance_distribution(graph, split, Part::Id, max_pairs, seed)?;
    let distance_ood = distance_distribution(graph, split, Part::Ood, max_pairs, seed)?;
    Ok(ShiftReport {
        shift_type: split.metadata.shift_type,
        num_nodes: graph.num_nodes(),
        subset_sizes: Subset::ALL.iter().copied().zip(split.sizes()).collect(),
        class_balance,
        degree: degree_distribution(graph, split),
        mean_distance_id: distance_id.mean,
        mean_distance_ood: distance_ood.mean,
        distance_id,
        distance_ood,
    })
}
