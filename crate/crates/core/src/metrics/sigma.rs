//! Splitting factors: nodes with the smallest sigma form the
//! in-distribution part.
//!
//! * popularity: `sigma = -PageRank` with uniform restart
//! * locality: `sigma = -PPR`, restarting at the node of highest PageRank
//! * density: `sigma = -local clustering coefficient`

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{local_clustering, pagerank, PageRankConfig, Personalization};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftType {
    Popularity,
    Locality,
    Density,
}

impl ShiftType {
    pub const ALL: [ShiftType; 3] = [
        ShiftType::Popularity,
        ShiftType::Locality,
        ShiftType::Density,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ShiftType::Popularity => "popularity",
            ShiftType::Locality => "locality",
            ShiftType::Density => "density",
        }
    }
}

impl fmt::Display for ShiftType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShiftType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "popularity" => Ok(ShiftType::Popularity),
            "locality" => Ok(ShiftType::Locality),
            "density" => Ok(ShiftType::Density),
            other => Err(Error::InvalidConfig(format!(
                "unknown shift type {other:?}"
            ))),
        }
    }
}

/// Everything needed to recompute a set of sigma values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaProvenance {
    pub shift_type: ShiftType,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_iterations: Option<usize>,
    /// Iterations of the power iteration that produced sigma.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub residual: Option<f64>,
    /// Locality only: iterations of the global PageRank used to pick the
    /// restart node.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub restart_selection_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub restart_node: Option<NodeId>,
}

impl SigmaProvenance {
    fn bare(shift_type: ShiftType) -> Self {
        SigmaProvenance {
            shift_type,
            alpha: None,
            tolerance: None,
            max_iterations: None,
            iterations: None,
            residual: None,
            restart_selection_iterations: None,
            restart_node: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaScores {
    pub values: Vec<f64>,
    pub shift_type: ShiftType,
    pub provenance: SigmaProvenance,
}

impl SigmaScores {
    pub fn new(values: Vec<f64>, provenance: SigmaProvenance) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma of node {i} is not finite"
            )));
        }
        Ok(SigmaScores {
            values,
            shift_type: provenance.shift_type,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ascending_order(&self) -> Vec<usize> {
        ascending_order(&self.values)
    }

    /// Writes `node_id,sigma,shift_type` rows after a header row. Lines in
    /// `preamble` are emitted first as `#` comments.
    pub fn write_csv(&self, path: impl AsRef<Path>, preamble: &[String]) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
            for line in preamble {
                writeln!(out, "# {line}")?;
            }
            writeln!(out, "node_id,sigma,shift_type")?;
            for (i, v) in self.values.iter().enumerate() {
                writeln!(out, "{i},{v},{}", self.shift_type)?;
            }
            out.flush()
        };
        write(&mut out).map_err(|e| Error::io(path, e))
    }
}

/// Reads values written by [`SigmaScores::write_csv`]. Values are printed in
/// shortest round-trip form, so they come back bit-identical.
pub fn read_sigma_csv(path: impl AsRef<Path>, provenance: SigmaProvenance) -> Result<SigmaScores> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.into(),
        line,
        message,
    };
    let mut header_seen = false;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line.trim() == "node_id,sigma,shift_type" {
                continue;
            }
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(
                line_no,
                "expected node_id,sigma,shift_type".into(),
            ));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad node id {:?}", fields[0])))?;
        if id != values.len() {
            return Err(parse_err(
                line_no,
                format!("expected node {}, found {id}", values.len()),
            ));
        }
        let v: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad sigma {:?}", fields[1])))?;
        let shift: ShiftType = fields[2].parse()?;
        if shift != provenance.shift_type {
            return Err(parse_err(
                line_no,
                format!(
                    "shift type {shift} does not match {}",
                    provenance.shift_type
                ),
            ));
        }
        values.push(v);
    }
    SigmaScores::new(values, provenance)
}

/// Node indices sorted by ascending value, ties broken by node id.
pub fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .expect("sigma values are finite")
            .then(a.cmp(&b))
    });
    order
}

/// Index of the largest value, the smallest index among ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

// Adding +0.0 turns -0.0 into +0.0 so zero scores print as "0".
fn negate(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| -v + 0.0).collect()
}

/// Computes sigma for `shift_type`. The personalization in `config` is
/// ignored; popularity always restarts uniformly and locality always at the
/// PageRank argmax.
pub fn sigma_scores(
    graph: &Graph,
    shift_type: ShiftType,
    config: &PageRankConfig,
) -> Result<SigmaScores> {
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let uniform = PageRankConfig {
        personalization: Personalization::Uniform,
        ..*config
    };
    let mut provenance = SigmaProvenance::bare(shift_type);
    let values = match shift_type {
        ShiftType::Popularity | ShiftType::Locality => {
            provenance.alpha = Some(config.alpha);
            provenance.tolerance = Some(config.tolerance);
            provenance.max_iterations = Some(config.max_iterations);
            let global = pagerank(graph, &uniform)?;
            if shift_type == ShiftType::Popularity {
                provenance.iterations = Some(global.iterations);
                provenance.residual = Some(global.residual);
                negate(&global.scores)
            } else {
                let restart = argmax(&global.scores) as NodeId;
                let local = pagerank(
                    graph,
                    &PageRankConfig {
                        personalization: Personalization::OneHot(restart),
                        ..uniform
                    },
                )?;
                provenance.restart_selection_iterations = Some(global.iterations);
                provenance.restart_node = Some(restart);
                provenance.iterations = Some(local.iterations);
                provenance.residual = Some(local.residual);
                negate(&local.scores)
            }
        }
        ShiftType::Density => negate(&local_clustering(graph)),
    };
    SigmaScores::new(values, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k4_popularity() {
        let g = Graph::from_edges(4, (0..4u32).flat_map(|u| (u + 1..4).map(move |v| (u, v))));
        let s = sigma_scores(&g, ShiftType::Popularity, &PageRankConfig::default()).unwrap();
        for v in &s.values {
            assert!((v + 0.25).abs() < 1e-12);
        }
        assert_eq!(s.provenance.alpha, Some(0.15));
        assert!(s.provenance.iterations.is_some());
    }

    #[test]
    fn star_locality_restarts_at_center() {
        let g = Graph::from_edges(7, (1..7u32).map(|leaf| (0, leaf)));
        let s = sigma_scores(&g, ShiftType::Locality, &PageRankConfig::default()).unwrap();
        assert_eq!(s.provenance.restart_node, Some(0));
        assert_eq!(s.ascending_order()[0], 0);
        assert!(s.values[1..].iter().all(|&v| v > s.values[0]));
    }

    #[test]
    fn locality_restart_ties_pick_smallest_id() {
        let g = Graph::from_edges(5, (0..5u32).map(|i| (i, (i + 1) % 5)));
        let s = sigma_scores(&g, ShiftType::Locality, &PageRankConfig::default()).unwrap();
        assert_eq!(s.provenance.restart_node, Some(0));
    }

    #[test]
    fn triangle_plus_pendant_density() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 0), (2, 3)]);
        let s = sigma_scores(&g, ShiftType::Density, &PageRankConfig::default()).unwrap();
        let max = s.values.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(s.values[3], max);
        assert_eq!(s.values[3].to_bits(), 0.0f64.to_bits());
        assert_eq!(s.provenance.alpha, None);
    }

    #[test]
    fn ascending_order_breaks_ties_by_id() {
        assert_eq!(ascending_order(&[1.0, 0.0, 1.0, 0.0]), vec![1, 3, 0, 2]);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (2, 5)]);
        let s = sigma_scores(&g, ShiftType::Popularity, &PageRankConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sigma.csv");
        s.write_csv(&path, &["config_hash=abc".into()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config_hash=abc\nnode_id,sigma,shift_type\n0,"));
        let back = read_sigma_csv(&path, s.provenance.clone()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn shift_type_parsing() {
        assert_eq!("Density".parse::<ShiftType>().unwrap(), ShiftType::Density);
        assert!("degree".parse::<ShiftType>().is_err());
    }
}
