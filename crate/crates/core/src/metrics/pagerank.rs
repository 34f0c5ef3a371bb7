//! PageRank and Personalized PageRank by power iteration.
//!
//! The iteration solves `pi = (1 - alpha) * A * D^-1 * pi + alpha * p` for
//! an undirected graph. Degree-0 nodes have no outgoing transitions; their
//! mass is sent back through the personalization vector every step, so `pi`
//! stays a probability distribution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Personalization {
    Uniform,
    OneHot(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageRankConfig {
    /// Restart probability.
    pub alpha: f64,
    /// L1 distance between consecutive iterates at which to stop.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub personalization: Personalization,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        PageRankConfig {
            alpha: 0.15,
            tolerance: 1e-10,
            max_iterations: 1000,
            personalization: Personalization::Uniform,
        }
    }
}

impl PageRankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Converged distribution together with how it was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct PageRank {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub fn pagerank(graph: &Graph, config: &PageRankConfig) -> Result<PageRank> {
    config.validate()?;
    let n = graph.num_nodes();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let restart = match config.personalization {
        Personalization::Uniform => None,
        Personalization::OneHot(node) => {
            graph.check_node(node as usize)?;
            Some(node as usize)
        }
    };
    let p = |i: usize| -> f64 {
        match restart {
            None => 1.0 / n as f64,
            Some(r) if r == i => 1.0,
            Some(_) => 0.0,
        }
    };

    let alpha = config.alpha;
    let degrees = graph.degrees();
    let mut pi: Vec<f64> = (0..n).map(p).collect();
    let mut share = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;

    for iteration in 1..=config.max_iterations {
        let mut dangling = 0.0;
        for ((s, &mass), &d) in share.iter_mut().zip(&pi).zip(&degrees) {
            if d == 0 {
                dangling += mass;
                *s = 0.0;
            } else {
                *s = mass / d as f64;
            }
        }
        let teleport = (1.0 - alpha) * dangling + alpha;
        // Per-node sums run in neighbor order, so the result does not depend
        // on how rayon schedules the nodes.
        next.par_iter_mut().enumerate().for_each(|(i, out)| {
            let incoming: f64 = graph.neighbors(i).iter().map(|&j| share[j as usize]).sum();
            *out = (1.0 - alpha) * incoming + teleport * p(i);
        });
        residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if residual < config.tolerance {
            return Ok(PageRank {
                scores: pi,
                iterations: iteration,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: config.max_iterations,
        residual,
    })
}

/// PageRank whose walk always restarts at `restart_node`.
pub fn personalized_pagerank(
    graph: &Graph,
    restart_node: NodeId,
    alpha: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<PageRank> {
    pagerank(
        graph,
        &PageRankConfig {
            alpha,
            tolerance,
            max_iterations,
            personalization: Personalization::OneHot(restart_node),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Solves `(I - (1 - alpha) * M) pi = alpha * p` densely, where `M` is the
    /// column-stochastic transition matrix with dangling columns set to `p`.
    #[allow(clippy::needless_range_loop)]
    fn dense_oracle(graph: &Graph, alpha: f64, p: &[f64]) -> Vec<f64> {
        let n = graph.num_nodes();
        let mut a = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            a[i][i] = 1.0;
            a[i][n] = alpha * p[i];
        }
        for j in 0..n {
            let d = graph.degree(j);
            if d == 0 {
                for i in 0..n {
                    a[i][j] -= (1.0 - alpha) * p[i];
                }
            } else {
                for &i in graph.neighbors(j) {
                    a[i as usize][j] -= (1.0 - alpha) / d as f64;
                }
            }
        }
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                .unwrap();
            a.swap(col, pivot);
            for row in 0..n {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    if f != 0.0 {
                        for k in col..=n {
                            a[row][k] -= f * a[col][k];
                        }
                    }
                }
            }
        }
        (0..n).map(|i| a[i][n] / a[i][i]).collect()
    }

    fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> Graph {
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in u + 1..n as u32 {
                if rng.gen_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        Graph::from_edges(n, edges)
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        let err = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(err <= tol, "L-inf error {err:e} > {tol:e}");
    }

    #[test]
    fn complete_graph_is_uniform() {
        let edges = (0..4u32).flat_map(|u| (u + 1..4).map(move |v| (u, v)));
        let g = Graph::from_edges(4, edges);
        let pr = pagerank(&g, &PageRankConfig::default()).unwrap();
        assert_close(&pr.scores, &[0.25; 4], 1e-12);
    }

    #[test]
    fn cycle_is_uniform() {
        let g = Graph::from_edges(5, (0..5u32).map(|i| (i, (i + 1) % 5)));
        let pr = pagerank(&g, &PageRankConfig::default()).unwrap();
        assert_close(&pr.scores, &[0.2; 5], 1e-12);
    }

    #[test]
    fn random_graph_matches_dense_solve() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let g = random_graph(&mut rng, 50, 0.1);
        let pr = pagerank(&g, &PageRankConfig::default()).unwrap();
        let oracle = dense_oracle(&g, 0.15, &[1.0 / 50.0; 50]);
        assert_close(&pr.scores, &oracle, 1e-8);
        assert!((pr.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dangling_nodes_keep_mass() {
        // Two isolated nodes plus a path.
        let g = Graph::from_edges(5, [(0, 1), (1, 2)]);
        let pr = pagerank(&g, &PageRankConfig::default()).unwrap();
        assert!((pr.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let oracle = dense_oracle(&g, 0.15, &[0.2; 5]);
        assert_close(&pr.scores, &oracle, 1e-8);
    }

    #[test]
    fn ppr_single_isolated_node() {
        let g = Graph::from_edges(1, []);
        let pr = personalized_pagerank(&g, 0, 0.15, 1e-10, 1000).unwrap();
        assert_eq!(pr.scores, vec![1.0]);
    }

    #[test]
    fn ppr_star_center_dominates() {
        let g = Graph::from_edges(6, (1..6u32).map(|leaf| (0, leaf)));
        let pr = personalized_pagerank(&g, 0, 0.15, 1e-10, 1000).unwrap();
        for leaf in 1..6 {
            assert!(pr.scores[0] > pr.scores[leaf]);
        }
    }

    #[test]
    fn ppr_random_graph_matches_dense_solve() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let g = random_graph(&mut rng, 50, 0.08);
        let pr = personalized_pagerank(&g, 3, 0.15, 1e-10, 1000).unwrap();
        let mut p = vec![0.0; 50];
        p[3] = 1.0;
        assert_close(&pr.scores, &dense_oracle(&g, 0.15, &p), 1e-8);
    }

    #[test]
    fn invalid_configs() {
        let g = Graph::from_edges(2, [(0, 1)]);
        for alpha in [0.0, 1.0, 1.5, -0.1, f64::NAN] {
            let c = PageRankConfig {
                alpha,
                ..Default::default()
            };
            assert!(matches!(pagerank(&g, &c), Err(Error::InvalidConfig(_))));
        }
        let c = PageRankConfig {
            tolerance: 0.0,
            ..Default::default()
        };
        assert!(matches!(pagerank(&g, &c), Err(Error::InvalidConfig(_))));
        let c = PageRankConfig {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(matches!(pagerank(&g, &c), Err(Error::InvalidConfig(_))));
        assert!(matches!(
            personalized_pagerank(&g, 2, 0.15, 1e-10, 10),
            Err(Error::NodeOutOfRange { node: 2, .. })
        ));
        assert!(matches!(
            pagerank(&Graph::from_edges(0, []), &PageRankConfig::default()),
            Err(Error::EmptyGraph)
        ));
    }

    #[test]
    fn non_convergence_reports_residual() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]);
        let c = PageRankConfig {
            max_iterations: 2,
            ..Default::default()
        };
        match pagerank(&g, &c) {
            Err(Error::NonConvergence {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let g = random_graph(&mut rng, 150, 0.05);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| pagerank(&g, &PageRankConfig::default()).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
