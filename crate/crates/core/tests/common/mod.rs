//! Independent reference implementations and random instances shared by the
//! integration and acceptance tests. Nothing here calls into the library's
//! algorithms; graphs are handed over as plain edge lists or dense matrices.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Undirected simple edge set with `u < v`.
pub fn random_edges(rng: &mut StdRng, n: usize, p: f64) -> BTreeSet<(u32, u32)> {
    let mut edges = BTreeSet::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.insert((u as u32, v as u32));
            }
        }
    }
    edges
}

/// Random spanning tree plus `extra` random edges.
pub fn random_connected_edges(rng: &mut StdRng, n: usize, extra: usize) -> BTreeSet<(u32, u32)> {
    let mut edges = BTreeSet::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        edges.insert((u as u32, v as u32));
    }
    for _ in 0..extra {
        let a = rng.gen_range(0..n) as u32;
        let b = rng.gen_range(0..n) as u32;
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    edges
}

pub fn adjacency(n: usize, edges: &BTreeSet<(u32, u32)>) -> Vec<Vec<bool>> {
    let mut a = vec![vec![false; n]; n];
    for &(u, v) in edges {
        a[u as usize][v as usize] = true;
        a[v as usize][u as usize] = true;
    }
    a
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

/// Stationary vector of `pi = (1 - alpha) (A D^-1 pi + dangling mass * p) + alpha p`
/// as one linear solve.
pub fn dense_pagerank(adj: &[Vec<bool>], alpha: f64, restart: &[f64]) -> Vec<f64> {
    let n = adj.len();
    let degree: Vec<usize> = adj
        .iter()
        .map(|row| row.iter().filter(|&&e| e).count())
        .collect();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        m[i][i] = 1.0;
        for j in 0..n {
            let transition = if degree[j] == 0 {
                restart[i]
            } else if adj[i][j] {
                1.0 / degree[j] as f64
            } else {
                0.0
            };
            m[i][j] -= (1.0 - alpha) * transition;
        }
    }
    solve(m, restart.iter().map(|p| alpha * p).collect())
}

/// Clustering coefficient by checking every neighbor pair against the
/// adjacency matrix.
pub fn brute_force_clustering(adj: &[Vec<bool>]) -> Vec<f64> {
    adj.iter()
        .map(|row| {
            let nbrs: Vec<usize> = (0..row.len()).filter(|&j| row[j]).collect();
            let d = nbrs.len();
            if d < 2 {
                return 0.0;
            }
            let mut linked = 0u64;
            for a in 0..d {
                for b in a + 1..d {
                    if adj[nbrs[a]][nbrs[b]] {
                        linked += 1;
                    }
                }
            }
            2.0 * linked as f64 / (d * (d - 1)) as f64
        })
        .collect()
}

/// Number of node triples `i < j < k` that form a triangle.
pub fn triangle_triples(adj: &[Vec<bool>]) -> u64 {
    let n = adj.len();
    let mut count = 0;
    for i in 0..n {
        for j in i + 1..n {
            if !adj[i][j] {
                continue;
            }
            for k in j + 1..n {
                if adj[i][k] && adj[j][k] {
                    count += 1;
                }
            }
        }
    }
    count
}

/// All-pairs hop distances, `None` when unreachable.
pub fn floyd_warshall(adj: &[Vec<bool>]) -> Vec<Vec<Option<u32>>> {
    let n = adj.len();
    let mut d: Vec<Vec<Option<u32>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Some(0)
                    } else if adj[i][j] {
                        Some(1)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// Mann-Whitney pair count over all (OOD, ID) pairs, ties counted as half.
pub fn pairwise_auroc(scores: &[f64], is_ood: &[bool]) -> f64 {
    let mut half_wins = 0u64;
    let mut pairs = 0u64;
    for (i, &pos) in is_ood.iter().enumerate() {
        if !pos {
            continue;
        }
        for (j, &neg) in is_ood.iter().enumerate() {
            if neg {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                half_wins += 2;
            } else if scores[i] == scores[j] {
                half_wins += 1;
            }
        }
    }
    half_wins as f64 / (2 * pairs) as f64
}

/// Scores drawn from a small grid so that ties are common, with both classes
/// present.
pub fn tied_scores(rng: &mut StdRng, n: usize) -> (Vec<f64>, Vec<bool>) {
    let levels = rng.gen_range(1..=6);
    let scores = (0..n)
        .map(|_| rng.gen_range(0..levels) as f64 * 0.25)
        .collect();
    let mut flags: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
    flags[0] = true;
    flags[n - 1] = false;
    (scores, flags)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
