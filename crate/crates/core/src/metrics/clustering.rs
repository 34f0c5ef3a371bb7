use rayon::prelude::*;

use crate::graph::{Graph, NodeId};

fn intersection_size(a: &[NodeId], b: &[NodeId]) -> u64 {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Number of edges among the neighbors of each node, i.e. the number of
/// triangles through it.
pub fn triangle_counts(graph: &Graph) -> Vec<u64> {
    (0..graph.num_nodes())
        .into_par_iter()
        .map(|i| {
            let nbrs = graph.neighbors(i);
            // Each neighbor-neighbor edge is seen from both endpoints.
            let twice: u64 = nbrs
                .iter()
                .map(|&j| intersection_size(nbrs, graph.neighbors(j as usize)))
                .sum();
            twice / 2
        })
        .collect()
}

/// Local clustering coefficient `2 * t_i / (d_i * (d_i - 1))`, defined as 0
/// for nodes of degree below two.
pub fn local_clustering(graph: &Graph) -> Vec<f64> {
    triangle_counts(graph)
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let d = graph.degree(i) as f64;
            if d < 2.0 {
                0.0
            } else {
                2.0 * t as f64 / (d * (d - 1.0))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: u32) -> Graph {
        Graph::from_edges(
            n as usize,
            (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))),
        )
    }

    #[test]
    fn triangle_is_fully_clustered() {
        assert_eq!(local_clustering(&complete(3)), vec![1.0; 3]);
    }

    #[test]
    fn star_has_zero_clustering() {
        let g = Graph::from_edges(5, (1..5u32).map(|leaf| (0, leaf)));
        assert_eq!(local_clustering(&g), vec![0.0; 5]);
    }

    #[test]
    fn k4_triangles() {
        assert_eq!(triangle_counts(&complete(4)), vec![3; 4]);
    }

    #[test]
    fn path_middle_has_no_triangle() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]);
        assert_eq!(triangle_counts(&g), vec![0, 0, 0]);
    }

    #[test]
    fn triangle_with_pendant() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 0), (2, 3)]);
        assert_eq!(triangle_counts(&g), vec![1, 1, 1, 0]);
        let c = local_clustering(&g);
        assert_eq!(c[0], 1.0);
        assert!((c[2] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c[3], 0.0);
    }
}
