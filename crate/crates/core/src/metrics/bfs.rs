use std::collections::VecDeque;

use crate::error::Result;
use crate::graph::Graph;

/// Distance reported for nodes not reachable from the source.
pub const UNREACHABLE: u32 = u32::MAX;

/// Hop distances from `source` to every node.
pub fn bfs_distances(graph: &Graph, source: usize) -> Result<Vec<u32>> {
    graph.check_node(source)?;
    let mut dist = vec![UNREACHABLE; graph.num_nodes()];
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let next = dist[u] + 1;
        for &v in graph.neighbors(u) {
            let v = v as usize;
            if dist[v] == UNREACHABLE {
                dist[v] = next;
                queue.push_back(v);
            }
        }
    }
    Ok(dist)
}
