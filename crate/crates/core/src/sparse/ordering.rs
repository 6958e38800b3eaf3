use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::SparseMatrix;

/// Minimum-degree fill-reducing ordering of the symmetrized pattern of `m`.
///
/// Works on the explicit elimination graph: eliminating a node turns its
/// remaining neighbours into a clique. Ties break on the smaller index so the
/// ordering is deterministic. Returns `perm` with `perm[new] = old`.
pub fn minimum_degree(m: &SparseMatrix) -> Vec<usize> {
    let n = m.n_rows().max(m.n_cols());
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, c, _) in m.iter() {
        if r != c {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }

    let mut eliminated = vec![false; n];
    let mut mark = vec![usize::MAX; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|v| Reverse((adj[v].len(), v))).collect();
    let mut perm = Vec::with_capacity(n);
    let mut clique = Vec::new();

    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        perm.push(v);

        clique.clear();
        clique.extend(adj[v].iter().copied().filter(|&u| !eliminated[u]));
        adj[v] = Vec::new();

        for &u in &clique {
            let stamp = u;
            let mut merged = std::mem::take(&mut adj[u]);
            merged.retain(|&w| !eliminated[w]);
            for &w in &merged {
                mark[w] = stamp;
            }
            mark[u] = stamp;
            for &w in &clique {
                if mark[w] != stamp {
                    mark[w] = stamp;
                    merged.push(w);
                }
            }
            adj[u] = merged;
            heap.push(Reverse((adj[u].len(), u)));
        }
        // marks are stamped by node id; clear the ones we touched so a later
        // elimination with the same stamp cannot alias.
        for &u in &clique {
            for &w in &adj[u] {
                mark[w] = usize::MAX;
            }
            mark[u] = usize::MAX;
        }
    }
    perm
}
