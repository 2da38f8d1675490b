//! Fill-reducing ordering by recursive level-set nested dissection on the
//! symmetrized pattern `A + A^T`.

use std::collections::VecDeque;

use super::SparseMatrix;

const LEAF_SIZE: usize = 48;

/// Returns a permutation `perm` with `perm[k]` = original index placed at position `k`.
///
/// Rows/columns of very high degree (bordering rows, parameter columns) are
/// moved to the end; the remainder is ordered by nested dissection using
/// middle BFS level sets from a pseudo-peripheral node as separators.
pub fn nested_dissection(a: &SparseMatrix) -> Vec<usize> {
    let n = a.dim();
    let adj = symmetric_adjacency(a);
    let dense_limit = 16usize.max((10.0 * (n as f64).sqrt()) as usize);

    let mut owner = vec![0usize; n];
    let mut dense = Vec::new();
    let mut sparse_nodes = Vec::with_capacity(n);
    for v in 0..n {
        if adj[v].len() > dense_limit {
            dense.push(v);
            owner[v] = usize::MAX;
        } else {
            sparse_nodes.push(v);
        }
    }

    let mut ctx = Dissection {
        adj: &adj,
        owner,
        next_id: 1,
        out: Vec::with_capacity(n),
        level: vec![usize::MAX; n],
    };
    ctx.dissect(sparse_nodes, 0);
    ctx.out.extend(dense);
    debug_assert_eq!(ctx.out.len(), n);
    ctx.out
}

fn symmetric_adjacency(a: &SparseMatrix) -> Vec<Vec<usize>> {
    let n = a.dim();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for (j, _) in a.row(i) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    adj
}

struct Dissection<'a> {
    adj: &'a [Vec<usize>],
    owner: Vec<usize>,
    next_id: usize,
    out: Vec<usize>,
    level: Vec<usize>,
}

impl Dissection<'_> {
    fn dissect(&mut self, nodes: Vec<usize>, id: usize) {
        if nodes.len() <= LEAF_SIZE {
            self.out.extend(nodes);
            return;
        }

        let components = self.components(&nodes, id);
        if components.len() > 1 {
            for comp in components {
                let cid = self.fresh_id(&comp);
                self.dissect(comp, cid);
            }
            return;
        }

        let root = self.pseudo_peripheral(nodes[0], id);
        let levels = self.bfs_levels(root, id);
        if levels.len() < 3 {
            self.out.extend(nodes);
            return;
        }
        let mid = levels.len() / 2;
        let mut part_a: Vec<usize> = levels[..mid].iter().flatten().copied().collect();
        let part_b: Vec<usize> = levels[mid + 1..].iter().flatten().copied().collect();
        let mut separator = Vec::with_capacity(levels[mid].len());
        for &v in &levels[mid] {
            let touches_b = self.adj[v]
                .iter()
                .any(|&w| self.owner[w] == id && self.level[w] == mid + 1);
            if touches_b {
                separator.push(v);
            } else {
                part_a.push(v);
            }
        }
        for v in &nodes {
            self.level[*v] = usize::MAX;
        }

        let ida = self.fresh_id(&part_a);
        let idb = self.fresh_id(&part_b);
        self.dissect(part_a, ida);
        self.dissect(part_b, idb);
        self.out.extend(separator);
    }

    fn fresh_id(&mut self, nodes: &[usize]) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        for &v in nodes {
            self.owner[v] = id;
        }
        id
    }

    fn components(&mut self, nodes: &[usize], id: usize) -> Vec<Vec<usize>> {
        let marker = self.next_id;
        self.next_id += 1;
        let mut comps = Vec::new();
        let mut queue = VecDeque::new();
        for &s in nodes {
            if self.owner[s] != id {
                continue;
            }
            let mut comp = vec![s];
            self.owner[s] = marker;
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                for &w in &self.adj[v] {
                    if self.owner[w] == id {
                        self.owner[w] = marker;
                        comp.push(w);
                        queue.push_back(w);
                    }
                }
            }
            comps.push(comp);
        }
        // restore ownership for the single-component case
        for &v in nodes {
            self.owner[v] = id;
        }
        comps
    }

    fn bfs_levels(&mut self, root: usize, id: usize) -> Vec<Vec<usize>> {
        let mut levels: Vec<Vec<usize>> = vec![vec![root]];
        self.level[root] = 0;
        loop {
            let depth = levels.len();
            let mut next = Vec::new();
            for &v in levels.last().unwrap() {
                for &w in &self.adj[v] {
                    if self.owner[w] == id && self.level[w] == usize::MAX {
                        self.level[w] = depth;
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        levels
    }

    fn clear_levels(&mut self, levels: &[Vec<usize>]) {
        for &v in levels.iter().flatten() {
            self.level[v] = usize::MAX;
        }
    }

    fn pseudo_peripheral(&mut self, start: usize, id: usize) -> usize {
        let mut root = start;
        let mut ecc = 0;
        for _ in 0..6 {
            let levels = self.bfs_levels(root, id);
            self.clear_levels(&levels);
            let depth = levels.len();
            if depth <= ecc {
                break;
            }
            ecc = depth;
            root = *levels
                .last()
                .unwrap()
                .iter()
                .min_by_key(|&&v| (self.adj[v].len(), v))
                .unwrap();
        }
        root
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_laplacian(m: usize) -> SparseMatrix {
        let idx = |i: usize, j: usize| i * m + j;
        let mut t = Vec::new();
        for i in 0..m {
            for j in 0..m {
                t.push((idx(i, j), idx(i, j), 4.0));
                if i + 1 < m {
                    t.push((idx(i, j), idx(i + 1, j), -1.0));
                    t.push((idx(i + 1, j), idx(i, j), -1.0));
                }
                if j + 1 < m {
                    t.push((idx(i, j), idx(i, j + 1), -1.0));
                    t.push((idx(i, j + 1), idx(i, j), -1.0));
                }
            }
        }
        SparseMatrix::from_triplets(m * m, &t).unwrap()
    }

    #[test]
    fn ordering_is_a_permutation() {
        let a = grid_laplacian(30);
        let mut p = nested_dissection(&a);
        p.sort_unstable();
        assert_eq!(p, (0..900).collect::<Vec<_>>());
    }

    #[test]
    fn dense_rows_go_last() {
        let m = 20;
        let base = grid_laplacian(m);
        let n = m * m + 1;
        let mut t = base.triplets();
        for i in 0..m * m {
            t.push((i, n - 1, 1.0));
            t.push((n - 1, i, 1.0));
        }
        let a = SparseMatrix::from_triplets(n, &t).unwrap();
        let p = nested_dissection(&a);
        assert_eq!(*p.last().unwrap(), n - 1);
    }
}
