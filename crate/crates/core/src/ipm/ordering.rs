//! Exact minimum-degree ordering on a bitset adjacency graph.
//!
//! The elimination is simulated directly, so the fill pattern of the Cholesky
//! factor falls out of the same pass. Ties go to the lowest vertex index,
//! which makes the ordering a pure function of the input pattern.

/// Dense bitset adjacency over `n` vertices.
#[derive(Clone, Debug)]
pub struct Graph {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl Graph {
    pub fn new(n: usize) -> Graph {
        let words = n.div_ceil(64).max(1);
        Graph {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn row(&self, v: usize) -> &[u64] {
        &self.bits[v * self.words..(v + 1) * self.words]
    }

    fn row_mut(&mut self, v: usize) -> &mut [u64] {
        &mut self.bits[v * self.words..(v + 1) * self.words]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.row(u)[v / 64] >> (v % 64) & 1 == 1
    }

    /// Makes `vertices` a clique. Self loops are not stored.
    pub fn add_clique(&mut self, vertices: &[usize]) {
        let mut mask = vec![0u64; self.words];
        for &v in vertices {
            mask[v / 64] |= 1 << (v % 64);
        }
        for &v in vertices {
            for (w, m) in self.row_mut(v).iter_mut().zip(&mask) {
                *w |= m;
            }
            self.row_mut(v)[v / 64] &= !(1 << (v % 64));
        }
    }
}

/// Elimination order and the strictly-lower structure it produces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Elimination {
    /// `perm[k]` is the original vertex eliminated `k`-th.
    pub perm: Vec<usize>,
    /// `iperm[v]` is the elimination step of vertex `v`.
    pub iperm: Vec<usize>,
    /// Below-diagonal rows of factor column `k`, in elimination numbering,
    /// sorted ascending.
    pub columns: Vec<Vec<usize>>,
}

impl Elimination {
    pub fn factor_nnz(&self) -> usize {
        self.perm.len() + self.columns.iter().map(Vec::len).sum::<usize>()
    }
}

fn ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(wi, &w)| {
        let mut w = w;
        std::iter::from_fn(move || {
            if w == 0 {
                return None;
            }
            let b = w.trailing_zeros() as usize;
            w &= w - 1;
            Some(wi * 64 + b)
        })
    })
}

pub fn minimum_degree(mut g: Graph) -> Elimination {
    let n = g.n;
    let words = g.words;
    let mut degree: Vec<usize> = (0..n)
        .map(|v| g.row(v).iter().map(|w| w.count_ones() as usize).sum())
        .collect();
    let mut alive = vec![true; n];
    let mut perm = Vec::with_capacity(n);
    let mut iperm = vec![usize::MAX; n];
    let mut structure: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut mask = vec![0u64; words];

    for step in 0..n {
        let v = (0..n)
            .filter(|&u| alive[u])
            .min_by_key(|&u| (degree[u], u))
            .expect("a live vertex remains");
        alive[v] = false;
        perm.push(v);
        iperm[v] = step;

        mask.copy_from_slice(g.row(v));
        let nbrs: Vec<usize> = ones(&mask).collect();
        for &u in &nbrs {
            let row = g.row_mut(u);
            for (w, m) in row.iter_mut().zip(&mask) {
                *w |= m;
            }
            row[u / 64] &= !(1 << (u % 64));
            row[v / 64] &= !(1 << (v % 64));
            degree[u] = row.iter().map(|w| w.count_ones() as usize).sum();
        }
        structure.push(nbrs);
    }

    let columns = structure
        .into_iter()
        .map(|nb| {
            let mut c: Vec<usize> = nb.into_iter().map(|u| iperm[u]).collect();
            c.sort_unstable();
            c
        })
        .collect();
    Elimination {
        perm,
        iperm,
        columns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_eliminates_leaves_first() {
        // vertex 0 joined to every other vertex; eliminating it early would fill
        let mut g = Graph::new(5);
        for v in 1..5 {
            g.add_clique(&[0, v]);
        }
        let e = minimum_degree(g);
        assert_eq!(e.perm, vec![1, 2, 3, 0, 4]);
        assert_eq!(e.factor_nnz(), 5 + 4);
    }

    #[test]
    fn fill_is_recorded() {
        // a 4-cycle has one fill edge whatever the order
        let mut g = Graph::new(4);
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            g.add_clique(&[a, b]);
        }
        let e = minimum_degree(g);
        assert_eq!(e.factor_nnz(), 4 + 5);
        for (k, col) in e.columns.iter().enumerate() {
            assert!(col.iter().all(|&r| r > k));
        }
    }

    #[test]
    fn deterministic() {
        let mut g = Graph::new(70);
        for v in 0..69 {
            g.add_clique(&[v, (v * 7 + 3) % 70, v + 1]);
        }
        assert_eq!(minimum_degree(g.clone()), minimum_degree(g));
    }

    #[test]
    fn edges_are_symmetric() {
        let mut g = Graph::new(130);
        g.add_clique(&[3, 77, 129]);
        assert!(g.has_edge(3, 129) && g.has_edge(129, 3) && g.has_edge(77, 3));
        assert!(!g.has_edge(3, 3));
    }
}
