//! Directed interaction topology.
//!
//! Entry `(i, j)` of the adjacency matrix is set when agent `j` transmits
//! information to agent `i`, so an arc `j -> i` lives in row `i`. Every
//! vertex carries a self-loop.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Attempts made by [`Digraph::random`] before giving up on finding a
/// realisation with a spanning tree.
pub const RANDOM_GRAPH_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    // row-major, adjacency[i * n + j] == chi_ij
    adjacency: Vec<bool>,
}

impl Digraph {
    fn with_self_loops(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::construction("digraph needs at least one vertex"));
        }
        let mut adjacency = vec![false; n * n];
        for i in 0..n {
            adjacency[i * n + i] = true;
        }
        Ok(Self { n, adjacency })
    }

    /// Builds a digraph from `(source, target)` arcs. Duplicates are harmless
    /// and self-loops are always present.
    pub fn from_edge_list(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::with_self_loops(n)?;
        for &(source, target) in edges {
            if source >= n || target >= n {
                return Err(Error::construction(format!(
                    "arc ({source}, {target}) out of range for {n} vertices"
                )));
            }
            g.adjacency[target * n + source] = true;
        }
        Ok(g)
    }

    /// Builds a digraph from a 0/1 adjacency matrix given row by row
    /// (`rows[i][j] == 1` iff `j` transmits to `i`). The diagonal is forced
    /// to 1.
    pub fn from_adjacency_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut g = Self::with_self_loops(n)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::construction(format!(
                    "adjacency row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &entry) in row.iter().enumerate() {
                match entry {
                    0 => {}
                    1 => g.adjacency[i * n + j] = true,
                    other => {
                        return Err(Error::construction(format!(
                            "adjacency entry ({i}, {j}) = {other} is not 0 or 1"
                        )))
                    }
                }
            }
        }
        Ok(g)
    }

    /// The digraph `G(a)`: arc `(j, i)` iff `a[(i, j)] > 0`, self-loops forced.
    pub fn from_support(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::construction("support matrix must be square"));
        }
        let n = a.nrows();
        let mut g = Self::with_self_loops(n)?;
        for i in 0..n {
            for j in 0..n {
                if a[(i, j)] > 0.0 {
                    g.adjacency[i * n + j] = true;
                }
            }
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut g = Self::with_self_loops(n)?;
        g.adjacency.iter_mut().for_each(|a| *a = true);
        Ok(g)
    }

    /// Directed cycle `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn cycle(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::from_edge_list(n, &edges)
    }

    /// Directed path `0 -> 1 -> ... -> n-1`.
    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edge_list(n, &edges)
    }

    /// Erdős–Rényi style digraph where each off-diagonal arc is present with
    /// probability `p`. Draws are repeated until the realisation has a
    /// spanning tree, at most [`RANDOM_GRAPH_ATTEMPTS`] times.
    pub fn random<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::construction(format!("arc probability {p} not in [0, 1]")));
        }
        for _ in 0..RANDOM_GRAPH_ATTEMPTS {
            let mut g = Self::with_self_loops(n)?;
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.random::<f64>() < p {
                        g.adjacency[i * n + j] = true;
                    }
                }
            }
            if g.has_spanning_tree() {
                return Ok(g);
            }
        }
        Err(Error::construction(format!(
            "no random digraph with a spanning tree after {RANDOM_GRAPH_ATTEMPTS} attempts (n = {n}, p = {p})"
        )))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `chi_ij`: whether `j` transmits to `i`.
    #[inline]
    pub fn chi(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    /// Adjacency as a 0/1 real matrix.
    pub fn chi_matrix(&self) -> Matrix {
        Matrix::from_fn(self.n, self.n, |i, j| if self.chi(i, j) { 1.0 } else { 0.0 })
    }

    /// Number of arcs, self-loops excluded.
    pub fn edge_count(&self) -> usize {
        (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.chi(i, j))
            .count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.chi(i, j) == self.chi(j, i)))
    }

    /// Arcs as `(source, target)` pairs, self-loops excluded.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for source in 0..self.n {
            for target in 0..self.n {
                if source != target && self.chi(target, source) {
                    out.push((source, target));
                }
            }
        }
        out
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.n {
            return Err(Error::domain(format!("vertex {v} out of range for {} vertices", self.n)));
        }
        Ok(())
    }

    /// BFS distances from `source` along arcs; `None` for unreachable vertices.
    pub fn distances_from(&self, source: usize) -> Result<Vec<Option<usize>>> {
        self.check_vertex(source)?;
        let mut dist = vec![None; self.n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            // arcs leaving u sit in column u
            for (w, dw) in dist.iter_mut().enumerate() {
                if dw.is_none() && self.chi(w, u) {
                    *dw = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        Ok(dist)
    }

    pub fn is_reachable(&self, from: usize, to: usize) -> Result<bool> {
        self.check_vertex(to)?;
        Ok(self.distances_from(from)?[to].is_some())
    }

    /// Vertices from which every vertex is reachable.
    pub fn roots(&self) -> Vec<usize> {
        (0..self.n).filter(|&r| self.depth_from(r).is_some()).collect()
    }

    pub fn has_spanning_tree(&self) -> bool {
        (0..self.n).any(|r| self.depth_from(r).is_some())
    }

    fn depth_from(&self, r: usize) -> Option<usize> {
        let dist = self.distances_from(r).ok()?;
        dist.into_iter().try_fold(0, |acc, d| d.map(|d| acc.max(d)))
    }

    /// Smallest depth over all spanning trees: `min_r max_j dist(r, j)` with
    /// `r` ranging over roots.
    pub fn smallest_depth(&self) -> Result<usize> {
        (0..self.n)
            .filter_map(|r| self.depth_from(r))
            .min()
            .ok_or(Error::NoSpanningTree)
    }
}
