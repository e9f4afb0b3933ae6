//! Sparse matrices whose rank is computed one connected component at a time.
//!
//! Query matrices are large but split into many small independent blocks
//! (each block touches a handful of sub-packets), so the rank is the sum of
//! the ranks of those blocks.

use std::collections::HashMap;

use super::field::{Elem, Field};
use super::matrix::Matrix;

#[derive(Clone, Debug)]
pub struct SparseMatrix {
    field: Field,
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, Elem)>,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

impl SparseMatrix {
    pub fn new(field: Field, rows: usize, cols: usize) -> Self {
        SparseMatrix { field, rows, cols, entries: Vec::new() }
    }

    /// Adds `v` at `(r, c)`. Zero values are dropped; duplicate coordinates
    /// are summed.
    pub fn push(&mut self, r: usize, c: usize, v: Elem) {
        assert!(r < self.rows && c < self.cols, "entry ({r},{c}) outside {}x{}", self.rows, self.cols);
        if !v.is_zero() {
            self.entries.push((r, c, v));
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, Elem)] {
        &self.entries
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.field, self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            let cur = m.get(r, c);
            m.set(r, c, self.field.add(cur, v));
        }
        m
    }

    /// `x * self` for a row vector `x` of length `rows`.
    pub fn left_mul(&self, x: &[Elem]) -> Vec<Elem> {
        assert_eq!(x.len(), self.rows);
        let f = self.field;
        let mut out = vec![Elem::ZERO; self.cols];
        for &(r, c, v) in &self.entries {
            out[c] = f.add(out[c], f.mul(x[r], v));
        }
        out
    }

    pub fn rank(&self) -> usize {
        // rows occupy ids [0, rows), columns [rows, rows + cols)
        let mut ds = DisjointSet::new(self.rows + self.cols);
        for &(r, c, _) in &self.entries {
            ds.union(r, self.rows + c);
        }
        let mut blocks: HashMap<usize, Vec<(usize, usize, Elem)>> = HashMap::new();
        for &(r, c, v) in &self.entries {
            let root = ds.find(r);
            blocks.entry(root).or_default().push((r, c, v));
        }
        blocks.into_values().map(|entries| self.block_rank(entries)).sum()
    }

    fn block_rank(&self, entries: Vec<(usize, usize, Elem)>) -> usize {
        let mut row_ids: HashMap<usize, usize> = HashMap::new();
        let mut col_ids: HashMap<usize, usize> = HashMap::new();
        for &(r, c, _) in &entries {
            let nr = row_ids.len();
            row_ids.entry(r).or_insert(nr);
            let nc = col_ids.len();
            col_ids.entry(c).or_insert(nc);
        }
        let mut m = Matrix::zeros(self.field, row_ids.len(), col_ids.len());
        for (r, c, v) in entries {
            let (lr, lc) = (row_ids[&r], col_ids[&c]);
            let cur = m.get(lr, lc);
            m.set(lr, lc, self.field.add(cur, v));
        }
        m.rank()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_diagonal_rank_is_additive() {
        let f = Field::new(11).unwrap();
        let mut s = SparseMatrix::new(f, 5, 5);
        // block {0,1}x{0,1}: rank 1
        s.push(0, 0, f.elem(1));
        s.push(0, 1, f.elem(2));
        s.push(1, 0, f.elem(3));
        s.push(1, 1, f.elem(6));
        // block {2,3}x{2,3}: rank 2
        s.push(2, 2, f.elem(1));
        s.push(3, 3, f.elem(1));
        s.push(3, 2, f.elem(4));
        assert_eq!(s.rank(), 3);
        assert_eq!(s.to_dense().rank(), 3);
    }

    #[test]
    fn empty_rank() {
        let f = Field::new(11).unwrap();
        assert_eq!(SparseMatrix::new(f, 4, 4).rank(), 0);
    }

    #[test]
    fn left_multiplication() {
        let f = Field::new(11).unwrap();
        let mut s = SparseMatrix::new(f, 2, 2);
        s.push(0, 1, f.elem(3));
        s.push(1, 1, f.elem(2));
        let x = [f.elem(1), f.elem(5)];
        assert_eq!(s.left_mul(&x), vec![Elem::ZERO, f.elem(13)]);
    }
}
