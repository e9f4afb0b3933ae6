use std::fmt;

use super::field::{Elem, Field};
use crate::error::{Error, Result};

/// Dense row-major matrix over a prime field.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Matrix {
    field: Field,
    rows: usize,
    cols: usize,
    data: Vec<Elem>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} over F_{} [", self.rows, self.cols, self.field.modulus())?;
        for r in 0..self.rows {
            let row: Vec<u64> = self.row(r).iter().map(|e| e.value()).collect();
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(field: Field, rows: usize, cols: usize) -> Self {
        Matrix { field, rows, cols, data: vec![Elem::ZERO; rows * cols] }
    }

    pub fn identity(field: Field, size: usize) -> Self {
        let mut m = Self::zeros(field, size, size);
        for i in 0..size {
            m.data[i * size + i] = Elem::ONE;
        }
        m
    }

    pub fn from_fn(field: Field, rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Elem) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { field, rows, cols, data }
    }

    /// Builds a matrix from raw integers, reducing each mod p.
    ///
    /// All rows must have equal length.
    pub fn from_rows<R: AsRef<[u64]>>(field: Field, rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::Dim(format!("ragged rows: expected {cols} columns, got {}", row.len())));
            }
            data.extend(row.iter().map(|&v| field.elem(v)));
        }
        Ok(Matrix { field, rows: rows.len(), cols, data })
    }

    pub fn from_elems(field: Field, rows: usize, cols: usize, data: Vec<Elem>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dim(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Matrix { field, rows, cols, data })
    }

    /// Column vector from elements.
    pub fn column_vector(field: Field, entries: Vec<Elem>) -> Self {
        let rows = entries.len();
        Matrix { field, rows, cols: 1, data: entries }
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Elem {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Elem) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[Elem] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Elem> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn entries(&self) -> &[Elem] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        (0..self.rows).map(|r| self.row(r).iter().map(|e| e.value()).collect()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|e| e.is_zero())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.field, self.cols, self.rows, |r, c| self.get(c, r))
    }

    fn check_field(&self, other: &Matrix) -> Result<()> {
        if self.field != other.field {
            return Err(Error::Dim(format!(
                "field mismatch: F_{} vs F_{}",
                self.field.modulus(),
                other.field.modulus()
            )));
        }
        Ok(())
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        self.check_field(other)?;
        if self.cols != other.rows {
            return Err(Error::Dim(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let f = self.field;
        let mut out = Matrix::zeros(f, self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a.is_zero() {
                    continue;
                }
                for c in 0..other.cols {
                    let idx = r * other.cols + c;
                    out.data[idx] = f.add(out.data[idx], f.mul(a, other.get(k, c)));
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_field(other)?;
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::Dim(format!(
                "cannot add {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let f = self.field;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f.add(a, b)).collect();
        Ok(Matrix { field: f, rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, k: Elem) -> Matrix {
        let f = self.field;
        Matrix {
            field: f,
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| f.mul(a, k)).collect(),
        }
    }

    /// Kronecker product: block (i, j) of the result is `self[i][j] * other`.
    pub fn kron(&self, other: &Matrix) -> Matrix {
        let f = self.field;
        let (br, bc) = (other.rows, other.cols);
        Matrix::from_fn(f, self.rows * br, self.cols * bc, |r, c| {
            f.mul(self.get(r / br, c / bc), other.get(r % br, c % bc))
        })
    }

    /// Row-major vectorization into a `1 x rows*cols` row vector.
    pub fn vec(&self) -> Matrix {
        Matrix { field: self.field, rows: 1, cols: self.rows * self.cols, data: self.data.clone() }
    }

    /// Horizontal concatenation; all parts must share a row count.
    pub fn hstack(parts: &[Matrix]) -> Result<Matrix> {
        let first = parts.first().ok_or_else(|| Error::Dim("hstack of nothing".into()))?;
        let rows = first.rows;
        for p in parts {
            first.check_field(p)?;
            if p.rows != rows {
                return Err(Error::Dim(format!("hstack row mismatch: {} vs {}", rows, p.rows)));
            }
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(Matrix { field: first.field, rows, cols, data })
    }

    /// Vertical concatenation; all parts must share a column count.
    pub fn vstack(parts: &[Matrix]) -> Result<Matrix> {
        let first = parts.first().ok_or_else(|| Error::Dim("vstack of nothing".into()))?;
        let cols = first.cols;
        let mut data = Vec::new();
        for p in parts {
            first.check_field(p)?;
            if p.cols != cols {
                return Err(Error::Dim(format!("vstack column mismatch: {} vs {}", cols, p.cols)));
            }
            data.extend_from_slice(&p.data);
        }
        let rows = parts.iter().map(|p| p.rows).sum();
        Ok(Matrix { field: first.field, rows, cols, data })
    }

    /// Reduces `self` in place to row echelon form and returns the rank.
    ///
    /// Pivot choice is the first nonzero entry at or below the current row.
    fn echelon_in_place(&mut self) -> usize {
        let f = self.field;
        let mut rank = 0;
        for c in 0..self.cols {
            if rank == self.rows {
                break;
            }
            let Some(pivot) = (rank..self.rows).find(|&r| !self.get(r, c).is_zero()) else {
                continue;
            };
            self.swap_rows(pivot, rank);
            let inv = f.inv(self.get(rank, c)).expect("pivot is nonzero");
            for r in rank + 1..self.rows {
                let factor = self.get(r, c);
                if factor.is_zero() {
                    continue;
                }
                let factor = f.mul(factor, inv);
                for cc in c..self.cols {
                    let v = f.sub(self.get(r, cc), f.mul(factor, self.get(rank, cc)));
                    self.set(r, cc, v);
                }
            }
            rank += 1;
        }
        rank
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    pub fn rank(&self) -> usize {
        self.clone().echelon_in_place()
    }

    /// Solves `self * x = b` for square invertible `self`.
    pub fn solve_square(&self, b: &Matrix) -> Result<Matrix> {
        self.check_field(b)?;
        if self.rows != self.cols {
            return Err(Error::Dim(format!("solve needs a square matrix, got {}x{}", self.rows, self.cols)));
        }
        if b.rows != self.rows {
            return Err(Error::Dim(format!("right-hand side has {} rows, expected {}", b.rows, self.rows)));
        }
        let f = self.field;
        let n = self.rows;
        let mut aug = Matrix::hstack(&[self.clone(), b.clone()])?;
        for c in 0..n {
            let pivot = (c..n).find(|&r| !aug.get(r, c).is_zero()).ok_or(Error::Singular)?;
            aug.swap_rows(pivot, c);
            let inv = f.inv(aug.get(c, c))?;
            for cc in 0..aug.cols {
                let v = f.mul(aug.get(c, cc), inv);
                aug.set(c, cc, v);
            }
            for r in 0..n {
                if r == c {
                    continue;
                }
                let factor = aug.get(r, c);
                if factor.is_zero() {
                    continue;
                }
                for cc in 0..aug.cols {
                    let v = f.sub(aug.get(r, cc), f.mul(factor, aug.get(c, cc)));
                    aug.set(r, cc, v);
                }
            }
        }
        Ok(Matrix::from_fn(f, n, b.cols, |r, c| aug.get(r, n + c)))
    }

    pub fn is_invertible(&self) -> bool {
        self.rows == self.cols && self.rank() == self.rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f7() -> Field {
        Field::new(7).unwrap()
    }

    #[test]
    fn identity_product() {
        let f = f7();
        let b = Matrix::from_rows(f, &[[1u64, 2, 3], [4, 5, 6]]).unwrap();
        assert_eq!(Matrix::identity(f, 2).mul(&b).unwrap(), b);
        let a = Matrix::from_rows(f, &[[3u64]]).unwrap();
        let c = Matrix::from_rows(f, &[[5u64]]).unwrap();
        assert_eq!(a.mul(&c).unwrap(), Matrix::from_rows(f, &[[1u64]]).unwrap());
    }

    #[test]
    fn product_dimension_mismatch() {
        let f = f7();
        let a = Matrix::zeros(f, 2, 3);
        assert!(matches!(a.mul(&a), Err(Error::Dim(_))));
    }

    #[test]
    fn rank_basics() {
        let f = f7();
        assert_eq!(Matrix::zeros(f, 3, 4).rank(), 0);
        assert_eq!(Matrix::identity(f, 5).rank(), 5);
        let dependent = Matrix::from_rows(f, &[[1u64, 2, 3], [2, 4, 6], [0, 1, 1]]).unwrap();
        assert_eq!(dependent.rank(), 2);
    }

    #[test]
    fn solve_diag() {
        let f = f7();
        let a = Matrix::from_rows(f, &[[2u64, 0], [0, 3]]).unwrap();
        let b = Matrix::from_rows(f, &[[1u64], [1]]).unwrap();
        let x = a.solve_square(&b).unwrap();
        assert_eq!(x.to_rows(), vec![vec![4], vec![5]]);
        assert_eq!(Matrix::identity(f, 2).solve_square(&b).unwrap(), b);
    }

    #[test]
    fn solve_singular() {
        let f = f7();
        let a = Matrix::from_rows(f, &[[1u64, 2], [2, 4]]).unwrap();
        let b = Matrix::from_rows(f, &[[1u64], [1]]).unwrap();
        assert!(matches!(a.solve_square(&b), Err(Error::Singular)));
    }

    #[test]
    fn kron_and_vec_definitions() {
        let f = f7();
        let b = Matrix::from_rows(f, &[[1u64, 2], [3, 4]]).unwrap();
        assert_eq!(Matrix::identity(f, 1).kron(&b), b);
        let col = Matrix::from_rows(f, &[[1u64], [2]]).unwrap();
        let k = col.kron(&Matrix::identity(f, 2));
        assert_eq!(k.to_rows(), vec![vec![1, 0], vec![0, 1], vec![2, 0], vec![0, 2]]);

        let a = Matrix::from_rows(f, &[[1u64, 2, 0], [2, 0, 1]]).unwrap();
        assert_eq!(a.vec().to_rows(), vec![vec![1, 2, 0, 2, 0, 1]]);
        let row = Matrix::from_rows(f, &[[4u64, 5, 6]]).unwrap();
        assert_eq!(row.vec(), row);
    }

    #[test]
    fn stacking() {
        let f = f7();
        let a = Matrix::identity(f, 2);
        let h = Matrix::hstack(&[a.clone(), a.clone()]).unwrap();
        assert_eq!((h.rows(), h.cols()), (2, 4));
        let v = Matrix::vstack(&[a.clone(), a]).unwrap();
        assert_eq!((v.rows(), v.cols()), (4, 2));
        assert_eq!(v.rank(), 2);
    }
}
