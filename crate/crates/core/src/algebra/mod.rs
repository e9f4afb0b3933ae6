//! Prime-field arithmetic and dense/sparse linear algebra over F_p.

mod field;
mod matrix;
mod sparse;

pub use field::{is_prime, smallest_prime_gt, Elem, Field, FieldOp};
pub use matrix::Matrix;
pub use sparse::SparseMatrix;
