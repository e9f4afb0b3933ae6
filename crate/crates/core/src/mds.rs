//! `[N, K]` MDS storage: Vandermonde generator, share encoding, and the
//! K-server erasure decode used by the retrieving client.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::algebra::{Elem, Field, Matrix};
use crate::error::{Error, Result};

/// A `K x N` generator matrix whose every K columns are independent.
///
/// Column `i` (0-based) is the coding vector `g_i` held by server `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generator {
    matrix: Matrix,
}

impl Generator {
    /// Vandermonde generator over the points `1..=N`.
    pub fn vandermonde(servers: usize, k: usize, field: Field) -> Result<Self> {
        if k == 0 || k > servers {
            return Err(Error::BadCall(format!("need 1 <= K <= N, got K={k}, N={servers}")));
        }
        if servers as u64 >= field.modulus() {
            return Err(Error::FieldTooSmall { servers, modulus: field.modulus() });
        }
        let matrix = Matrix::from_fn(field, k, servers, |r, c| field.pow(field.elem(c as u64 + 1), r as u64));
        Ok(Generator { matrix })
    }

    /// Wraps an arbitrary `K x N` matrix, rejecting it unless it is MDS.
    pub fn from_matrix(matrix: Matrix) -> Result<Self> {
        let g = Generator { matrix };
        if !g.is_mds() {
            return Err(Error::NotMds);
        }
        Ok(g)
    }

    /// Same as [`Generator::from_matrix`] without the MDS check.
    pub fn from_matrix_unchecked(matrix: Matrix) -> Self {
        Generator { matrix }
    }

    pub fn field(&self) -> Field {
        self.matrix.field()
    }

    pub fn k(&self) -> usize {
        self.matrix.rows()
    }

    pub fn servers(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Coding vector of server `i`.
    pub fn column(&self, i: usize) -> Vec<Elem> {
        self.matrix.column(i)
    }

    /// `g_i^T v` for a K-vector `v`.
    pub fn project(&self, i: usize, v: &[Elem]) -> Elem {
        let f = self.field();
        (0..self.k()).fold(Elem::ZERO, |acc, r| f.add(acc, f.mul(self.matrix.get(r, i), v[r])))
    }

    /// True iff every K-subset of columns is invertible.
    pub fn is_mds(&self) -> bool {
        let k = self.k();
        (0..self.servers()).combinations(k).all(|subset| self.submatrix(&subset).is_invertible())
    }

    /// The `K x K` matrix whose rows are `g_i^T` for `i` in `servers`.
    fn submatrix(&self, servers: &[usize]) -> Matrix {
        Matrix::from_fn(self.field(), servers.len(), self.k(), |r, c| self.matrix.get(c, servers[r]))
    }

    /// Recovers `v` from the projections `g_i^T v` at K distinct servers.
    pub fn erasure_decode(&self, servers: &[usize], proj: &[Elem]) -> Result<Vec<Elem>> {
        let k = self.k();
        if servers.len() != k || proj.len() != k {
            return Err(Error::BadIndexSet(format!(
                "need exactly {k} servers and projections, got {} and {}",
                servers.len(),
                proj.len()
            )));
        }
        if let Some(&bad) = servers.iter().find(|&&i| i >= self.servers()) {
            return Err(Error::BadIndexSet(format!("server {bad} out of range")));
        }
        if servers.iter().duplicates().next().is_some() {
            return Err(Error::BadIndexSet(format!("repeated server in {servers:?}")));
        }
        let a = self.submatrix(servers);
        let b = Matrix::column_vector(self.field(), proj.to_vec());
        Ok(a.solve_square(&b)?.column(0))
    }
}

/// `check_mds` as a free function over a generator.
pub fn check_mds(g: &Generator) -> bool {
    g.is_mds()
}

/// M records, each a `K x L~` matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Database {
    records: Vec<Matrix>,
    field: Field,
    k: usize,
    ltilde: usize,
}

impl Database {
    pub fn new(field: Field, records: Vec<Matrix>) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::Dim("database with no records".into()))?;
        let (k, ltilde) = (first.rows(), first.cols());
        for (j, r) in records.iter().enumerate() {
            if (r.rows(), r.cols()) != (k, ltilde) || r.field() != field {
                return Err(Error::Dim(format!(
                    "record {} is {}x{} over F_{}, expected {k}x{ltilde} over F_{}",
                    j + 1,
                    r.rows(),
                    r.cols(),
                    r.field().modulus(),
                    field.modulus()
                )));
            }
        }
        Ok(Database { records, field, k, ltilde })
    }

    /// Uniformly random records.
    pub fn random<R: rand::Rng>(field: Field, m: usize, k: usize, ltilde: usize, rng: &mut R) -> Self {
        let p = field.modulus();
        let records = (0..m)
            .map(|_| Matrix::from_fn(field, k, ltilde, |_, _| field.elem(rng.random_range(0..p))))
            .collect();
        Database { records, field, k, ltilde }
    }

    pub fn zeros(field: Field, m: usize, k: usize, ltilde: usize) -> Self {
        Database { records: vec![Matrix::zeros(field, k, ltilde); m], field, k, ltilde }
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn m(&self) -> usize {
        self.records.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn ltilde(&self) -> usize {
        self.ltilde
    }

    /// Record `j`, 1-based.
    pub fn record(&self, j: usize) -> &Matrix {
        &self.records[j - 1]
    }

    pub fn records(&self) -> &[Matrix] {
        &self.records
    }

    pub fn to_file(&self, servers: usize) -> DatabaseFile {
        DatabaseFile {
            p: self.field.modulus(),
            m: self.m(),
            n: servers,
            k: self.k,
            ltilde: self.ltilde,
            records: self.records.iter().map(Matrix::to_rows).collect(),
        }
    }

    pub fn from_file(file: &DatabaseFile) -> Result<Self> {
        let field = Field::new(file.p)?;
        if file.records.len() != file.m {
            return Err(Error::Dim(format!("M={} but {} records", file.m, file.records.len())));
        }
        let mut records = Vec::with_capacity(file.m);
        for rows in &file.records {
            for row in rows {
                for &v in row {
                    field.checked_elem(v)?;
                }
            }
            records.push(Matrix::from_rows(field, rows)?);
        }
        let db = Database::new(field, records)?;
        if db.k != file.k || db.ltilde != file.ltilde {
            return Err(Error::Dim(format!(
                "records are {}x{} but the header says K={}, Ltilde={}",
                db.k, db.ltilde, file.k, file.ltilde
            )));
        }
        Ok(db)
    }
}

/// One server's stored data: the row `g_i^T W_j` for every record `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareTable {
    server: usize,
    field: Field,
    rows: Vec<Vec<Elem>>,
}

impl ShareTable {
    pub fn new(server: usize, field: Field, rows: Vec<Vec<Elem>>) -> Self {
        ShareTable { server, field, rows }
    }

    /// 0-based server index.
    pub fn server(&self) -> usize {
        self.server
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn ltilde(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Stored symbol of record `j` (1-based) at position `pos` (0-based).
    pub fn symbol(&self, j: usize, pos: usize) -> Option<Elem> {
        self.rows.get(j.checked_sub(1)?)?.get(pos).copied()
    }

    pub fn rows(&self) -> &[Vec<Elem>] {
        &self.rows
    }

    pub fn to_file(&self) -> ShareFile {
        ShareFile {
            server: self.server + 1,
            p: self.field.modulus(),
            rows: self.rows.iter().map(|r| r.iter().map(|e| e.value()).collect()).collect(),
        }
    }

    pub fn from_file(file: &ShareFile) -> Result<Self> {
        let field = Field::new(file.p)?;
        if file.server == 0 {
            return Err(Error::BadCall("share file server ids are 1-based".into()));
        }
        let width = file.rows.first().map_or(0, Vec::len);
        let mut rows = Vec::with_capacity(file.rows.len());
        for row in &file.rows {
            if row.len() != width {
                return Err(Error::Dim("ragged share rows".into()));
            }
            rows.push(row.iter().map(|&v| field.checked_elem(v)).collect::<Result<Vec<_>>>()?);
        }
        Ok(ShareTable { server: file.server - 1, field, rows })
    }
}

/// Encodes every record into N shares.
pub fn encode(db: &Database, g: &Generator) -> Result<Vec<ShareTable>> {
    if db.k() != g.k() || db.field() != g.field() {
        return Err(Error::Dim(format!(
            "database has K={} over F_{}, generator has K={} over F_{}",
            db.k(),
            db.field().modulus(),
            g.k(),
            g.field().modulus()
        )));
    }
    let gt = g.matrix().transpose();
    (0..g.servers())
        .map(|i| {
            let gi = Matrix::from_fn(g.field(), 1, g.k(), |_, c| gt.get(i, c));
            let rows = db
                .records()
                .iter()
                .map(|w| Ok(gi.mul(w)?.row(0).to_vec()))
                .collect::<Result<Vec<_>>>()?;
            Ok(ShareTable::new(i, g.field(), rows))
        })
        .collect()
}

/// On-disk database layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseFile {
    pub p: u64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Ltilde")]
    pub ltilde: usize,
    pub records: Vec<Vec<Vec<u64>>>,
}

/// On-disk share layout; `server` is 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareFile {
    pub server: usize,
    pub p: u64,
    pub rows: Vec<Vec<u64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn repetition_generator() {
        let g = Generator::vandermonde(3, 1, Field::new(7).unwrap()).unwrap();
        assert_eq!(g.matrix().to_rows(), vec![vec![1, 1, 1]]);
        assert!(g.is_mds());
    }

    #[test]
    fn vandermonde_columns() {
        let g = Generator::vandermonde(3, 2, Field::new(7).unwrap()).unwrap();
        assert_eq!(g.matrix().to_rows(), vec![vec![1, 1, 1], vec![1, 2, 3]]);
    }

    #[test]
    fn field_too_small() {
        let f = Field::new(5).unwrap();
        assert!(matches!(Generator::vandermonde(5, 2, f), Err(Error::FieldTooSmall { .. })));
        assert!(Generator::vandermonde(4, 2, f).is_ok());
    }

    #[test]
    fn equal_columns_are_not_mds() {
        let f = Field::new(7).unwrap();
        let m = Matrix::from_rows(f, &[[1u64, 1, 1], [2, 2, 3]]).unwrap();
        assert!(!check_mds(&Generator::from_matrix_unchecked(m.clone())));
        assert!(matches!(Generator::from_matrix(m), Err(Error::NotMds)));
    }

    #[test]
    fn erasure_decode_worked_case() {
        let f = Field::new(7).unwrap();
        let g = Generator::vandermonde(3, 2, f).unwrap();
        let v = g.erasure_decode(&[0, 1], &[f.elem(3), f.elem(5)]).unwrap();
        assert_eq!(v, vec![f.elem(1), f.elem(2)]);
    }

    #[test]
    fn erasure_decode_rejects_repeats() {
        let f = Field::new(7).unwrap();
        let g = Generator::vandermonde(3, 2, f).unwrap();
        assert!(matches!(g.erasure_decode(&[1, 1], &[f.elem(3), f.elem(5)]), Err(Error::BadIndexSet(_))));
        assert!(matches!(g.erasure_decode(&[1], &[f.elem(3)]), Err(Error::BadIndexSet(_))));
        assert!(matches!(g.erasure_decode(&[1, 9], &[f.elem(3), f.elem(5)]), Err(Error::BadIndexSet(_))));
    }

    #[test]
    fn replication_when_k_is_one() {
        let f = Field::for_servers(4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let db = Database::random(f, 3, 1, 5, &mut rng);
        let g = Generator::vandermonde(4, 1, f).unwrap();
        for share in encode(&db, &g).unwrap() {
            for j in 1..=3 {
                assert_eq!(share.rows()[j - 1], db.record(j).row(0));
            }
            let v = g.erasure_decode(&[share.server()], &[share.rows()[0][0]]).unwrap();
            assert_eq!(v, vec![db.record(1).get(0, 0)]);
        }
    }

    #[test]
    fn zero_database_zero_shares() {
        let f = Field::for_servers(3);
        let db = Database::zeros(f, 2, 2, 3);
        let g = Generator::vandermonde(3, 2, f).unwrap();
        assert!(encode(&db, &g).unwrap().iter().all(|s| s.rows().iter().flatten().all(|e| e.is_zero())));
    }

    #[test]
    fn file_round_trip_validates_values() {
        let f = Field::new(7).unwrap();
        let db = Database::random(f, 2, 2, 3, &mut ChaCha8Rng::seed_from_u64(9));
        let file = db.to_file(3);
        assert_eq!(Database::from_file(&file).unwrap(), db);
        let mut bad = file.clone();
        bad.records[0][0][0] = 7;
        assert!(matches!(Database::from_file(&bad), Err(Error::OutOfField { .. })));
        let mut bad = file;
        bad.ltilde = 4;
        assert!(Database::from_file(&bad).is_err());
    }
}
