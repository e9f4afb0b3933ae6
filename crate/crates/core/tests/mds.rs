use codedpir::algebra::{Elem, Field, Matrix};
use codedpir::mds::{check_mds, encode, Database, Generator, ShareTable};
use codedpir::Error;
use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Determinant of the Vandermonde minor on points `xs`, by the product
/// formula.
fn vandermonde_det(xs: &[u64], p: u64) -> u64 {
    let mut d = 1u128;
    for (i, j) in (0..xs.len()).tuple_combinations() {
        d = d * ((xs[j] + p - xs[i]) % p) as u128 % p as u128;
    }
    d as u64
}

#[test]
fn every_k_subset_is_invertible_up_to_twelve_servers() {
    for n in 2..=12 {
        let f = Field::for_servers(n);
        for k in 1..=n {
            let g = Generator::vandermonde(n, k, f).unwrap();
            assert!(check_mds(&g), "N={n} K={k}");
            for cols in (0..n).combinations(k) {
                let minor = Matrix::from_fn(f, k, k, |r, c| g.matrix().get(r, cols[c]));
                let xs: Vec<u64> = cols.iter().map(|&c| c as u64 + 1).collect();
                assert_ne!(vandermonde_det(&xs, f.modulus()), 0);
                assert_eq!(minor.rank(), k);
            }
        }
    }
}

#[test]
fn rejects_non_mds_and_small_fields() {
    let f = Field::new(257).unwrap();
    // two equal columns
    let m = Matrix::from_rows(f, &[[1u64, 1, 1], [2, 2, 3]]).unwrap();
    assert!(matches!(Generator::from_matrix(m), Err(Error::NotMds)));
    let small = Field::new(5).unwrap();
    assert!(matches!(Generator::vandermonde(5, 2, small), Err(Error::FieldTooSmall { .. })));
    assert!(Generator::vandermonde(4, 2, small).is_ok());
}

#[test]
fn erasure_decode_from_any_k_servers() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (n, k) in [(3, 2), (5, 2), (6, 4), (7, 3)] {
        let f = Field::for_servers(n);
        let g = Generator::vandermonde(n, k, f).unwrap();
        let v: Vec<Elem> = (0..k).map(|_| f.elem(rng.random_range(0..f.modulus()))).collect();
        let proj: Vec<Elem> = (0..n).map(|i| g.project(i, &v)).collect();
        for s in (0..n).combinations(k) {
            let sub: Vec<Elem> = s.iter().map(|&i| proj[i]).collect();
            assert_eq!(g.erasure_decode(&s, &sub).unwrap(), v);
        }
    }
}

#[test]
fn erasure_decode_rejects_bad_sets() {
    let f = Field::for_servers(5);
    let g = Generator::vandermonde(5, 2, f).unwrap();
    let z = [Elem::ZERO, Elem::ZERO];
    assert!(matches!(g.erasure_decode(&[1, 1], &z), Err(Error::BadIndexSet(_))));
    assert!(matches!(g.erasure_decode(&[0, 5], &z), Err(Error::BadIndexSet(_))));
    assert!(matches!(g.erasure_decode(&[0, 1, 2], &[Elem::ZERO; 3]), Err(Error::BadIndexSet(_))));
}

#[test]
fn shares_are_projections_and_files_round_trip() {
    let f = Field::for_servers(4);
    let g = Generator::vandermonde(4, 2, f).unwrap();
    let db = Database::random(f, 3, 2, 4, &mut ChaCha8Rng::seed_from_u64(1));
    let shares = encode(&db, &g).unwrap();
    for (i, s) in shares.iter().enumerate() {
        assert_eq!(s.server(), i);
        for j in 1..=3 {
            for pos in 0..4 {
                assert_eq!(s.symbol(j, pos).unwrap(), g.project(i, &db.record(j).column(pos)));
            }
        }
        let file = s.to_file();
        assert_eq!(file.server, i + 1);
        let back: ShareTable = ShareTable::from_file(&serde_json::from_str(&serde_json::to_string(&file).unwrap()).unwrap()).unwrap();
        assert_eq!(&back, s);
    }
    let file = db.to_file(4);
    assert_eq!(Database::from_file(&file).unwrap(), db);
}
