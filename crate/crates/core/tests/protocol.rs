use codedpir::algebra::Field;
use codedpir::exec::Exec;
use codedpir::mds::{Database, Generator};
use codedpir::params::derive_params;
use codedpir::protocol::{gen_permutations, metrics, retrieve_with};
use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn sweep_retrieves_every_record() {
    for m in 2..=4 {
        for n in 2..=6 {
            for k in 1..n {
                let p = derive_params(m, n, k).unwrap();
                let f = Field::for_servers(n);
                let g = Generator::vandermonde(n, k, f).unwrap();
                let db = Database::random(f, m, k, p.ltilde as usize, &mut ChaCha8Rng::seed_from_u64((m * 100 + n * 10 + k) as u64));
                for theta in 1..=m {
                    for seed in 0..3 {
                        let t = retrieve_with(Exec::default(), &db, theta, seed, &p, &g).unwrap();
                        assert_eq!(&t.decoded, db.record(theta), "({m},{n},{k}) θ={theta} seed={seed}");
                        assert_eq!(t.metrics.rate, Ratio::new(p.sub_packetization, p.download));
                        assert!(metrics(&t, &p).pass());
                    }
                }
            }
        }
    }
}

#[test]
fn single_column_records_need_no_shuffle() {
    let perms = gen_permutations(123, 5, 1);
    assert!(perms.as_vecs().iter().all(|v| v == &[0]));
}

#[test]
fn shuffles_look_uniform() {
    // 60000 shuffles of 3 columns: each of the 6 orders within 3σ of 1/6
    let samples = 60_000u64;
    let mut counts = std::collections::HashMap::<Vec<usize>, u64>::new();
    for s in 0..samples {
        *counts.entry(gen_permutations(s, 1, 3).as_vecs()[0].clone()).or_default() += 1;
    }
    assert_eq!(counts.len(), 6);
    let mean = samples as f64 / 6.0;
    let sigma = (samples as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
    for (perm, c) in counts {
        assert!((c as f64 - mean).abs() <= 3.0 * sigma, "{perm:?}: {c}");
    }
}
