//! Instance-level checks of the scheme's linear-algebra and privacy claims.
//!
//! Ranks are taken over sparse block matrices built from the wire queries,
//! so nothing here trusts the plan's own bookkeeping.

use std::collections::{BTreeMap, HashMap};

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{Elem, SparseMatrix};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mds::{Database, Generator};
use crate::params::{derive_params, Check, SchemeParams};
use crate::plan::{build_plan, Permutations, QueryPlan, TypeSet, WireQuery};
use crate::protocol::gen_permutations;

/// Largest number of permutation tuples `privacy_exhaustive` will walk.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

/// Binary query matrices per (server, record), columns in wire order.
#[derive(Clone, Debug)]
pub struct QueryMatrixBundle {
    pub theta: usize,
    pub generator: Generator,
    pub ltilde: usize,
    /// `q[i][j-1]`: `L̃ x γ_i`, a 1 at each stored position sum `c` reads.
    pub q: Vec<Vec<SparseMatrix>>,
}

impl QueryMatrixBundle {
    pub fn servers(&self) -> usize {
        self.q.len()
    }

    pub fn records(&self) -> usize {
        self.q.first().map_or(0, Vec::len)
    }

    /// Sum count at server `i`.
    pub fn gamma(&self, i: usize) -> usize {
        self.q[i].first().map_or(0, SparseMatrix::cols)
    }

    /// `g_i ⊗ Q^{(i)}_j`, an `L x γ_i` matrix with row `r·L̃ + pos`.
    pub fn qtilde(&self, i: usize, j: usize) -> SparseMatrix {
        self.block(&[i], &[j])
    }

    /// Records stacked vertically, servers side by side.
    pub fn block(&self, servers: &[usize], records: &[usize]) -> SparseMatrix {
        let k = self.generator.k();
        let l = k * self.ltilde;
        let f = self.generator.field();
        let cols: usize = servers.iter().map(|&i| self.gamma(i)).sum();
        let mut out = SparseMatrix::new(f, l * records.len(), cols);
        let mut col0 = 0;
        for &i in servers {
            let g = self.generator.column(i);
            for (b, &j) in records.iter().enumerate() {
                for &(pos, c, _) in self.q[i][j - 1].entries() {
                    for (r, &gr) in g.iter().enumerate() {
                        out.push(b * l + r * self.ltilde + pos, col0 + c, gr);
                    }
                }
            }
            col0 += self.gamma(i);
        }
        out
    }

    /// Server `i`'s answers as `(Vec(W_1) … Vec(W_M))` times its stacked
    /// `Q̃` blocks.
    pub fn answers_via_product(&self, db: &Database, i: usize) -> Vec<Elem> {
        let all: Vec<usize> = (1..=self.records()).collect();
        let x: Vec<Elem> = all.iter().flat_map(|&j| db.record(j).vec().entries().to_vec()).collect();
        self.block(&[i], &all).left_mul(&x)
    }
}

/// Builds the bundle from the plan's canonical wire queries.
pub fn assemble_query_matrices(plan: &QueryPlan, g: &Generator) -> QueryMatrixBundle {
    let wires: Vec<WireQuery> = (0..plan.n()).map(|i| plan.canonicalize(i).wire).collect();
    assemble_from_wire(plan.theta, plan.m(), plan.params.ltilde as usize, &wires, g)
}

pub fn assemble_from_wire(theta: usize, m: usize, ltilde: usize, wires: &[WireQuery], g: &Generator) -> QueryMatrixBundle {
    let f = g.field();
    let q = wires
        .iter()
        .map(|w| {
            let mut per: Vec<SparseMatrix> = (0..m).map(|_| SparseMatrix::new(f, ltilde, w.len())).collect();
            for (c, sum) in w.sums.iter().enumerate() {
                for &(j, pos) in sum {
                    per[j - 1].push(pos, c, Elem::ONE);
                }
            }
            per
        })
        .collect();
    QueryMatrixBundle { theta, generator: g.clone(), ltilde, q }
}

#[derive(Clone, Copy, Debug)]
pub struct RankOptions {
    /// Enumerate every K-subset when `N` is at most this.
    pub exhaustive_up_to: usize,
    pub sampled_subsets: usize,
    pub seed: u64,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions { exhaustive_up_to: 8, sampled_subsets: 30, seed: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RankReport {
    pub checks: Vec<Check>,
}

impl RankReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, failures: Vec<String>) {
        self.checks.push(Check { name: name.into(), pass: failures.is_empty(), detail: failures.join("; ") });
    }
}

fn subsets(n: usize, k: usize, opts: &RankOptions) -> Vec<Vec<usize>> {
    if n <= opts.exhaustive_up_to {
        return (0..n).combinations(k).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    (0..opts.sampled_subsets)
        .map(|_| {
            let mut s = rand::seq::index::sample(&mut rng, n, k).into_vec();
            s.sort_unstable();
            s
        })
        .collect()
}

/// Checks, for the bundle's θ:
/// - `full_theta`: rank of the θ block over all servers is L;
/// - `subset_theta`: over every K-subset Γ it is KL/N;
/// - `subset_interference`: the non-θ block over Γ has rank D - L;
/// - `server_theta`: each server's θ block has rank L/N;
/// - `server_record`: so does each server's block for every record.
pub fn verify_rank_conditions(b: &QueryMatrixBundle, p: &SchemeParams, opts: &RankOptions) -> RankReport {
    let (n, k, m, theta) = (p.servers, p.code_dim, p.records, b.theta);
    let l = p.sub_packetization as usize;
    let per_server = l / n;
    let all: Vec<usize> = (0..n).collect();
    let others: Vec<usize> = (1..=m).filter(|&j| j != theta).collect();
    let mut report = RankReport::default();

    let r = b.block(&all, &[theta]).rank();
    report.push("full_theta", if r == l { vec![] } else { vec![format!("rank {r}, want {l}")] });

    let gammas = subsets(n, k, opts);
    let want_theta = k * l / n;
    let want_int = (p.download - p.sub_packetization) as usize;
    let mut bad_theta = Vec::new();
    let mut bad_int = Vec::new();
    for s in &gammas {
        let r = b.block(s, &[theta]).rank();
        if r != want_theta {
            bad_theta.push(format!("{s:?}: rank {r}, want {want_theta}"));
        }
        let r = b.block(s, &others).rank();
        if r != want_int {
            bad_int.push(format!("{s:?}: rank {r}, want {want_int}"));
        }
    }
    report.push("subset_theta", bad_theta);
    report.push("subset_interference", bad_int);

    let mut bad_server = Vec::new();
    let mut bad_record = Vec::new();
    for i in 0..n {
        for j in 1..=m {
            let r = b.qtilde(i, j).rank();
            if r != per_server {
                let msg = format!("server {i} record {j}: rank {r}, want {per_server}");
                if j == theta {
                    bad_server.push(msg.clone());
                }
                bad_record.push(msg);
            }
        }
    }
    report.push("server_theta", bad_server);
    report.push("server_record", bad_record);
    report
}

/// Which sum order the privacy audit feeds to the comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryOrder {
    /// What is actually sent.
    Canonical,
    /// Plan emission order; leaks θ and exists as a negative control.
    Emission,
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// Number of permutation tuples, or `None` past `u128`.
pub fn tuple_count(m: usize, ltilde: usize) -> Option<u128> {
    if ltilde > 34 {
        return None;
    }
    let f = factorial(ltilde);
    (0..m).try_fold(1u128, |acc, _| acc.checked_mul(f))
}

/// The `idx`-th permutation of `0..n` in lexicographic order.
fn nth_permutation(mut idx: u128, n: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    for i in (0..n).rev() {
        let f = factorial(i);
        out.push(pool.remove((idx / f) as usize));
        idx %= f;
    }
    out
}

fn tuple(idx: u128, m: usize, ltilde: usize) -> Permutations {
    let f = factorial(ltilde);
    let mut rest = idx;
    let perms = (0..m)
        .map(|_| {
            let p = nth_permutation(rest % f, ltilde);
            rest /= f;
            p
        })
        .collect();
    Permutations::from_vecs(perms).expect("lexicographic permutations are bijections")
}

fn query_for(plan: &QueryPlan, i: usize, perms: &Permutations, order: QueryOrder) -> WireQuery {
    match order {
        QueryOrder::Canonical => plan.canonicalize_with(i, perms).wire,
        QueryOrder::Emission => plan.emission_query_with(i, perms),
    }
}

/// True iff every server sees the same multiset of queries for θ and θ′
/// when the permutations range over all tuples.
pub fn privacy_exhaustive(m: usize, n: usize, k: usize, pair: (usize, usize)) -> Result<bool> {
    privacy_exhaustive_with(Exec::default(), m, n, k, pair, QueryOrder::Canonical)
}

pub fn privacy_exhaustive_with(
    exec: Exec,
    m: usize,
    n: usize,
    k: usize,
    (theta, theta2): (usize, usize),
    order: QueryOrder,
) -> Result<bool> {
    let p = derive_params(m, n, k)?;
    let ltilde = p.ltilde as usize;
    let count = tuple_count(m, ltilde).ok_or(Error::TooLarge(u128::MAX))?;
    if count > ENUMERATION_BUDGET {
        return Err(Error::TooLarge(count));
    }
    let id = Permutations::identity(m, ltilde);
    let a = build_plan(theta, &p, id.clone())?;
    let b = build_plan(theta2, &p, id)?;
    // +1 per query under θ, -1 under θ′; equal multisets leave all zeros
    let diff = exec.fold_range(
        count as usize,
        || vec![HashMap::<WireQuery, i64>::new(); n],
        |mut acc, t| {
            let perms = tuple(t as u128, m, ltilde);
            for (i, counts) in acc.iter_mut().enumerate() {
                *counts.entry(query_for(&a, i, &perms, order)).or_default() += 1;
                *counts.entry(query_for(&b, i, &perms, order)).or_default() -= 1;
            }
            acc
        },
        |mut x, y| {
            for (cx, cy) in x.iter_mut().zip(y) {
                for (q, c) in cy {
                    *cx.entry(q).or_default() += c;
                }
            }
            x
        },
    );
    Ok(diff.iter().all(|counts| counts.values().all(|&c| c == 0)))
}

/// Outcome of the sampled comparison. A heuristic, not a proof.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampledPrivacy {
    pub samples: usize,
    pub max_z: f64,
    pub threshold: f64,
    pub pass: bool,
    pub label: &'static str,
}

/// Two-sample frequency comparison of canonical queries: flags any query
/// whose counts under θ and θ′ differ by more than `threshold` standard
/// deviations.
pub fn privacy_sampled(
    exec: Exec,
    p: &SchemeParams,
    (theta, theta2): (usize, usize),
    samples: usize,
    seed: u64,
) -> Result<SampledPrivacy> {
    const THRESHOLD: f64 = 5.0;
    let (m, n, ltilde) = (p.records, p.servers, p.ltilde as usize);
    let id = Permutations::identity(m, ltilde);
    let a = build_plan(theta, p, id.clone())?;
    let b = build_plan(theta2, p, id)?;
    let counts = |plan: &QueryPlan, salt: u64| -> Vec<HashMap<WireQuery, u64>> {
        exec.fold_range(
            samples,
            || vec![HashMap::new(); n],
            |mut acc: Vec<HashMap<WireQuery, u64>>, s| {
                let perms = gen_permutations(seed ^ salt.wrapping_add(s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15), m, ltilde);
                for (i, c) in acc.iter_mut().enumerate() {
                    *c.entry(plan.canonicalize_with(i, &perms).wire).or_default() += 1;
                }
                acc
            },
            |mut x, y| {
                for (cx, cy) in x.iter_mut().zip(y) {
                    for (q, c) in cy {
                        *cx.entry(q).or_default() += c;
                    }
                }
                x
            },
        )
    };
    let ca = counts(&a, 1);
    let cb = counts(&b, 1 << 40);
    let mut max_z: f64 = 0.0;
    for (x, y) in ca.iter().zip(&cb) {
        for q in x.keys().chain(y.keys()) {
            let (u, v) = (*x.get(q).unwrap_or(&0) as f64, *y.get(q).unwrap_or(&0) as f64);
            max_z = max_z.max((u - v).abs() / (u + v).sqrt());
        }
    }
    Ok(SampledPrivacy { samples, max_z, threshold: THRESHOLD, pass: max_z <= THRESHOLD, label: "heuristic" })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StructuralReport {
    pub checks: Vec<Check>,
}

impl StructuralReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Per-server counts by type for every θ with the plan's parameters and
/// permutations.
fn count_profile(plan: &QueryPlan) -> Vec<BTreeMap<TypeSet, usize>> {
    (0..plan.n()).map(|i| plan.type_counts(i)).collect()
}

/// Checks that each server sees `γ_j` sums of every j-record type, never
/// reads a stored position of one record twice, and that these counts do
/// not depend on θ.
pub fn privacy_structural(plan: &QueryPlan) -> Result<StructuralReport> {
    let p = &plan.params;
    let m = p.records;
    let mut counts = Vec::new();
    let mut distinct = Vec::new();
    for i in 0..plan.n() {
        let tc = plan.type_counts(i);
        for size in 1..=m {
            for lam in (1..=m).combinations(size) {
                let got = tc.get(&TypeSet::new(lam.clone())).copied().unwrap_or(0);
                let want = p.gamma(i, size);
                if got as i64 != want {
                    counts.push(format!("server {i} type {lam:?}: {got} sums, want {want}"));
                }
            }
        }
        let wire = plan.canonicalize(i).wire;
        let dup = wire.sums.iter().flatten().duplicates().next();
        if let Some((j, pos)) = dup {
            distinct.push(format!("server {i} reads record {j} position {pos} twice"));
        }
    }
    let mine = count_profile(plan);
    let mut theta_free = Vec::new();
    for t in (1..=m).filter(|&t| t != plan.theta) {
        let other = build_plan(t, p, plan.perms.clone())?;
        if count_profile(&other) != mine {
            theta_free.push(format!("type counts differ between θ={} and θ={t}", plan.theta));
        }
    }
    let mk = |name: &str, f: Vec<String>| Check { name: name.into(), pass: f.is_empty(), detail: f.join("; ") };
    Ok(StructuralReport {
        checks: vec![mk("type_counts", counts), mk("distinct_positions", distinct), mk("theta_independent", theta_free)],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrivacySummary {
    pub mode: &'static str,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampled: Option<SampledPrivacy>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub ranks: BTreeMap<String, bool>,
    pub privacy: PrivacySummary,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.ranks.values().all(|&b| b) && self.privacy.pass
    }
}

/// Full audit of one parameter set: rank identities for every θ under a
/// seeded plan, then exhaustive privacy when within budget, otherwise
/// structural checks plus the sampled heuristic.
pub fn audit(exec: Exec, p: &SchemeParams, g: &Generator, seed: u64) -> Result<AuditReport> {
    let (m, n, ltilde) = (p.records, p.servers, p.ltilde as usize);
    let opts = RankOptions { seed, ..RankOptions::default() };
    let mut ranks: BTreeMap<String, bool> = BTreeMap::new();
    for theta in 1..=m {
        let plan = build_plan(theta, p, gen_permutations(seed, m, ltilde))?;
        let rep = verify_rank_conditions(&assemble_query_matrices(&plan, g), p, &opts);
        for c in rep.checks {
            *ranks.entry(c.name).or_insert(true) &= c.pass;
        }
    }
    let within = tuple_count(m, ltilde).is_some_and(|c| c <= ENUMERATION_BUDGET);
    let privacy = if within {
        let mut pass = true;
        for t in 2..=m {
            pass &= privacy_exhaustive_with(exec, m, n, p.code_dim, (1, t), QueryOrder::Canonical)?;
        }
        PrivacySummary { mode: "exhaustive", pass, sampled: None }
    } else {
        let mut pass = true;
        for theta in 1..=m {
            pass &= privacy_structural(&build_plan(theta, p, gen_permutations(seed, m, ltilde))?)?.pass();
        }
        let mut sampled: Option<SampledPrivacy> = None;
        for t in 2..=m {
            let s = privacy_sampled(exec, p, (1, t), 10_000, seed)?;
            pass &= s.pass;
            if sampled.as_ref().is_none_or(|prev| s.max_z > prev.max_z) {
                sampled = Some(s);
            }
        }
        PrivacySummary { mode: "structural", pass, sampled }
    };
    Ok(AuditReport { ranks, privacy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Field;
    use crate::mds::encode;
    use crate::plan::SumRole;
    use crate::protocol::answer;

    fn gen(n: usize, k: usize) -> Generator {
        Generator::vandermonde(n, k, Field::for_servers(n)).unwrap()
    }

    #[test]
    fn single_term_bundle() {
        let g = gen(3, 2);
        let w = vec![WireQuery { sums: vec![vec![(2, 1)]] }; 3];
        let b = assemble_from_wire(1, 2, 3, &w, &g);
        assert_eq!(b.q[0][1].entries(), &[(1, 0, Elem::ONE)]);
        assert!(b.q[0][0].entries().is_empty());
        assert_eq!(b.qtilde(0, 2).rows(), 6);
    }

    #[test]
    fn example_one_column_counts() {
        let p = derive_params(2, 3, 2).unwrap();
        let plan = build_plan(1, &p, Permutations::identity(2, 3)).unwrap();
        let b = assemble_query_matrices(&plan, &gen(3, 2));
        assert_eq!((b.gamma(0), b.gamma(1), b.gamma(2)), (4, 3, 3));
    }

    #[test]
    fn product_matches_protocol_answers() {
        let p = derive_params(3, 4, 2).unwrap();
        let g = gen(4, 2);
        let db = Database::random(g.field(), 3, 2, p.ltilde as usize, &mut ChaCha8Rng::seed_from_u64(3));
        let plan = build_plan(2, &p, gen_permutations(9, 3, p.ltilde as usize)).unwrap();
        let b = assemble_query_matrices(&plan, &g);
        let shares = encode(&db, &g).unwrap();
        for i in 0..4 {
            let a = answer(&shares[i], &plan.canonicalize(i).wire).unwrap();
            assert_eq!(b.answers_via_product(&db, i), a.values);
        }
    }

    #[test]
    fn rank_identities_on_examples() {
        for (m, n, k) in [(2, 3, 2), (3, 3, 2), (2, 5, 2), (3, 4, 2)] {
            let p = derive_params(m, n, k).unwrap();
            for theta in 1..=m {
                let plan = build_plan(theta, &p, gen_permutations(1, m, p.ltilde as usize)).unwrap();
                let r = verify_rank_conditions(&assemble_query_matrices(&plan, &gen(n, k)), &p, &RankOptions::default());
                assert!(r.pass(), "({m},{n},{k}) θ={theta}: {r:#?}");
            }
        }
    }

    #[test]
    fn deleting_a_desired_term_breaks_full_rank() {
        let p = derive_params(2, 3, 2).unwrap();
        let mut plan = build_plan(1, &p, Permutations::identity(2, 3)).unwrap();
        let s = plan.servers[0].iter_mut().find(|s| matches!(s.role, SumRole::Desired { .. })).unwrap();
        s.terms.clear();
        let r = verify_rank_conditions(&assemble_query_matrices(&plan, &gen(3, 2)), &p, &RankOptions::default());
        assert!(!r.get("full_theta").unwrap().pass);
    }

    #[test]
    fn exhaustive_privacy_and_negative_control() {
        assert!(privacy_exhaustive(2, 3, 2, (1, 2)).unwrap());
        assert!(!privacy_exhaustive_with(Exec::default(), 2, 3, 2, (1, 2), QueryOrder::Emission).unwrap());
        assert!(matches!(privacy_exhaustive(3, 6, 1, (1, 2)), Err(Error::TooLarge(_))));
    }

    #[test]
    fn lexicographic_tuples_cover_everything() {
        let all: std::collections::HashSet<_> = (0..36).map(|t| tuple(t, 2, 3)).collect();
        assert_eq!(all.len(), 36);
        assert_eq!(nth_permutation(0, 4), vec![0, 1, 2, 3]);
        assert_eq!(nth_permutation(23, 4), vec![3, 2, 1, 0]);
    }

    #[test]
    fn structural_checks() {
        let p = derive_params(3, 3, 2).unwrap();
        let plan = build_plan(1, &p, Permutations::identity(3, 9)).unwrap();
        let r = privacy_structural(&plan).unwrap();
        assert!(r.pass(), "{r:#?}");
        assert_eq!((p.alpha.clone(), p.beta.clone()), (vec![2, 2, 0], vec![3, 1, 1]));

        let mut bad = plan.clone();
        let (a, b) = (bad.servers[1][0].terms[0], bad.servers[1].len() - 1);
        let victim = bad.servers[1][b].terms.iter_mut().find(|t| t.record == a.record);
        victim.expect("last sum shares a record").column = a.column;
        assert!(!privacy_structural(&bad).unwrap().get("distinct_positions").unwrap().pass);
    }

    #[test]
    fn sampled_heuristic_passes_on_a_private_plan() {
        let p = derive_params(2, 3, 2).unwrap();
        let s = privacy_sampled(Exec::default(), &p, (1, 2), 2000, 4).unwrap();
        assert!(s.pass, "{s:?}");
    }
}
