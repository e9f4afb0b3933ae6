//! The client's private query plan.
//!
//! Record `j`'s columns are privately shuffled (`U_j = W_j S_j`), and each
//! server is asked for sums of *logical* columns, one column per record of
//! the sum's type. Types are visited in a fixed order; for every type `Λ`
//! not containing `θ` the plan emits fresh pure interference sums and then
//! the `Λ ∪ {θ}` mixed sums pairing new desired columns with interference
//! sums other servers already returned.
//!
//! Indices follow the usual convention: records, logical columns, sum
//! indices and `θ` are 1-based; servers and stored positions are 0-based.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SchemeParams;

/// A sorted set of 1-based record indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeSet(Vec<usize>);

impl TypeSet {
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        TypeSet(members)
    }

    pub fn empty() -> Self {
        TypeSet(Vec::new())
    }

    pub fn singleton(j: usize) -> Self {
        TypeSet(vec![j])
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn with(&self, j: usize) -> TypeSet {
        let mut v = self.0.clone();
        v.push(j);
        TypeSet::new(v)
    }

    pub fn without(&self, j: usize) -> TypeSet {
        TypeSet(self.0.iter().copied().filter(|&x| x != j).collect())
    }
}

/// One record's contribution to a sum: logical column `column` of record
/// `record`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term {
    pub record: usize,
    pub column: usize,
}

/// Identifies the `index`-th pure sum of type `typeset`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PoolRef {
    pub typeset: TypeSet,
    pub index: usize,
}

/// What a sum contributes to decoding.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SumRole {
    /// A pure sum of undesired records.
    Interference(PoolRef),
    /// A lone desired column.
    Desired { column: usize },
    /// A desired column plus the pure sum `interference`.
    Mixed { column: usize, interference: PoolRef },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SumSpec {
    pub typeset: TypeSet,
    /// Sorted by record; one term per member of `typeset`.
    pub terms: Vec<Term>,
    pub role: SumRole,
}

/// Per-record column shuffles: `position(j, t)` is the stored (0-based)
/// position holding logical column `t` of record `j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Permutations {
    perms: Vec<Vec<usize>>,
}

impl Permutations {
    pub fn identity(m: usize, ltilde: usize) -> Self {
        Permutations { perms: vec![(0..ltilde).collect(); m] }
    }

    /// `perms[j-1][t-1]` is the stored position of logical column `t`.
    pub fn from_vecs(perms: Vec<Vec<usize>>) -> Result<Self> {
        for (j, p) in perms.iter().enumerate() {
            let mut seen = vec![false; p.len()];
            for &x in p {
                if x >= p.len() || std::mem::replace(&mut seen[x], true) {
                    return Err(Error::BadCall(format!("permutation of record {} is not a bijection", j + 1)));
                }
            }
        }
        Ok(Permutations { perms })
    }

    pub fn m(&self) -> usize {
        self.perms.len()
    }

    pub fn ltilde(&self) -> usize {
        self.perms.first().map_or(0, Vec::len)
    }

    pub fn position(&self, record: usize, column: usize) -> usize {
        self.perms[record - 1][column - 1]
    }

    pub fn as_vecs(&self) -> &[Vec<usize>] {
        &self.perms
    }
}

/// `(record, stored position)`: record 1-based, position 0-based.
pub type WireTerm = (usize, usize);

/// What a server sees: sums of stored symbols with unit coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WireQuery {
    pub sums: Vec<Vec<WireTerm>>,
}

impl WireQuery {
    pub fn len(&self) -> usize {
        self.sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sums.is_empty()
    }

    /// Number of `(record, position)` references.
    pub fn references(&self) -> usize {
        self.sums.iter().map(Vec::len).sum()
    }

    /// Number of distinct stored sub-packets touched.
    pub fn distinct_references(&self) -> usize {
        self.sums.iter().flatten().unique().count()
    }
}

/// A canonical wire query plus `order[w]`, the plan index of wire sum `w`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalQuery {
    pub wire: WireQuery,
    pub order: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryPlan {
    pub theta: usize,
    pub params: SchemeParams,
    pub perms: Permutations,
    /// Per server, sums in emission order.
    pub servers: Vec<Vec<SumSpec>>,
}

/// Subsets of `[M] - {θ}` grouped by size and listed lexicographically,
/// each paired with itself plus `θ`.
pub fn type_order(m: usize, theta: usize) -> Vec<(TypeSet, TypeSet)> {
    let others: Vec<usize> = (1..=m).filter(|&j| j != theta).collect();
    (0..m)
        .flat_map(|size| others.iter().copied().combinations(size))
        .map(|c| {
            let lam = TypeSet::new(c);
            let under = lam.with(theta);
            (lam, under)
        })
        .collect()
}

/// Subsets of `[M] - {θ}` of exactly `size` members, lexicographic.
fn level(m: usize, theta: usize, size: usize) -> Vec<TypeSet> {
    (1..=m).filter(|&j| j != theta).combinations(size).map(TypeSet::new).collect()
}

fn binom(n: usize, r: usize) -> i64 {
    num_integer::binomial(n as i64, r as i64)
}

/// First logical column used by each record of `lam` when the plan
/// distributes `lam`-parts of `gamma`-type sums.
///
/// Supported shapes are `lam == gamma` with `θ ∉ lam`, and
/// `lam == {θ} ⊆ gamma`. The result lists one start per member of `lam`.
pub fn inicol(lam: &TypeSet, gamma: &TypeSet, p: &SchemeParams, theta: usize) -> Result<Vec<usize>> {
    let m = p.records;
    if lam.members() == [theta] && gamma.contains(theta) {
        let rest = gamma.without(theta);
        let nu = rest.len();
        let h = level(m, theta, nu)
            .iter()
            .position(|t| *t == rest)
            .ok_or_else(|| Error::BadCall(format!("{gamma:?} is not a type for θ={theta}")))?;
        let mut start: i64 = (0..nu).map(|s| binom(m - 1, s) * p.pool_size(s + 1)).sum();
        start += h as i64 * p.pool_size(nu + 1) + 1;
        return Ok(vec![start as usize]);
    }
    if lam == gamma && !lam.contains(theta) && lam.members().iter().all(|&j| (1..=m).contains(&j)) {
        let nu = lam.len();
        if nu == 0 {
            return Ok(Vec::new());
        }
        let this_level = level(m, theta, nu);
        let h = this_level.iter().position(|t| t == lam).expect("lam is a subset of [M]-θ");
        let starts = lam
            .members()
            .iter()
            .map(|&j| {
                let earlier: i64 = (1..nu)
                    .map(|s| level(m, theta, s).iter().filter(|t| t.contains(j)).count() as i64 * p.pool_size(s))
                    .sum();
                let same: i64 =
                    this_level[..h].iter().filter(|t| t.contains(j)).count() as i64 * p.pool_size(nu);
                (earlier + same + 1) as usize
            })
            .collect();
        return Ok(starts);
    }
    Err(Error::BadCall(format!("IniCol undefined for ({lam:?}, {gamma:?}) with θ={theta}")))
}

fn ceil_div(a: i64, b: i64) -> i64 {
    (a + b - 1) / b
}

/// Which sum indices (into the `lam`-type pool) each server receives for
/// `gamma`-type sums.
///
/// Each index lands at exactly K servers, and server `i` gets
/// `gamma^{(i)}_{|gamma|}` of them.
pub fn dist2(lam: &TypeSet, gamma: &TypeSet, p: &SchemeParams) -> Vec<Vec<usize>> {
    let (n, k) = (p.servers, p.code_dim);
    if gamma.is_empty() || lam.is_empty() {
        return vec![Vec::new(); n];
    }
    let s = gamma.len();
    let (alpha, beta) = (p.alpha(s), p.beta(s));
    let (nk, kk) = ((n - k) as i64, k as i64);
    let mut out = Vec::with_capacity(n);
    if p.wide_regime() {
        let t = nk * alpha / kk;
        for i in 1..=nk {
            out.push((1..=alpha).map(|h| ceil_div((h - 1) * nk + i, kk) as usize).collect());
        }
        let tail: Vec<usize> = (t + 1..=t + beta).map(|x| x as usize).collect();
        out.extend(std::iter::repeat_n(tail, k));
    } else {
        let head: Vec<usize> = (1..=alpha).map(|x| x as usize).collect();
        out.extend(std::iter::repeat_n(head, n - k));
        let rep = 2 * kk - n as i64;
        let copies = rep * alpha / kk;
        let fresh = beta - copies;
        for i in 1..=kk {
            let mut tuple: Vec<usize> = (1..=copies).map(|h| ceil_div((h - 1) * kk + i, rep) as usize).collect();
            tuple.extend((alpha + 1..=alpha + fresh).map(|x| x as usize));
            out.push(tuple);
        }
    }
    out
}

/// Interference parts for the `lam ∪ {θ}` sums: server `i` gets every pool
/// index it did not already receive as a pure sum, ascending.
pub fn dist1(lam: &TypeSet, p: &SchemeParams, pool: &[Vec<usize>]) -> Result<Vec<Vec<usize>>> {
    let n = p.servers;
    if pool.len() != n {
        return Err(Error::InternalInvariant(format!("pool has {} tuples for {n} servers", pool.len())));
    }
    if lam.is_empty() {
        return Ok(vec![Vec::new(); n]);
    }
    let size = p.pool_size(lam.len());
    let union: Vec<usize> = pool.iter().flatten().copied().sorted().dedup().collect();
    if union.len() as i64 != size || union.iter().copied().ne(1..=size as usize) {
        return Err(Error::InternalInvariant(format!(
            "pool for {lam:?} covers {} sums, expected {size}",
            union.len()
        )));
    }
    let next = lam.len() + 1;
    pool.iter()
        .enumerate()
        .map(|(i, own)| {
            let rest: Vec<usize> = (1..=size as usize).filter(|h| !own.contains(h)).collect();
            if rest.len() as i64 != p.gamma(i, next) {
                return Err(Error::InternalInvariant(format!(
                    "server {i} would get {} interference parts for {}-sums, expected {}",
                    rest.len(),
                    next,
                    p.gamma(i, next)
                )));
            }
            Ok(rest)
        })
        .collect()
}

/// Assembles every server's sums for retrieving record `theta`.
pub fn build_plan(theta: usize, p: &SchemeParams, perms: Permutations) -> Result<QueryPlan> {
    let (m, n) = (p.records, p.servers);
    if !(1..=m).contains(&theta) {
        return Err(Error::BadCall(format!("θ={theta} outside 1..={m}")));
    }
    if perms.m() != m || perms.ltilde() as u64 != p.ltilde {
        return Err(Error::BadCall(format!(
            "permutations cover {} records of {} columns, expected {m} of {}",
            perms.m(),
            perms.ltilde(),
            p.ltilde
        )));
    }
    let mut servers: Vec<Vec<SumSpec>> = vec![Vec::new(); n];
    let theta_set = TypeSet::singleton(theta);
    for (lam, under) in type_order(m, theta) {
        let mut interference = vec![Vec::new(); n];
        let mut starts = Vec::new();
        if !lam.is_empty() {
            let pool = dist2(&lam, &lam, p);
            starts = inicol(&lam, &lam, p, theta)?;
            for (i, tuple) in pool.iter().enumerate() {
                for &h in tuple {
                    servers[i].push(SumSpec {
                        typeset: lam.clone(),
                        terms: pool_terms(&lam, &starts, h),
                        role: SumRole::Interference(PoolRef { typeset: lam.clone(), index: h }),
                    });
                }
            }
            interference = dist1(&lam, p, &pool)?;
        }

        let desired = dist2(&theta_set, &under, p);
        let dstart = inicol(&theta_set, &under, p, theta)?[0];
        for i in 0..n {
            let mut wanted = desired[i].clone();
            wanted.sort_unstable();
            if !lam.is_empty() && wanted.len() != interference[i].len() {
                return Err(Error::InternalInvariant(format!(
                    "server {i}: {} desired parts but {} interference parts for {under:?}",
                    wanted.len(),
                    interference[i].len()
                )));
            }
            for (slot, &h) in wanted.iter().enumerate() {
                let column = dstart + h - 1;
                let mut terms = vec![Term { record: theta, column }];
                let role = if lam.is_empty() {
                    SumRole::Desired { column }
                } else {
                    let hi = interference[i][slot];
                    terms.extend(pool_terms(&lam, &starts, hi));
                    terms.sort_unstable();
                    SumRole::Mixed { column, interference: PoolRef { typeset: lam.clone(), index: hi } }
                };
                servers[i].push(SumSpec { typeset: under.clone(), terms, role });
            }
        }
    }
    Ok(QueryPlan { theta, params: p.clone(), perms, servers })
}

fn pool_terms(lam: &TypeSet, starts: &[usize], h: usize) -> Vec<Term> {
    lam.members().iter().zip(starts).map(|(&record, &start)| Term { record, column: start + h - 1 }).collect()
}

fn wire_sum(spec: &SumSpec, perms: &Permutations) -> Vec<WireTerm> {
    spec.terms.iter().map(|t| (t.record, perms.position(t.record, t.column))).collect()
}

fn canonical_cmp(a: &[WireTerm], b: &[WireTerm]) -> Ordering {
    a.iter().map(|t| t.0).cmp(b.iter().map(|t| t.0)).then_with(|| a.iter().map(|t| t.1).cmp(b.iter().map(|t| t.1)))
}

impl QueryPlan {
    pub fn m(&self) -> usize {
        self.params.records
    }

    pub fn n(&self) -> usize {
        self.params.servers
    }

    /// The wire query for `server` under the plan's own permutations.
    pub fn canonicalize(&self, server: usize) -> CanonicalQuery {
        self.canonicalize_with(server, &self.perms)
    }

    /// The wire query for `server` as if the plan had been drawn with
    /// `perms`: sums sorted by record set, then by stored positions.
    pub fn canonicalize_with(&self, server: usize, perms: &Permutations) -> CanonicalQuery {
        let sums: Vec<Vec<WireTerm>> = self.servers[server].iter().map(|s| wire_sum(s, perms)).collect();
        let mut order: Vec<usize> = (0..sums.len()).collect();
        order.sort_by(|&a, &b| canonical_cmp(&sums[a], &sums[b]));
        let sorted = order.iter().map(|&i| sums[i].clone()).collect();
        CanonicalQuery { wire: WireQuery { sums: sorted }, order }
    }

    /// Sums in the order the plan emitted them. This order depends on θ and
    /// must never be sent; it exists for negative-control audits.
    pub fn emission_query_with(&self, server: usize, perms: &Permutations) -> WireQuery {
        WireQuery { sums: self.servers[server].iter().map(|s| wire_sum(s, perms)).collect() }
    }

    pub fn type_counts(&self, server: usize) -> BTreeMap<TypeSet, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.servers[server] {
            *counts.entry(s.typeset.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn total_sums(&self) -> usize {
        self.servers.iter().map(Vec::len).sum()
    }
}
