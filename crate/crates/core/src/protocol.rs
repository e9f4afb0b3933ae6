//! One private retrieval end to end: shuffle, query, answer, decode.

use std::collections::BTreeMap;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{Elem, Field, Matrix};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mds::{encode, Database, Generator, ShareTable};
use crate::params::{Rational, SchemeParams};
use crate::plan::{build_plan, CanonicalQuery, Permutations, PoolRef, QueryPlan, SumRole, WireQuery};

/// One field element per query sum, aligned with the wire query.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WireAnswer {
    pub values: Vec<Elem>,
}

/// Draws M independent uniform shuffles of `ltilde` columns.
///
/// Seeding contract: ChaCha8 seeded from `seed`, one Fisher-Yates shuffle
/// per record in record order. Same seed, same permutations.
pub fn gen_permutations(seed: u64, m: usize, ltilde: usize) -> Permutations {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms = (0..m)
        .map(|_| {
            let mut p: Vec<usize> = (0..ltilde).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    Permutations::from_vecs(perms).expect("shuffles are bijections")
}

/// Server side: each answer is the sum of the referenced stored symbols.
pub fn answer(share: &ShareTable, q: &WireQuery) -> Result<WireAnswer> {
    let f = share.field();
    let values = q
        .sums
        .iter()
        .map(|sum| {
            sum.iter().try_fold(Elem::ZERO, |acc, &(record, pos)| {
                let sym = share.symbol(record, pos).ok_or_else(|| {
                    Error::BadQuery(format!(
                        "term (record {record}, position {pos}) outside {} records of {} symbols",
                        share.m(),
                        share.ltilde()
                    ))
                })?;
                Ok(f.add(acc, sym))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WireAnswer { values })
}

/// Client-side state for one retrieval: the plan and the canonical query
/// sent to each server.
#[derive(Clone, Debug)]
pub struct Session {
    pub seed: u64,
    pub plan: QueryPlan,
    pub queries: Vec<CanonicalQuery>,
}

impl Session {
    pub fn new(theta: usize, seed: u64, p: &SchemeParams) -> Result<Self> {
        let perms = gen_permutations(seed, p.records, p.ltilde as usize);
        let plan = build_plan(theta, p, perms)?;
        let queries = (0..p.servers).map(|i| plan.canonicalize(i)).collect();
        Ok(Session { seed, plan, queries })
    }

    pub fn wire_queries(&self) -> Vec<WireQuery> {
        self.queries.iter().map(|q| q.wire.clone()).collect()
    }

    /// Decodes and packages everything into a transcript.
    pub fn finish(&self, answers: Vec<WireAnswer>, g: &Generator) -> Result<Transcript> {
        let decoded = decode_with(&self.plan, &self.queries, &answers, g)?;
        let queries = self.wire_queries();
        let metrics = Metrics::observe(&self.plan.params, &queries, &answers);
        Ok(Transcript { theta: self.plan.theta, seed: self.seed, queries, answers, decoded, metrics })
    }
}

/// Recovers `W_θ` from all N answers.
pub fn decode(plan: &QueryPlan, answers: &[WireAnswer], g: &Generator) -> Result<Matrix> {
    let queries: Vec<CanonicalQuery> = (0..plan.n()).map(|i| plan.canonicalize(i)).collect();
    decode_with(plan, &queries, answers, g)
}

fn decode_with(plan: &QueryPlan, queries: &[CanonicalQuery], answers: &[WireAnswer], g: &Generator) -> Result<Matrix> {
    let n = plan.n();
    let k = g.k();
    let f = g.field();
    if answers.len() != n || queries.len() != n {
        return Err(Error::Undecodable(format!("{} answers for {n} servers", answers.len())));
    }

    // (|Λ|, Λ, h) orders pure sums by layer
    let mut pools: BTreeMap<(usize, PoolRef), Vec<(usize, Elem)>> = BTreeMap::new();
    let mut desired: BTreeMap<usize, Vec<(usize, Elem)>> = BTreeMap::new();
    let mut mixed: Vec<(usize, usize, PoolRef, Elem)> = Vec::new();
    for (i, (q, a)) in queries.iter().zip(answers).enumerate() {
        if a.values.len() != q.order.len() {
            return Err(Error::Undecodable(format!(
                "server {i} returned {} values for {} sums",
                a.values.len(),
                q.order.len()
            )));
        }
        for (w, &s) in q.order.iter().enumerate() {
            let v = a.values[w];
            match &plan.servers[i][s].role {
                SumRole::Interference(r) => pools.entry((r.typeset.len(), r.clone())).or_default().push((i, v)),
                SumRole::Desired { column } => desired.entry(*column).or_default().push((i, v)),
                SumRole::Mixed { column, interference } => mixed.push((i, *column, interference.clone(), v)),
            }
        }
    }

    let solve = |what: String, obs: &[(usize, Elem)]| -> Result<Vec<Elem>> {
        if obs.len() != k {
            return Err(Error::Undecodable(format!("{what} seen at {} servers, need {k}", obs.len())));
        }
        let servers: Vec<usize> = obs.iter().map(|o| o.0).collect();
        let proj: Vec<Elem> = obs.iter().map(|o| o.1).collect();
        g.erasure_decode(&servers, &proj).map_err(|e| Error::Undecodable(format!("{what}: {e}")))
    };

    let mut known: BTreeMap<PoolRef, Vec<Elem>> = BTreeMap::new();
    for ((_, r), obs) in &pools {
        known.insert(r.clone(), solve(format!("interference sum {r:?}"), obs)?);
    }
    for (i, column, r, v) in mixed {
        let q = known
            .get(&r)
            .ok_or_else(|| Error::Undecodable(format!("interference {r:?} never recovered")))?;
        desired.entry(column).or_default().push((i, f.sub(v, g.project(i, q))));
    }

    let ltilde = plan.params.ltilde as usize;
    let mut out = Matrix::zeros(f, k, ltilde);
    for c in 1..=ltilde {
        let obs = desired.get(&c).map(Vec::as_slice).unwrap_or(&[]);
        let u = solve(format!("desired column {c}"), obs)?;
        let pos = plan.perms.position(plan.theta, c);
        for (r, v) in u.into_iter().enumerate() {
            out.set(r, pos, v);
        }
    }
    Ok(out)
}

/// Observed cost of one retrieval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Metrics {
    pub sub_packetization: u64,
    pub download: u64,
    pub access: u64,
    pub rate: Rational,
}

impl Metrics {
    /// Download counts answer symbols; access counts distinct stored
    /// sub-packets touched per server, summed over servers.
    pub fn observe(p: &SchemeParams, queries: &[WireQuery], answers: &[WireAnswer]) -> Self {
        let download: u64 = answers.iter().map(|a| a.values.len() as u64).sum();
        let access: u64 = queries.iter().map(|q| q.distinct_references() as u64).sum();
        let rate = if download == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(p.sub_packetization, download)
        };
        Metrics { sub_packetization: p.sub_packetization, download, access, rate }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    pub theta: usize,
    pub seed: u64,
    pub queries: Vec<WireQuery>,
    pub answers: Vec<WireAnswer>,
    pub decoded: Matrix,
    pub metrics: Metrics,
}

/// On-disk transcript layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptFile {
    pub theta: usize,
    pub seed: u64,
    pub queries: Vec<WireQuery>,
    pub answers: Vec<Vec<u64>>,
    pub decoded: Vec<Vec<u64>>,
    pub metrics: MetricsFile,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsFile {
    #[serde(rename = "L")]
    pub l: u64,
    #[serde(rename = "D")]
    pub d: u64,
    pub omega: u64,
    pub rate: [u64; 2],
}

impl Transcript {
    pub fn to_file(&self) -> TranscriptFile {
        TranscriptFile {
            theta: self.theta,
            seed: self.seed,
            queries: self.queries.clone(),
            answers: self.answers.iter().map(|a| a.values.iter().map(|v| v.value()).collect()).collect(),
            decoded: self.decoded.to_rows(),
            metrics: MetricsFile {
                l: self.metrics.sub_packetization,
                d: self.metrics.download,
                omega: self.metrics.access,
                rate: [*self.metrics.rate.numer(), *self.metrics.rate.denom()],
            },
        }
    }

    /// Canonical JSON (sorted keys); equal transcripts give equal bytes.
    pub fn to_json(&self) -> Result<String> {
        crate::json::to_sorted_string(&self.to_file())
    }

    pub fn from_file(file: &TranscriptFile, field: Field) -> Result<Self> {
        let answers = file
            .answers
            .iter()
            .map(|vals| Ok(WireAnswer { values: vals.iter().map(|&v| field.checked_elem(v)).collect::<Result<_>>()? }))
            .collect::<Result<Vec<_>>>()?;
        let [num, den] = file.metrics.rate;
        if den == 0 {
            return Err(Error::Decode("rate with zero denominator".into()));
        }
        Ok(Transcript {
            theta: file.theta,
            seed: file.seed,
            queries: file.queries.clone(),
            answers,
            decoded: Matrix::from_rows(field, &file.decoded)?,
            metrics: Metrics {
                sub_packetization: file.metrics.l,
                download: file.metrics.d,
                access: file.metrics.omega,
                rate: Ratio::new(num, den),
            },
        })
    }
}

/// In-process retrieval of record `theta` (1-based).
pub fn retrieve(db: &Database, theta: usize, seed: u64, p: &SchemeParams, g: &Generator) -> Result<Transcript> {
    retrieve_with(Exec::default(), db, theta, seed, p, g)
}

pub fn retrieve_with(
    exec: Exec,
    db: &Database,
    theta: usize,
    seed: u64,
    p: &SchemeParams,
    g: &Generator,
) -> Result<Transcript> {
    if db.m() != p.records || db.k() != p.code_dim || db.ltilde() as u64 != p.ltilde || g.servers() != p.servers {
        return Err(Error::Dim(format!(
            "database M={} K={} Ltilde={} with {} servers does not match parameters M={} K={} Ltilde={} N={}",
            db.m(),
            db.k(),
            db.ltilde(),
            g.servers(),
            p.records,
            p.code_dim,
            p.ltilde,
            p.servers
        )));
    }
    let shares = encode(db, g)?;
    let session = Session::new(theta, seed, p)?;
    let answers = exec
        .map_range(p.servers, |i| answer(&shares[i], &session.queries[i].wire))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    session.finish(answers, g)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MetricCheck {
    pub name: &'static str,
    pub observed: String,
    pub expected: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MetricsReport {
    pub checks: Vec<MetricCheck>,
}

impl MetricsReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Compares a transcript's observed L, D, ω and rate with theory.
///
/// D and ω are recomputed from the transcript's queries and answers rather
/// than trusted from its metrics block.
pub fn metrics(t: &Transcript, p: &SchemeParams) -> MetricsReport {
    let obs = Metrics::observe(p, &t.queries, &t.answers);
    let decoded_l = t.decoded.rows() as u64 * t.decoded.cols() as u64;
    let stated = t.metrics == obs;
    let rows: [(&'static str, String, String, bool); 4] = [
        ("L", decoded_l.to_string(), p.sub_packetization.to_string(), t.metrics.sub_packetization == decoded_l),
        ("D", obs.download.to_string(), p.download.to_string(), stated),
        ("omega", obs.access.to_string(), p.access.to_string(), stated),
        ("rate", obs.rate.to_string(), p.capacity.to_string(), stated),
    ];
    let checks = rows
        .into_iter()
        .map(|(name, observed, expected, consistent)| {
            let pass = observed == expected && consistent;
            MetricCheck { name, observed, expected, pass }
        })
        .collect();
    MetricsReport { checks }
}
