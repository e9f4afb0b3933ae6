//! Integer parameters of the minimal sub-packetization scheme.
//!
//! Servers split into two groups: the first `N-K` servers each answer
//! `alpha_j` sums of every j-record type, the last `K` servers `beta_j`.
//! The ladders come from closed forms seeded at `alpha_1 = 0` (when
//! `N >= 2K`) or `alpha_M = 0` (when `N < 2K`).

use num_integer::{binomial, Integer};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = Ratio<u64>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemeParams {
    /// M
    pub records: usize,
    /// N
    pub servers: usize,
    /// K
    pub code_dim: usize,
    /// gcd(N, K)
    pub gcd: u64,
    /// N / gcd
    pub n: u64,
    /// K / gcd
    pub k: u64,
    /// Columns per record: n^(M-1).
    pub ltilde: u64,
    /// Sub-packetization K * n^(M-1).
    pub sub_packetization: u64,
    /// `alpha[j-1]` is the per-type sum count of j-sums at each of the first N-K servers.
    pub alpha: Vec<i64>,
    /// `beta[j-1]` is the same count at each of the last K servers.
    pub beta: Vec<i64>,
    /// Download size in field symbols.
    pub download: u64,
    /// Access number.
    pub access: u64,
    pub capacity: Rational,
}

fn ipow(base: i128, exp: u64) -> Result<i128> {
    let exp = u32::try_from(exp).map_err(|_| Error::Overflow)?;
    base.checked_pow(exp).ok_or(Error::Overflow)
}

fn exact_div(num: i128, den: i128) -> Result<i128> {
    if num % den != 0 {
        return Err(Error::InternalInvariant(format!("{num} is not divisible by {den}")));
    }
    Ok(num / den)
}

fn to_i64(v: i128) -> Result<i64> {
    i64::try_from(v).map_err(|_| Error::Overflow)
}

fn to_u64(v: i128) -> Result<u64> {
    u64::try_from(v).map_err(|_| Error::Overflow)
}

/// Builds every parameter for `(M, N, K)`.
pub fn derive_params(m: usize, servers: usize, code_dim: usize) -> Result<SchemeParams> {
    if m < 2 || code_dim < 1 || code_dim >= servers {
        return Err(Error::UnsupportedRegime { m, n: servers, k: code_dim });
    }
    let gcd = (servers as u64).gcd(&(code_dim as u64));
    let n = servers as u64 / gcd;
    let k = code_dim as u64 / gcd;
    let (ni, ki) = (n as i128, k as i128);
    let mm = m as u64;

    let mut alpha = Vec::with_capacity(m);
    let mut beta = Vec::with_capacity(m);
    if servers >= 2 * code_dim {
        for j in 1..=mm {
            let a = exact_div(ipow(ni - ki, j - 1)? - ipow(-ki, j - 1)?, ni)? * ipow(ki, mm - j + 1)?;
            let b = if j == 1 {
                ipow(ki, mm - 1)?
            } else {
                exact_div(ipow(ni - ki, j - 2)? - ipow(-ki, j - 2)?, ni)? * (ni - ki) * ipow(ki, mm - j + 1)?
            };
            alpha.push(to_i64(a)?);
            beta.push(to_i64(b)?);
        }
    } else {
        for j in 1..=mm {
            let a = exact_div(ipow(ki, mm - j)? - ipow(ki - ni, mm - j)?, ni)? * ki * ipow(ni - ki, j - 1)?;
            let b = exact_div(ipow(ki, mm - j + 1)? - ipow(ki - ni, mm - j + 1)?, ni)? * ipow(ni - ki, j - 1)?;
            alpha.push(to_i64(a)?);
            beta.push(to_i64(b)?);
        }
    }

    let ltilde = to_u64(ipow(ni, mm - 1)?)?;
    let sub_packetization = (code_dim as u64).checked_mul(ltilde).ok_or(Error::Overflow)?;
    let download = to_u64(exact_div(
        (code_dim as i128) * (ipow(ni, mm)? - ipow(ki, mm)?),
        ni - ki,
    )?)?;
    let access = (m as u64).checked_mul(sub_packetization).ok_or(Error::Overflow)?;

    Ok(SchemeParams {
        records: m,
        servers,
        code_dim,
        gcd,
        n,
        k,
        ltilde,
        sub_packetization,
        alpha,
        beta,
        download,
        access,
        capacity: capacity(m, servers, code_dim)?,
    })
}

/// Coded PIR capacity `(1 + K/N + ... + (K/N)^(M-1))^-1` as an exact rational.
pub fn capacity(m: usize, servers: usize, code_dim: usize) -> Result<Rational> {
    if m < 1 || code_dim < 1 || code_dim > servers {
        return Err(Error::BadCall(format!("capacity needs M >= 1 and N >= K >= 1, got ({m},{servers},{code_dim})")));
    }
    let g = (servers as u64).gcd(&(code_dim as u64));
    let (n, k) = ((servers as u64 / g) as u128, (code_dim as u64 / g) as u128);
    let mm = m as u32;
    let top = n.checked_pow(mm - 1).ok_or(Error::Overflow)?;
    let mut sum: u128 = 0;
    for i in 0..mm {
        let term = n
            .checked_pow(mm - 1 - i)
            .and_then(|a| k.checked_pow(i).and_then(|b| a.checked_mul(b)))
            .ok_or(Error::Overflow)?;
        sum = sum.checked_add(term).ok_or(Error::Overflow)?;
    }
    let top = u64::try_from(top).map_err(|_| Error::Overflow)?;
    let sum = u64::try_from(sum).map_err(|_| Error::Overflow)?;
    Ok(Ratio::new(top, sum))
}

impl SchemeParams {
    /// `alpha_j`, 1-based.
    pub fn alpha(&self, j: usize) -> i64 {
        self.alpha[j - 1]
    }

    /// `beta_j`, 1-based.
    pub fn beta(&self, j: usize) -> i64 {
        self.beta[j - 1]
    }

    /// Number of sums of each j-record type at server `server` (0-based).
    pub fn gamma(&self, server: usize, j: usize) -> i64 {
        if server < self.servers - self.code_dim {
            self.alpha(j)
        } else {
            self.beta(j)
        }
    }

    /// Distinct sums of one j-record type across all servers:
    /// `((N-K) alpha_j + K beta_j) / K`.
    pub fn pool_size(&self, j: usize) -> i64 {
        let (nk, k) = ((self.servers - self.code_dim) as i64, self.code_dim as i64);
        (nk * self.alpha(j) + k * self.beta(j)) / k
    }

    pub fn wide_regime(&self) -> bool {
        self.servers >= 2 * self.code_dim
    }

    /// Sums downloaded from one server.
    pub fn sums_at(&self, server: usize) -> u64 {
        (1..=self.records)
            .map(|j| binomial(self.records as u64, j as u64) * self.gamma(server, j) as u64)
            .sum()
    }

    pub fn to_json(&self) -> ParamsJson {
        ParamsJson {
            m: self.records,
            n_servers: self.servers,
            k_code: self.code_dim,
            d: self.gcd,
            n: self.n,
            k: self.k,
            ltilde: self.ltilde,
            l: self.sub_packetization,
            alpha: self.alpha.clone(),
            beta: self.beta.clone(),
            download: self.download,
            omega: self.access,
            capacity: [*self.capacity.numer(), *self.capacity.denom()],
            p: None,
        }
    }
}

/// JSON view of [`SchemeParams`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamsJson {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n_servers: usize,
    #[serde(rename = "K")]
    pub k_code: usize,
    pub d: u64,
    pub n: u64,
    pub k: u64,
    #[serde(rename = "Ltilde")]
    pub ltilde: u64,
    #[serde(rename = "L")]
    pub l: u64,
    pub alpha: Vec<i64>,
    pub beta: Vec<i64>,
    #[serde(rename = "D")]
    pub download: u64,
    pub omega: u64,
    pub capacity: [u64; 2],
    /// Field modulus, when the file describes a concrete deployment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConstraintReport {
    pub checks: Vec<Check>,
}

impl ConstraintReport {
    fn push(&mut self, name: &str, failures: Vec<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            pass: failures.is_empty(),
            detail: failures.join("; "),
        });
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks the divisibility, recurrence and closed-form identities the
/// distribution functions rely on.
pub fn verify_constraints(p: &SchemeParams) -> ConstraintReport {
    let mut report = ConstraintReport::default();
    let m = p.records;
    let (nk, kk) = ((p.servers - p.code_dim) as i128, p.code_dim as i128);
    let (n, k) = (p.n as i128, p.k as i128);
    let a = |j: usize| p.alpha.get(j - 1).copied().unwrap_or(0) as i128;
    let b = |j: usize| p.beta.get(j - 1).copied().unwrap_or(0) as i128;
    let shape_ok = p.alpha.len() == m && p.beta.len() == m;

    let mut bad = Vec::new();
    if !shape_ok {
        bad.push(format!("expected {m} alpha/beta entries"));
    }
    for j in 1..=m {
        if a(j) < 0 || b(j) < 0 {
            bad.push(format!("j={j}: alpha={} beta={}", a(j), b(j)));
        }
    }
    report.push("integral_nonneg", bad);

    let mut bad = Vec::new();
    for j in 1..=m {
        if (nk * a(j) + kk * b(j)) % kk != 0 {
            bad.push(format!("j={j}"));
        }
    }
    report.push("C1", bad);

    let pool = |j: usize| (nk * a(j) + kk * b(j)) / kk;
    let mut bad = Vec::new();
    for j in 1..m {
        if a(j + 1) + a(j) != pool(j) || b(j + 1) + b(j) != pool(j) {
            bad.push(format!("j={j}"));
        }
    }
    report.push("C2", bad);

    let mut bad = Vec::new();
    for j in 1..m {
        if k * b(j + 1) != (n - k) * a(j) || k * a(j + 1) != k * b(j) + (n - 2 * k) * a(j) {
            bad.push(format!("j={j}"));
        }
    }
    report.push("G1", bad);

    let mut bad = Vec::new();
    if m > 0 && ((n - k) * a(m)) % k != 0 {
        bad.push(format!("k={k} does not divide (n-k)*alpha_M={}", (n - k) * a(m)));
    }
    report.push("k_divides_tail", bad);

    let mut bad = Vec::new();
    for j in 1..=m {
        let want = (n - k).pow(j as u32 - 1) * k.pow((m - j) as u32);
        if (nk * a(j) + kk * b(j)) % kk != 0 || pool(j) != want {
            bad.push(format!("j={j}: pool {} != {want}", pool(j)));
        }
    }
    report.push("eqeq", bad);

    let mut bad = Vec::new();
    let total: i128 = (1..=m).map(|j| binomial(m as i128, j as i128) * (nk * a(j) + kk * b(j))).sum();
    if total != p.download as i128 {
        bad.push(format!("sum over types gives {total}, closed form {}", p.download));
    }
    report.push("download", bad);

    report
}
