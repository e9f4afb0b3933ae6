use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An element of a prime field, always held in reduced form.
///
/// Elements carry no modulus of their own; arithmetic goes through the
/// owning [`Field`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Elem(u64);

impl Elem {
    pub const ZERO: Elem = Elem(0);
    pub const ONE: Elem = Elem(1);

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Elem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Binary (or unary, for `Inv`) field operation selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldOp {
    Add,
    Sub,
    Mul,
    /// Inverse of the first operand; the second is ignored.
    Inv,
}

/// The prime field F_p.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Field {
    modulus: u64,
}

impl Field {
    /// Builds F_p, rejecting composite or too-small moduli.
    pub fn new(modulus: u64) -> Result<Self> {
        if !is_prime(modulus) {
            return Err(Error::NotPrime(modulus));
        }
        Ok(Field { modulus })
    }

    /// The default field for `servers` storage nodes: the least prime above
    /// `max(servers, 256)`.
    pub fn for_servers(servers: usize) -> Self {
        let p = smallest_prime_gt((servers as u64).max(256));
        Field { modulus: p }
    }

    pub fn modulus(self) -> u64 {
        self.modulus
    }

    /// Reduces an arbitrary integer into the field.
    pub fn elem(self, value: u64) -> Elem {
        Elem(value % self.modulus)
    }

    /// Accepts `value` only if it is already reduced.
    pub fn checked_elem(self, value: u64) -> Result<Elem> {
        if value < self.modulus {
            Ok(Elem(value))
        } else {
            Err(Error::OutOfField { value, modulus: self.modulus })
        }
    }

    pub fn add(self, a: Elem, b: Elem) -> Elem {
        let s = a.0 as u128 + b.0 as u128;
        Elem((s % self.modulus as u128) as u64)
    }

    pub fn sub(self, a: Elem, b: Elem) -> Elem {
        if a.0 >= b.0 {
            Elem(a.0 - b.0)
        } else {
            Elem(self.modulus - (b.0 - a.0))
        }
    }

    pub fn neg(self, a: Elem) -> Elem {
        if a.0 == 0 {
            a
        } else {
            Elem(self.modulus - a.0)
        }
    }

    pub fn mul(self, a: Elem, b: Elem) -> Elem {
        Elem(((a.0 as u128 * b.0 as u128) % self.modulus as u128) as u64)
    }

    pub fn pow(self, base: Elem, mut exp: u64) -> Elem {
        let mut acc = Elem::ONE;
        let mut b = base;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse by Fermat's little theorem.
    pub fn inv(self, a: Elem) -> Result<Elem> {
        if a.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(self.pow(a, self.modulus - 2))
    }

    pub fn apply(self, op: FieldOp, a: Elem, b: Elem) -> Result<Elem> {
        Ok(match op {
            FieldOp::Add => self.add(a, b),
            FieldOp::Sub => self.sub(a, b),
            FieldOp::Mul => self.mul(a, b),
            FieldOp::Inv => self.inv(a)?,
        })
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for the full `u64` range.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Least prime strictly greater than `n`.
pub fn smallest_prime_gt(n: u64) -> u64 {
    let mut c = n + 1;
    while !is_prime(c) {
        c += 1;
    }
    c
}
