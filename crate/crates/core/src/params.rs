//! Parameter dimensioning and concrete-security bounds.
//!
//! Bounds are kept as exact dyadic rationals `a · 2^e` so that values
//! around `2^-128` survive arithmetic without rounding.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul};
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::lamport::LamportParams;

/// A nonnegative dyadic rational `mantissa · 2^exponent`.
///
/// Normalized so the mantissa is odd (or zero, with exponent 0), which
/// makes structural equality coincide with numeric equality.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Epsilon {
    mantissa: BigUint,
    exponent: i64,
}

impl Epsilon {
    pub fn new(mantissa: impl Into<BigUint>, exponent: i64) -> Self {
        let mut mantissa = mantissa.into();
        if mantissa.is_zero() {
            return Epsilon::zero();
        }
        let tz = mantissa.trailing_zeros().unwrap_or(0);
        mantissa >>= tz;
        Epsilon {
            mantissa,
            exponent: exponent + tz as i64,
        }
    }

    pub fn zero() -> Self {
        Epsilon {
            mantissa: BigUint::zero(),
            exponent: 0,
        }
    }

    pub fn one() -> Self {
        Epsilon::pow2(0)
    }

    pub fn pow2(exponent: i64) -> Self {
        Epsilon {
            mantissa: BigUint::one(),
            exponent,
        }
    }

    pub fn mantissa(&self) -> &BigUint {
        &self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn scale(&self, factor: u64) -> Self {
        Epsilon::new(&self.mantissa * BigUint::from(factor), self.exponent)
    }

    pub fn mul_pow2(&self, shift: i64) -> Self {
        if self.is_zero() {
            return Epsilon::zero();
        }
        Epsilon {
            mantissa: self.mantissa.clone(),
            exponent: self.exponent + shift,
        }
    }

    pub fn exceeds_one(&self) -> bool {
        *self > Epsilon::one()
    }

    /// `min(self, 1)`: a bound above one says nothing.
    pub fn clamped(&self) -> Self {
        if self.exceeds_one() {
            Epsilon::one()
        } else {
            self.clone()
        }
    }

    pub fn log2(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        let bits = self.mantissa.bits();
        let top = if bits > 60 {
            (&self.mantissa >> (bits - 60)).to_f64().unwrap_or(0.0).log2() + (bits - 60) as f64
        } else {
            self.mantissa.to_f64().unwrap_or(0.0).log2()
        };
        top + self.exponent as f64
    }

    /// Decimal approximation, for display only.
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.log2().exp2()
        }
    }

    fn aligned(&self, other: &Epsilon) -> (BigUint, BigUint, i64) {
        let e = self.exponent.min(other.exponent);
        (
            &self.mantissa << (self.exponent - e) as u64,
            &other.mantissa << (other.exponent - e) as u64,
            e,
        )
    }
}

impl Add for &Epsilon {
    type Output = Epsilon;

    fn add(self, rhs: &Epsilon) -> Epsilon {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        let (a, b, e) = self.aligned(rhs);
        Epsilon::new(a + b, e)
    }
}

impl Add for Epsilon {
    type Output = Epsilon;

    fn add(self, rhs: Epsilon) -> Epsilon {
        &self + &rhs
    }
}

impl Mul<u64> for &Epsilon {
    type Output = Epsilon;

    fn mul(self, rhs: u64) -> Epsilon {
        self.scale(rhs)
    }
}

impl PartialOrd for Epsilon {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Epsilon {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        let (a, b, _) = self.aligned(other);
        a.cmp(&b)
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        if self.exponent == 0 {
            write!(f, "{}", self.mantissa)?;
        } else if self.mantissa.is_one() {
            write!(f, "2^{}", self.exponent)?;
        } else {
            write!(f, "{}*2^{}", self.mantissa, self.exponent)?;
        }
        write!(f, " (~{:.3e})", self.to_f64())
    }
}

impl FromStr for Epsilon {
    type Err = Error;

    /// Accepts `0`, `a`, `2^e` and `a*2^e`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse probability {s:?}"));
        let s = s.trim();
        let (mant, exp) = match s.split_once('*') {
            Some((m, p)) => (m.trim(), Some(p.trim())),
            None if s.starts_with("2^") => ("1", Some(s)),
            None => (s, None),
        };
        let mantissa: BigUint = mant.parse().map_err(|_| bad())?;
        let exponent = match exp {
            Some(p) => p
                .strip_prefix("2^")
                .ok_or_else(bad)?
                .parse::<i64>()
                .map_err(|_| bad())?,
            None => 0,
        };
        Ok(Epsilon::new(mantissa, exponent))
    }
}

/// Attacker resources assumed when sizing `n` and `ℓ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttackModel {
    Classical,
    QuantumLowMemory,
    /// Parallel attacker with `2^mu` resources.
    Parallel { mu: u32 },
}

impl AttackModel {
    pub fn name(&self) -> &'static str {
        match self {
            AttackModel::Classical => "classical",
            AttackModel::QuantumLowMemory => "quantum",
            AttackModel::Parallel { .. } => "parallel",
        }
    }

    pub fn mu(&self) -> u32 {
        match self {
            AttackModel::Parallel { mu } => *mu,
            _ => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamProfile {
    pub security_bits: u32,
    pub model: AttackModel,
    pub string_bits: u32,
    pub digest_bits: u32,
}

impl ParamProfile {
    pub fn lamport_params(&self) -> Result<LamportParams> {
        LamportParams::new(self.string_bits as usize, self.digest_bits as usize)
    }

    /// `model k mu n l`
    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {} {}",
            self.model.name(),
            self.security_bits,
            self.model.mu(),
            self.string_bits,
            self.digest_bits
        )
    }
}

fn round_up8(v: u64) -> Result<u32> {
    let r = v.div_ceil(8) * 8;
    u32::try_from(r)
        .ok()
        .filter(|&r| r <= 65528)
        .ok_or_else(|| Error::InvalidParameter(format!("dimension {r} too large")))
}

/// Smallest byte-aligned `(n, ℓ)` meeting the attacker model's bounds
/// for `k`-bit security.
pub fn dimension(security_bits: u32, model: AttackModel) -> Result<ParamProfile> {
    if security_bits == 0 {
        return Err(Error::InvalidParameter("security level must be positive".into()));
    }
    let k = security_bits as u64;
    let (n, l) = match model {
        AttackModel::Classical => (k.max(8), 2 * k),
        AttackModel::QuantumLowMemory => (2 * k, 2 * k),
        AttackModel::Parallel { mu } => (2 * k + mu as u64, 2 * (k + mu as u64)),
    };
    Ok(ParamProfile {
        security_bits,
        model,
        string_bits: round_up8(n)?,
        digest_bits: round_up8(l)?,
    })
}

/// A bound together with the usage it covers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecurityBound {
    pub epsilon: Epsilon,
    pub identities: u64,
    pub signatures_per_identity: u64,
}

impl SecurityBound {
    pub fn clamped(&self) -> Epsilon {
        self.epsilon.clamped()
    }
}

/// `r(2ℓ·ε_OW + ε_CR)`
pub fn bound_lamport(digest_bits: u64, eps_ow: &Epsilon, eps_cr: &Epsilon, identities: u64) -> SecurityBound {
    let per_key = &eps_ow.scale(2 * digest_bits) + eps_cr;
    SecurityBound {
        epsilon: per_key.scale(identities),
        identities,
        signatures_per_identity: 1,
    }
}

/// `r(2ℓ·ε_OW + ε_CR + ε_RG)`, for seed-generated keys.
pub fn bound_lamport_prng(
    digest_bits: u64,
    eps_ow: &Epsilon,
    eps_cr: &Epsilon,
    eps_rg: &Epsilon,
    identities: u64,
) -> SecurityBound {
    let per_key = &(&eps_ow.scale(2 * digest_bits) + eps_cr) + eps_rg;
    SecurityBound {
        epsilon: per_key.scale(identities),
        identities,
        signatures_per_identity: 1,
    }
}

/// `r(2^H·ε_OTS + ε_CR')`
pub fn bound_merkle(height: u32, eps_ots: &Epsilon, eps_cr_tree: &Epsilon, identities: u64) -> SecurityBound {
    let per_tree = &eps_ots.mul_pow2(height as i64) + eps_cr_tree;
    SecurityBound {
        epsilon: per_tree.scale(identities),
        identities,
        signatures_per_identity: 1u64 << height,
    }
}

/// `r[2^H(2ℓ·ε_OW + ε_RG + ε_CR) + ε_CR']`
pub fn bound_merkle_lamport_prng(
    height: u32,
    digest_bits: u64,
    eps_ow: &Epsilon,
    eps_rg: &Epsilon,
    eps_cr: &Epsilon,
    eps_cr_tree: &Epsilon,
    identities: u64,
) -> SecurityBound {
    let leaf = &(&eps_ow.scale(2 * digest_bits) + eps_rg) + eps_cr;
    let per_tree = &leaf.mul_pow2(height as i64) + eps_cr_tree;
    SecurityBound {
        epsilon: per_tree.scale(identities),
        identities,
        signatures_per_identity: 1u64 << height,
    }
}

/// `ε + 4ℓ·ε_OW + 2ε_CR`: a QKD run whose two transcript authenticators
/// are Lamport signatures.
pub fn bound_qkd_composition(eps_qkd: &Epsilon, digest_bits: u64, eps_ow: &Epsilon, eps_cr: &Epsilon) -> Epsilon {
    let auth = &eps_ow.scale(4 * digest_bits) + &eps_cr.scale(2);
    eps_qkd + &auth
}
