//! Finite sets: factorial moments `M_n = Σ_m m(m-1)⋯(m-n+1) ν_m` and their
//! inversion `ν_m = Σ_{n>=m} (-1)^{n-m} M_n / (m! (n-m)!)`.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::momentcalc::rational;

pub const SETCAT_SCHEMA: &str = "clm.setcat.v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetError {
    #[error("convergence guard fails: {0}")]
    GuardFails(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Growth guard `|x_n| <= c · r^n · n!` past the prefix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetEnvelope {
    pub c: f64,
    pub r: f64,
}

/// Moment prefix `M_0, M_1, …`. Without an envelope the moments past the
/// prefix are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorialMomentSeq {
    #[serde(with = "rational::vec")]
    pub moments: Vec<BigRational>,
    #[serde(default)]
    pub envelope: Option<SetEnvelope>,
}

/// Distribution prefix `ν_0, ν_1, …`; past the prefix `ν_m <= c r^m / m!`
/// when a tail is declared, zero otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    #[serde(with = "rational::vec")]
    pub measure: Vec<BigRational>,
    #[serde(default)]
    pub tail: Option<SetEnvelope>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetEntry {
    pub index: usize,
    pub value: f64,
    pub err_bound: f64,
    #[serde(with = "rational::option")]
    pub exact: Option<BigRational>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionReport {
    pub entries: Vec<SetEntry>,
    pub exists_on_prefix: bool,
    pub witness: Option<usize>,
    /// `Σ_{n>=m} 2^{a(n-m)} |M_n| / (m!(n-m)!)` bounded from above, per `m`.
    pub guard: Vec<f64>,
    pub guard_exponent: u32,
}

fn falling(m: u64, n: u64) -> BigUint {
    if n > m {
        return BigUint::zero();
    }
    (0..n).fold(BigUint::one(), |acc, i| acc * (m - i))
}

fn factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, i| acc * i)
}

/// `|Sur([m], [n])|` in the opposite category: injections `[n] -> [m]`.
pub fn sur_count_sets(m: u64, n: u64) -> BigUint {
    falling(m, n)
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn binom_f64(n: u64, m: u64) -> f64 {
    let mut x = 1.0;
    for i in 0..m {
        x *= (n - i) as f64 / (i + 1) as f64;
    }
    x
}

/// `Σ_{n>N} c n!/(m!(n-m)!) ρ^n` for `ρ < 1`, bounded by summing terms until
/// the ratio `ρ(n+1)/(n+1-m)` drops below 1, then closing with a geometric
/// series.
fn binomial_tail(c: f64, rho: f64, m: u64, start: u64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let mut n = start.max(m);
    let mut term = c * binom_f64(n, m) * rho.powi(n as i32);
    let mut sum = 0.0;
    for _ in 0..100_000 {
        let ratio = rho * (n + 1) as f64 / (n + 1 - m) as f64;
        if ratio < 1.0 {
            return (sum + term / (1.0 - ratio)) * (1.0 + 1e-10);
        }
        sum += term;
        term *= ratio;
        n += 1;
    }
    f64::INFINITY
}

fn check_envelope(env: &Option<SetEnvelope>) -> Result<(), SetError> {
    if let Some(e) = env {
        if !(e.c >= 0.0 && e.r >= 0.0 && e.c.is_finite() && e.r.is_finite()) {
            return Err(SetError::Invalid(format!("bad envelope {e:?}")));
        }
    }
    Ok(())
}

/// Inverts factorial moments for `m = 0..=m_max`.
///
/// The guard `Σ_n 2^{a(n-m)} M_n/(m!(n-m)!)` must be finite; past the prefix
/// it is at most `c r^m / (1 - 2^a r)^{m+1}`, so the envelope needs
/// `2^a r < 1`. The prefix is summed exactly, the envelope bounds the rest.
pub fn invert_factorial_moments(seq: &FactorialMomentSeq, m_max: usize, a: u32) -> Result<InversionReport, SetError> {
    check_envelope(&seq.envelope)?;
    if seq.moments.first().is_some_and(|m0| m0.is_negative()) {
        return Err(SetError::Invalid("M_0 must be nonnegative".into()));
    }
    let z = 2f64.powi(a as i32);
    if let Some(env) = seq.envelope {
        if env.c > 0.0 && z * env.r >= 1.0 {
            return Err(SetError::GuardFails(format!(
                "envelope ratio {} gives 2^{a}·r = {} >= 1",
                env.r,
                z * env.r
            )));
        }
    }
    let len = seq.moments.len() as u64;
    let mut entries = Vec::with_capacity(m_max + 1);
    let mut guard = Vec::with_capacity(m_max + 1);
    for m in 0..=m_max as u64 {
        let mfact = factorial(m);
        let mut exact = BigRational::zero();
        let mut g = 0.0;
        for n in m..len {
            let den = BigInt::from(&mfact * factorial(n - m));
            let t = &seq.moments[n as usize] / BigRational::from_integer(den);
            g += z.powi((n - m) as i32) * to_f64(&t.abs());
            if (n - m) % 2 == 0 {
                exact += t;
            } else {
                exact -= t;
            }
        }
        let value = to_f64(&exact);
        let (tail, guard_tail) = match seq.envelope {
            Some(env) if env.c > 0.0 => (
                binomial_tail(env.c, env.r, m, len.max(m)),
                env.c * env.r.powi(m as i32) / (1.0 - z * env.r).powi(m as i32 + 1),
            ),
            _ => (0.0, 0.0),
        };
        guard.push(g + guard_tail);
        let representable = BigRational::from_float(value).as_ref() == Some(&exact);
        let rounding = if representable { 0.0 } else { 2.0 * f64::EPSILON * value.abs() };
        let is_exact = tail == 0.0;
        entries.push(SetEntry {
            index: m as usize,
            value,
            err_bound: tail + rounding,
            exact: is_exact.then_some(exact),
        });
    }
    let witness = entries
        .iter()
        .find(|e| match &e.exact {
            Some(x) => x.is_negative(),
            None => e.value + e.err_bound < 0.0,
        })
        .map(|e| e.index);
    Ok(InversionReport {
        exists_on_prefix: witness.is_none(),
        witness,
        entries,
        guard,
        guard_exponent: a,
    })
}

/// `M_n = Σ_m falling(m, n) ν_m` for `n = 0..=n_max`.
pub fn forward_factorial_moments(dist: &Distribution, n_max: usize) -> Result<Vec<SetEntry>, SetError> {
    check_envelope(&dist.tail)?;
    if let Some(t) = dist.tail {
        if t.c > 0.0 && t.r >= 1.0 {
            return Err(SetError::Invalid("a declared tail needs r < 1".into()));
        }
    }
    let len = dist.measure.len() as u64;
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max as u64 {
        let exact: BigRational = (n..len)
            .map(|m| &dist.measure[m as usize] * BigRational::from_integer(falling(m, n).into()))
            .sum();
        let value = to_f64(&exact);
        // past the prefix: Σ_{m>=len} falling(m,n) c r^m / m! = c r^n Σ r^{m-n}/(m-n)!
        let tail = match dist.tail {
            Some(t) if t.c > 0.0 => {
                let start = len.max(n);
                let mut term = t.c * t.r.powi(n as i32);
                let mut j = 0u64;
                while j < start - n {
                    j += 1;
                    term *= t.r / j as f64;
                }
                // Σ_{j>=start-n} r^j/j! <= term / (1 - r/(j+1))
                term / (1.0 - t.r / (j + 1) as f64) * (1.0 + 1e-10)
            }
            _ => 0.0,
        };
        let representable = BigRational::from_float(value).as_ref() == Some(&exact);
        let rounding = if representable { 0.0 } else { 2.0 * f64::EPSILON * value.abs() };
        out.push(SetEntry {
            index: n as usize,
            value,
            err_bound: tail + rounding,
            exact: (tail == 0.0).then_some(exact),
        });
    }
    Ok(out)
}

fn parse_doc<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, SetError> {
    let v: serde_json::Value = serde_json::from_str(s).map_err(|e| SetError::Invalid(e.to_string()))?;
    match v.get("schema").and_then(|x| x.as_str()) {
        Some(SETCAT_SCHEMA) => {}
        other => return Err(SetError::Invalid(format!("expected schema {SETCAT_SCHEMA}, got {other:?}"))),
    }
    serde_json::from_value(v).map_err(|e| SetError::Invalid(e.to_string()))
}

/// `{"schema": "clm.setcat.v1", "moments": [...], "envelope": {"c": .., "r": ..}}`.
pub fn parse_moments(s: &str) -> Result<FactorialMomentSeq, SetError> {
    parse_doc(s)
}

/// `{"schema": "clm.setcat.v1", "measure": [...], "tail": {"c": .., "r": ..}}`.
pub fn parse_distribution(s: &str) -> Result<Distribution, SetError> {
    parse_doc(s)
}
