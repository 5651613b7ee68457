//! Moment problem on finite `Z/p^k`-modules: inverting a moment sequence
//! into a measure, the forward direction, convergence certificates and the
//! finite inversion identity.

mod certify;
mod identity;
mod invert;
pub mod rational;

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abelianp::{sur_count, sym2_order, AbelianError, Level, Partition};

pub use certify::{envelope_check, wellbehaved_certify, Certificate, EnvelopeReport, Verdict, ENVELOPE_NOTE};
pub use identity::{inversion_identity_check, mu_hat, mu_hat_fiber, mu_hat_oracle, IdentityReport};
pub use invert::{
    existence_verdict, measure_card_power, measure_from_moments, moments_from_measure, tail_mass_bound,
    ExistenceReport, ForwardMoment, PRODUCT_CUTOFF,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error(transparent)]
    Abelian(#[from] AbelianError),
    #[error("window exceeded: {0}")]
    WindowExceeded(String),
    #[error("no tail bound: a table needs an envelope")]
    NoTailBound,
    #[error("the series for {0} does not pass the ratio test")]
    DivergentTail(Partition),
    #[error("invalid moment spec: {0}")]
    InvalidSpec(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// `|M_λ| <= c · p^{v|λ|}` for every `λ` outside the table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub c: f64,
    pub v: f64,
}

impl Envelope {
    pub fn bound(&self, p: u64, size: u32) -> f64 {
        if self.c == 0.0 {
            0.0
        } else {
            self.c * (p as f64).powf(self.v * size as f64)
        }
    }
}

/// A moment sequence `G ↦ M_G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentSpec {
    /// `M_N = |N|^{-u}`.
    CardPower { u: f64 },
    Table {
        #[serde(with = "rational::entries")]
        entries: BTreeMap<Partition, BigRational>,
        envelope: Option<Envelope>,
    },
    /// `M_N = |Sym² N|`.
    Sym2,
    /// Moments of the point mass at `partition`: `M_N = |Sur(λ₀, N)|`.
    PointMass { partition: Partition },
}

/// Value of a single moment.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentValue {
    Exact(BigRational),
    Approx(f64),
    /// Not known; `|M| <= bound`.
    Unknown { bound: f64 },
}

impl MomentValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            MomentValue::Exact(r) => rat_to_f64(r),
            MomentValue::Approx(x) => *x,
            MomentValue::Unknown { .. } => f64::NAN,
        }
    }

    /// An upper bound on `|M|`.
    pub fn abs_bound(&self) -> f64 {
        match self {
            MomentValue::Exact(r) => rat_to_f64(&r.abs()) * (1.0 + 4.0 * f64::EPSILON),
            MomentValue::Approx(x) => x.abs() * (1.0 + 16.0 * f64::EPSILON),
            MomentValue::Unknown { bound } => *bound,
        }
    }
}

pub(crate) fn rat_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(if r.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY })
}

pub(crate) fn int_u(u: f64) -> Option<i64> {
    (u.fract() == 0.0 && u.abs() < 1e6).then_some(u as i64)
}

/// `p^e` for any integer `e` as an exact rational.
pub(crate) fn rat_pow(p: u64, e: i64) -> BigRational {
    let base = BigInt::from(p).pow(e.unsigned_abs() as u32);
    if e >= 0 {
        BigRational::from_integer(base)
    } else {
        BigRational::new(BigInt::one(), base)
    }
}

impl MomentSpec {
    pub fn card_power(u: f64) -> Self {
        MomentSpec::CardPower { u }
    }

    pub fn point_mass(partition: Partition) -> Self {
        MomentSpec::PointMass { partition }
    }

    /// Table spec. Domination of the entries by the envelope is checked by
    /// [`MomentSpec::validate`] once the prime is known.
    pub fn table(entries: BTreeMap<Partition, BigRational>, envelope: Option<Envelope>) -> Result<Self, MomentError> {
        if let Some(env) = envelope {
            if !(env.c >= 0.0 && env.c.is_finite() && env.v.is_finite()) {
                return Err(MomentError::InvalidSpec(format!("bad envelope {env:?}")));
            }
        }
        Ok(MomentSpec::Table { entries, envelope })
    }

    /// The identically zero sequence.
    pub fn zero() -> Self {
        MomentSpec::Table {
            entries: BTreeMap::new(),
            envelope: Some(Envelope { c: 0.0, v: 0.0 }),
        }
    }

    /// Checks the spec against a level: table partitions must be valid and
    /// the envelope must dominate the table.
    pub fn validate(&self, level: Level) -> Result<(), MomentError> {
        match self {
            MomentSpec::CardPower { u } if !u.is_finite() => Err(MomentError::InvalidSpec(format!("u = {u}"))),
            MomentSpec::PointMass { partition } => Ok(partition.check_level(level)?),
            MomentSpec::Table { entries, envelope } => {
                for (lambda, value) in entries {
                    lambda.check_level(level)?;
                    if let Some(env) = envelope {
                        if rat_to_f64(&value.abs()) > env.bound(level.p(), lambda.size()) * (1.0 + 1e-12) {
                            return Err(MomentError::InvalidSpec(format!(
                                "envelope does not dominate the entry at {lambda}"
                            )));
                        }
                    }
                }
                MomentSpec::table(BTreeMap::new(), *envelope).map(|_| ())
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, level: Level, g: &Partition) -> Result<MomentValue, MomentError> {
        let p = level.p();
        Ok(match self {
            MomentSpec::CardPower { u } => match int_u(*u) {
                Some(u) => MomentValue::Exact(rat_pow(p, -u * g.size() as i64)),
                None => MomentValue::Approx((p as f64).powf(-u * g.size() as f64)),
            },
            MomentSpec::Sym2 => MomentValue::Exact(BigRational::from_integer(sym2_order(p, g).into())),
            MomentSpec::PointMass { partition } => {
                MomentValue::Exact(BigRational::from_integer(sur_count(p, partition, g)?.into()))
            }
            MomentSpec::Table { entries, envelope } => match (entries.get(g), envelope) {
                (Some(v), _) => MomentValue::Exact(v.clone()),
                (None, Some(env)) if env.c == 0.0 => MomentValue::Exact(BigRational::zero()),
                (None, Some(env)) => MomentValue::Unknown { bound: env.bound(p, g.size()) },
                (None, None) => MomentValue::Unknown { bound: f64::INFINITY },
            },
        })
    }

    /// Upper bound on `|M_G|` over all `G` of the given size. `None` when the
    /// spec gives no such bound.
    pub(crate) fn size_bound(&self, level: Level, size: u32) -> Option<f64> {
        let p = level.p() as f64;
        match self {
            MomentSpec::CardPower { u } => Some(p.powf(-u * size as f64)),
            MomentSpec::Table { envelope: Some(env), entries } => {
                let own = entries
                    .iter()
                    .filter(|(l, _)| l.size() == size)
                    .map(|(_, v)| rat_to_f64(&v.abs()))
                    .fold(0.0, f64::max);
                Some(env.bound(level.p(), size).max(own))
            }
            _ => None,
        }
    }

    /// Whether `M_G` depends only on `|G|`.
    pub(crate) fn size_only(&self) -> bool {
        matches!(self, MomentSpec::CardPower { .. })
    }
}

/// One row of a measure table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureEntry {
    pub partition: Partition,
    pub value: f64,
    pub err_bound: f64,
    #[serde(with = "rational::option")]
    pub exact: Option<BigRational>,
}

pub const MEASURE_SCHEMA: &str = "clm.measure.v1";
pub const MOMENTS_SCHEMA: &str = "clm.moments.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureTable {
    pub schema: String,
    pub level: Level,
    /// The moments this table was computed from, when known.
    pub moments: Option<MomentSpec>,
    pub window_max_size: u32,
    pub entries: Vec<MeasureEntry>,
    /// Upper bound on the mass outside the window.
    pub tail_mass_bound: f64,
}

impl MeasureTable {
    pub fn get(&self, lambda: &Partition) -> Option<&MeasureEntry> {
        self.entries.iter().find(|e| &e.partition == lambda)
    }

    pub fn from_json(s: &str) -> Result<Self, MomentError> {
        let t: MeasureTable = serde_json::from_str(s).map_err(|e| MomentError::Parse(e.to_string()))?;
        if t.schema != MEASURE_SCHEMA {
            return Err(MomentError::Parse(format!("expected schema {MEASURE_SCHEMA}, got {}", t.schema)));
        }
        Ok(t)
    }
}

/// Moment table input file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentFile {
    pub schema: String,
    pub level: Level,
    #[serde(with = "rational::entries")]
    pub entries: BTreeMap<Partition, BigRational>,
    #[serde(default)]
    pub envelope: Option<Envelope>,
}

impl MomentFile {
    pub fn parse(s: &str) -> Result<(Level, MomentSpec), MomentError> {
        let f: MomentFile = serde_json::from_str(s).map_err(|e| MomentError::Parse(e.to_string()))?;
        if f.schema != MOMENTS_SCHEMA {
            return Err(MomentError::Parse(format!("expected schema {MOMENTS_SCHEMA}, got {}", f.schema)));
        }
        let spec = MomentSpec::table(f.entries, f.envelope)?;
        spec.validate(f.level)?;
        Ok((f.level, spec))
    }
}
