use num_traits::Signed;
use serde::Serialize;

use super::{rat_to_f64, MomentError, MomentSpec, MomentValue};
use crate::abelianp::{
    enumerate_partitions, ext_rank, sym2_order, wedge2_order, AbelianError, ExtensionFibers, Level, Partition,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converges,
    Diverges,
    Inconclusive,
}

/// Outcome of the well-behavedness test at one `F`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub partition: Partition,
    pub verdict: Verdict,
    pub a_exponent: u32,
    /// Sum of the terms (or of their upper bounds) for `e <= cutoff_e`;
    /// for a divergent series, of their lower bounds.
    pub partial_sum: f64,
    /// Bound on the terms past `cutoff_e`; present only with `converges`.
    pub tail_bound: Option<f64>,
    pub cutoff_e: usize,
    /// Largest term ratio observed past the first term.
    pub last_ratio: f64,
    pub reason: String,
}

const MAX_CERT_RANK: usize = 200;
const DIVERGENCE_CHECK_RANK: usize = 40;

/// `Σ_α |M_{N_α}|` when every moment in the fiber is known and the fiber is
/// affordable.
fn abs_fiber_sum(level: Level, spec: &MomentSpec, f: &Partition, e: usize) -> Result<Option<f64>, MomentError> {
    let fiber = match ExtensionFibers::get(level, f)?.fiber(e) {
        Ok(fib) => fib,
        Err(AbelianError::BudgetExceeded { .. }) => return Ok(None),
        Err(other) => return Err(other.into()),
    };
    let mut s = 0.0;
    for (ty, cnt) in fiber {
        let c = rat_to_f64(&num_rational::BigRational::from_integer(cnt.into()));
        match spec.value(level, &ty)? {
            MomentValue::Exact(r) => s += c * rat_to_f64(&r.abs()),
            MomentValue::Approx(x) => s += c * x.abs(),
            MomentValue::Unknown { .. } => return Ok(None),
        }
    }
    Ok(Some(s))
}

/// `ln(p^{ℓe} ∏_{j<=e} (p^j - 1))`.
fn ln_denominator(p: f64, l: usize, e: usize) -> f64 {
    let mut s = (l * e) as f64 * p.ln();
    for j in 1..=e {
        s += (p.powi(j as i32) - 1.0).ln();
    }
    s
}

/// Tests convergence of
/// `Σ_e Z^a · Σ_α |M_{N_α}| / (|Hom(F, F_p)|^e ∏_{j<=e}(p^j - 1))`
/// with `Z = 2` for `e >= 1` (one simple factor) and `Z = 1` at `e = 0`.
pub fn wellbehaved_certify(level: Level, spec: &MomentSpec, f: &Partition, a: u32) -> Result<Certificate, MomentError> {
    if ![0, 1, 3].contains(&a) {
        return Err(MomentError::InvalidSpec(format!("exponent a must be 0, 1 or 3, got {a}")));
    }
    spec.validate(level)?;
    f.check_level(level)?;
    let p = level.p() as f64;
    let lp = p.ln();
    let l = f.len();
    let m = ext_rank(level, f)? as f64;
    let n = f.size() as f64;
    let ln_z = |e: usize| if e == 0 { 0.0 } else { a as f64 * 2f64.ln() };
    let cert = |verdict, partial_sum, tail_bound, cutoff_e, last_ratio, reason: &str| Certificate {
        partition: f.clone(),
        verdict,
        a_exponent: a,
        partial_sum,
        tail_bound,
        cutoff_e,
        last_ratio,
        reason: reason.to_string(),
    };

    // geometric model: ln(term bound) = ln_b0 + ln Z + e ln_x - ln ∏ (p^j - 1)
    let geometric = match spec {
        MomentSpec::CardPower { u } => Some((-u * n * lp, (m - l as f64 - u) * lp)),
        MomentSpec::Table { envelope: Some(env), .. } if env.c > 0.0 => {
            Some((env.c.ln() + env.v * n * lp, (m - l as f64 + env.v) * lp))
        }
        _ => None,
    };
    if let Some((ln_b0, ln_x)) = geometric {
        let term = |e: usize| (ln_b0 + ln_z(e) + e as f64 * ln_x - ln_denominator(p, 0, e)).exp();
        let mut partial = 0.0;
        let mut last_ratio: f64 = 0.0;
        let mut certified = false;
        for e in 0..MAX_CERT_RANK {
            let t = term(e);
            partial += t;
            let next = term(e + 1);
            // ratio between consecutive terms past e + 1, decreasing in e
            let ratio_after = (ln_x - (p.powi(e as i32 + 2) - 1.0).ln()).exp();
            if e >= 1 {
                last_ratio = next / t;
            }
            if ratio_after < 0.5 {
                certified = true;
            }
            if certified && 2.0 * next <= 1e-12 * partial.max(f64::MIN_POSITIVE) {
                return Ok(cert(
                    Verdict::Converges,
                    partial,
                    Some(2.0 * next * (1.0 + 1e-9)),
                    e,
                    last_ratio,
                    "term ratio x/(p^{e+1}-1) is decreasing and below 1/2",
                ));
            }
        }
        return Ok(cert(
            Verdict::Inconclusive,
            partial,
            None,
            MAX_CERT_RANK,
            last_ratio,
            "ratio test did not certify within the rank cutoff",
        ));
    }

    match spec {
        MomentSpec::Sym2 => {
            // the split extension N_0 = F ⊕ (Z/p)^e gives |t_e| >= Z^a |Sym² F| ∏_{j<=e} p^j/(p^j-1),
            // whose consecutive ratios p^{e+1}/(p^{e+1}-1) (times 2^a at e = 0) are all >= 1
            let lower = |e: usize| {
                let g = f.with_ones(e);
                let s = rat_to_f64(&num_rational::BigRational::from_integer(sym2_order(level.p(), &g).into()));
                (s.ln() + ln_z(e) - ln_denominator(p, l, e)).exp()
            };
            let mut partial = 0.0;
            let mut last_ratio: f64 = f64::INFINITY;
            for e in 0..=DIVERGENCE_CHECK_RANK {
                let t = match abs_fiber_sum(level, spec, f, e)? {
                    Some(s) => (s.ln() + ln_z(e) - ln_denominator(p, l, e)).exp(),
                    None => lower(e),
                };
                partial += t;
                let ratio = lower(e + 1) / lower(e);
                last_ratio = last_ratio.min(ratio);
                if ratio < 1.0 {
                    return Ok(cert(
                        Verdict::Inconclusive,
                        partial,
                        None,
                        e,
                        ratio,
                        "lower-bound ratio fell below 1",
                    ));
                }
            }
            Ok(cert(
                Verdict::Diverges,
                partial,
                None,
                DIVERGENCE_CHECK_RANK,
                last_ratio,
                "terms are bounded below by a nondecreasing positive sequence",
            ))
        }
        MomentSpec::PointMass { partition } => {
            let last = partition.size() as isize - f.size() as isize;
            let mut partial = 0.0;
            for e in 0..=last.max(-1) {
                let e = e as usize;
                let s = abs_fiber_sum(level, spec, f, e)?.ok_or_else(|| {
                    MomentError::WindowExceeded(format!("extension fibers of {f} at rank {e}"))
                })?;
                partial += (s.ln() + ln_z(e) - ln_denominator(p, l, e)).exp();
            }
            Ok(cert(
                Verdict::Converges,
                partial,
                Some(0.0),
                last.max(0) as usize,
                0.0,
                "finitely many nonzero terms",
            ))
        }
        MomentSpec::Table { entries, envelope } => {
            let max = entries.keys().map(|k| k.size() as isize).max().unwrap_or(-1);
            let last = max - f.size() as isize;
            let mut partial = 0.0;
            let mut cutoff = 0;
            for e in 0..=last.max(-1) {
                let e = e as usize;
                match abs_fiber_sum(level, spec, f, e)? {
                    Some(s) if s > 0.0 => partial += (s.ln() + ln_z(e) - ln_denominator(p, l, e)).exp(),
                    Some(_) => {}
                    None => break,
                }
                cutoff = e;
            }
            if matches!(envelope, Some(env) if env.c == 0.0) {
                Ok(cert(Verdict::Converges, partial, Some(0.0), cutoff, 0.0, "finitely many nonzero terms"))
            } else {
                Ok(cert(
                    Verdict::Inconclusive,
                    partial,
                    None,
                    cutoff,
                    f64::NAN,
                    "no envelope: nothing is known past the table",
                ))
            }
        }
        MomentSpec::CardPower { .. } => unreachable!("handled by the geometric model"),
    }
}

pub const ENVELOPE_NOTE: &str = "sufficient-condition evidence, not a proof";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub pass_on_window: bool,
    pub first_violation: Option<Partition>,
    pub checked: usize,
    /// Classes whose moment is unknown and not controlled by the envelope.
    pub unchecked: usize,
    pub note: &'static str,
}

/// Checks `M_λ <= c · p^{(1-ε)|λ|} · |∧² λ|` on the window.
pub fn envelope_check(
    level: Level,
    spec: &MomentSpec,
    c: f64,
    eps: f64,
    window_max_size: u32,
) -> Result<EnvelopeReport, MomentError> {
    if !(c > 0.0 && eps > 0.0) {
        return Err(MomentError::InvalidSpec(format!("need c > 0 and ε > 0, got c={c}, ε={eps}")));
    }
    spec.validate(level)?;
    let lp = (level.p() as f64).ln();
    let mut report = EnvelopeReport {
        pass_on_window: true,
        first_violation: None,
        checked: 0,
        unchecked: 0,
        note: ENVELOPE_NOTE,
    };
    for lambda in enumerate_partitions(level, window_max_size) {
        let w = rat_to_f64(&num_rational::BigRational::from_integer(wedge2_order(level.p(), &lambda).into()));
        let ln_allow = c.ln() + (1.0 - eps) * lambda.size() as f64 * lp + w.ln();
        let value = spec.value(level, &lambda)?;
        let (x, known) = match &value {
            MomentValue::Unknown { bound } => (*bound, false),
            other => (other.to_f64(), true),
        };
        let ok = x <= 0.0 || x.ln() <= ln_allow + 1e-12;
        if known {
            report.checked += 1;
            if !ok && report.first_violation.is_none() {
                report.pass_on_window = false;
                report.first_violation = Some(lambda.clone());
            }
        } else if ok {
            report.checked += 1;
        } else {
            report.unchecked += 1;
        }
    }
    Ok(report)
}
