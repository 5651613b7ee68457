use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use super::{int_u, rat_pow, rat_to_f64, MeasureEntry, MeasureTable, MomentError, MomentSpec, MomentValue, MEASURE_SCHEMA};
use crate::abelianp::{
    aut_order, big_pow, enumerate_partitions, ext_rank, sur_count, AbelianError, ExtensionFibers, Level, Partition,
};

/// Minimum number of factors kept in the infinite products.
pub const PRODUCT_CUTOFF: u32 = 60;

/// Absolute target for the series truncation error of each entry.
const SERIES_TOL: f64 = 1e-16;
const MAX_RANK: usize = 4000;
const EPS: f64 = f64::EPSILON;

fn ln_p(level: Level) -> f64 {
    (level.p() as f64).ln()
}

fn biguint_f64(x: &BigUint) -> f64 {
    x.to_f64().unwrap_or(f64::INFINITY)
}

/// Bound model for `|t_e|`, where `t_e` is the rank-`e` term of the inversion
/// sum (before dividing by `|Aut F|`).
enum Tail {
    /// `|t_e| <= b_0 x^e / ∏_{j<=e} (p^j - 1)`, stored as logarithms.
    Geometric { ln_b0: f64, ln_x: f64 },
    /// Terms vanish for `e > last`.
    Finite { last: isize },
}

fn tail_model(level: Level, spec: &MomentSpec, f: &Partition) -> Result<Tail, MomentError> {
    let m = ext_rank(level, f)? as f64;
    let l = f.len() as f64;
    let lp = ln_p(level);
    let n = f.size() as f64;
    Ok(match spec {
        MomentSpec::CardPower { u } => Tail::Geometric {
            ln_b0: -u * n * lp,
            ln_x: (m - l - u) * lp,
        },
        MomentSpec::PointMass { partition } => Tail::Finite {
            last: partition.size() as isize - f.size() as isize,
        },
        MomentSpec::Table { envelope: None, .. } => return Err(MomentError::NoTailBound),
        MomentSpec::Table { envelope: Some(env), entries } if env.c == 0.0 => Tail::Finite {
            last: entries.keys().map(|k| k.size() as isize).max().unwrap_or(-1) - f.size() as isize,
        },
        MomentSpec::Table { envelope: Some(env), .. } => Tail::Geometric {
            ln_b0: env.c.ln() + env.v * n * lp,
            ln_x: (m - l + env.v) * lp,
        },
        MomentSpec::Sym2 => return Err(MomentError::DivergentTail(f.clone())),
    })
}

/// `Σ_α M_{N_α}` over `α ∈ F_p^{m×e}`.
#[derive(Default)]
struct FiberSum {
    exact: Option<BigRational>,
    approx: f64,
    /// Bound on the absolute value of the part that is not known.
    unknown: f64,
}

fn fiber_sum(level: Level, spec: &MomentSpec, f: &Partition, e: usize) -> Result<FiberSum, MomentError> {
    let p = level.p();
    let m = ext_rank(level, f)? as u64;
    let count = big_pow(p, m * e as u64);
    let size = f.size() + e as u32;
    if spec.size_only() {
        let g = f.with_ones(e);
        return Ok(match spec.value(level, &g)? {
            MomentValue::Exact(r) => FiberSum {
                exact: Some(r * BigRational::from_integer(count.into())),
                ..Default::default()
            },
            MomentValue::Approx(x) => FiberSum {
                approx: biguint_f64(&count) * x,
                ..Default::default()
            },
            MomentValue::Unknown { bound } => FiberSum {
                exact: Some(BigRational::zero()),
                unknown: biguint_f64(&count) * bound,
                ..Default::default()
            },
        });
    }
    if let MomentSpec::Table { entries, .. } = spec {
        if !entries.keys().any(|k| k.size() == size) {
            let bound = spec.size_bound(level, size).unwrap_or(f64::INFINITY);
            return Ok(FiberSum {
                exact: Some(BigRational::zero()),
                unknown: if bound == 0.0 { 0.0 } else { biguint_f64(&count) * bound },
                ..Default::default()
            });
        }
    }
    let fiber = match ExtensionFibers::get(level, f)?.fiber(e) {
        Ok(fib) => fib,
        Err(AbelianError::BudgetExceeded { .. }) if matches!(spec, MomentSpec::Table { .. }) => {
            let bound = spec.size_bound(level, size).unwrap_or(f64::INFINITY);
            return Ok(FiberSum {
                exact: Some(BigRational::zero()),
                unknown: biguint_f64(&count) * bound,
                ..Default::default()
            });
        }
        Err(AbelianError::BudgetExceeded { needed, budget }) => {
            return Err(MomentError::WindowExceeded(format!(
                "extension fibers of {f} at rank {e} need {needed} subspaces (budget {budget})"
            )))
        }
        Err(other) => return Err(other.into()),
    };
    let mut out = FiberSum {
        exact: Some(BigRational::zero()),
        ..Default::default()
    };
    for (ty, cnt) in fiber {
        match spec.value(level, &ty)? {
            MomentValue::Exact(r) => {
                if let Some(s) = out.exact.as_mut() {
                    *s += r * BigRational::from_integer(cnt.into());
                }
            }
            MomentValue::Approx(x) => out.approx += biguint_f64(&cnt) * x,
            MomentValue::Unknown { bound } => out.unknown += biguint_f64(&cnt) * bound,
        }
    }
    Ok(out)
}

/// `v_F = |Aut F|^{-1} Σ_e (-1)^e (p^{ℓe} ∏_{j<=e}(p^j-1))^{-1} Σ_α M_{N_α}`.
fn invert_entry(level: Level, spec: &MomentSpec, f: &Partition) -> Result<MeasureEntry, MomentError> {
    let p = level.p();
    let l = f.len() as u64;
    let tail = tail_model(level, spec, f)?;

    let mut exact_sum = BigRational::zero();
    let mut all_exact = true;
    let mut float_terms: Vec<f64> = Vec::new();
    let mut unknown_err = 0.0f64;
    let mut den = BigUint::from(1u32);
    // Σ_{j<=e} ln(p^j - 1)
    let mut ln_q = 0.0f64;
    let mut truncation = 0.0f64;

    let mut e = 0usize;
    loop {
        if e > 0 {
            den *= big_pow(p, l) * (big_pow(p, e as u64) - 1u32);
            ln_q += ((p as f64).powi(e as i32) - 1.0).ln();
        }
        if let Tail::Finite { last } = tail {
            if e as isize > last {
                break;
            }
        }
        let s = fiber_sum(level, spec, f, e)?;
        let sign = if e % 2 == 0 { 1.0 } else { -1.0 };
        match s.exact {
            Some(x) if s.approx == 0.0 => {
                let t = x / BigRational::from_integer(BigInt::from(den.clone()));
                if e % 2 == 0 {
                    exact_sum += t;
                } else {
                    exact_sum -= t;
                }
            }
            other => {
                all_exact = false;
                let x = other.map_or(0.0, |r| rat_to_f64(&r)) + s.approx;
                float_terms.push(sign * x / biguint_f64(&den));
            }
        }
        unknown_err += s.unknown / biguint_f64(&den);

        if let Tail::Geometric { ln_b0, ln_x } = tail {
            // bound on the next term and the ratio after it
            let next = e + 1;
            let ln_next = ln_b0 + next as f64 * ln_x - ln_q - ((p as f64).powi(next as i32) - 1.0).ln();
            let ratio_after = ln_x - ((p as f64).powi(next as i32 + 1) - 1.0).ln();
            let next_bound = ln_next.exp() * (1.0 + 1e-9);
            if ratio_after < (0.5f64).ln() && 2.0 * next_bound <= SERIES_TOL {
                truncation = 2.0 * next_bound;
                break;
            }
            if e >= MAX_RANK {
                return Err(MomentError::DivergentTail(f.clone()));
            }
        }
        e += 1;
    }
    let aut = BigInt::from(aut_order(level, f)?);
    let aut_f = rat_to_f64(&BigRational::from_integer(aut.clone()));
    let exact_part = exact_sum / BigRational::from_integer(aut);
    let mut value = rat_to_f64(&exact_part);
    let mut rounding = 2.0 * EPS * value.abs();
    if !float_terms.is_empty() {
        let n = float_terms.len() as f64;
        let abs_sum: f64 = float_terms.iter().map(|t| t.abs()).sum::<f64>() / aut_f;
        let float_sum: f64 = float_terms.iter().sum::<f64>() / aut_f;
        value += float_sum;
        rounding += (2.0 * n + 16.0) * EPS * (abs_sum + value.abs());
    }
    let err_bound = (truncation + unknown_err) / aut_f + rounding;
    let exact = (all_exact && truncation == 0.0 && unknown_err == 0.0).then_some(exact_part);
    let err_bound = match &exact {
        Some(x) if BigRational::from_float(value).as_ref() == Some(x) => 0.0,
        Some(_) => rounding,
        None => err_bound,
    };
    Ok(MeasureEntry {
        partition: f.clone(),
        value,
        err_bound,
        exact,
    })
}

/// Inverts the moments `M` into `v_F` for every `F` with `|F| <= window_max_size`.
pub fn measure_from_moments(level: Level, spec: &MomentSpec, window_max_size: u32) -> Result<MeasureTable, MomentError> {
    spec.validate(level)?;
    let classes = enumerate_partitions(level, window_max_size);
    let entries = classes
        .par_iter()
        .map(|f| invert_entry(level, spec, f))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MeasureTable {
        schema: MEASURE_SCHEMA.into(),
        level,
        moments: Some(spec.clone()),
        window_max_size,
        entries,
        tail_mass_bound: tail_mass_bound(level, spec, window_max_size)?,
    })
}

/// `φ(p) = ∏_{j>=1} (1 - p^{-j})`, rounded down.
fn phi_lower(p: u64) -> f64 {
    let q = 1.0 / p as f64;
    let mut prod = 1.0;
    let mut x = q;
    for _ in 0..200 {
        prod *= 1.0 - x;
        x *= q;
    }
    prod * (1.0 - 1e-13)
}

/// Mass the measure puts on classes larger than the window, assuming it is
/// a nonnegative measure with the given moments. Any `F` outside has
/// `ℓ(F) >= r = ⌈(W+1)/k⌉`, and such `F` have at least `φ(p) p^{s r}`
/// surjections onto `(Z/p)^s` for `s <= r`.
pub fn tail_mass_bound(level: Level, spec: &MomentSpec, window_max_size: u32) -> Result<f64, MomentError> {
    if let MomentSpec::PointMass { partition } = spec {
        return Ok(if partition.size() <= window_max_size { 0.0 } else { 1.0 });
    }
    let k = level.k();
    let r = (window_max_size + 1).div_ceil(k);
    let lp = ln_p(level);
    let ln_phi = phi_lower(level.p()).ln();
    let mut best = f64::INFINITY;
    for s in 0..=r {
        let m = spec.value(level, &Partition::rectangle(1, s as usize))?.abs_bound();
        if !m.is_finite() {
            continue;
        }
        let b = if s == 0 { m } else { (m.ln() - (s * r) as f64 * lp - ln_phi).exp() * (1.0 + 1e-12) };
        best = best.min(b);
    }
    Ok(best)
}

/// Closed form `|Aut λ|^{-1} p^{-u|λ|} ∏_{j>=1} (1 - p^{m-ℓ-j-u})`.
pub fn measure_card_power(level: Level, u: f64, window_max_size: u32) -> Result<MeasureTable, MomentError> {
    let spec = MomentSpec::card_power(u);
    spec.validate(level)?;
    let p = level.p() as f64;
    let classes = enumerate_partitions(level, window_max_size);
    let entries = classes
        .par_iter()
        .map(|lambda| -> Result<MeasureEntry, MomentError> {
            let m = ext_rank(level, lambda)? as f64;
            let s = m - lambda.len() as f64 - u;
            if s.fract() == 0.0 && s >= 1.0 {
                return Ok(MeasureEntry {
                    partition: lambda.clone(),
                    value: 0.0,
                    err_bound: 0.0,
                    exact: Some(BigRational::zero()),
                });
            }
            let cutoff = PRODUCT_CUTOFF as f64 + s.max(0.0).ceil();
            let big_j = cutoff as i64;
            let mut prod = 1.0f64;
            let mut rel = 0.0f64;
            for j in 1..=big_j {
                let x = p.powf(s - j as f64);
                let factor = 1.0 - x;
                prod *= factor;
                rel += EPS * (2.0 + 2.0 * x.abs() / factor.abs());
            }
            let x_next = p.powf(s - (big_j + 1) as f64);
            debug_assert!(x_next <= 0.5);
            let ln_tail = x_next / ((1.0 - 1.0 / p) * (1.0 - x_next));
            let tail_rel = ln_tail.exp_m1();
            let aut = biguint_f64(&aut_order(level, lambda)?);
            let pre = match int_u(u) {
                Some(ui) => rat_to_f64(&rat_pow(level.p(), -ui * lambda.size() as i64)),
                None => p.powf(-u * lambda.size() as f64),
            };
            let value = prod * pre / aut;
            rel += 6.0 * EPS;
            let err_bound = value.abs() * (tail_rel * (1.0 + 1e-9) + rel * 1.01);
            Ok(MeasureEntry {
                partition: lambda.clone(),
                value,
                err_bound,
                exact: None,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MeasureTable {
        schema: MEASURE_SCHEMA.into(),
        level,
        moments: Some(spec.clone()),
        window_max_size,
        entries,
        tail_mass_bound: tail_mass_bound(level, &spec, window_max_size)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardMoment {
    pub partition: Partition,
    pub value: f64,
    pub err_bound: f64,
    /// False when no bound on the mass outside the window was available, so
    /// `err_bound` only covers the window.
    pub rigorous: bool,
    #[serde(with = "super::rational::option")]
    pub exact: Option<BigRational>,
}

/// `M_G ≈ Σ_{F in window} |Sur(F,G)| v_F`.
///
/// The part outside the window is bounded through `|Hom(F,G)| <= p^{|G|ℓ(F)}`
/// and the moments at `(Z/p)^{s'}`, `|G| < s' <= r`; this needs the table's
/// moment spec and presumes the measure is nonnegative.
pub fn moments_from_measure(
    level: Level,
    table: &MeasureTable,
    targets: &[Partition],
) -> Result<Vec<ForwardMoment>, MomentError> {
    let p = level.p();
    let lp = ln_p(level);
    let r = (table.window_max_size + 1).div_ceil(level.k());
    let ln_phi = phi_lower(p).ln();
    targets
        .iter()
        .map(|g| {
            g.check_level(level)?;
            let mut value = 0.0;
            let mut abs = 0.0;
            let mut err = 0.0;
            let mut exact = Some(BigRational::zero());
            for entry in &table.entries {
                let sur = sur_count(p, &entry.partition, g)?;
                if sur.is_zero() {
                    continue;
                }
                let s = biguint_f64(&sur);
                value += s * entry.value;
                abs += (s * entry.value).abs();
                err += s * entry.err_bound;
                exact = match (exact, &entry.exact) {
                    (Some(acc), Some(x)) => Some(acc + x * BigRational::from_integer(sur.into())),
                    _ => None,
                };
            }
            let n = table.entries.len() as f64;
            let mut rigorous = false;
            let mut tail = f64::INFINITY;
            if let Some(spec) = &table.moments {
                if let MomentSpec::PointMass { partition } = spec {
                    if partition.size() <= table.window_max_size {
                        tail = 0.0;
                        rigorous = true;
                    }
                }
                let s = g.size();
                for s2 in s + 1..=r {
                    let m = spec.value(level, &Partition::rectangle(1, s2 as usize))?.abs_bound();
                    if m.is_finite() {
                        let b = (m.ln() - ((s2 - s) * r) as f64 * lp - ln_phi).exp() * (1.0 + 1e-12);
                        tail = tail.min(b);
                        rigorous = true;
                    }
                }
            }
            let all_inside_exact = exact.is_some() && tail == 0.0;
            if let (true, Some(x)) = (all_inside_exact, exact) {
                let v = rat_to_f64(&x);
                let representable = BigRational::from_float(v).as_ref() == Some(&x);
                return Ok(ForwardMoment {
                    partition: g.clone(),
                    value: v,
                    err_bound: if representable { 0.0 } else { 2.0 * EPS * v.abs() },
                    rigorous: true,
                    exact: Some(x),
                });
            }
            let rounding = (2.0 * n + 8.0) * EPS * abs;
            Ok(ForwardMoment {
                partition: g.clone(),
                value,
                err_bound: err + rounding + if rigorous { tail } else { 0.0 },
                rigorous,
                exact: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExistenceReport {
    pub exists_on_window: bool,
    pub witness: Option<Partition>,
    /// Entries whose sign is not determined by their error bound.
    pub indeterminate: Vec<Partition>,
}

/// Negative verdict when some entry is below zero by more than its error.
pub fn existence_verdict(table: &MeasureTable) -> ExistenceReport {
    let witness = table
        .entries
        .iter()
        .find(|e| match &e.exact {
            Some(x) => x.is_negative(),
            None => e.value + e.err_bound < 0.0,
        })
        .map(|e| e.partition.clone());
    let indeterminate = table
        .entries
        .iter()
        .filter(|e| e.exact.is_none() && e.value - e.err_bound <= 0.0 && e.value + e.err_bound >= 0.0)
        .map(|e| e.partition.clone())
        .collect();
    ExistenceReport {
        exists_on_window: witness.is_none(),
        witness,
        indeterminate,
    }
}
