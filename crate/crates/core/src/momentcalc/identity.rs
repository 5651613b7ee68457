use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::Serialize;

use super::rational::format_rational;
use super::MomentError;
use crate::abelianp::{
    aut_order, big_pow, count_elementary_kernels, enumerate_partitions, gaussian_binomial, gl_order, sur_count,
    ExtensionFibers, Level, Partition, FIBER_SUBSPACE_BUDGET,
};

type KernelKey = (Level, Partition, usize);

fn kernel_cache() -> &'static RwLock<HashMap<KernelKey, Arc<Vec<(Partition, BigUint)>>>> {
    static CACHE: OnceLock<RwLock<HashMap<KernelKey, Arc<Vec<(Partition, BigUint)>>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn kernels(level: Level, g: &Partition, e: usize) -> Result<Arc<Vec<(Partition, BigUint)>>, MomentError> {
    let key = (level, g.clone(), e);
    if let Some(v) = kernel_cache().read().unwrap().get(&key) {
        return Ok(v.clone());
    }
    let v = Arc::new(count_elementary_kernels(level, g, e)?);
    Ok(kernel_cache().write().unwrap().entry(key).or_insert(v).clone())
}

fn sign_factor(p: u64, e: usize) -> BigInt {
    let mag = BigInt::from(big_pow(p, (e * e.saturating_sub(1) / 2) as u64));
    if e % 2 == 1 {
        -mag
    } else {
        mag
    }
}

fn rank_gap(f: &Partition, g: &Partition) -> Option<usize> {
    (g.size() >= f.size()).then(|| (g.size() - f.size()) as usize)
}

/// `μ̂(F, G)` from the number of elementary subgroups of `G` with quotient `F`.
pub fn mu_hat_oracle(level: Level, f: &Partition, g: &Partition) -> Result<BigInt, MomentError> {
    f.check_level(level)?;
    g.check_level(level)?;
    let Some(e) = rank_gap(f, g) else { return Ok(BigInt::zero()) };
    if e > g.len() {
        return Ok(BigInt::zero());
    }
    let count = kernels(level, g, e)?
        .iter()
        .find(|(t, _)| t == f)
        .map(|(_, c)| c.clone())
        .unwrap_or_default();
    Ok(sign_factor(level.p(), e) * BigInt::from(count))
}

/// `μ̂(F, G)` from the extension fibers of `F`: the number of `α` with
/// `N_α ≅ G`, times `|Aut G| / (p^{ℓ(F)e} |GL_e| |Aut F|)`.
pub fn mu_hat_fiber(level: Level, f: &Partition, g: &Partition) -> Result<BigInt, MomentError> {
    f.check_level(level)?;
    g.check_level(level)?;
    let Some(e) = rank_gap(f, g) else { return Ok(BigInt::zero()) };
    let fib = ExtensionFibers::get(level, f)?.fiber(e)?;
    let na = fib.iter().find(|(t, _)| t == g).map(|(_, c)| c.clone()).unwrap_or_default();
    let p = level.p();
    let num = na * aut_order(level, g)?;
    let den = big_pow(p, (f.len() * e) as u64) * gl_order(p, e as u32) * aut_order(level, f)?;
    let (q, r) = num.div_rem(&den);
    if !r.is_zero() {
        return Err(MomentError::WindowExceeded(format!(
            "internal: fiber count for {f} -> {g} is not divisible"
        )));
    }
    Ok(sign_factor(p, e) * BigInt::from(q))
}

/// `μ̂(F, G)`. Uses the subgroup count when the socle of `G` has few enough
/// rank-`e` subspaces, the extension fibers otherwise.
pub fn mu_hat(level: Level, f: &Partition, g: &Partition) -> Result<BigRational, MomentError> {
    f.check_level(level)?;
    g.check_level(level)?;
    let Some(e) = rank_gap(f, g) else { return Ok(BigRational::zero()) };
    if e > g.len() || f.len() > g.len() {
        return Ok(BigRational::zero());
    }
    let p = level.p();
    let budget = BigUint::from(FIBER_SUBSPACE_BUDGET);
    let v = if gaussian_binomial(p, g.len() as u32, e as u32) <= budget {
        mu_hat_oracle(level, f, g)?
    } else if ExtensionFibers::get(level, f)?.cost(e) <= budget {
        mu_hat_fiber(level, f, g)?
    } else {
        return Err(MomentError::WindowExceeded(format!("mu_hat({f}, {g}) at {level}")));
    };
    Ok(BigRational::from_integer(v))
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub schema: &'static str,
    pub level: Level,
    pub window_max_size: u32,
    pub classes: usize,
    pub pass: bool,
    #[serde(serialize_with = "ser_rat")]
    pub max_defect: BigRational,
}

fn ser_rat<S: serde::Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(r))
}

/// Largest window for the exact identity check.
pub const IDENTITY_MAX_CLASSES: usize = 400;

/// With `S_{G,F} = |Sur(G,F)|/|Aut F|` and `T_{F,H} = μ̂(H,F)`, checks
/// `Σ_F T_{F,H} S_{G,F} = δ_{G,H}` and `Σ_F T_{G,F} S_{F,H} = δ_{G,H}` exactly
/// for all classes of size at most `window_max_size`. Both sums only involve
/// classes of size between `|H|` and `|G|`, so the window is closed.
pub fn inversion_identity_check(level: Level, window_max_size: u32) -> Result<IdentityReport, MomentError> {
    let classes = enumerate_partitions(level, window_max_size);
    let n = classes.len();
    if n > IDENTITY_MAX_CLASSES {
        return Err(MomentError::WindowExceeded(format!(
            "{n} classes exceed the identity check limit {IDENTITY_MAX_CLASSES}"
        )));
    }
    let p = level.p();
    let mut s = vec![vec![BigRational::zero(); n]; n];
    let mut t = vec![vec![BigRational::zero(); n]; n];
    for (i, a) in classes.iter().enumerate() {
        for (j, b) in classes.iter().enumerate() {
            if b.size() <= a.size() {
                let sur = sur_count(p, a, b)?;
                if !sur.is_zero() {
                    s[i][j] = BigRational::new(BigInt::from(sur), BigInt::from(aut_order(level, b)?));
                }
            }
            // t[i][j] = T_{a,b} = μ̂(b, a)
            if b.size() <= a.size() {
                t[i][j] = mu_hat(level, b, a)?;
            }
        }
    }
    let mut max_defect = BigRational::zero();
    for g in 0..n {
        for h in 0..n {
            let delta = |x: BigRational| {
                if g == h {
                    x - BigRational::from_integer(1.into())
                } else {
                    x
                }
            };
            let first: BigRational = (0..n).map(|f| &t[f][h] * &s[g][f]).sum();
            let second: BigRational = (0..n).map(|f| &t[g][f] * &s[f][h]).sum();
            for d in [delta(first), delta(second)] {
                if d.abs() > max_defect {
                    max_defect = d.abs();
                }
            }
        }
    }
    Ok(IdentityReport {
        schema: "clm.identity.v1",
        level,
        window_max_size,
        classes: n,
        pass: max_defect.is_zero(),
        max_defect,
    })
}
