//! Extensions of a module by `(Z/p)^e` and elementary kernels.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock, RwLock};
use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::snf::{snf_in_place, Ring};
use super::{big_pow, ext_rank, AbelianError, Level, Partition};

/// Cap on the number of subspaces enumerated for one fiber table or one
/// elementary-kernel count.
pub const FIBER_SUBSPACE_BUDGET: u128 = 1 << 20;

/// Type of the extension `N_α` of `λ` by `(Z/p)^e` classified by
/// `α ∈ F_p^{m × e}`, `m = ext_rank(λ)`.
///
/// Generators are `g_1..g_ℓ, h_1..h_e` with relations `p h_j = 0` and
/// `p^{λ_i} g_i = Σ_j α_{ij} h_j` for the parts `λ_i < k`.
pub fn extension_type(
    level: Level,
    lambda: &Partition,
    e: usize,
    alpha: &[Vec<u64>],
) -> Result<Partition, AbelianError> {
    let m = ext_rank(level, lambda)? as usize;
    if alpha.len() != m || alpha.iter().any(|r| r.len() != e) {
        return Err(AbelianError::ShapeMismatch {
            expected: format!("{m}x{e}"),
            got: format!("{}x{}", alpha.len(), alpha.first().map_or(e, |r| r.len())),
        });
    }
    let p = level.p();
    if let Some(&x) = alpha.iter().flatten().find(|&&x| x >= p) {
        return Err(AbelianError::EntryOutOfRange(x));
    }
    let ring = Ring::new(level)?;
    let mut a = presentation(level, lambda, e, alpha)?;
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    Ok(snf_in_place(&ring, &mut a, rows, cols))
}

fn presentation(
    level: Level,
    lambda: &Partition,
    e: usize,
    alpha: &[Vec<u64>],
) -> Result<Vec<Vec<u64>>, AbelianError> {
    let q = level.modulus()?;
    let p = level.p();
    let k = level.k();
    let l = lambda.len();
    let short: Vec<usize> = (0..l).filter(|&i| lambda.parts()[i] < k).collect();
    let cols = short.len() + e;
    let mut a = vec![vec![0u64; cols]; l + e];
    for (c, &i) in short.iter().enumerate() {
        a[i][c] = p.pow(lambda.parts()[i]);
        for j in 0..e {
            a[l + j][c] = (q - alpha[c][j] % q) % q;
        }
    }
    for j in 0..e {
        a[l + j][short.len() + j] = p % q;
    }
    Ok(a)
}

/// Gaussian binomial `[n choose r]_p`.
pub fn gaussian_binomial(p: u64, n: u32, r: u32) -> BigUint {
    if r > n {
        return BigUint::zero();
    }
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..r {
        num *= big_pow(p, (n - i) as u64) - 1u32;
        den *= big_pow(p, (i + 1) as u64) - 1u32;
    }
    num / den
}

fn check_budget(needed: BigUint, budget: u128) -> Result<(), AbelianError> {
    if needed > BigUint::from(budget) {
        let needed = u128::try_from(&needed).unwrap_or(u128::MAX);
        return Err(AbelianError::BudgetExceeded { needed, budget });
    }
    Ok(())
}

/// All `r`-dimensional subspaces of `F_p^m`, each as the `r × m` reduced row
/// echelon basis.
pub fn subspaces(p: u64, m: usize, r: usize) -> Result<Vec<Vec<Vec<u64>>>, AbelianError> {
    check_budget(gaussian_binomial(p, m as u32, r as u32), FIBER_SUBSPACE_BUDGET)?;
    let mut out = Vec::new();
    if r > m {
        return Ok(out);
    }
    // choose pivot columns, then fill the free entries right of each pivot
    // that are not themselves pivot columns
    let mut pivots = Vec::with_capacity(r);
    fn choose(m: usize, r: usize, start: usize, pivots: &mut Vec<usize>, p: u64, out: &mut Vec<Vec<Vec<u64>>>) {
        if pivots.len() == r {
            let free: Vec<(usize, usize)> = (0..r)
                .flat_map(|i| {
                    let pv = pivots.clone();
                    (pv[i] + 1..m).filter(move |c| !pv.contains(c)).map(move |c| (i, c))
                })
                .collect();
            let mut digits = vec![0u64; free.len()];
            loop {
                let mut basis = vec![vec![0u64; m]; r];
                for (i, &c) in pivots.iter().enumerate() {
                    basis[i][c] = 1;
                }
                for (&(i, c), &d) in free.iter().zip(&digits) {
                    basis[i][c] = d;
                }
                out.push(basis);
                let mut t = 0;
                loop {
                    if t == digits.len() {
                        return;
                    }
                    digits[t] += 1;
                    if digits[t] < p {
                        break;
                    }
                    digits[t] = 0;
                    t += 1;
                }
            }
        }
        for c in start..m {
            pivots.push(c);
            choose(m, r, c + 1, pivots, p, out);
            pivots.pop();
        }
    }
    choose(m, r, 0, &mut pivots, p, &mut out);
    Ok(out)
}

/// Fiber multisets of `α ↦ N_α` for a fixed `(level, λ)`.
///
/// `N_α` only depends on the column space `U` of `α`; for `dim U = r` the
/// representative `[basis U | 0]` gives `N_α = N_basis ⊕ (Z/p)^{e-r}`, and
/// exactly `∏_{i<r}(p^e - p^i)` matrices share each `U`.
#[derive(Debug)]
pub struct ExtensionFibers {
    level: Level,
    lambda: Partition,
    m: usize,
    by_rank: Vec<OnceLock<Result<Vec<(Partition, BigUint)>, AbelianError>>>,
}

type FiberKey = (Level, Partition);

fn fiber_cache() -> &'static RwLock<HashMap<FiberKey, Arc<ExtensionFibers>>> {
    static CACHE: OnceLock<RwLock<HashMap<FiberKey, Arc<ExtensionFibers>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

impl ExtensionFibers {
    /// Shared, memoized fiber table.
    pub fn get(level: Level, lambda: &Partition) -> Result<Arc<ExtensionFibers>, AbelianError> {
        let key = (level, lambda.clone());
        if let Some(f) = fiber_cache().read().unwrap().get(&key) {
            return Ok(f.clone());
        }
        let m = ext_rank(level, lambda)? as usize;
        level.modulus()?;
        let fresh = Arc::new(ExtensionFibers {
            level,
            lambda: lambda.clone(),
            m,
            by_rank: (0..=m).map(|_| OnceLock::new()).collect(),
        });
        Ok(fiber_cache().write().unwrap().entry(key).or_insert(fresh).clone())
    }

    pub fn ext_rank(&self) -> usize {
        self.m
    }

    /// `(type of N_basis, number of subspaces)` over the `r`-dimensional
    /// subspaces `U`.
    pub fn rank_table(&self, r: usize) -> Result<&[(Partition, BigUint)], AbelianError> {
        if r > self.m {
            return Ok(&[]);
        }
        self.by_rank[r]
            .get_or_init(|| {
                let mut acc: BTreeMap<Partition, BigUint> = BTreeMap::new();
                for basis in subspaces(self.level.p(), self.m, r)? {
                    // columns of α are the basis vectors
                    let alpha: Vec<Vec<u64>> = (0..self.m).map(|i| (0..r).map(|j| basis[j][i]).collect()).collect();
                    let ty = extension_type(self.level, &self.lambda, r, &alpha)?;
                    *acc.entry(ty).or_default() += 1u32;
                }
                Ok(acc.into_iter().collect())
            })
            .as_ref()
            .map(|v| v.as_slice())
            .map_err(Clone::clone)
    }

    /// Number of subspaces that would be enumerated to build the fiber for `e`.
    pub fn cost(&self, e: usize) -> BigUint {
        (0..=e.min(self.m)).map(|r| gaussian_binomial(self.level.p(), self.m as u32, r as u32)).sum()
    }

    /// Multiset `{N_α : α ∈ F_p^{m×e}}` as `(type, multiplicity)`, sorted by type.
    pub fn fiber(&self, e: usize) -> Result<Vec<(Partition, BigUint)>, AbelianError> {
        check_budget(self.cost(e), FIBER_SUBSPACE_BUDGET)?;
        let p = self.level.p();
        let pe = big_pow(p, e as u64);
        let mut acc: BTreeMap<Partition, BigUint> = BTreeMap::new();
        let mut with_rank = BigUint::one();
        for r in 0..=e.min(self.m) {
            if r > 0 {
                with_rank *= &pe - big_pow(p, (r - 1) as u64);
            }
            for (ty, cnt) in self.rank_table(r)? {
                *acc.entry(ty.with_ones(e - r)).or_default() += cnt * &with_rank;
            }
        }
        Ok(acc.into_iter().collect())
    }
}

/// For `G` of type `lambda`: number of elementary abelian subgroups `K` of
/// rank `e`, grouped by the type of `G/K`. Computed directly from the socle
/// `G[p]` without going through extensions.
pub fn count_elementary_kernels(
    level: Level,
    lambda: &Partition,
    e: usize,
) -> Result<Vec<(Partition, BigUint)>, AbelianError> {
    lambda.check_level(level)?;
    let ring = Ring::new(level)?;
    let p = level.p();
    let k = level.k();
    let l = lambda.len();
    let mut acc: BTreeMap<Partition, BigUint> = BTreeMap::new();
    for basis in subspaces(p, l, e)? {
        let mut a = vec![vec![0u64; l + e]; l];
        for i in 0..l {
            if lambda.parts()[i] < k {
                a[i][i] = p.pow(lambda.parts()[i]);
            }
        }
        for (j, v) in basis.iter().enumerate() {
            for i in 0..l {
                a[i][l + j] = v[i] * p.pow(lambda.parts()[i] - 1);
            }
        }
        let ty = snf_in_place(&ring, &mut a, l, l + e);
        *acc.entry(ty).or_default() += 1u32;
    }
    Ok(acc.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abelianp::{aut_order, enumerate_partitions, gl_order};
    use crate::partition;

    fn lv(p: u64, k: u32) -> Level {
        Level::new(p, k).unwrap()
    }

    #[test]
    fn extension_examples() {
        let l = lv(2, 2);
        assert_eq!(extension_type(l, &partition![1], 1, &[vec![1]]).unwrap(), partition![2]);
        assert_eq!(extension_type(l, &partition![1], 1, &[vec![0]]).unwrap(), partition![1, 1]);
        assert_eq!(extension_type(l, &partition![2, 1], 0, &[vec![]]).unwrap(), partition![2, 1]);
        assert_eq!(
            extension_type(lv(3, 3), &partition![2, 1], 2, &[vec![0, 0], vec![0, 0]]).unwrap(),
            partition![2, 1, 1, 1]
        );
        assert!(extension_type(l, &partition![1], 2, &[vec![1]]).is_err());
        assert!(extension_type(l, &partition![1], 1, &[vec![2]]).is_err());
    }

    #[test]
    fn subspace_counts() {
        for (p, m) in [(2u64, 4usize), (3, 3), (5, 2)] {
            for r in 0..=m {
                let s = subspaces(p, m, r).unwrap();
                assert_eq!(BigUint::from(s.len()), gaussian_binomial(p, m as u32, r as u32));
            }
        }
        assert_eq!(gaussian_binomial(2, 2, 1), BigUint::from(3u32));
        assert_eq!(gaussian_binomial(3, 4, 2), BigUint::from(130u32));
    }

    /// Brute force over every α.
    fn fiber_brute(level: Level, lambda: &Partition, e: usize) -> Vec<(Partition, BigUint)> {
        let m = ext_rank(level, lambda).unwrap() as usize;
        let p = level.p();
        let total = p.pow((m * e) as u32);
        let mut acc: BTreeMap<Partition, BigUint> = BTreeMap::new();
        for code in 0..total {
            let mut c = code;
            let alpha: Vec<Vec<u64>> = (0..m)
                .map(|_| {
                    (0..e)
                        .map(|_| {
                            let d = c % p;
                            c /= p;
                            d
                        })
                        .collect()
                })
                .collect();
            *acc.entry(extension_type(level, lambda, e, &alpha).unwrap()).or_default() += 1u32;
        }
        acc.into_iter().collect()
    }

    #[test]
    fn fibers_match_brute_force() {
        for (level, max) in [(lv(2, 2), 4), (lv(3, 2), 3), (lv(2, 3), 4)] {
            for lambda in enumerate_partitions(level, max) {
                let fib = ExtensionFibers::get(level, &lambda).unwrap();
                for e in 0..=3usize {
                    if fib.ext_rank() * e > 12 {
                        continue;
                    }
                    let got = fib.fiber(e).unwrap();
                    assert_eq!(got, fiber_brute(level, &lambda, e), "{lambda} e={e}");
                    let total: BigUint = got.iter().map(|(_, c)| c).sum();
                    assert_eq!(total, big_pow(level.p(), (fib.ext_rank() * e) as u64));
                    for (ty, _) in &got {
                        assert_eq!(ty.size(), lambda.size() + e as u32);
                        assert!(ty.largest() <= level.k());
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_counts_match_fiber_counts() {
        // #{K} · p^{ℓ(F)e} |GL_e| |Aut F| = #{α : N_α ≅ G} · |Aut G|
        for level in [lv(2, 2), lv(3, 2), lv(2, 3)] {
            let parts = enumerate_partitions(level, 5);
            for g in &parts {
                for e in 0..=g.len() {
                    let kernels = count_elementary_kernels(level, g, e).unwrap();
                    for (f, nk) in &kernels {
                        let fib = ExtensionFibers::get(level, f).unwrap().fiber(e).unwrap();
                        let na = fib.iter().find(|(t, _)| t == g).map(|(_, c)| c.clone()).unwrap_or_default();
                        let lhs = nk
                            * big_pow(level.p(), (f.len() * e) as u64)
                            * gl_order(level.p(), e as u32)
                            * aut_order(level, f).unwrap();
                        assert_eq!(lhs, na * aut_order(level, g).unwrap(), "F={f} G={g}");
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_count_example() {
        // three lines in F_2^2, each with quotient F_2
        let got = count_elementary_kernels(lv(2, 1), &partition![1, 1], 1).unwrap();
        assert_eq!(got, vec![(partition![1], BigUint::from(3u32))]);
        // Z/4 + Z/2 has three subgroups of order 2: quotients Z/4, Z/2+Z/2, Z/4
        let got = count_elementary_kernels(lv(2, 2), &partition![2, 1], 1).unwrap();
        assert_eq!(
            got,
            vec![(partition![1, 1], BigUint::from(1u32)), (partition![2], BigUint::from(2u32))]
        );
    }
}
