//! Finite abelian p-groups viewed as modules over `Z/p^k`.
//!
//! A module `⊕ Z/p^{λ_i}` is named by its [`Partition`] `λ`; a [`Level`]
//! fixes the prime and the exponent bound `k`. Counts are exact big
//! integers.

mod extension;
mod group;
pub(crate) mod snf;
mod sur;

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extension::{
    count_elementary_kernels, extension_type, gaussian_binomial, subspaces, ExtensionFibers, FIBER_SUBSPACE_BUDGET,
};
pub use group::{
    quotient_lattice, quotient_lattice_capped, ElemSet, ExplicitGroup, QuotientLattice, SubgroupPoset, GROUP_ELEMENT_CAP,
};
pub use snf::snf_cokernel;
pub use sur::{subgroup_type_counts, sur_count, sur_count_closed, SUR_ORACLE_MAX_ORDER};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbelianError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("prime {0} exceeds 2^31")]
    PrimeTooLarge(u64),
    #[error("exponent bound k must be at least 1")]
    ZeroExponent,
    #[error("part {part} exceeds the level exponent {k}")]
    ExponentExceedsLevel { part: u32, k: u32 },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("group of order {order} exceeds the cap {cap}")]
    CapExceeded { order: u128, cap: u128 },
    #[error("p^k = {p}^{k} does not fit in 63 bits")]
    ModulusOverflow { p: u64, k: u32 },
    #[error("enumeration of {needed} items exceeds the budget {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
    #[error("entry {0} is not a residue modulo p^k")]
    EntryOutOfRange(u64),
}

/// Isomorphism type of a finite abelian p-group: weakly decreasing positive
/// parts.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Partition(Vec<u32>);

impl Partition {
    pub fn new(mut parts: Vec<u32>) -> Result<Self, AbelianError> {
        if parts.contains(&0) {
            return Err(AbelianError::InvalidPartition(format!("{parts:?} has a zero part")));
        }
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Ok(Partition(parts))
    }

    /// Strict constructor: parts must already be weakly decreasing.
    pub fn from_sorted(parts: Vec<u32>) -> Result<Self, AbelianError> {
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(AbelianError::InvalidPartition(format!("{parts:?} is not decreasing")));
        }
        Self::new(parts)
    }

    pub fn empty() -> Self {
        Partition(Vec::new())
    }

    /// `(a, a, ..., a)` with `n` parts.
    pub fn rectangle(a: u32, n: usize) -> Self {
        if a == 0 {
            return Self::empty();
        }
        Partition(vec![a; n])
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    /// `|λ|`, so the group has order `p^{|λ|}`.
    pub fn size(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Number of parts `ℓ(λ)`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn largest(&self) -> u32 {
        self.0.first().copied().unwrap_or(0)
    }

    /// Union of parts, as for a direct sum.
    pub fn union(&self, other: &Partition) -> Partition {
        let mut parts = self.0.clone();
        parts.extend_from_slice(&other.0);
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Partition(parts)
    }

    /// Direct sum with `e` copies of `Z/p`.
    pub fn with_ones(&self, e: usize) -> Partition {
        self.union(&Partition::rectangle(1, e))
    }

    /// `λ_i <= μ_i` for all `i` (Young diagram containment).
    pub fn contained_in(&self, other: &Partition) -> bool {
        self.len() <= other.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Conjugate partition.
    pub fn conjugate(&self) -> Partition {
        let top = self.largest();
        Partition((1..=top).map(|j| self.0.iter().filter(|&&x| x >= j).count() as u32).collect())
    }

    /// Order `p^{|λ|}` as a `u128`, if it fits.
    pub fn order(&self, p: u64) -> Option<u128> {
        (p as u128).checked_pow(self.size())
    }

    pub fn check_level(&self, level: Level) -> Result<(), AbelianError> {
        match self.0.first() {
            Some(&part) if part > level.k => Err(AbelianError::ExponentExceedsLevel { part, k: level.k }),
            _ => Ok(()),
        }
    }

    /// Comma-joined parts; the empty partition is `0`.
    pub fn to_cli(&self) -> String {
        if self.is_empty() {
            return "0".into();
        }
        self.0.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
    }
}

impl TryFrom<Vec<u32>> for Partition {
    type Error = AbelianError;

    fn try_from(parts: Vec<u32>) -> Result<Self, Self::Error> {
        Partition::from_sorted(parts)
    }
}

impl From<Partition> for Vec<u32> {
    fn from(p: Partition) -> Self {
        p.0
    }
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl FromStr for Partition {
    type Err = AbelianError;

    /// Parses the command-line form: `2,1,1`, or `0` for the empty partition.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "0" || s == "[]" {
            return Ok(Partition::empty());
        }
        let s = s.trim_start_matches('[').trim_end_matches(']');
        let parts = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|_| AbelianError::InvalidPartition(format!("cannot parse {t:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Partition::new(parts)
    }
}

/// `partition![2, 1]`
#[macro_export]
macro_rules! partition {
    () => { $crate::abelianp::Partition::empty() };
    ($($x:expr),+ $(,)?) => {
        $crate::abelianp::Partition::new(vec![$($x),+]).expect("valid partition")
    };
}

/// A level `C_S` for `S = Z/p^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawLevel", into = "RawLevel")]
pub struct Level {
    p: u64,
    k: u32,
}

#[derive(Serialize, Deserialize)]
struct RawLevel {
    p: u64,
    k: u32,
}

impl TryFrom<RawLevel> for Level {
    type Error = AbelianError;
    fn try_from(r: RawLevel) -> Result<Self, Self::Error> {
        Level::new(r.p, r.k)
    }
}

impl From<Level> for RawLevel {
    fn from(l: Level) -> Self {
        RawLevel { p: l.p, k: l.k }
    }
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

impl Level {
    pub fn new(p: u64, k: u32) -> Result<Self, AbelianError> {
        if p > 1 << 31 {
            return Err(AbelianError::PrimeTooLarge(p));
        }
        if !is_prime(p) {
            return Err(AbelianError::NotPrime(p));
        }
        if k == 0 {
            return Err(AbelianError::ZeroExponent);
        }
        Ok(Level { p, k })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// `p^k`, when it fits in 63 bits.
    pub fn modulus(&self) -> Result<u64, AbelianError> {
        self.p
            .checked_pow(self.k)
            .filter(|&q| q < 1 << 63)
            .ok_or(AbelianError::ModulusOverflow { p: self.p, k: self.k })
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Z/{}^{}", self.p, self.k)
    }
}

pub(crate) fn big_pow(p: u64, e: u64) -> BigUint {
    num_traits::pow(BigUint::from(p), e as usize)
}

/// All partitions with parts `<= k` and size `<= max_size`, by size and then
/// lexicographically descending.
pub fn enumerate_partitions(level: Level, max_size: u32) -> Vec<Partition> {
    fn rec(n: u32, max_part: u32, prefix: &mut Vec<u32>, out: &mut Vec<Partition>) {
        if n == 0 {
            out.push(Partition(prefix.clone()));
            return;
        }
        for part in (1..=max_part.min(n)).rev() {
            prefix.push(part);
            rec(n - part, part, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for n in 0..=max_size {
        rec(n, level.k, &mut Vec::new(), &mut out);
    }
    out
}

/// `|GL_e(F_p)| = ∏_{i<e} (p^e - p^i)`.
pub fn gl_order(p: u64, e: u32) -> BigUint {
    let pe = big_pow(p, e as u64);
    (0..e).fold(BigUint::one(), |acc, i| acc * (&pe - big_pow(p, i as u64)))
}

/// `|Aut(⊕ Z/p^{λ_i})|` by the closed formula for abelian p-groups: with parts
/// ascending `e_1 <= ... <= e_ℓ`, `d_j = max{t : e_t = e_j}` and
/// `c_j = min{t : e_t = e_j}`,
/// `∏_j (p^{d_j} - p^{j-1}) · ∏_j p^{e_j (ℓ - d_j)} · ∏_j p^{(e_j - 1)(ℓ - c_j + 1)}`.
pub fn aut_order(level: Level, lambda: &Partition) -> Result<BigUint, AbelianError> {
    lambda.check_level(level)?;
    let p = level.p;
    let asc: Vec<u64> = lambda.parts().iter().rev().map(|&x| x as u64).collect();
    let l = asc.len() as u64;
    let mut result = BigUint::one();
    let mut exp = 0u64;
    for (j0, &e) in asc.iter().enumerate() {
        let j = j0 as u64 + 1;
        let d = asc.iter().rposition(|&x| x == e).unwrap() as u64 + 1;
        let c = asc.iter().position(|&x| x == e).unwrap() as u64 + 1;
        result *= big_pow(p, d) - big_pow(p, j - 1);
        exp += e * (l - d) + (e - 1) * (l - c + 1);
    }
    Ok(result * big_pow(p, exp))
}

/// `|Hom(λ, μ)| = p^{Σ_{i,j} min(λ_i, μ_j)}`.
pub fn hom_count(p: u64, lambda: &Partition, mu: &Partition) -> BigUint {
    let e: u64 = lambda
        .parts()
        .iter()
        .flat_map(|&a| mu.parts().iter().map(move |&b| a.min(b) as u64))
        .sum();
    big_pow(p, e)
}

/// `dim Ext^1_S(N, F_p) = #{i : λ_i < k}`.
pub fn ext_rank(level: Level, lambda: &Partition) -> Result<u32, AbelianError> {
    lambda.check_level(level)?;
    Ok(lambda.parts().iter().filter(|&&x| x < level.k).count() as u32)
}

/// `|∧²N| = p^{Σ_{i<j} min(λ_i, λ_j)}`.
pub fn wedge2_order(p: u64, lambda: &Partition) -> BigUint {
    let parts = lambda.parts();
    // parts are decreasing, so min(λ_i, λ_j) = λ_j for i < j
    let e: u64 = parts.iter().enumerate().map(|(j, &x)| j as u64 * x as u64).sum();
    big_pow(p, e)
}

/// `|Sym²N| = |N| · |∧²N|`.
pub fn sym2_order(p: u64, lambda: &Partition) -> BigUint {
    big_pow(p, lambda.size() as u64) * wedge2_order(p, lambda)
}

/// Number of semisimple steps down to the zero module: the largest part.
pub fn complexity(level: Level, lambda: &Partition) -> Result<u32, AbelianError> {
    lambda.check_level(level)?;
    Ok(lambda.largest())
}
