//! Finite lattices given by explicit order tables.
//!
//! A [`FiniteLattice`] stores its order as up/down bitsets plus full join and
//! meet tables. Elements are indexed in a linear extension of the order
//! (`a <= b` implies `index(a) <= index(b)`), which lets joins and meets be
//! found as the first/last set bit of an intersection of up/down sets.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use thiserror::Error;

/// Default cap on the number of lattice elements.
pub const DEFAULT_ELEMENT_CAP: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("elements {0} and {1} are not comparable")]
    NotComparable(usize, usize),
    #[error("element index {0} out of range")]
    OutOfRange(usize),
    #[error("lattice has {size} elements, cap is {cap}")]
    CapExceeded { size: usize, cap: usize },
    #[error("relation is not a partial order: {0}")]
    NotPartialOrder(String),
    #[error("element order is not a linear extension: {0} <= {1} but index {0} > {1}")]
    NotLinearExtension(usize, usize),
    #[error("elements {0} and {1} have no {2}")]
    NotALattice(usize, usize, &'static str),
    #[error("modular law fails for a={a}, b={b}, x={x}")]
    NotModular { a: usize, b: usize, x: usize },
    #[error("lattice is empty")]
    Empty,
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

/// How much axiom checking to do at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verify {
    /// Check order axioms, lattice property and the modular law.
    Full,
    /// Only derive the tables.
    Skip,
}

impl Default for Verify {
    fn default() -> Self {
        if cfg!(debug_assertions) {
            Verify::Full
        } else {
            Verify::Skip
        }
    }
}

#[derive(Clone)]
struct BitRows {
    words: usize,
    data: Vec<u64>,
}

impl BitRows {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        BitRows {
            words,
            data: vec![0; words * n],
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.words..(i + 1) * self.words]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize) {
        self.data[i * self.words + j / 64] |= 1 << (j % 64);
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }
}

fn first_bit_of_and(a: &[u64], b: &[u64]) -> Option<usize> {
    a.iter()
        .zip(b)
        .enumerate()
        .find_map(|(w, (x, y))| {
            let v = x & y;
            (v != 0).then(|| w * 64 + v.trailing_zeros() as usize)
        })
}

fn last_bit_of_and(a: &[u64], b: &[u64]) -> Option<usize> {
    a.iter()
        .zip(b)
        .enumerate()
        .rev()
        .find_map(|(w, (x, y))| {
            let v = x & y;
            (v != 0).then(|| w * 64 + 63 - v.leading_zeros() as usize)
        })
}

fn and_is_subset(a: &[u64], b: &[u64], sup: &[u64]) -> bool {
    a.iter()
        .zip(b)
        .zip(sup)
        .all(|((x, y), s)| x & y & !s == 0)
}

fn iter_and<'a>(a: &'a [u64], b: &'a [u64]) -> impl Iterator<Item = usize> + 'a {
    a.iter().zip(b).enumerate().flat_map(|(w, (x, y))| {
        let mut v = x & y;
        std::iter::from_fn(move || {
            if v == 0 {
                None
            } else {
                let t = v.trailing_zeros() as usize;
                v &= v - 1;
                Some(w * 64 + t)
            }
        })
    })
}

/// A finite lattice with precomputed order, join and meet tables.
#[derive(Clone)]
pub struct FiniteLattice {
    n: usize,
    up: BitRows,
    down: BitRows,
    join: Vec<u16>,
    meet: Vec<u16>,
    height: Vec<u32>,
}

impl fmt::Debug for FiniteLattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteLattice")
            .field("size", &self.n)
            .field("height", &self.height[self.top()])
            .finish()
    }
}

impl FiniteLattice {
    /// Builds a lattice on `0..n` from an order predicate. Indices must form a
    /// linear extension of the order.
    pub fn from_order<F>(n: usize, leq: F, verify: Verify) -> Result<Self, LatticeError>
    where
        F: Fn(usize, usize) -> bool,
    {
        Self::from_order_capped(n, leq, verify, DEFAULT_ELEMENT_CAP)
    }

    pub fn from_order_capped<F>(
        n: usize,
        leq: F,
        verify: Verify,
        cap: usize,
    ) -> Result<Self, LatticeError>
    where
        F: Fn(usize, usize) -> bool,
    {
        if n == 0 {
            return Err(LatticeError::Empty);
        }
        let cap = cap.min(u16::MAX as usize);
        if n > cap {
            return Err(LatticeError::CapExceeded { size: n, cap });
        }
        let mut up = BitRows::new(n);
        let mut down = BitRows::new(n);
        for a in 0..n {
            for b in 0..n {
                if leq(a, b) {
                    if a > b {
                        return Err(LatticeError::NotLinearExtension(a, b));
                    }
                    up.set(a, b);
                    down.set(b, a);
                }
            }
        }
        if verify == Verify::Full {
            for a in 0..n {
                if !up.get(a, a) {
                    return Err(LatticeError::NotPartialOrder(format!("{a} is not <= itself")));
                }
                for b in 0..n {
                    if a != b && up.get(a, b) && up.get(b, a) {
                        return Err(LatticeError::NotPartialOrder(format!(
                            "{a} and {b} violate antisymmetry"
                        )));
                    }
                    if up.get(a, b) && !and_is_subset(up.row(b), up.row(b), up.row(a)) {
                        return Err(LatticeError::NotPartialOrder(format!(
                            "transitivity fails through {a} <= {b}"
                        )));
                    }
                }
            }
        }
        let mut join = vec![0u16; n * n];
        let mut meet = vec![0u16; n * n];
        for a in 0..n {
            for b in a..n {
                let j = first_bit_of_and(up.row(a), up.row(b))
                    .ok_or(LatticeError::NotALattice(a, b, "upper bound"))?;
                let m = last_bit_of_and(down.row(a), down.row(b))
                    .ok_or(LatticeError::NotALattice(a, b, "lower bound"))?;
                if verify == Verify::Full {
                    if !and_is_subset(up.row(a), up.row(b), up.row(j)) {
                        return Err(LatticeError::NotALattice(a, b, "least upper bound"));
                    }
                    if !and_is_subset(down.row(a), down.row(b), down.row(m)) {
                        return Err(LatticeError::NotALattice(a, b, "greatest lower bound"));
                    }
                }
                join[a * n + b] = j as u16;
                join[b * n + a] = j as u16;
                meet[a * n + b] = m as u16;
                meet[b * n + a] = m as u16;
            }
        }
        let mut height = vec![0u32; n];
        for z in 0..n {
            let mut h = 0;
            for w in iter_and(down.row(z), down.row(z)) {
                if w != z {
                    h = h.max(height[w] + 1);
                }
            }
            height[z] = h;
        }
        let lattice = FiniteLattice {
            n,
            up,
            down,
            join,
            meet,
            height,
        };
        if verify == Verify::Full {
            lattice.check_modular()?;
        }
        Ok(lattice)
    }

    /// Checks `a <= b  =>  a ∨ (x ∧ b) = (a ∨ x) ∧ b` for all `x`.
    pub fn check_modular(&self) -> Result<(), LatticeError> {
        for a in 0..self.n {
            for b in self.ups(a) {
                for x in 0..self.n {
                    if self.join(a, self.meet(x, b)) != self.meet(self.join(a, x), b) {
                        return Err(LatticeError::NotModular { a, b, x });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bottom(&self) -> usize {
        0
    }

    pub fn top(&self) -> usize {
        self.n - 1
    }

    #[inline]
    pub fn leq(&self, a: usize, b: usize) -> bool {
        self.up.get(a, b)
    }

    #[inline]
    pub fn join(&self, a: usize, b: usize) -> usize {
        self.join[a * self.n + b] as usize
    }

    #[inline]
    pub fn meet(&self, a: usize, b: usize) -> usize {
        self.meet[a * self.n + b] as usize
    }

    /// Elements `z` with `a <= z`.
    pub fn ups(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        iter_and(self.up.row(a), self.up.row(a))
    }

    /// Elements of the interval `[x, y]` in index order.
    pub fn interval_elements(&self, x: usize, y: usize) -> Vec<usize> {
        iter_and(self.up.row(x), self.down.row(y)).collect()
    }

    fn check_pair(&self, x: usize, y: usize) -> Result<(), LatticeError> {
        for i in [x, y] {
            if i >= self.n {
                return Err(LatticeError::OutOfRange(i));
            }
        }
        if !self.leq(x, y) {
            return Err(LatticeError::NotComparable(x, y));
        }
        Ok(())
    }

    /// Elements covering `x` inside `[x, y]`.
    pub fn atoms_of(&self, x: usize, y: usize) -> Vec<usize> {
        self.interval_elements(x, y)
            .into_iter()
            .filter(|&z| z != x && self.interval_elements(x, z).len() == 2)
            .collect()
    }

    /// Möbius function `μ(x, y)`.
    pub fn mobius(&self, x: usize, y: usize) -> Result<BigInt, LatticeError> {
        self.check_pair(x, y)?;
        let row = self.mobius_row(x, y);
        Ok(row.into_iter().find(|(z, _)| *z == y).map(|(_, v)| v).unwrap())
    }

    /// `μ(x, z)` for every `z` in `[x, y]` via `μ(x,z) = -Σ_{x<=w<z} μ(x,w)`.
    pub fn mobius_row(&self, x: usize, y: usize) -> Vec<(usize, BigInt)> {
        let elems = self.interval_elements(x, y);
        let mut pos = vec![usize::MAX; self.n];
        for (i, &z) in elems.iter().enumerate() {
            pos[z] = i;
        }
        // i128 fast path; recomputed with BigInt only on overflow
        let mut small: Vec<i128> = Vec::with_capacity(elems.len());
        let mut overflow = false;
        'outer: for (i, &z) in elems.iter().enumerate() {
            if i == 0 {
                small.push(1);
                continue;
            }
            let mut s: i128 = 0;
            for w in iter_and(self.up.row(x), self.down.row(z)) {
                if w == z {
                    continue;
                }
                match s.checked_add(small[pos[w]]) {
                    Some(v) => s = v,
                    None => {
                        overflow = true;
                        break 'outer;
                    }
                }
            }
            small.push(-s);
        }
        if !overflow {
            return elems
                .into_iter()
                .zip(small)
                .map(|(z, v)| (z, BigInt::from(v)))
                .collect();
        }
        let mut big: Vec<BigInt> = Vec::with_capacity(elems.len());
        for (i, &z) in elems.iter().enumerate() {
            if i == 0 {
                big.push(BigInt::one());
                continue;
            }
            let mut s = BigInt::zero();
            for w in iter_and(self.up.row(x), self.down.row(z)) {
                if w != z {
                    s += &big[pos[w]];
                }
            }
            big.push(-s);
        }
        elems.into_iter().zip(big).collect()
    }

    /// Every element has a complement.
    pub fn is_complemented(&self) -> bool {
        let (bot, top) = (self.bottom(), self.top());
        (0..self.n).all(|a| (0..self.n).any(|b| self.meet(a, b) == bot && self.join(a, b) == top))
    }

    /// Top equals the join of the atoms.
    pub fn top_is_join_of_atoms(&self) -> bool {
        self.join_of_atoms(self.bottom(), self.top()) == self.top()
    }

    fn join_of_atoms(&self, f: usize, g: usize) -> usize {
        self.atoms_of(f, g)
            .into_iter()
            .fold(f, |acc, a| self.join(acc, a))
    }

    /// Whether `h` satisfies `h ∨ (k1 ∧ k2) = (h ∨ k1) ∧ (h ∨ k2)` for all pairs.
    pub fn is_distributive_element(&self, h: usize) -> bool {
        (0..self.n).all(|k1| {
            (k1..self.n).all(|k2| {
                self.join(h, self.meet(k1, k2)) == self.meet(self.join(h, k1), self.join(h, k2))
            })
        })
    }

    /// Number of distributive elements.
    pub fn count_distributive(&self) -> usize {
        (0..self.n).filter(|&h| self.is_distributive_element(h)).count()
    }

    /// `log2` of the distributive-element count, for complemented lattices.
    pub fn omega(&self) -> Result<u32, LatticeError> {
        let z = self.count_distributive();
        if !z.is_power_of_two() {
            return Err(LatticeError::Internal(format!(
                "distributive element count {z} is not a power of two"
            )));
        }
        Ok(z.trailing_zeros())
    }

    /// Length of a maximal chain from `x` to `y`.
    pub fn dimension(&self, x: usize, y: usize) -> Result<u32, LatticeError> {
        self.check_pair(x, y)?;
        Ok(self.height[y] - self.height[x])
    }

    /// Join of the atoms of `[f, g]`; the semisimplification of `g -> f`.
    pub fn radical(&self, f: usize, g: usize) -> Result<usize, LatticeError> {
        self.check_pair(f, g)?;
        Ok(self.join_of_atoms(f, g))
    }

    /// The interval `[x, y]` as a lattice of its own. Returns the lattice and
    /// the original index of each element.
    pub fn interval(&self, x: usize, y: usize) -> Result<(FiniteLattice, Vec<usize>), LatticeError> {
        self.check_pair(x, y)?;
        let elems = self.interval_elements(x, y);
        let sub = FiniteLattice::from_order_capped(
            elems.len(),
            |a, b| self.leq(elems[a], elems[b]),
            Verify::Skip,
            usize::MAX,
        )?;
        Ok((sub, elems))
    }

    /// Direct product with the componentwise order. Element `(a, b)` has
    /// index `a * other.len() + b`.
    pub fn product(&self, other: &FiniteLattice) -> Result<FiniteLattice, LatticeError> {
        let m = other.n;
        FiniteLattice::from_order_capped(
            self.n * m,
            |i, j| self.leq(i / m, j / m) && other.leq(i % m, j % m),
            Verify::Skip,
            usize::MAX,
        )
    }

    /// Boolean lattice of subsets of an `r`-set.
    pub fn boolean(r: u32) -> FiniteLattice {
        let n = 1usize << r;
        FiniteLattice::from_order(n, |a, b| a & !b == 0, Verify::default())
            .expect("boolean lattice")
    }

    /// Chain `0 < 1 < ... < len-1`.
    pub fn chain(len: usize) -> FiniteLattice {
        FiniteLattice::from_order(len, |a, b| a <= b, Verify::default()).expect("chain")
    }
}

/// Möbius values for every comparable pair.
#[derive(Debug, Clone)]
pub struct MobiusTable {
    n: usize,
    values: Vec<Option<BigInt>>,
}

impl MobiusTable {
    pub fn new(lattice: &FiniteLattice) -> Self {
        let n = lattice.len();
        let mut values = vec![None; n * n];
        for x in 0..n {
            for (z, v) in lattice.mobius_row(x, lattice.top()) {
                values[x * n + z] = Some(v);
            }
        }
        MobiusTable { n, values }
    }

    pub fn get(&self, x: usize, y: usize) -> Option<&BigInt> {
        self.values.get(x * self.n + y).and_then(|v| v.as_ref())
    }

    /// Checks `Σ_{z∈[x,y]} μ(x,z) = Σ_{z∈[x,y]} μ(z,y) = δ(x,y)` on every
    /// comparable pair; returns the first failing pair.
    pub fn first_identity_failure(&self, lattice: &FiniteLattice) -> Option<(usize, usize)> {
        for x in 0..self.n {
            for y in lattice.ups(x) {
                let elems = lattice.interval_elements(x, y);
                let from_x: BigInt = elems.iter().map(|&z| self.get(x, z).unwrap()).sum();
                let to_y: BigInt = elems.iter().map(|&z| self.get(z, y).unwrap()).sum();
                let expect = if x == y { BigInt::one() } else { BigInt::zero() };
                if from_x != expect || to_y != expect {
                    return Some((x, y));
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Subspaces of F_q^2 for prime q: bottom, q+1 lines, top.
    fn plane_lattice(q: usize) -> FiniteLattice {
        let n = q + 3;
        FiniteLattice::from_order(n, |a, b| a == b || a == 0 || b == n - 1, Verify::Full).unwrap()
    }

    #[test]
    fn mobius_examples() {
        let b2 = FiniteLattice::boolean(2);
        assert_eq!(b2.mobius(0, 3).unwrap(), BigInt::from(1));
        let plane = plane_lattice(2);
        assert_eq!(plane.mobius(0, plane.top()).unwrap(), BigInt::from(2));
        let chain = FiniteLattice::chain(3);
        assert_eq!(chain.mobius(0, 2).unwrap(), BigInt::from(0));
        assert_eq!(chain.mobius(0, 1).unwrap(), BigInt::from(-1));
        assert_eq!(chain.mobius(1, 0), Err(LatticeError::NotComparable(1, 0)));
    }

    #[test]
    fn complemented_examples() {
        assert!(FiniteLattice::boolean(3).is_complemented());
        assert!(!FiniteLattice::chain(3).is_complemented());
        let plane3 = plane_lattice(3);
        assert_eq!(plane3.len(), 6);
        assert!(plane3.is_complemented());
        for l in [FiniteLattice::boolean(3), FiniteLattice::chain(3), plane3] {
            assert_eq!(l.is_complemented(), l.top_is_join_of_atoms());
        }
    }

    #[test]
    fn distributive_counts() {
        let plane = plane_lattice(2);
        assert_eq!(plane.count_distributive(), 2);
        assert_eq!(plane.omega().unwrap(), 1);
        let b2 = FiniteLattice::boolean(2);
        assert_eq!(b2.count_distributive(), 4);
        assert_eq!(b2.omega().unwrap(), 2);
        let one = FiniteLattice::chain(1);
        assert_eq!(one.count_distributive(), 1);
        assert_eq!(one.omega().unwrap(), 0);
        // a chain is distributive but not complemented, so Z need not be 2^ω
        assert_eq!(FiniteLattice::chain(3).count_distributive(), 3);
        assert!(FiniteLattice::chain(3).omega().is_err());
    }

    #[test]
    fn dimension_and_radical() {
        let chain = FiniteLattice::chain(3);
        assert_eq!(chain.dimension(0, 2).unwrap(), 2);
        assert_eq!(chain.dimension(1, 1).unwrap(), 0);
        assert_eq!(chain.radical(0, 2).unwrap(), 1);
        assert_eq!(chain.radical(1, 1).unwrap(), 1);
        assert!(chain.dimension(2, 0).is_err());
        let plane = plane_lattice(2);
        assert_eq!(plane.dimension(0, plane.top()).unwrap(), 2);
        assert_eq!(plane.radical(0, plane.top()).unwrap(), plane.top());
    }

    #[test]
    fn rejects_non_lattices() {
        // two incomparable maximal elements
        let err = FiniteLattice::from_order(3, |a, b| a == b || a == 0, Verify::Full).unwrap_err();
        assert!(matches!(err, LatticeError::NotALattice(..)));
        // pentagon N5: 0 < a < b < 1, 0 < c < 1
        let pent = [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (1, 4), (2, 4), (3, 4)];
        let err = FiniteLattice::from_order(
            5,
            |a, b| a == b || pent.contains(&(a, b)),
            Verify::Full,
        )
        .unwrap_err();
        assert!(matches!(err, LatticeError::NotModular { .. }));
        let err = FiniteLattice::from_order(2, |a, b| a == b || a == 1, Verify::Full).unwrap_err();
        assert_eq!(err, LatticeError::NotLinearExtension(1, 0));
        let err =
            FiniteLattice::from_order_capped(5, |a, b| a <= b, Verify::Full, 4).unwrap_err();
        assert_eq!(err, LatticeError::CapExceeded { size: 5, cap: 4 });
    }

    #[test]
    fn product_closure() {
        let a = plane_lattice(2);
        let b = FiniteLattice::chain(3);
        let c = FiniteLattice::boolean(1);
        for (l1, l2) in [(&a, &b), (&a, &c), (&b, &c), (&a, &a)] {
            let prod = l1.product(l2).unwrap();
            prod.check_modular().unwrap();
            let m = l2.len();
            for x1 in 0..l1.len() {
                for y1 in l1.ups(x1) {
                    for x2 in 0..m {
                        for y2 in l2.ups(x2) {
                            let (x, y) = (x1 * m + x2, y1 * m + y2);
                            assert_eq!(
                                prod.mobius(x, y).unwrap(),
                                l1.mobius(x1, y1).unwrap() * l2.mobius(x2, y2).unwrap()
                            );
                            assert_eq!(
                                prod.dimension(x, y).unwrap(),
                                l1.dimension(x1, y1).unwrap() + l2.dimension(x2, y2).unwrap()
                            );
                        }
                    }
                }
            }
            assert_eq!(
                prod.count_distributive(),
                l1.count_distributive() * l2.count_distributive()
            );
        }
    }

    #[test]
    fn mobius_table_identities() {
        for l in [plane_lattice(3), FiniteLattice::boolean(3), FiniteLattice::chain(4)] {
            let table = MobiusTable::new(&l);
            assert_eq!(table.first_identity_failure(&l), None);
            assert_eq!(table.get(0, 0), Some(&BigInt::from(1)));
        }
    }

    #[test]
    fn interval_is_sublattice() {
        let b3 = FiniteLattice::boolean(3);
        let (sub, idx) = b3.interval(1, 7).unwrap();
        assert_eq!(sub.len(), 4);
        assert_eq!(idx, vec![1, 3, 5, 7]);
        assert_eq!(sub.mobius(0, 3).unwrap(), b3.mobius(1, 7).unwrap());
    }
}
