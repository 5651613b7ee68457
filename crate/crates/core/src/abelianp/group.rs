//! Explicit finite abelian p-groups, their subgroup posets and quotient
//! lattices.

use std::collections::HashMap;

use super::{AbelianError, Level, Partition};
use crate::lattice::{FiniteLattice, LatticeError, Verify, DEFAULT_ELEMENT_CAP};

/// Largest explicit group we are willing to build.
pub const GROUP_ELEMENT_CAP: usize = 4096;

/// Bitset over the elements of an explicit group.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct ElemSet(Box<[u64]>);

impl ElemSet {
    fn empty(n: usize) -> Self {
        ElemSet(vec![0; n.div_ceil(64)].into_boxed_slice())
    }

    #[inline]
    pub fn contains(&self, x: usize) -> bool {
        self.0[x / 64] >> (x % 64) & 1 == 1
    }

    #[inline]
    fn insert(&mut self, x: usize) {
        self.0[x / 64] |= 1 << (x % 64);
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    pub fn is_subset(&self, other: &ElemSet) -> bool {
        self.0.iter().zip(other.0.iter()).all(|(a, b)| a & !b == 0)
    }

    pub fn intersection(&self, other: &ElemSet) -> ElemSet {
        ElemSet(self.0.iter().zip(other.0.iter()).map(|(a, b)| a & b).collect())
    }

    /// `|self ∩ a|` and `|self ∩ a ∩ b|` without allocating.
    pub fn meet_len(&self, a: &ElemSet, b: Option<&ElemSet>) -> usize {
        match b {
            None => self.0.iter().zip(a.0.iter()).map(|(x, y)| (x & y).count_ones() as usize).sum(),
            Some(b) => self
                .0
                .iter()
                .zip(a.0.iter())
                .zip(b.0.iter())
                .map(|((x, y), z)| (x & y & z).count_ones() as usize)
                .sum(),
        }
    }

    fn union_with(&mut self, other: &ElemSet) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a |= b;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &word)| {
            let mut v = word;
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
}

/// `⊕ Z/p^{λ_i}` with elements enumerated in mixed radix.
#[derive(Debug, Clone)]
pub struct ExplicitGroup {
    level: Level,
    ty: Partition,
    moduli: Vec<u64>,
    strides: Vec<usize>,
    order: usize,
    times_p: Vec<u32>,
    table: Vec<u32>,
}

/// Groups up to this order keep a dense addition table.
const TABLE_MAX_ORDER: usize = 1024;


impl ExplicitGroup {
    pub fn new(level: Level, ty: &Partition) -> Result<Self, AbelianError> {
        Self::with_cap(level, ty, GROUP_ELEMENT_CAP)
    }

    pub fn with_cap(level: Level, ty: &Partition, cap: usize) -> Result<Self, AbelianError> {
        ty.check_level(level)?;
        let order = ty
            .order(level.p())
            .filter(|&o| o <= cap as u128)
            .ok_or(AbelianError::CapExceeded {
                order: ty.order(level.p()).unwrap_or(u128::MAX),
                cap: cap as u128,
            })? as usize;
        let moduli: Vec<u64> = ty.parts().iter().map(|&a| level.p().pow(a)).collect();
        let mut strides = Vec::with_capacity(moduli.len());
        let mut s = 1usize;
        for &m in &moduli {
            strides.push(s);
            s *= m as usize;
        }
        let mut g = ExplicitGroup {
            level,
            ty: ty.clone(),
            moduli,
            strides,
            order,
            times_p: Vec::new(),
            table: Vec::new(),
        };
        g.times_p = (0..order).map(|x| g.scale(level.p(), x) as u32).collect();
        if order <= TABLE_MAX_ORDER {
            g.table = g.addition_table();
        }
        Ok(g)
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn ty(&self) -> &Partition {
        &self.ty
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn digits(&self, x: usize) -> Vec<u64> {
        self.moduli
            .iter()
            .zip(&self.strides)
            .map(|(&m, &s)| (x / s) as u64 % m)
            .collect()
    }

    pub fn from_digits(&self, d: &[u64]) -> usize {
        d.iter()
            .zip(&self.moduli)
            .zip(&self.strides)
            .map(|((&x, &m), &s)| (x % m) as usize * s)
            .sum()
    }

    #[inline]
    pub fn add(&self, a: usize, b: usize) -> usize {
        if !self.table.is_empty() {
            return self.table[a * self.order + b] as usize;
        }
        let mut r = 0;
        for (&m, &s) in self.moduli.iter().zip(&self.strides) {
            let m = m as usize;
            r += ((a / s) % m + (b / s) % m) % m * s;
        }
        r
    }

    pub fn neg(&self, a: usize) -> usize {
        let mut r = 0;
        for (&m, &s) in self.moduli.iter().zip(&self.strides) {
            let m = m as usize;
            r += (m - (a / s) % m) % m * s;
        }
        r
    }

    pub fn scale(&self, c: u64, a: usize) -> usize {
        let mut r = 0;
        for (&m, &s) in self.moduli.iter().zip(&self.strides) {
            r += (((a / s) as u64 % m) as u128 * c as u128 % m as u128) as usize * s;
        }
        r
    }

    #[inline]
    pub fn times_p(&self, a: usize) -> usize {
        self.times_p[a] as usize
    }

    /// Dense addition table, row-major.
    pub fn addition_table(&self) -> Vec<u32> {
        if !self.table.is_empty() {
            return self.table.clone();
        }
        let n = self.order;
        let mut t = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                t.push(self.add(a, b) as u32);
            }
        }
        t
    }

    pub fn all(&self) -> ElemSet {
        let mut s = ElemSet::empty(self.order);
        for x in 0..self.order {
            s.insert(x);
        }
        s
    }

    fn trivial(&self) -> ElemSet {
        let mut s = ElemSet::empty(self.order);
        s.insert(0);
        s
    }

    /// `⟨H, g⟩` for a subgroup `H`.
    pub fn extend(&self, h: &ElemSet, g: usize) -> ElemSet {
        let elems: Vec<usize> = h.iter().collect();
        let mut out = h.clone();
        let mut step = g;
        while !h.contains(step) {
            for &x in &elems {
                out.insert(self.add(x, step));
            }
            step = self.add(step, g);
        }
        out
    }

    /// Subgroup generated by `a ∪ b`.
    pub fn sum(&self, a: &ElemSet, b: &ElemSet) -> ElemSet {
        let mut s = if a.len() >= b.len() { a.clone() } else { b.clone() };
        let other = if a.len() >= b.len() { b } else { a };
        for g in other.iter() {
            if !s.contains(g) {
                s = self.extend(&s, g);
            }
        }
        s
    }

    /// Subgroup generated by a list of elements.
    pub fn generate(&self, gens: &[usize]) -> ElemSet {
        gens.iter().fold(self.trivial(), |h, &g| if h.contains(g) { h } else { self.extend(&h, g) })
    }

    pub fn is_subgroup(&self, s: &ElemSet) -> bool {
        s.contains(0) && s.iter().all(|a| s.iter().all(|b| s.contains(self.add(a, b))))
    }

    /// `log_p #{x in S : p^j x = 0}` for `j = 1..=k`.
    fn torsion_profile(&self, pred: impl Fn(usize) -> bool, members: impl Iterator<Item = usize>) -> Vec<u32> {
        let k = self.level.k() as usize;
        let mut counts = vec![0usize; k + 1];
        for x in members {
            let mut y = x;
            for c in counts.iter_mut().skip(1) {
                y = self.times_p(y);
                if pred(y) {
                    *c += 1;
                }
            }
        }
        counts
            .into_iter()
            .skip(1)
            .map(|c| log_p(c, self.level.p()))
            .collect()
    }

    /// Isomorphism type of a subgroup.
    pub fn subgroup_type(&self, s: &ElemSet) -> Partition {
        let profile = self.torsion_profile(|y| y == 0, s.iter());
        type_from_profile(&profile)
    }

    /// Isomorphism type of `G / K`.
    pub fn quotient_type(&self, kernel: &ElemSet) -> Partition {
        let kl = log_p(kernel.len(), self.level.p());
        let mut profile = self.torsion_profile(|y| kernel.contains(y), 0..self.order);
        for s in profile.iter_mut() {
            *s -= kl;
        }
        type_from_profile(&profile)
    }

    /// All elements `x` with `p x = 0`.
    pub fn p_torsion(&self) -> ElemSet {
        let mut s = ElemSet::empty(self.order);
        for x in 0..self.order {
            if self.times_p(x) == 0 {
                s.insert(x);
            }
        }
        s
    }
}

fn log_p(mut n: usize, p: u64) -> u32 {
    let mut e = 0;
    while n > 1 {
        debug_assert_eq!(n as u64 % p, 0, "not a power of p");
        n /= p as usize;
        e += 1;
    }
    e
}

/// From `s_j = Σ_i min(ν_i, j)` recover `ν`.
fn type_from_profile(profile: &[u32]) -> Partition {
    let mut conj = Vec::new();
    let mut prev = 0;
    for &s in profile {
        conj.push(s - prev);
        prev = s;
    }
    while conj.last() == Some(&0) {
        conj.pop();
    }
    Partition::new(conj).map(|c| c.conjugate()).expect("valid profile")
}

/// All subgroups of an explicit group, in increasing order, with the cover
/// relation (maximal subgroups of each subgroup).
#[derive(Debug)]
pub struct SubgroupPoset {
    group: ExplicitGroup,
    subgroups: Vec<ElemSet>,
    index: HashMap<ElemSet, u32>,
    log_order: Vec<u32>,
    lower_covers: Vec<Vec<u32>>,
}

impl SubgroupPoset {
    /// Enumerates subgroups by adjoining one element of order `p` modulo the
    /// current subgroup at a time. Fails once more than `node_cap` subgroups
    /// have been found.
    pub fn enumerate(group: ExplicitGroup, node_cap: usize) -> Result<Self, AbelianError> {
        let n = group.order();
        let mut subgroups = vec![group.trivial()];
        let mut index = HashMap::new();
        index.insert(subgroups[0].clone(), 0u32);
        let mut log_order = vec![0u32];
        let mut lower_covers: Vec<Vec<u32>> = vec![Vec::new()];
        let mut layer_start = 0;
        while layer_start < subgroups.len() {
            let layer_end = subgroups.len();
            for h in layer_start..layer_end {
                let mut marked = subgroups[h].clone();
                for g in 0..n {
                    if marked.contains(g) || !subgroups[h].contains(group.times_p(g)) {
                        continue;
                    }
                    let k = group.extend(&subgroups[h], g);
                    marked.union_with(&k);
                    let idx = match index.get(&k) {
                        Some(&i) => i,
                        None => {
                            if subgroups.len() >= node_cap {
                                return Err(AbelianError::BudgetExceeded {
                                    needed: node_cap as u128 + 1,
                                    budget: node_cap as u128,
                                });
                            }
                            let i = subgroups.len() as u32;
                            index.insert(k.clone(), i);
                            subgroups.push(k);
                            log_order.push(log_order[h] + 1);
                            lower_covers.push(Vec::new());
                            i
                        }
                    };
                    lower_covers[idx as usize].push(h as u32);
                }
            }
            layer_start = layer_end;
        }
        Ok(SubgroupPoset {
            group,
            subgroups,
            index,
            log_order,
            lower_covers,
        })
    }

    pub fn group(&self) -> &ExplicitGroup {
        &self.group
    }

    pub fn len(&self) -> usize {
        self.subgroups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgroups.is_empty()
    }

    pub fn subgroup(&self, i: usize) -> &ElemSet {
        &self.subgroups[i]
    }

    /// `log_p |K_i|`.
    pub fn log_order(&self, i: usize) -> u32 {
        self.log_order[i]
    }

    pub fn lower_covers(&self, i: usize) -> &[u32] {
        &self.lower_covers[i]
    }

    pub fn index_of(&self, s: &ElemSet) -> Option<usize> {
        self.index.get(s).map(|&i| i as usize)
    }

    /// Index of the whole group.
    pub fn whole(&self) -> usize {
        self.subgroups.len() - 1
    }

    pub fn intersection(&self, a: usize, b: usize) -> usize {
        let s = self.subgroups[a].intersection(&self.subgroups[b]);
        self.index_of(&s).expect("intersection of subgroups is a subgroup")
    }

    pub fn sum(&self, a: usize, b: usize) -> usize {
        if self.subgroups[a].is_subset(&self.subgroups[b]) {
            return b;
        }
        if self.subgroups[b].is_subset(&self.subgroups[a]) {
            return a;
        }
        let s = self.group.sum(&self.subgroups[a], &self.subgroups[b]);
        self.index_of(&s).expect("sum of subgroups is a subgroup")
    }

    /// Every subgroup contained in `K_top`, in increasing index order.
    /// `stamp` must have length `len()`; it is used as scratch.
    pub fn down_set(&self, top: usize, stamp: &mut [u32], epoch: u32) -> Vec<usize> {
        let mut out = vec![top];
        stamp[top] = epoch;
        let mut i = 0;
        while i < out.len() {
            let z = out[i];
            for &w in &self.lower_covers[z] {
                let w = w as usize;
                if stamp[w] != epoch {
                    stamp[w] = epoch;
                    out.push(w);
                }
            }
            i += 1;
        }
        out.sort_unstable();
        out
    }

    pub fn is_elementary(&self, i: usize) -> bool {
        self.subgroups[i].iter().all(|x| self.group.times_p(x) == 0)
    }

    pub fn subgroup_type(&self, i: usize) -> Partition {
        self.group.subgroup_type(&self.subgroups[i])
    }

    pub fn quotient_type(&self, i: usize) -> Partition {
        self.group.quotient_type(&self.subgroups[i])
    }
}

/// Lattice of quotients `G/K` ordered by "is a quotient of": the bottom is the
/// zero module (`K = G`) and the top is `G` itself (`K = 0`).
#[derive(Debug)]
pub struct QuotientLattice {
    pub lattice: FiniteLattice,
    /// Quotient type per node.
    pub labels: Vec<Partition>,
    /// Kernel type per node.
    pub kernel_types: Vec<Partition>,
    /// Subgroup index (into `poset`) of each node's kernel.
    pub kernels: Vec<usize>,
    pub poset: SubgroupPoset,
}

impl QuotientLattice {
    /// Whether the kernel of `top -> node` is elementary abelian.
    pub fn kernel_is_elementary(&self, node: usize) -> bool {
        self.poset.is_elementary(self.kernels[node])
    }

    /// Type of the kernel of `y -> x` for nodes `x <= y`.
    pub fn interval_kernel_type(&self, x: usize, y: usize) -> Partition {
        let big = self.poset.subgroup(self.kernels[x]);
        let small = self.poset.subgroup(self.kernels[y]);
        // K_x / K_y as a group: count p^j-torsion cosets
        let g = self.poset.group();
        let p = g.level().p();
        let k = g.level().k() as usize;
        let mut profile = Vec::with_capacity(k);
        let mut counts = vec![0usize; k];
        for x in big.iter() {
            let mut y = x;
            for c in counts.iter_mut() {
                y = g.times_p(y);
                if small.contains(y) {
                    *c += 1;
                }
            }
        }
        let small_log = log_p(small.len(), p);
        for c in counts {
            profile.push(log_p(c, p) - small_log);
        }
        type_from_profile(&profile)
    }
}

pub fn quotient_lattice(level: Level, lambda: &Partition) -> Result<QuotientLattice, AbelianError> {
    quotient_lattice_capped(level, lambda, DEFAULT_ELEMENT_CAP)
}

pub fn quotient_lattice_capped(
    level: Level,
    lambda: &Partition,
    node_cap: usize,
) -> Result<QuotientLattice, AbelianError> {
    let group = ExplicitGroup::new(level, lambda)?;
    let poset = SubgroupPoset::enumerate(group, node_cap)?;
    let n = poset.len();
    // node i has kernel subgroup n-1-i, so kernel size is non-increasing in i
    let kernels: Vec<usize> = (0..n).rev().collect();
    let lattice = FiniteLattice::from_order_capped(
        n,
        |a, b| poset.subgroup(kernels[b]).is_subset(poset.subgroup(kernels[a])),
        Verify::default(),
        node_cap,
    )
    .map_err(|e| match e {
        LatticeError::CapExceeded { size, cap } => AbelianError::BudgetExceeded {
            needed: size as u128,
            budget: cap as u128,
        },
        other => panic!("quotient poset of an abelian group is a modular lattice: {other}"),
    })?;
    let labels = kernels.iter().map(|&s| poset.quotient_type(s)).collect();
    let kernel_types = kernels.iter().map(|&s| poset.subgroup_type(s)).collect();
    Ok(QuotientLattice {
        lattice,
        labels,
        kernel_types,
        kernels,
        poset,
    })
}
