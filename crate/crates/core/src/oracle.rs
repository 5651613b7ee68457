//! Brute-force checks of the lattice and counting formulas on a window of
//! explicit groups.
//!
//! For a group `G` of type `λ`, the quotient interval `[G/K, G]` is dual to
//! the subgroup interval `[0, K]`, so every top-anchored interval of the
//! quotient lattice is visited by walking the subgroup poset of `G` once.
//! Any interval `[x, y]` of a quotient lattice is isomorphic to the full
//! lattice of a subquotient, which lies in the same window, so the window
//! covers all intervals up to isomorphism.

use std::collections::HashMap;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::abelianp::{
    aut_order, enumerate_partitions, hom_count, subgroup_type_counts, sur_count, sur_count_closed, quotient_lattice_capped,
    AbelianError, ExplicitGroup, Level, Partition, SubgroupPoset,
};

pub const ORACLE_SCHEMA: &str = "clm.oracle.v1";

/// Subgroup posets at most this large are also rebuilt as dense
/// `FiniteLattice`s and compared.
pub const DENSE_CROSSCHECK_MAX: usize = 128;
/// Default cap on subgroup poset size.
pub const ORACLE_NODE_CAP: usize = 2_000_000;
/// Hom/Sur consistency is checked for groups up to this order.
pub const COUNTING_MAX_ORDER: u128 = 64;
/// Pair budget for the exhaustive distributivity test of one element.
const DISTRIBUTIVE_PAIR_BUDGET: usize = 4_000_000;
const MAX_MESSAGES: usize = 10;

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub node_cap: usize,
    pub dense_max: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            node_cap: ORACLE_NODE_CAP,
            dense_max: DENSE_CROSSCHECK_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZValue {
    pub kernel: Partition,
    pub z: u64,
    pub omega: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub partition: Partition,
    /// Number of top-anchored intervals, one per subgroup.
    pub intervals: usize,
    pub complemented: usize,
    pub mobius_mismatches: usize,
    /// Intervals where complementedness and an elementary kernel disagree.
    pub complemented_mismatches: usize,
    pub z_failures: usize,
    pub bound_failures: usize,
    pub chain_failures: usize,
    pub z_values: Vec<ZValue>,
    pub dense_checked: bool,
    pub messages: Vec<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingCheck {
    pub aut_checked: usize,
    pub hom_checked: usize,
    pub messages: Vec<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub schema: String,
    pub level: Level,
    pub max_size: u32,
    pub groups: Vec<GroupCheck>,
    pub counting: CountingCheck,
    pub pass: bool,
}

impl OracleReport {
    pub fn intervals(&self) -> usize {
        self.groups.iter().map(|g| g.intervals).sum()
    }

    pub fn mobius_pass(&self) -> bool {
        self.groups.iter().all(|g| g.mobius_mismatches == 0 && g.complemented_mismatches == 0)
    }

    /// `Z = 2^ω`, the `Z³` bound and the chain counts.
    pub fn bounds_pass(&self) -> bool {
        self.groups
            .iter()
            .all(|g| g.z_failures == 0 && g.bound_failures == 0 && g.chain_failures == 0)
    }
}

/// `(-1)^e p^{e(e-1)/2}`.
fn elementary_mobius(p: u64, e: u32) -> Option<i128> {
    let m = (p as i128).checked_pow(e * e.saturating_sub(1) / 2)?;
    Some(if e % 2 == 0 { m } else { -m })
}

fn binomial(n: u32, j: u32) -> u128 {
    (0..j).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn note(messages: &mut Vec<String>, msg: impl FnOnce() -> String) {
    if messages.len() < MAX_MESSAGES {
        messages.push(msg());
    }
}

/// Number of elements `H` of the quotient interval dual to `[0, top]` with
/// `H ∨ (A ∧ B) = (H ∨ A) ∧ (H ∨ B)` for all `A, B`. In subgroup terms the
/// law reads `H ∩ (A + B) = (H ∩ A) + (H ∩ B)`. `None` if an element needs
/// the exhaustive test and it is over budget.
fn distributive_count(poset: &SubgroupPoset, top: usize, down: &[usize]) -> Option<u64> {
    let coatoms = poset.lower_covers(top);
    let mut z = 0;
    for &h in down {
        if h == 0 || h == top {
            z += 1;
            continue;
        }
        let hs = poset.subgroup(h);
        let hl = hs.len();
        // distinct maximal subgroups A, B have A + B = top, so the law fails
        // iff |H∩A||H∩B| != |H||H∩A∩B|
        let mut witnessed = false;
        'search: for (i, &a) in coatoms.iter().enumerate() {
            let sa = poset.subgroup(a as usize);
            let la = hs.meet_len(sa, None);
            if la == hl {
                continue;
            }
            for &b in &coatoms[i + 1..] {
                let sb = poset.subgroup(b as usize);
                if la * hs.meet_len(sb, None) != hl * hs.meet_len(sa, Some(sb)) {
                    witnessed = true;
                    break 'search;
                }
            }
        }
        if witnessed {
            continue;
        }
        if down.len().saturating_mul(down.len()) > DISTRIBUTIVE_PAIR_BUDGET {
            return None;
        }
        let ok = down.iter().all(|&a| {
            down.iter().all(|&b| {
                let sa = poset.subgroup(a);
                let sb = poset.subgroup(b);
                let lhs = hs.meet_len(poset.subgroup(poset.sum(a, b)), None);
                lhs * hs.meet_len(sa, Some(sb)) == hs.meet_len(sa, None) * hs.meet_len(sb, None)
            })
        });
        if ok {
            z += 1;
        }
    }
    Some(z)
}

/// Runs the lattice checks on the quotient lattice of one group.
pub fn check_group(level: Level, lambda: &Partition, opts: OracleOptions) -> Result<GroupCheck, AbelianError> {
    let p = level.p();
    let group = ExplicitGroup::new(level, lambda)?;
    let poset = SubgroupPoset::enumerate(group, opts.node_cap)?;
    let n = poset.len();

    let mut type_ids: HashMap<Partition, usize> = HashMap::new();
    let mut types: Vec<Partition> = Vec::new();
    let mut node_type = Vec::with_capacity(n);
    for i in 0..n {
        let t = poset.subgroup_type(i);
        let next = types.len();
        let id = *type_ids.entry(t.clone()).or_insert(next);
        if id == next {
            types.push(t);
        }
        node_type.push(id);
    }

    let mut check = GroupCheck {
        partition: lambda.clone(),
        intervals: n,
        complemented: 0,
        mobius_mismatches: 0,
        complemented_mismatches: 0,
        z_failures: 0,
        bound_failures: 0,
        chain_failures: 0,
        z_values: Vec::new(),
        dense_checked: false,
        messages: Vec::new(),
        pass: false,
    };

    let mut mu: Vec<i128> = vec![0; n];
    let mut complemented = vec![false; n];
    let mut z_memo: HashMap<usize, Option<u64>> = HashMap::new();
    let mut stamp = vec![u32::MAX; n];
    let mut down: Vec<usize> = Vec::new();
    let mut layers: Vec<u128> = Vec::new();

    for top in 0..n {
        // strict down-set of `top`
        down.clear();
        for &w in poset.lower_covers(top) {
            if stamp[w as usize] != top as u32 {
                stamp[w as usize] = top as u32;
                down.push(w as usize);
            }
        }
        let mut i = 0;
        while i < down.len() {
            let z = down[i];
            for &w in poset.lower_covers(z) {
                if stamp[w as usize] != top as u32 {
                    stamp[w as usize] = top as u32;
                    down.push(w as usize);
                }
            }
            i += 1;
        }
        let m = if top == 0 { 1 } else { -down.iter().map(|&h| mu[h]).sum::<i128>() };
        mu[top] = m;

        let ty = &types[node_type[top]];
        let elementary = ty.parts().iter().all(|&x| x == 1);
        let e = poset.log_order(top);
        let expected = if elementary { elementary_mobius(p, e) } else { Some(0) };
        if expected != Some(m) {
            check.mobius_mismatches += 1;
            note(&mut check.messages, || format!("mobius over kernel {ty}: got {m}, expected {expected:?}"));
        }

        // complemented iff the top of the quotient interval is the join of
        // its atoms, i.e. the maximal subgroups of the kernel meet in 0
        let covers = poset.lower_covers(top);
        let is_compl = top == 0 || {
            let mut meet = poset.subgroup(covers[0] as usize).clone();
            for &c in &covers[1..] {
                meet = meet.intersection(poset.subgroup(c as usize));
            }
            meet.len() == 1
        };
        complemented[top] = is_compl;
        if is_compl != elementary {
            check.complemented_mismatches += 1;
            note(&mut check.messages, || format!("kernel {ty}: complemented={is_compl}, elementary={elementary}"));
        }
        if !is_compl {
            continue;
        }
        check.complemented += 1;

        down.push(top);
        let z = *z_memo.entry(node_type[top]).or_insert_with(|| {
            // isomorphic kernels give isomorphic intervals, so Z is computed
            // once per kernel type
            let z = distributive_count(&poset, top, &down);
            let omega = z.filter(|z| z.is_power_of_two()).map(|z| z.trailing_zeros());
            check.z_values.push(ZValue {
                kernel: ty.clone(),
                z: z.unwrap_or(0),
                omega,
            });
            if !matches!(omega, Some(0 | 1)) {
                check.z_failures += 1;
                note(&mut check.messages, || format!("kernel {ty}: Z = {z:?} is not 2^ω with ω ≤ 1"));
            }
            z
        });
        let Some(z) = z else { continue };

        let abs_sum: i128 = down.iter().map(|&h| mu[h].abs()).sum();
        if abs_sum > m.abs() * (z as i128).pow(3) {
            check.bound_failures += 1;
            note(&mut check.messages, || format!("kernel {ty}: Σ|μ| = {abs_sum} > |μ|Z³ = {}", m.abs() * (z as i128).pow(3)));
        }

        layers.clear();
        layers.resize(e as usize + 1, 0);
        for &h in &down {
            layers[(e - poset.log_order(h)) as usize] += 1;
        }
        for (j, &c) in layers.iter().enumerate() {
            if c < binomial(e, j as u32) {
                check.chain_failures += 1;
                note(&mut check.messages, || format!("kernel {ty}: {c} elements at height {j} < C({e},{j})"));
            }
        }
    }

    if n <= opts.dense_max {
        dense_crosscheck(level, lambda, &mu, &complemented, &z_memo, &node_type, &mut check)?;
        check.dense_checked = true;
    }

    check.pass = check.mobius_mismatches == 0
        && check.complemented_mismatches == 0
        && check.z_failures == 0
        && check.bound_failures == 0
        && check.chain_failures == 0
        && check.messages.is_empty();
    Ok(check)
}

/// Recomputes the same quantities on the dense `FiniteLattice`.
fn dense_crosscheck(
    level: Level,
    lambda: &Partition,
    mu: &[i128],
    complemented: &[bool],
    z_memo: &HashMap<usize, Option<u64>>,
    node_type: &[usize],
    check: &mut GroupCheck,
) -> Result<(), AbelianError> {
    let q = quotient_lattice_capped(level, lambda, usize::MAX)?;
    let lat = &q.lattice;
    let top = lat.top();
    let mut z_seen: HashMap<usize, bool> = HashMap::new();
    for x in 0..lat.len() {
        let kernel = q.kernels[x];
        let dense_mu = lat.mobius(x, top).expect("x <= top");
        if dense_mu != BigInt::from(mu[kernel]) {
            note(&mut check.messages, || format!("dense mobius at node {x}: {dense_mu} vs {}", mu[kernel]));
        }
        let (sub, _) = lat.interval(x, top).expect("x <= top");
        let dense_compl = sub.is_complemented();
        if dense_compl != complemented[kernel] || dense_compl != sub.top_is_join_of_atoms() {
            note(&mut check.messages, || format!("dense complementedness differs at node {x}"));
        }
        if dense_compl && z_seen.insert(node_type[kernel], true).is_none() {
            let dense_z = sub.count_distributive() as u64;
            if z_memo.get(&node_type[kernel]).copied().flatten() != Some(dense_z) {
                note(&mut check.messages, || format!("dense Z = {dense_z} differs at node {x}"));
            }
        }
    }
    Ok(())
}

/// `aut = sur(λ, λ)` and `hom(λ, μ) = Σ_τ #{H ≤ μ of type τ} · sur(λ, τ)`
/// with the closed surjection formula on the right.
fn counting_checks(level: Level, window: &[Partition]) -> Result<CountingCheck, AbelianError> {
    let p = level.p();
    let mut out = CountingCheck {
        aut_checked: 0,
        hom_checked: 0,
        messages: Vec::new(),
        pass: true,
    };
    for lambda in window {
        if aut_order(level, lambda)? != sur_count(p, lambda, lambda)? {
            note(&mut out.messages, || format!("aut_order({lambda}) != sur_count({lambda}, {lambda})"));
        }
        out.aut_checked += 1;
    }
    let small: Vec<&Partition> = window
        .iter()
        .filter(|l| l.order(p).is_some_and(|o| o <= COUNTING_MAX_ORDER))
        .collect();
    for &lambda in &small {
        for &mu in &small {
            let counts = subgroup_type_counts(p, mu)?;
            let rhs: num_bigint::BigUint = counts.iter().map(|(tau, c)| c * sur_count_closed(p, lambda, tau)).sum();
            if hom_count(p, lambda, mu) != rhs {
                note(&mut out.messages, || format!("hom({lambda}, {mu}) != Σ sub·sur"));
            }
            out.hom_checked += 1;
        }
    }
    out.pass = out.messages.is_empty();
    Ok(out)
}

/// Every partition of size at most `max_size` at this level.
pub fn run_oracle(level: Level, max_size: u32, opts: OracleOptions) -> Result<OracleReport, AbelianError> {
    let window = enumerate_partitions(level, max_size);
    let groups = window
        .iter()
        .map(|l| check_group(level, l, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let counting = counting_checks(level, &window)?;
    let pass = groups.iter().all(|g| g.pass) && counting.pass;
    Ok(OracleReport {
        schema: ORACLE_SCHEMA.into(),
        level,
        max_size,
        groups,
        counting,
        pass,
    })
}

/// Largest `s` with `p^s <= max_order`.
pub fn size_for_order(p: u64, max_order: u128) -> u32 {
    let mut s = 0;
    let mut o = p as u128;
    while o <= max_order {
        s += 1;
        o = match o.checked_mul(p as u128) {
            Some(v) => v,
            None => break,
        };
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition;

    fn lv(p: u64, k: u32) -> Level {
        Level::new(p, k).unwrap()
    }

    #[test]
    fn small_windows_pass_with_dense_crosscheck() {
        for (p, k, s) in [(2, 2, 4), (3, 2, 3), (5, 1, 2), (2, 3, 4)] {
            let r = run_oracle(lv(p, k), s, OracleOptions::default()).unwrap();
            for g in &r.groups {
                assert!(g.pass, "{:?}", g);
            }
            assert!(r.counting.pass, "{:?}", r.counting);
            assert!(r.groups.iter().any(|g| g.dense_checked));
        }
    }

    #[test]
    fn known_values() {
        let g = check_group(lv(2, 1), &partition![1, 1, 1], OracleOptions::default()).unwrap();
        assert_eq!(g.intervals, 16);
        assert_eq!(g.complemented, 16);
        assert!(g.z_values.iter().all(|z| z.z == if z.kernel.is_empty() { 1 } else { 2 }));
        let g = check_group(lv(2, 2), &partition![2], OracleOptions::default()).unwrap();
        assert_eq!(g.intervals, 3);
        assert_eq!(g.complemented, 2);
    }

    #[test]
    fn chain_is_all_distributive() {
        let group = ExplicitGroup::new(lv(2, 2), &partition![2]).unwrap();
        let poset = SubgroupPoset::enumerate(group, 10).unwrap();
        let top = poset.whole();
        assert_eq!(distributive_count(&poset, top, &[0, 1, 2]), Some(3));
    }

    #[test]
    fn order_window() {
        assert_eq!(size_for_order(2, 256), 8);
        assert_eq!(size_for_order(3, 256), 5);
        assert_eq!(size_for_order(5, 4), 0);
    }
}
