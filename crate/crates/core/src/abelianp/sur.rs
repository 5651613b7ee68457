//! Surjection counts.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, OnceLock, RwLock};

use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::group::{ExplicitGroup, SubgroupPoset};
use super::{big_pow, hom_count, AbelianError, Level, Partition};

/// Targets up to this order use the subgroup-count triangular system; larger
/// ones use the closed product formula.
pub const SUR_ORACLE_MAX_ORDER: u128 = 128;

type SubKey = (u64, Partition);

fn subgroup_cache() -> &'static RwLock<HashMap<SubKey, Arc<Vec<(Partition, BigUint)>>>> {
    static CACHE: OnceLock<RwLock<HashMap<SubKey, Arc<Vec<(Partition, BigUint)>>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Number of subgroups of each isomorphism type in the group of type `mu`,
/// from explicit enumeration. Memoized.
pub fn subgroup_type_counts(p: u64, mu: &Partition) -> Result<Arc<Vec<(Partition, BigUint)>>, AbelianError> {
    let key = (p, mu.clone());
    if let Some(v) = subgroup_cache().read().unwrap().get(&key) {
        return Ok(v.clone());
    }
    let level = Level::new(p, mu.largest().max(1))?;
    let group = ExplicitGroup::new(level, mu)?;
    let poset = SubgroupPoset::enumerate(group, usize::MAX)?;
    let mut acc: BTreeMap<Partition, BigUint> = BTreeMap::new();
    for i in 0..poset.len() {
        *acc.entry(poset.subgroup_type(i)).or_default() += 1u32;
    }
    let v = Arc::new(acc.into_iter().collect::<Vec<_>>());
    Ok(subgroup_cache().write().unwrap().entry(key).or_insert(v).clone())
}

/// `|Sur(λ, μ)|`.
pub fn sur_count(p: u64, lambda: &Partition, mu: &Partition) -> Result<BigUint, AbelianError> {
    if mu.len() > lambda.len() {
        return Ok(BigUint::zero());
    }
    match mu.order(p) {
        Some(o) if o <= SUR_ORACLE_MAX_ORDER => sur_triangular(p, lambda, mu, &mut HashMap::new()),
        _ => Ok(sur_count_closed(p, lambda, mu)),
    }
}

/// `|Hom(λ, μ)| = Σ_{H ≤ μ} |Sur(λ, H)|`, solved from the bottom up.
fn sur_triangular(
    p: u64,
    lambda: &Partition,
    mu: &Partition,
    memo: &mut HashMap<Partition, BigUint>,
) -> Result<BigUint, AbelianError> {
    if let Some(v) = memo.get(mu) {
        return Ok(v.clone());
    }
    let mut s = hom_count(p, lambda, mu);
    for (tau, count) in subgroup_type_counts(p, mu)?.iter() {
        if tau == mu {
            continue;
        }
        s -= count * sur_triangular(p, lambda, tau, memo)?;
    }
    memo.insert(mu.clone(), s.clone());
    Ok(s)
}

/// Closed form: a map `λ → μ` is onto iff it is onto modulo `p`, giving
/// `|Hom(λ,μ)| · ∏_j (1 - p^{j-1-r_j})` with `r_j = #{i : λ_i ≥ μ_j}`.
pub fn sur_count_closed(p: u64, lambda: &Partition, mu: &Partition) -> BigUint {
    let mut num = BigUint::one();
    let mut shift = 0u64;
    for (j0, &mj) in mu.parts().iter().enumerate() {
        let r = lambda.parts().iter().filter(|&&x| x >= mj).count() as u64;
        let j = j0 as u64;
        if r <= j {
            return BigUint::zero();
        }
        num *= big_pow(p, r) - big_pow(p, j);
        shift += r;
    }
    hom_count(p, lambda, mu) * num / big_pow(p, shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abelianp::{aut_order, enumerate_partitions};
    use crate::partition;

    #[test]
    fn examples() {
        assert_eq!(sur_count(2, &partition![1, 1], &partition![1]).unwrap(), BigUint::from(3u32));
        assert_eq!(sur_count(2, &partition![2], &partition![2]).unwrap(), BigUint::from(2u32));
        for p in [2, 3, 5] {
            assert!(sur_count(p, &partition![1], &partition![1, 1]).unwrap().is_zero());
            assert!(sur_count(p, &partition![1], &partition![2]).unwrap().is_zero());
            assert!(sur_count(p, &partition![], &partition![]).unwrap().is_one());
        }
    }

    /// Count surjections by listing every homomorphism on generators.
    fn sur_brute(p: u64, lambda: &Partition, mu: &Partition) -> (u64, u64) {
        let k = lambda.largest().max(mu.largest()).max(1);
        let level = Level::new(p, k).unwrap();
        let target = ExplicitGroup::new(level, mu).unwrap();
        // allowed images of generator i: elements killed by p^{λ_i}
        let choices: Vec<Vec<usize>> = lambda
            .parts()
            .iter()
            .map(|&a| (0..target.order()).filter(|&x| target.scale(p.pow(a), x) == 0).collect())
            .collect();
        let (mut homs, mut surs) = (0u64, 0u64);
        let mut idx = vec![0usize; choices.len()];
        loop {
            homs += 1;
            let gens: Vec<usize> = idx.iter().zip(&choices).map(|(&i, c)| c[i]).collect();
            if target.generate(&gens).len() == target.order() {
                surs += 1;
            }
            let mut t = 0;
            loop {
                if t == idx.len() {
                    return (homs, surs);
                }
                idx[t] += 1;
                if idx[t] < choices[t].len() {
                    break;
                }
                idx[t] = 0;
                t += 1;
            }
        }
    }

    #[test]
    fn agrees_with_enumeration() {
        for p in [2u64, 3] {
            let level = Level::new(p, 3).unwrap();
            let max = if p == 2 { 6 } else { 3 };
            let parts = enumerate_partitions(level, max);
            for lambda in &parts {
                for mu in &parts {
                    if lambda.order(p).unwrap() > 64
                        || mu.order(p).unwrap() > 64
                        || hom_count(p, lambda, mu) > BigUint::from(1u32 << 16)
                    {
                        continue;
                    }
                    let (homs, surs) = sur_brute(p, lambda, mu);
                    assert_eq!(hom_count(p, lambda, mu), BigUint::from(homs));
                    assert_eq!(sur_count(p, lambda, mu).unwrap(), BigUint::from(surs), "{lambda} -> {mu}");
                    assert_eq!(sur_count_closed(p, lambda, mu), BigUint::from(surs));
                }
            }
        }
    }

    #[test]
    fn closed_form_agrees_with_triangular() {
        for p in [2u64, 3, 5] {
            let level = Level::new(p, 4).unwrap();
            let parts = enumerate_partitions(level, 7);
            for mu in parts.iter().filter(|m| m.order(p).unwrap() <= SUR_ORACLE_MAX_ORDER) {
                for lambda in &parts {
                    let tri = sur_triangular(p, lambda, mu, &mut HashMap::new()).unwrap();
                    assert_eq!(tri, sur_count_closed(p, lambda, mu), "{lambda} -> {mu}");
                }
            }
        }
    }

    #[test]
    fn surjective_endomorphisms_are_automorphisms() {
        for p in [2u64, 3] {
            let level = Level::new(p, 4).unwrap();
            for lambda in enumerate_partitions(level, 6) {
                assert_eq!(sur_count(p, &lambda, &lambda).unwrap(), aut_order(level, &lambda).unwrap());
            }
        }
    }

    #[test]
    fn subgroup_counts() {
        let c = subgroup_type_counts(2, &partition![1, 1]).unwrap();
        assert_eq!(
            *c,
            vec![
                (partition![], BigUint::from(1u32)),
                (partition![1], BigUint::from(3u32)),
                (partition![1, 1], BigUint::from(1u32))
            ]
        );
    }
}
