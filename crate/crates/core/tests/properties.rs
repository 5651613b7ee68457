use clm_core::abelianp::{ext_rank, extension_type, quotient_lattice, snf_cokernel, Level, Partition};
use clm_core::lattice::FiniteLattice;
use clm_core::momentcalc::{measure_from_moments, moments_from_measure, MomentSpec};
use clm_core::sampler::{run_simulation, Mode, SimConfig};
use clm_core::setcat::{forward_factorial_moments, invert_factorial_moments, Distribution, FactorialMomentSeq};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, Zero};
use proptest::prelude::*;

fn level() -> impl Strategy<Value = Level> {
    prop_oneof![Just((2u64, 1u32)), Just((2, 2)), Just((2, 3)), Just((3, 1)), Just((3, 2)), Just((5, 1))]
        .prop_map(|(p, k)| Level::new(p, k).unwrap())
}

fn modulus(level: Level) -> u64 {
    level.p().pow(level.k())
}

fn matrix(level: Level, rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<u64>>> {
    prop::collection::vec(prop::collection::vec(0..modulus(level), cols), rows)
}

fn partition(level: Level, max_len: usize) -> impl Strategy<Value = Partition> {
    prop::collection::vec(1..=level.k(), 0..=max_len).prop_map(|v| Partition::new(v).unwrap())
}

fn level_and_matrix() -> impl Strategy<Value = (Level, Vec<Vec<u64>>)> {
    level().prop_flat_map(|l| (1usize..=4, 1usize..=4).prop_flat_map(move |(r, c)| (Just(l), matrix(l, r, c))))
}

// elementary operations over Z/p^k: swap, or add c times one line to another
#[derive(Debug, Clone)]
enum Op {
    SwapRows(usize, usize),
    SwapCols(usize, usize),
    AddRow { from: usize, to: usize, c: u64 },
    AddCol { from: usize, to: usize, c: u64 },
    ScaleRow { row: usize, unit: u64 },
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..4usize, 0..4usize).prop_map(|(a, b)| Op::SwapRows(a, b)),
        (0..4usize, 0..4usize).prop_map(|(a, b)| Op::SwapCols(a, b)),
        (0..4usize, 0..4usize, 0..1000u64).prop_map(|(from, to, c)| Op::AddRow { from, to, c }),
        (0..4usize, 0..4usize, 0..1000u64).prop_map(|(from, to, c)| Op::AddCol { from, to, c }),
        (0..4usize, 0..1000u64).prop_map(|(row, unit)| Op::ScaleRow { row, unit }),
    ]
}

fn apply(m: &mut [Vec<u64>], op: &Op, p: u64, q: u64) {
    let (rows, cols) = (m.len(), m[0].len());
    match *op {
        Op::SwapRows(a, b) => m.swap(a % rows, b % rows),
        Op::SwapCols(a, b) => m.iter_mut().for_each(|r| r.swap(a % cols, b % cols)),
        Op::AddRow { from, to, c } => {
            let (from, to) = (from % rows, to % rows);
            if from != to {
                for j in 0..cols {
                    m[to][j] = (m[to][j] + c % q * m[from][j]) % q;
                }
            }
        }
        Op::AddCol { from, to, c } => {
            let (from, to) = (from % cols, to % cols);
            if from != to {
                for r in m.iter_mut() {
                    r[to] = (r[to] + c % q * r[from]) % q;
                }
            }
        }
        Op::ScaleRow { row, unit } => {
            let mut u = unit % q;
            if u % p == 0 {
                u += 1;
            }
            for x in m[row % rows].iter_mut() {
                *x = *x * u % q;
            }
        }
    }
}

fn mobius_elementary(p: u64, e: usize) -> BigInt {
    let sign = if e % 2 == 0 { BigInt::one() } else { -BigInt::one() };
    sign * BigInt::from(p).pow((e * e.saturating_sub(1) / 2) as u32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snf_is_invariant_under_unimodular_ops(
        (level, m) in level_and_matrix(),
        ops in prop::collection::vec(op(), 0..12),
    ) {
        let before = snf_cokernel(level, &m).unwrap();
        let mut n = m.clone();
        for o in &ops {
            apply(&mut n, o, level.p(), modulus(level));
        }
        prop_assert_eq!(snf_cokernel(level, &n).unwrap(), before);
    }

    #[test]
    fn extension_type_has_the_right_size(
        (level, lambda, e, alpha) in level()
            .prop_flat_map(|l| (Just(l), partition(l, 3), 0usize..=3))
            .prop_flat_map(|(l, lambda, e)| {
                let m = ext_rank(l, &lambda).unwrap() as usize;
                (Just(l), Just(lambda), Just(e), prop::collection::vec(prop::collection::vec(0..l.p(), e), m))
            }),
    ) {
        let t = extension_type(level, &lambda, e, &alpha).unwrap();
        prop_assert_eq!(t.size(), lambda.size() + e as u32);
        prop_assert!(t.parts().iter().all(|&x| x <= level.k()));
        // the h_j alone can only add to the rank or to parts below k
        prop_assert!(t.len() >= lambda.len());
    }

    #[test]
    fn elementary_intervals_of_quotient_lattices(
        (level, lambda) in prop_oneof![Just((2u64, 2u32)), Just((3, 2)), Just((2, 3))]
            .prop_map(|(p, k)| Level::new(p, k).unwrap())
            .prop_flat_map(|l| (Just(l), partition(l, 3)))
            .prop_filter("small", |(l, lam)| lam.order(l.p()).unwrap() <= 64),
    ) {
        let q = quotient_lattice(level, &lambda).unwrap();
        let lat = &q.lattice;
        lat.check_modular().unwrap();
        for x in 0..lat.len() {
            for y in 0..lat.len() {
                if !lat.leq(x, y) {
                    continue;
                }
                let kernel = q.interval_kernel_type(x, y);
                let mu = lat.mobius(x, y).unwrap();
                if kernel.parts().iter().all(|&a| a == 1) {
                    prop_assert_eq!(&mu, &mobius_elementary(level.p(), kernel.len()));
                    let (sub, _) = lat.interval(x, y).unwrap();
                    prop_assert_eq!(sub.count_distributive(), if kernel.is_empty() { 1 } else { 2 });
                } else {
                    prop_assert!(mu.is_zero());
                }
            }
        }
    }

    #[test]
    fn product_closure(a in 0usize..4, b in 1u32..4, c in 1usize..4) {
        let x = if a == 0 { FiniteLattice::boolean(b) } else { FiniteLattice::chain(a + 1) };
        let y = FiniteLattice::chain(c + 1).product(&FiniteLattice::boolean(1)).unwrap();
        let xy = x.product(&y).unwrap();
        let top = |l: &FiniteLattice| l.mobius(l.bottom(), l.top()).unwrap();
        prop_assert_eq!(top(&xy), top(&x) * top(&y));
        let dim = |l: &FiniteLattice| l.dimension(l.bottom(), l.top()).ok();
        if let (Some(dx), Some(dy)) = (dim(&x), dim(&y)) {
            prop_assert_eq!(dim(&xy), Some(dx + dy));
        }
        if x.is_complemented() && y.is_complemented() {
            prop_assert_eq!(xy.count_distributive(), x.count_distributive() * y.count_distributive());
        }
    }

    #[test]
    fn setcat_round_trip(
        nu in prop::collection::vec((0i64..20, 1i64..20), 1..8),
    ) {
        let measure: Vec<BigRational> = nu.iter().map(|&(n, d)| BigRational::new(n.into(), d.into())).collect();
        let len = measure.len();
        let fwd = forward_factorial_moments(&Distribution { measure: measure.clone(), tail: None }, len + 1).unwrap();
        let seq = FactorialMomentSeq { moments: fwd.iter().map(|e| e.exact.clone().unwrap()).collect(), envelope: None };
        let inv = invert_factorial_moments(&seq, len + 1, 1).unwrap();
        for e in &inv.entries {
            let want = measure.get(e.index).cloned().unwrap_or_else(BigRational::zero);
            prop_assert_eq!(e.exact.as_ref(), Some(&want));
        }
    }

    #[test]
    fn forward_backward_consistency(level in level(), u in 0i32..3) {
        let window = if level.p() == 2 { 8 } else { 6 };
        let spec = MomentSpec::card_power(u as f64);
        let t = measure_from_moments(level, &spec, window).unwrap();
        let targets: Vec<Partition> = t.entries.iter().map(|e| e.partition.clone()).filter(|g| g.size() <= window / 2).collect();
        // the tail outside the window is only bounded when |G| < ceil((window+1)/k)
        let r = (window + 1).div_ceil(level.k());
        for m in moments_from_measure(level, &t, &targets).unwrap() {
            prop_assert_eq!(m.rigorous, m.partition.size() < r);
            if !m.rigorous {
                continue;
            }
            let want = spec.value(level, &m.partition).unwrap().to_f64();
            prop_assert!((m.value - want).abs() <= m.err_bound + 1e-12, "{}: {} vs {want} ± {}", m.partition, m.value, m.err_bound);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>(), threads in 1usize..5, skew in any::<bool>()) {
        let cfg = SimConfig {
            level: Level::new(3, 1).unwrap(),
            n: 4,
            u: 0,
            mode: if skew { Mode::Skew } else { Mode::Generic },
            samples: 2000,
            seed,
        };
        let targets = [Partition::new(vec![1]).unwrap()];
        let base = run_simulation(&cfg, &targets).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let other = pool.install(|| run_simulation(&cfg, &targets).unwrap());
        prop_assert_eq!(base, other);
    }
}
