//! Random cokernels over `Z/p^k`: Monte Carlo sampling and exhaustive
//! enumeration.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abelianp::snf::{snf_in_place, Ring};
use crate::abelianp::{big_pow, sur_count, AbelianError, Level, Partition};

/// Enumeration budget for [`exact_cokernel_distribution`].
pub const EXHAUSTIVE_BUDGET: u128 = 1 << 24;
pub const GENERATOR: &str = "ChaCha8, key from seed, stream = sample index";
pub const SIM_SCHEMA: &str = "clm.sim.v1";

const CHUNK: u64 = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Abelian(#[from] AbelianError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `n × (n+u)` matrix with independent uniform entries.
    Generic,
    /// `n × n` alternating matrix with uniform strictly upper entries.
    Skew,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub level: Level,
    pub n: usize,
    pub u: i64,
    pub mode: Mode,
    pub samples: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.level.modulus()?;
        match self.mode {
            Mode::Generic if (self.n as i64) + self.u < 0 => {
                Err(SimError::InvalidConfig(format!("n + u = {} is negative", self.n as i64 + self.u)))
            }
            Mode::Skew if self.level.p() == 2 => {
                Err(SimError::InvalidConfig("skew mode needs an odd prime".into()))
            }
            _ => Ok(()),
        }
    }

    /// Number of relation columns.
    pub fn cols(&self) -> usize {
        match self.mode {
            Mode::Generic => (self.n as i64 + self.u) as usize,
            Mode::Skew => self.n,
        }
    }
}

fn draw_matrix(config: &SimConfig, q: u64, rng: &mut ChaCha8Rng) -> Vec<Vec<u64>> {
    let n = config.n;
    let mut draw = || (rng.gen::<u128>() % q as u128) as u64;
    match config.mode {
        Mode::Generic => {
            let cols = config.cols();
            (0..n).map(|_| (0..cols).map(|_| draw()).collect()).collect()
        }
        Mode::Skew => {
            let mut a = vec![vec![0u64; n]; n];
            for i in 0..n {
                for j in i + 1..n {
                    let x = draw();
                    a[i][j] = x;
                    a[j][i] = (q - x) % q;
                }
            }
            a
        }
    }
}

fn sample_with(config: &SimConfig, ring: &Ring, q: u64, index: u64) -> Partition {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index);
    let mut a = draw_matrix(config, q, &mut rng);
    let cols = config.cols();
    snf_in_place(ring, &mut a, config.n, cols)
}

/// Cokernel type of the `index`-th random matrix of the configuration.
pub fn sample_cokernel(config: &SimConfig, index: u64) -> Result<Partition, SimError> {
    config.validate()?;
    let ring = Ring::new(config.level)?;
    let q = config.level.modulus()?;
    Ok(sample_with(config, &ring, q, index))
}

/// Distribution of the cokernel of a uniform `n × (n+u)` matrix, by listing
/// every matrix.
pub fn exact_cokernel_distribution(level: Level, n: usize, u: i64) -> Result<BTreeMap<Partition, BigRational>, SimError> {
    let config = SimConfig {
        level,
        n,
        u,
        mode: Mode::Generic,
        samples: 0,
        seed: 0,
    };
    config.validate()?;
    let cols = config.cols();
    let q = level.modulus()?;
    let cells = n * cols;
    let total = (q as u128).checked_pow(cells as u32).filter(|&t| t <= EXHAUSTIVE_BUDGET).ok_or(
        AbelianError::BudgetExceeded {
            needed: (q as u128).checked_pow(cells as u32).unwrap_or(u128::MAX),
            budget: EXHAUSTIVE_BUDGET,
        },
    )? as u64;
    let ring = Ring::new(level)?;
    let counts = (0..total)
        .into_par_iter()
        .fold(BTreeMap::<Partition, u64>::new, |mut acc, code| {
            let mut c = code;
            let mut a: Vec<Vec<u64>> = (0..n)
                .map(|_| {
                    (0..cols)
                        .map(|_| {
                            let d = c % q;
                            c /= q;
                            d
                        })
                        .collect()
                })
                .collect();
            *acc.entry(snf_in_place(&ring, &mut a, n, cols)).or_default() += 1;
            acc
        })
        .reduce(BTreeMap::new, merge_counts);
    Ok(counts
        .into_iter()
        .map(|(k, v)| (k, BigRational::new(BigInt::from(v), BigInt::from(total))))
        .collect())
}

fn merge_counts(mut a: BTreeMap<Partition, u64>, b: BTreeMap<Partition, u64>) -> BTreeMap<Partition, u64> {
    for (k, v) in b {
        *a.entry(k).or_default() += v;
    }
    a
}

/// `E|Sur(coker, N)| = |Sur((k^n), N)| · |N|^{-(n+u)}`.
pub fn exact_finite_moment(level: Level, n: usize, u: i64, target: &Partition) -> Result<BigRational, SimError> {
    target.check_level(level)?;
    if (n as i64) + u < 0 {
        return Err(SimError::InvalidConfig("n + u is negative".into()));
    }
    let free = Partition::rectangle(level.k(), n);
    let sur = sur_count(level.p(), &free, target)?;
    let den = big_pow(level.p(), (n as u64 + u as u64) * target.size() as u64);
    Ok(BigRational::new(sur.into(), den.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqEntry {
    pub partition: Partition,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub partition: Partition,
    pub estimate: f64,
    pub stderr: f64,
    pub exact_finite_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub p: u64,
    pub k: u32,
    pub n: usize,
    pub u: i64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub schema: String,
    pub seed: u64,
    pub samples: u64,
    pub generator: String,
    pub config: ConfigEcho,
    pub freq: Vec<FreqEntry>,
    pub moment_estimates: Vec<MomentEstimate>,
}

impl SimReport {
    pub fn count(&self, lambda: &Partition) -> u64 {
        self.freq.iter().find(|f| &f.partition == lambda).map_or(0, |f| f.count)
    }

    pub fn estimate(&self, lambda: &Partition) -> Option<&MomentEstimate> {
        self.moment_estimates.iter().find(|m| &m.partition == lambda)
    }
}

/// Draws `samples` cokernels, tabulates their types and the empirical
/// `N`-moments `E|Sur(coker, N)|` for each target.
pub fn run_simulation(config: &SimConfig, targets: &[Partition]) -> Result<SimReport, SimError> {
    config.validate()?;
    for t in targets {
        t.check_level(config.level)?;
    }
    let ring = Ring::new(config.level)?;
    let q = config.level.modulus()?;
    let chunks = config.samples.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = BTreeMap::<Partition, u64>::new();
            for i in c * CHUNK..((c + 1) * CHUNK).min(config.samples) {
                *acc.entry(sample_with(config, &ring, q, i)).or_default() += 1;
            }
            acc
        })
        .reduce(BTreeMap::new, merge_counts);

    let p = config.level.p();
    let mut moment_estimates = Vec::new();
    if config.samples > 0 {
        for target in targets {
            let values: Vec<(f64, u64)> = counts
                .iter()
                .map(|(ty, &c)| Ok((sur_count(p, ty, target)?.to_f64().unwrap_or(f64::INFINITY), c)))
                .collect::<Result<_, AbelianError>>()?;
            let n = config.samples as f64;
            let mean = values.iter().map(|(v, c)| v * *c as f64).sum::<f64>() / n;
            let var = if config.samples > 1 {
                values.iter().map(|(v, c)| (v - mean).powi(2) * *c as f64).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let exact = match config.mode {
                Mode::Generic => Some(
                    exact_finite_moment(config.level, config.n, config.u, target)?
                        .to_f64()
                        .unwrap_or(f64::NAN),
                ),
                Mode::Skew => None,
            };
            moment_estimates.push(MomentEstimate {
                partition: target.clone(),
                estimate: mean,
                stderr: (var / n).sqrt(),
                exact_finite_n: exact,
            });
        }
    }
    Ok(SimReport {
        schema: SIM_SCHEMA.into(),
        seed: config.seed,
        samples: config.samples,
        generator: GENERATOR.into(),
        config: ConfigEcho {
            p,
            k: config.level.k(),
            n: config.n,
            u: config.u,
            mode: config.mode,
        },
        freq: counts
            .into_iter()
            .map(|(partition, count)| FreqEntry { partition, count })
            .collect(),
        moment_estimates,
    })
}

/// `1 − |Sur(S^n, N)| / |N|^n`: the chance that `n` uniform elements of `N`
/// fail to generate it.
pub fn sur_deficit(level: Level, n: usize, target: &Partition) -> Result<f64, SimError> {
    let free = Partition::rectangle(level.k(), n);
    let sur = BigRational::from_integer(sur_count(level.p(), &free, target)?.into());
    let all = BigRational::from_integer(big_pow(level.p(), n as u64 * target.size() as u64).into());
    let d = BigRational::from_integer(1.into()) - sur / all;
    Ok(if d.is_zero() { 0.0 } else { d.to_f64().unwrap_or(1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition;

    fn lv(p: u64, k: u32) -> Level {
        Level::new(p, k).unwrap()
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn cfg(p: u64, k: u32, n: usize, u: i64, mode: Mode, samples: u64) -> SimConfig {
        SimConfig {
            level: lv(p, k),
            n,
            u,
            mode,
            samples,
            seed: 5,
        }
    }

    #[test]
    fn exhaustive_examples() {
        let d = exact_cokernel_distribution(lv(2, 1), 2, 0).unwrap();
        assert_eq!(d[&partition![]], q(6, 16));
        assert_eq!(d[&partition![1]], q(9, 16));
        assert_eq!(d[&partition![1, 1]], q(1, 16));
        let d = exact_cokernel_distribution(lv(2, 1), 1, 0).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[&partition![]], q(1, 2));
        let d = exact_cokernel_distribution(lv(5, 3), 0, 2).unwrap();
        assert_eq!(d[&partition![]], q(1, 1));
        assert!(exact_cokernel_distribution(lv(2, 3), 3, 0).is_err());
    }

    #[test]
    fn finite_moment_examples() {
        assert_eq!(exact_finite_moment(lv(2, 1), 2, 0, &partition![1]).unwrap(), q(3, 4));
        assert_eq!(exact_finite_moment(lv(3, 2), 4, 1, &partition![]).unwrap(), q(1, 1));
        assert_eq!(exact_finite_moment(lv(2, 1), 1, 0, &partition![1, 1]).unwrap(), q(0, 1));
        // agreement with the exhaustive distribution
        for (p, k, n, u) in [(2, 1, 2, 0), (2, 2, 2, 1), (3, 1, 2, 1), (2, 1, 3, 1)] {
            let d = exact_cokernel_distribution(lv(p, k), n, u).unwrap();
            for target in [partition![], partition![1], partition![1, 1], partition![2]] {
                if target.check_level(lv(p, k)).is_err() {
                    continue;
                }
                let m: BigRational = d
                    .iter()
                    .map(|(ty, pr)| pr * BigRational::from_integer(sur_count(p, ty, &target).unwrap().into()))
                    .sum();
                assert_eq!(m, exact_finite_moment(lv(p, k), n, u, &target).unwrap());
            }
        }
    }

    #[test]
    fn sample_examples() {
        let c = cfg(3, 2, 0, 2, Mode::Generic, 1);
        assert_eq!(sample_cokernel(&c, 0).unwrap(), partition![]);
        let c = cfg(3, 1, 5, 0, Mode::Skew, 1);
        for i in 0..200 {
            assert!(!sample_cokernel(&c, i).unwrap().is_empty());
        }
        assert!(sample_cokernel(&cfg(2, 1, 3, 0, Mode::Skew, 1), 0).is_err());
        assert!(sample_cokernel(&cfg(2, 1, 3, -4, Mode::Generic, 1), 0).is_err());
    }

    #[test]
    fn empty_run() {
        let r = run_simulation(&cfg(2, 1, 2, 0, Mode::Generic, 0), &[partition![1]]).unwrap();
        assert!(r.freq.is_empty());
        assert!(r.moment_estimates.is_empty());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let c = cfg(3, 2, 4, 1, Mode::Generic, 5000);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| run_simulation(&c, &[partition![1]]).unwrap());
        let b = three.install(|| run_simulation(&c, &[partition![1]]).unwrap());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.freq.iter().map(|f| f.count).sum::<u64>(), 5000);
    }

    #[test]
    fn one_by_one_is_fair() {
        let r = run_simulation(&cfg(2, 1, 1, 0, Mode::Generic, 40_000), &[]).unwrap();
        let c = r.count(&partition![]) as f64;
        let sigma = (40_000.0f64 * 0.25).sqrt();
        assert!((c - 20_000.0).abs() < 4.0 * sigma);
    }
}
