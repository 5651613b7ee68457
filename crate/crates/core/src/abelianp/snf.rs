//! Smith normal form over `Z/p^k`.

use super::{AbelianError, Level, Partition};

pub(crate) struct Ring {
    p: u64,
    k: u32,
    q: u64,
}

impl Ring {
    pub(crate) fn new(level: Level) -> Result<Self, AbelianError> {
        Ok(Ring {
            p: level.p(),
            k: level.k(),
            q: level.modulus()?,
        })
    }

    #[inline]
    fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.q as u128) as u64
    }

    #[inline]
    fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + (self.q - b)
        }
    }

    /// p-adic valuation, `k` for zero.
    #[inline]
    fn val(&self, mut a: u64) -> u32 {
        if a == 0 {
            return self.k;
        }
        let mut v = 0;
        while a % self.p == 0 {
            a /= self.p;
            v += 1;
        }
        v
    }

    fn inv_unit(&self, a: u64) -> u64 {
        let (mut r0, mut r1) = (self.q as i128, a as i128);
        let (mut t0, mut t1) = (0i128, 1i128);
        while r1 != 0 {
            let quot = r0 / r1;
            (r0, r1) = (r1, r0 - quot * r1);
            (t0, t1) = (t1, t0 - quot * t1);
        }
        debug_assert_eq!(r0, 1);
        t0.rem_euclid(self.q as i128) as u64
    }
}

/// Cokernel type of `matrix: S^cols -> S^rows` (rows are generators, columns
/// relations). The pivot at each step is the remaining entry of minimal
/// valuation, first in row-major order.
pub fn snf_cokernel(level: Level, matrix: &[Vec<u64>]) -> Result<Partition, AbelianError> {
    let ring = Ring::new(level)?;
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, |r| r.len());
    let mut a: Vec<Vec<u64>> = Vec::with_capacity(rows);
    for row in matrix {
        if row.len() != cols {
            return Err(AbelianError::ShapeMismatch {
                expected: format!("{cols} columns"),
                got: format!("{} columns", row.len()),
            });
        }
        if let Some(&x) = row.iter().find(|&&x| x >= ring.q) {
            return Err(AbelianError::EntryOutOfRange(x));
        }
        a.push(row.clone());
    }
    Ok(snf_in_place(&ring, &mut a, rows, cols))
}

pub(crate) fn snf_in_place(ring: &Ring, a: &mut [Vec<u64>], rows: usize, cols: usize) -> Partition {
    let mut exps: Vec<u32> = Vec::new();
    let mut t = 0;
    while t < rows.min(cols) {
        let mut best: Option<(u32, usize, usize)> = None;
        'search: for (i, row) in a.iter().enumerate().skip(t) {
            for (j, &x) in row.iter().enumerate().skip(t) {
                let v = ring.val(x);
                if v < ring.k && best.is_none_or(|(bv, _, _)| v < bv) {
                    best = Some((v, i, j));
                    if v == 0 {
                        break 'search;
                    }
                }
            }
        }
        let Some((v, pi, pj)) = best else { break };
        a.swap(t, pi);
        if pj != t {
            for row in a.iter_mut() {
                row.swap(t, pj);
            }
        }
        let pv = ring.p.pow(v);
        let unit_inv = ring.inv_unit(a[t][t] / pv);
        for x in a[t].iter_mut().skip(t) {
            *x = ring.mul(*x, unit_inv);
        }
        debug_assert_eq!(a[t][t], pv);
        let pivot_row = a[t].clone();
        for row in a.iter_mut().skip(t + 1) {
            let x = row[t];
            if x != 0 {
                let c = x / pv;
                for j in t..cols {
                    row[j] = ring.sub(row[j], ring.mul(c, pivot_row[j]));
                }
            }
        }
        // the pivot row is now p^v e_t plus entries divisible by p^v; column
        // operations clear it without touching other rows' pivot column
        for j in t + 1..cols {
            a[t][j] = 0;
        }
        exps.push(v);
        t += 1;
    }
    let mut parts: Vec<u32> = exps.into_iter().filter(|&v| v > 0).collect();
    parts.extend(std::iter::repeat_n(ring.k, rows - t));
    Partition::new(parts).expect("positive exponents")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lv(p: u64, k: u32) -> Level {
        Level::new(p, k).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(snf_cokernel(lv(2, 2), &[vec![0]]).unwrap(), partition![2]);
        assert_eq!(snf_cokernel(lv(2, 2), &[vec![2, 0], vec![0, 1]]).unwrap(), partition![1]);
        for n in 0..5 {
            let id: Vec<Vec<u64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u64).collect()).collect();
            assert_eq!(snf_cokernel(lv(3, 3), &id).unwrap(), partition![]);
        }
        // zero columns: coker of S^0 -> S^2 is S^2
        assert_eq!(snf_cokernel(lv(5, 2), &[vec![], vec![]]).unwrap(), partition![2, 2]);
        // [[2, -1], [0, 2]] over Z/4 gives Z/4
        assert_eq!(snf_cokernel(lv(2, 2), &[vec![2, 0], vec![3, 2]]).unwrap(), partition![2]);
        assert!(snf_cokernel(lv(2, 2), &[vec![4]]).is_err());
        assert!(snf_cokernel(lv(2, 2), &[vec![1, 2], vec![1]]).is_err());
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, q: u64) -> Vec<Vec<u64>> {
        (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(0..q)).collect()).collect()
    }

    fn matmul(a: &[Vec<u64>], b: &[Vec<u64>], q: u64) -> Vec<Vec<u64>> {
        let inner = b.len();
        let cols = b.first().map_or(0, |r| r.len());
        a.iter()
            .map(|row| {
                (0..cols)
                    .map(|j| (0..inner).map(|t| row[t] * b[t][j] % q).sum::<u64>() % q)
                    .collect()
            })
            .collect()
    }

    /// Unit lower-triangular times a random unit diagonal: always invertible.
    fn random_invertible(rng: &mut ChaCha8Rng, n: usize, level: Level) -> Vec<Vec<u64>> {
        let q = level.modulus().unwrap();
        let p = level.p();
        let lower: Vec<Vec<u64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1 } else if j < i { rng.gen_range(0..q) } else { 0 }).collect())
            .collect();
        let upper: Vec<Vec<u64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            loop {
                                let u = rng.gen_range(1..q);
                                if u % p != 0 {
                                    break u;
                                }
                            }
                        } else if j > i {
                            rng.gen_range(0..q)
                        } else {
                            0
                        }
                    })
                    .collect()
            })
            .collect();
        matmul(&lower, &upper, q)
    }

    #[test]
    fn invariant_under_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(p, k) in &[(2u64, 1u32), (2, 3), (3, 2), (5, 2)] {
            let level = lv(p, k);
            let q = level.modulus().unwrap();
            for _ in 0..60 {
                let rows = rng.gen_range(0..6);
                let cols = rng.gen_range(0..6);
                // bias toward divisible entries so cokernels are interesting
                let mut m = random_matrix(&mut rng, rows, cols, q);
                for row in m.iter_mut() {
                    for x in row.iter_mut() {
                        if rng.gen_bool(0.5) {
                            *x = *x * p % q;
                        }
                    }
                }
                let base = snf_cokernel(level, &m).unwrap();
                assert!(base.largest() <= k);
                let mut perm = m.clone();
                perm.reverse();
                for row in perm.iter_mut() {
                    row.rotate_left(if cols > 0 { 1 } else { 0 });
                }
                assert_eq!(snf_cokernel(level, &perm).unwrap(), base);
                if rows > 0 && cols > 0 {
                    let left = random_invertible(&mut rng, rows, level);
                    let right = random_invertible(&mut rng, cols, level);
                    let transformed = matmul(&matmul(&left, &m, q), &right, q);
                    assert_eq!(snf_cokernel(level, &transformed).unwrap(), base);
                }
            }
        }
    }

    #[test]
    fn order_matches_determinant_valuation() {
        // for square matrices over Z/p^k with nonzero det mod p^k, |coker| = p^{v(det)}
        let level = lv(3, 3);
        let q = 27u64;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let m = random_matrix(&mut rng, 2, 2, q);
            let det = ((m[0][0] * m[1][1]) as i64 - (m[0][1] * m[1][0]) as i64).rem_euclid(q as i64) as u64;
            if det == 0 {
                continue;
            }
            let mut v = 0;
            let mut d = det;
            while d % 3 == 0 {
                d /= 3;
                v += 1;
            }
            assert_eq!(snf_cokernel(level, &m).unwrap().size(), v);
        }
    }
}
