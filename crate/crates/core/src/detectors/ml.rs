//! Exhaustive maximum-likelihood detection for small systems.

use num_complex::Complex;
use num_traits::Zero;

use super::{Detection, Detector};
use crate::channel::MimoInstance;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::modem::Constellation;
use crate::scalar::Real;

/// Largest lattice (`M^U` points) searched by default.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 20;

/// `argmin_x ‖y − Hx‖²` over the full lattice. Ties go to the
/// lexicographically smallest index vector (user 0 most significant).
/// Returns the indices and `½‖y − Hx̂‖²`.
pub fn ml_brute_force<T: Real>(
    h: &CMatrix<T>,
    y: &[Complex<T>],
    constellation: &Constellation<T>,
    cap: u128,
) -> Result<(Vec<usize>, T)> {
    let (b, u) = (h.rows(), h.cols());
    if y.len() != b {
        return Err(Error::Dimension {
            expected: b,
            got: y.len(),
        });
    }
    let m = constellation.order();
    let states = (m as u128).checked_pow(u as u32).unwrap_or(u128::MAX);
    if states > cap {
        return Err(Error::Capacity { states, cap });
    }
    // cols[(u * M + s) * B + b] = h_{b,u} a_s
    let mut cols = vec![Complex::<T>::zero(); u * m * b];
    for uu in 0..u {
        for (s, &a) in constellation.points().iter().enumerate() {
            for bb in 0..b {
                cols[(uu * m + s) * b + bb] = h[(bb, uu)] * a;
            }
        }
    }
    // residual[d] = y − Σ_{k<d} h_k x_k for the first U − 1 users; the last
    // user is scanned in closed form:
    // ‖r − h a‖² = ‖r‖² − 2 Re(a* hᴴr) + |a|²‖h‖².
    let last = u - 1;
    let h_last: Vec<Complex<T>> = (0..b).map(|bb| h[(bb, last)]).collect();
    let h_last_sqr: T = h_last.iter().map(|v| v.norm_sqr()).sum();
    let points = constellation.points();
    let energies: Vec<T> = points.iter().map(|a| a.norm_sqr() * h_last_sqr).collect();
    let mut residual = vec![Complex::<T>::zero(); u * b];
    residual[..b].copy_from_slice(y);
    let mut idx = vec![0usize; last];
    let mut best: (Vec<usize>, T) = (vec![0; u], T::infinity());
    let two = T::lit(2.0);
    let mut depth = 0usize;
    loop {
        for d in depth..last {
            let (head, tail) = residual.split_at_mut((d + 1) * b);
            let prev = &head[d * b..];
            let col = &cols[(d * m + idx[d]) * b..(d * m + idx[d] + 1) * b];
            for ((r, p), c) in tail[..b].iter_mut().zip(prev).zip(col) {
                *r = p - c;
            }
        }
        let r = &residual[last * b..];
        let r_sqr: T = r.iter().map(|v| v.norm_sqr()).sum();
        let corr: Complex<T> = h_last.iter().zip(r).map(|(hv, rv)| hv.conj() * rv).sum();
        for (s, a) in points.iter().enumerate() {
            let dist = r_sqr - two * (a.conj() * corr).re + energies[s];
            if dist < best.1 {
                best.0[..last].copy_from_slice(&idx);
                best.0[last] = s;
                best.1 = dist;
            }
        }
        let mut d = last;
        loop {
            if d == 0 {
                let x: Vec<Complex<T>> = best.0.iter().map(|&i| points[i]).collect();
                let f = crate::linalg::norm_sqr(&crate::linalg::sub(y, &h.mul_vec(&x))) * T::lit(0.5);
                return Ok((best.0, f));
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
        }
        depth = d;
    }
}

#[derive(Debug, Clone)]
pub struct BruteForceMl<T> {
    constellation: Constellation<T>,
    pub cap: u128,
}

impl<T: Real> BruteForceMl<T> {
    pub fn new(constellation: Constellation<T>) -> Self {
        Self {
            constellation,
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

impl<T: Real> Detector<T> for BruteForceMl<T> {
    fn name(&self) -> &str {
        "ml"
    }

    fn constellation(&self) -> &Constellation<T> {
        &self.constellation
    }

    fn detect(&self, instance: &MimoInstance<T>, _trial: u64) -> Result<Detection<T>> {
        let (symbols, objective) = ml_brute_force(&instance.h, &instance.y, &self.constellation, self.cap)?;
        Ok(Detection {
            symbols,
            objective,
            trace: Vec::new(),
            ledger: None,
            counters: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_rayleigh;
    use crate::rng::{stream_rng, Stream};
    use itertools::Itertools;

    #[test]
    fn matches_naive_enumeration() {
        let k = Constellation::<f64>::new(4).unwrap();
        let mut rng = stream_rng(9, 0, Stream::Channel);
        for _ in 0..10 {
            let h = generate_rayleigh::<f64, _>(4, 3, &mut rng).unwrap();
            let y: Vec<Complex<f64>> = (0..4).map(|i| Complex::new(0.3 * i as f64, -0.2)).collect();
            let inst = MimoInstance::from_observation(h.clone(), y.clone(), 0.1).unwrap();
            let mut naive = (vec![], f64::INFINITY);
            for x in (0..3).map(|_| 0..4).multi_cartesian_product() {
                let pts: Vec<_> = x.iter().map(|&i| k.point(i)).collect();
                let f = inst.objective(&pts);
                if f < naive.1 {
                    naive = (x, f);
                }
            }
            let (xs, f) = ml_brute_force(&h, &y, &k, DEFAULT_ENUMERATION_CAP).unwrap();
            assert_eq!(xs, naive.0);
            assert!((f - naive.1).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_prefer_lexicographic_first() {
        let k = Constellation::<f64>::new(4).unwrap();
        let h = CMatrix::zeros(2, 2);
        let (xs, _) = ml_brute_force(&h, &[Complex::zero(); 2], &k, 1 << 10).unwrap();
        assert_eq!(xs, vec![0, 0]);
    }

    #[test]
    fn cap_is_enforced() {
        let k = Constellation::<f64>::new(64).unwrap();
        let h = CMatrix::zeros(8, 4);
        let err = ml_brute_force(&h, &[Complex::zero(); 8], &k, DEFAULT_ENUMERATION_CAP).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
    }
}
