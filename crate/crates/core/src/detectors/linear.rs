//! Linear MMSE baseline.

use num_complex::Complex;

use super::{Detection, Detector};
use crate::channel::MimoInstance;
use crate::error::Result;
use crate::linalg::{cholesky_solve, CMatrix};
use crate::modem::Constellation;
use crate::scalar::Real;

/// Soft LMMSE estimate `(HᴴH + σ²I)⁻¹ Hᴴ y` for unit-energy symbols.
pub fn lmmse_estimate<T: Real>(h: &CMatrix<T>, y: &[Complex<T>], sigma2: T) -> Result<Vec<Complex<T>>> {
    let mut a = h.gram();
    for i in 0..a.rows() {
        a[(i, i)].re += sigma2;
    }
    cholesky_solve(&a, &h.mul_adjoint_vec(y))
}

/// LMMSE followed by per-symbol slicing; returns symbol indices.
pub fn lmmse_detect<T: Real>(
    h: &CMatrix<T>,
    y: &[Complex<T>],
    sigma2: T,
    constellation: &Constellation<T>,
) -> Result<Vec<usize>> {
    constellation.qam_map_indices(&lmmse_estimate(h, y, sigma2)?)
}

#[derive(Debug, Clone)]
pub struct Lmmse<T> {
    constellation: Constellation<T>,
}

impl<T: Real> Lmmse<T> {
    pub fn new(constellation: Constellation<T>) -> Self {
        Self { constellation }
    }
}

impl<T: Real> Detector<T> for Lmmse<T> {
    fn name(&self) -> &str {
        "lmmse"
    }

    fn constellation(&self) -> &Constellation<T> {
        &self.constellation
    }

    fn detect(&self, instance: &MimoInstance<T>, _trial: u64) -> Result<Detection<T>> {
        let symbols = lmmse_detect(&instance.h, &instance.y, instance.sigma2, &self.constellation)?;
        let x: Vec<_> = symbols.iter().map(|&i| self.constellation.point(i)).collect();
        Ok(Detection {
            objective: instance.objective(&x),
            symbols,
            trace: Vec::new(),
            ledger: None,
            counters: None,
        })
    }
}
