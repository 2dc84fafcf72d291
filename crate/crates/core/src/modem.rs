//! Square QAM constellations with per-axis reflected-binary Gray labels and
//! the nearest-lattice-point quantizer `Q(·)`.
//!
//! Points are indexed `i_re * L + i_im` where `L = √M` and level index 0 is
//! the most negative level. A symbol's bit label is the Gray code of `i_re`
//! (MSB first) followed by the Gray code of `i_im`. For 4-QAM this gives
//!
//! | bits | point          |
//! |------|----------------|
//! | 00   | (-1 - 1j)/√2   |
//! | 01   | (-1 + 1j)/√2   |
//! | 10   | (+1 - 1j)/√2   |
//! | 11   | (+1 + 1j)/√2   |

use std::io::Write;

use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tolerance used when matching a complex value to a lattice point.
pub const ON_LATTICE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation<T> {
    order: usize,
    side: usize,
    bits_per_axis: usize,
    /// √(2(M-1)/3): maps normalized levels back to odd integers.
    scale: T,
    levels: Vec<T>,
    points: Vec<Complex<T>>,
}

#[inline]
fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

#[inline]
fn gray_inverse(mut g: usize) -> usize {
    let mut i = g;
    while g > 0 {
        g >>= 1;
        i ^= g;
    }
    i
}

impl<T: Real> Constellation<T> {
    /// Builds the normalized, Gray-labelled square QAM of the given order.
    pub fn new(order: usize) -> Result<Self> {
        let side = match order {
            4 => 2,
            16 => 4,
            64 => 8,
            256 => 16,
            _ => return Err(Error::config(format!("unsupported QAM order {order}"))),
        };
        let scale = T::lit((2.0 * (order as f64 - 1.0) / 3.0).sqrt());
        let levels: Vec<T> = (0..side)
            .map(|i| T::lit(2.0 * i as f64 - (side as f64 - 1.0)) / scale)
            .collect();
        let mut points = Vec::with_capacity(order);
        for &re in &levels {
            for &im in &levels {
                points.push(Complex::new(re, im));
            }
        }
        Ok(Self {
            order,
            side,
            bits_per_axis: side.trailing_zeros() as usize,
            scale,
            levels,
            points,
        })
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of levels per real axis, `√M`.
    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    #[inline]
    pub fn bits_per_axis(&self) -> usize {
        self.bits_per_axis
    }

    /// Normalized per-axis levels, ascending.
    #[inline]
    pub fn levels(&self) -> &[T] {
        &self.levels
    }

    #[inline]
    pub fn points(&self) -> &[Complex<T>] {
        &self.points
    }

    #[inline]
    pub fn point(&self, index: usize) -> Complex<T> {
        self.points[index]
    }

    /// Splits a symbol index into `(i_re, i_im)` level indices.
    #[inline]
    pub fn axis_indices(&self, index: usize) -> (usize, usize) {
        (index / self.side, index % self.side)
    }

    /// Nearest level index on one axis.
    ///
    /// An input exactly halfway between two levels maps to the level with the
    /// smaller magnitude; the halfway point between -1 and +1 maps to +1.
    #[inline]
    pub fn quantize_axis(&self, v: T) -> usize {
        let half_span = T::lit((self.side - 1) as f64);
        let two = T::lit(2.0);
        // Continuous level position in [0, L-1].
        let pos = (v * self.scale + half_span) / two;
        let last = self.side - 1;
        if pos <= T::zero() {
            return 0;
        }
        if pos >= half_span {
            return last;
        }
        let lo = pos.floor();
        let frac = pos - lo;
        let lo_i = lo.to_usize().unwrap_or(0).min(last);
        let eps = T::lit(8.0) * T::epsilon() * pos.abs().max(T::one());
        if (frac - T::lit(0.5)).abs() <= eps && lo_i < last {
            let hi_i = lo_i + 1;
            let lo_mag = (2 * lo_i) as i64 - last as i64;
            let hi_mag = (2 * hi_i) as i64 - last as i64;
            if lo_mag.abs() < hi_mag.abs() {
                lo_i
            } else {
                hi_i
            }
        } else if frac < T::lit(0.5) {
            lo_i
        } else {
            (lo_i + 1).min(last)
        }
    }

    /// Index of the lattice point nearest to `z`.
    #[inline]
    pub fn quantize_index(&self, z: Complex<T>) -> usize {
        self.quantize_axis(z.re) * self.side + self.quantize_axis(z.im)
    }

    /// `Q(z)`: elementwise nearest lattice point.
    pub fn qam_map(&self, z: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        Ok(self.qam_map_indices(z)?.into_iter().map(|i| self.points[i]).collect())
    }

    /// `Q(z)` returned as symbol indices.
    pub fn qam_map_indices(&self, z: &[Complex<T>]) -> Result<Vec<usize>> {
        z.iter()
            .enumerate()
            .map(|(u, v)| {
                if !(v.re.is_finite() && v.im.is_finite()) {
                    Err(Error::NumericInput(format!("element {u} is {v}")))
                } else {
                    Ok(self.quantize_index(*v))
                }
            })
            .collect()
    }

    /// Index of `x` if it lies on the lattice (within [`ON_LATTICE_TOL`]).
    pub fn index_of(&self, x: Complex<T>) -> Result<usize> {
        if !(x.re.is_finite() && x.im.is_finite()) {
            return Err(Error::NumericInput(format!("{x}")));
        }
        let idx = self.quantize_index(x);
        let d = (self.points[idx] - x).norm();
        if d.to_f64_lossy() > ON_LATTICE_TOL {
            return Err(Error::Mapping(format!(
                "{x} is {d} away from the nearest lattice point"
            )));
        }
        Ok(idx)
    }

    /// Appends the Gray label of symbol `index` to `out`.
    pub fn push_index_bits(&self, index: usize, out: &mut Vec<u8>) {
        let (ir, ii) = self.axis_indices(index);
        for g in [gray(ir), gray(ii)] {
            for b in (0..self.bits_per_axis).rev() {
                out.push(((g >> b) & 1) as u8);
            }
        }
    }

    /// Symbol index carrying the given label (`bits_per_symbol` bits, MSB first).
    pub fn index_from_bits(&self, bits: &[u8]) -> Result<usize> {
        if bits.len() != self.bits_per_symbol() {
            return Err(Error::Dimension {
                expected: self.bits_per_symbol(),
                got: bits.len(),
            });
        }
        let word = |chunk: &[u8]| -> Result<usize> {
            chunk.iter().try_fold(0usize, |acc, &b| match b {
                0 | 1 => Ok((acc << 1) | b as usize),
                _ => Err(Error::Mapping(format!("bit value {b} is not 0 or 1"))),
            })
        };
        let gr = word(&bits[..self.bits_per_axis])?;
        let gi = word(&bits[self.bits_per_axis..])?;
        Ok(gray_inverse(gr) * self.side + gray_inverse(gi))
    }

    pub fn symbols_to_bits(&self, x: &[Complex<T>]) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(x.len() * self.bits_per_symbol());
        for &s in x {
            let idx = self.index_of(s)?;
            self.push_index_bits(idx, &mut out);
        }
        Ok(out)
    }

    pub fn bits_to_symbols(&self, bits: &[u8]) -> Result<Vec<Complex<T>>> {
        let k = self.bits_per_symbol();
        if bits.len() % k != 0 {
            return Err(Error::Mapping(format!("{} bits is not a multiple of {k}", bits.len())));
        }
        bits.chunks(k)
            .map(|c| self.index_from_bits(c).map(|i| self.points[i]))
            .collect()
    }

    /// Number of differing label bits between two symbol indices.
    #[inline]
    pub fn bit_distance(&self, a: usize, b: usize) -> u32 {
        let (ar, ai) = self.axis_indices(a);
        let (br, bi) = self.axis_indices(b);
        ((gray(ar) ^ gray(br)).count_ones()) + ((gray(ai) ^ gray(bi)).count_ones())
    }

    /// Uniformly random symbol index.
    #[inline]
    pub fn random_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.order)
    }

    /// Per-axis Gray table as `(normalized level, label)` rows.
    pub fn gray_table(&self) -> Vec<(T, String)> {
        self.levels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let g = gray(i);
                let label = (0..self.bits_per_axis)
                    .rev()
                    .map(|b| if (g >> b) & 1 == 1 { '1' } else { '0' })
                    .collect();
                (l, label)
            })
            .collect()
    }

    /// Writes the per-axis Gray table as CSV with header `level,bits`.
    pub fn write_gray_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["level", "bits"])?;
        for (l, bits) in self.gray_table() {
            wr.write_record([format!("{l}"), bits])?;
        }
        wr.flush()?;
        Ok(())
    }
}
