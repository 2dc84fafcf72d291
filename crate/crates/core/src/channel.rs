//! Rayleigh channel and noise generation, SNR calibration, row-wise
//! partitioning into per-DU views, and the plain-text channel file format.
//!
//! Channel file layout (whitespace separated, one record per line):
//!
//! ```text
//! B U has_y
//! re im        # B*U lines, H in row-major order
//! re im        # B more lines for y when has_y = 1
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::modem::Constellation;
use crate::scalar::{complex_normal, Real};

/// One uplink channel use: `y = H x + n`.
#[derive(Debug, Clone)]
pub struct MimoInstance<T> {
    pub h: CMatrix<T>,
    /// Transmitted symbol indices into the constellation, when known.
    pub x_true: Option<Vec<usize>>,
    pub noise: Vec<Complex<T>>,
    pub y: Vec<Complex<T>>,
    /// Noise variance per complex entry.
    pub sigma2: T,
    pub snr_linear: T,
}

impl<T: Real> MimoInstance<T> {
    /// Number of receive antennas `B`.
    pub fn antennas(&self) -> usize {
        self.h.rows()
    }

    /// Number of users `U`.
    pub fn users(&self) -> usize {
        self.h.cols()
    }

    /// Draws symbols and noise for a given channel.
    pub fn synthesize<R1: Rng + ?Sized, R2: Rng + ?Sized>(
        h: CMatrix<T>,
        constellation: &Constellation<T>,
        snr_linear: T,
        symbol_rng: &mut R1,
        noise_rng: &mut R2,
    ) -> Result<Self> {
        let (b, u) = (h.rows(), h.cols());
        check_dims(b, u)?;
        let sigma2 = noise_variance_from_snr(snr_linear, b, u)?;
        let x_true: Vec<usize> = (0..u).map(|_| constellation.random_index(symbol_rng)).collect();
        let x: Vec<Complex<T>> = x_true.iter().map(|&i| constellation.point(i)).collect();
        let sd = sigma2.sqrt();
        let noise: Vec<Complex<T>> = (0..b).map(|_| complex_normal::<T, _>(noise_rng).scale(sd)).collect();
        let y = h.mul_vec(&x).into_iter().zip(&noise).map(|(a, n)| a + n).collect();
        Ok(Self {
            h,
            x_true: Some(x_true),
            noise,
            y,
            sigma2,
            snr_linear,
        })
    }

    /// Noise-free instance with known symbols; `sigma2` is zero.
    pub fn noiseless(h: CMatrix<T>, constellation: &Constellation<T>, x_true: Vec<usize>) -> Result<Self> {
        check_dims(h.rows(), h.cols())?;
        if x_true.len() != h.cols() {
            return Err(Error::Dimension {
                expected: h.cols(),
                got: x_true.len(),
            });
        }
        let x: Vec<Complex<T>> = x_true.iter().map(|&i| constellation.point(i)).collect();
        let y = h.mul_vec(&x);
        Ok(Self {
            noise: vec![Complex::new(T::zero(), T::zero()); h.rows()],
            h,
            x_true: Some(x_true),
            y,
            sigma2: T::zero(),
            snr_linear: T::infinity(),
        })
    }

    /// Instance built from an externally supplied channel and observation.
    pub fn from_observation(h: CMatrix<T>, y: Vec<Complex<T>>, sigma2: T) -> Result<Self> {
        check_dims(h.rows(), h.cols())?;
        if y.len() != h.rows() {
            return Err(Error::Dimension {
                expected: h.rows(),
                got: y.len(),
            });
        }
        let snr_linear = if sigma2 > T::zero() {
            T::lit(h.cols() as f64) / (T::lit(h.rows() as f64) * sigma2)
        } else {
            T::infinity()
        };
        Ok(Self {
            noise: vec![Complex::new(T::zero(), T::zero()); h.rows()],
            h,
            x_true: None,
            y,
            sigma2,
            snr_linear,
        })
    }

    /// `½‖y − Hx‖²`.
    pub fn objective(&self, x: &[Complex<T>]) -> T {
        let hx = self.h.mul_vec(x);
        let r: T = self.y.iter().zip(&hx).map(|(a, b)| (a - b).norm_sqr()).sum();
        r * T::lit(0.5)
    }
}

fn check_dims(b: usize, u: usize) -> Result<()> {
    if u == 0 {
        return Err(Error::config("at least one user is required"));
    }
    if b < u {
        return Err(Error::config(format!("need B >= U receive antennas, got B={b}, U={u}")));
    }
    Ok(())
}

/// IID CN(0, 1/B) entries.
pub fn generate_rayleigh<T: Real, R: Rng + ?Sized>(b: usize, u: usize, rng: &mut R) -> Result<CMatrix<T>> {
    check_dims(b, u)?;
    let sd = T::one() / T::lit(b as f64).sqrt();
    Ok(CMatrix::from_fn(b, u, |_, _| complex_normal::<T, _>(rng).scale(sd)))
}

/// `σ² = U / (B · SNR)`, the exact expectation ratio under CN(0, 1/B)
/// entries and unit-energy symbols.
pub fn noise_variance_from_snr<T: Real>(snr_linear: T, b: usize, u: usize) -> Result<T> {
    if !(snr_linear > T::zero()) {
        return Err(Error::config(format!("SNR must be positive, got {snr_linear}")));
    }
    Ok(T::lit(u as f64) / (T::lit(b as f64) * snr_linear))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// The data one DU owns.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterView<T> {
    pub h: CMatrix<T>,
    pub y: Vec<Complex<T>>,
    /// `‖h_{u,c}‖²` for each user column.
    pub diag_gram: Vec<T>,
}

/// Row-wise partition of `(H, y)` into `C` equal contiguous antenna blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredChannel<T> {
    clusters: Vec<ClusterView<T>>,
    users: usize,
}

impl<T: Real> ClusteredChannel<T> {
    pub fn partition(h: &CMatrix<T>, y: &[Complex<T>], clusters: usize) -> Result<Self> {
        let b = h.rows();
        if y.len() != b {
            return Err(Error::Dimension {
                expected: b,
                got: y.len(),
            });
        }
        if clusters == 0 || b % clusters != 0 {
            return Err(Error::config(format!("cluster count {clusters} must divide B={b}")));
        }
        let bc = b / clusters;
        let views = (0..clusters)
            .map(|c| {
                let hc = h.row_block(c * bc, (c + 1) * bc);
                let diag_gram = hc.column_norms_sqr();
                ClusterView {
                    h: hc,
                    y: y[c * bc..(c + 1) * bc].to_vec(),
                    diag_gram,
                }
            })
            .collect();
        Ok(Self {
            clusters: views,
            users: h.cols(),
        })
    }

    #[inline]
    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    #[inline]
    pub fn users(&self) -> usize {
        self.users
    }

    /// Antennas per cluster, `B_c`.
    #[inline]
    pub fn cluster_size(&self) -> usize {
        self.clusters[0].h.rows()
    }

    #[inline]
    pub fn cluster(&self, c: usize) -> &ClusterView<T> {
        &self.clusters[c]
    }

    pub fn clusters(&self) -> &[ClusterView<T>] {
        &self.clusters
    }

    pub fn into_clusters(self) -> Vec<ClusterView<T>> {
        self.clusters
    }

    /// Row-stacks the cluster views back into `(H, y)`.
    pub fn reassemble(&self) -> (CMatrix<T>, Vec<Complex<T>>) {
        let blocks: Vec<CMatrix<T>> = self.clusters.iter().map(|c| c.h.clone()).collect();
        let h = CMatrix::vstack(&blocks).expect("clusters share a column count");
        let y = self.clusters.iter().flat_map(|c| c.y.iter().copied()).collect();
        (h, y)
    }
}

/// Contents of a channel file.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelFile {
    pub h: CMatrix<f64>,
    pub y: Option<Vec<Complex<f64>>>,
}

pub fn save_channel_file(path: &Path, h: &CMatrix<f64>, y: Option<&[Complex<f64>]>) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "{} {} {}", h.rows(), h.cols(), u8::from(y.is_some())).unwrap();
    // `{:?}` on f64 prints the shortest representation that round-trips exactly.
    for a in h.as_slice() {
        writeln!(s, "{:?} {:?}", a.re, a.im).unwrap();
    }
    if let Some(y) = y {
        for a in y {
            writeln!(s, "{:?} {:?}", a.re, a.im).unwrap();
        }
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn load_channel_file(path: &Path) -> Result<ChannelFile> {
    let text = fs::read_to_string(path)?;
    parse_channel_text(&text).map_err(|reason| match reason {
        ParseFailure::Malformed(reason) => Error::ChannelFile {
            path: path.to_path_buf(),
            reason,
        },
        ParseFailure::Other(e) => e,
    })
}

enum ParseFailure {
    Malformed(String),
    Other(Error),
}

fn parse_channel_text(text: &str) -> std::result::Result<ChannelFile, ParseFailure> {
    let bad = |s: String| ParseFailure::Malformed(s);
    let mut lines = text.lines().map(str::trim).enumerate().filter(|(_, l)| !l.is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(bad(format!("header must be `B U has_y`, got `{header}`")));
    }
    let parse_usize = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| bad(format!("invalid header field `{s}`")))
    };
    let b = parse_usize(fields[0])?;
    let u = parse_usize(fields[1])?;
    let has_y = match fields[2] {
        "0" => false,
        "1" => true,
        other => return Err(bad(format!("has_y must be 0 or 1, got `{other}`"))),
    };
    check_dims(b, u).map_err(ParseFailure::Other)?;
    let mut read_entry = |what: &str| -> std::result::Result<Complex<f64>, ParseFailure> {
        let (n, line) = lines
            .next()
            .ok_or_else(|| bad(format!("file ends before all {what} entries were read")))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(bad(format!("line {}: expected `re im`", n + 1)));
        }
        let re: f64 = parts[0]
            .parse()
            .map_err(|_| bad(format!("line {}: invalid number `{}`", n + 1, parts[0])))?;
        let im: f64 = parts[1]
            .parse()
            .map_err(|_| bad(format!("line {}: invalid number `{}`", n + 1, parts[1])))?;
        if !re.is_finite() || !im.is_finite() {
            return Err(ParseFailure::Other(Error::NumericInput(format!(
                "line {}: non-finite value",
                n + 1
            ))));
        }
        Ok(Complex::new(re, im))
    };
    let data = (0..b * u)
        .map(|_| read_entry("H"))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let y = if has_y {
        Some(
            (0..b)
                .map(|_| read_entry("y"))
                .collect::<std::result::Result<Vec<_>, _>>()?,
        )
    } else {
        None
    };
    if let Some((n, _)) = lines.next() {
        return Err(bad(format!("unexpected trailing data at line {}", n + 1)));
    }
    let h = CMatrix::from_row_major(b, u, data).map_err(ParseFailure::Other)?;
    Ok(ChannelFile { h, y })
}
