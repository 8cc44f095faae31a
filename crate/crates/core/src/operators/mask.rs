//! k-space sampling patterns, stored in DFT index order.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskKind {
    /// `lines` spokes through the k-space origin at angles `k·π/lines`.
    Radial { lines: usize },
    /// Uniform random subset of the given fraction; DC always included.
    Random { fraction: f64 },
    /// Every frequency.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    pub kind: MaskKind,
    pub seed: u64,
    keep: Array2<bool>,
}

/// Map a centered (fftshifted) index to DFT order.
fn unshift(i: usize, n: usize) -> usize {
    (i + n - n / 2) % n
}

fn bresenham(mut x0: i64, mut y0: i64, x1: i64, y1: i64, mut plot: impl FnMut(i64, i64)) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        plot(x0, y0);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

pub fn make_mask(kind: MaskKind, shape: (usize, usize), seed: u64) -> Result<SamplingMask> {
    let (rows, cols) = shape;
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!("empty mask shape {shape:?}")));
    }
    let n = rows * cols;
    let mut keep = Array2::from_elem(shape, false);
    match kind {
        MaskKind::Full => keep.fill(true),
        MaskKind::Radial { lines } => {
            if lines == 0 {
                return Err(Error::InvalidInput("radial mask needs at least one line".into()));
            }
            let (cr, cc) = ((rows / 2) as i64, (cols / 2) as i64);
            let reach = rows.max(cols) as f64;
            for k in 0..lines {
                let phi = std::f64::consts::PI * k as f64 / lines as f64;
                let (s, c) = phi.sin_cos();
                let (dx, dy) = ((reach * c).round() as i64, (reach * s).round() as i64);
                bresenham(cc - dx, cr - dy, cc + dx, cr + dy, |x, y| {
                    if (0..cols as i64).contains(&x) && (0..rows as i64).contains(&y) {
                        keep[[unshift(y as usize, rows), unshift(x as usize, cols)]] = true;
                    }
                });
            }
        }
        MaskKind::Random { fraction } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::InvalidInput(format!("sampling fraction must be in (0, 1], got {fraction}")));
            }
            if fraction * (n as f64) < 1.0 {
                return Err(Error::InvalidInput(format!("fraction {fraction} keeps no sample of {n}")));
            }
            let count = ((fraction * n as f64).round() as usize).clamp(1, n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // DC is flat index 0; draw the rest from 1..n
            for idx in rand::seq::index::sample(&mut rng, n - 1, count - 1).into_iter() {
                let flat = idx + 1;
                keep[[flat / cols, flat % cols]] = true;
            }
        }
    }
    keep[[0, 0]] = true;
    Ok(SamplingMask { kind, seed, keep })
}

impl SamplingMask {
    pub fn from_keep(keep: Array2<bool>) -> Result<Self> {
        if keep.is_empty() || !keep[[0, 0]] {
            return Err(Error::InvalidInput("mask must keep the DC sample".into()));
        }
        Ok(SamplingMask {
            kind: MaskKind::Full,
            seed: 0,
            keep,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.keep.dim()
    }

    pub fn keep(&self) -> &Array2<bool> {
        &self.keep
    }

    pub fn count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Flat row-major indices of kept samples, in increasing order.
    pub fn indices(&self) -> Vec<usize> {
        self.keep
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect()
    }

    /// 0/1 real matrix for FMAT export.
    pub fn to_real(&self) -> Array2<f64> {
        self.keep.mapv(|k| if k { 1.0 } else { 0.0 })
    }

    pub fn from_real(a: &Array2<f64>) -> Result<Self> {
        if let Some(v) = a.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput(format!("mask entries must be 0 or 1, found {v}")));
        }
        Self::from_keep(a.mapv(|v| v == 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_mask_keeps_everything() {
        let m = make_mask(MaskKind::Random { fraction: 1.0 }, (8, 8), 1).unwrap();
        assert_eq!(m.count(), 64);
    }

    #[test]
    fn one_horizontal_line_is_one_row() {
        let m = make_mask(MaskKind::Radial { lines: 1 }, (16, 16), 0).unwrap();
        assert_eq!(m.count(), 16);
        assert!(m.keep().row(0).iter().all(|&k| k));
    }

    #[test]
    fn two_lines_form_a_cross() {
        let m = make_mask(MaskKind::Radial { lines: 2 }, (16, 16), 0).unwrap();
        assert_eq!(m.count(), 31);
        assert!(m.keep().column(0).iter().all(|&k| k));
    }

    #[test]
    fn random_mask_is_seeded() {
        let kind = MaskKind::Random { fraction: 0.1 };
        let a = make_mask(kind, (32, 32), 5).unwrap();
        let b = make_mask(kind, (32, 32), 5).unwrap();
        let c = make_mask(kind, (32, 32), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.keep(), c.keep());
        assert_eq!(a.count(), 102);
        assert!(a.keep()[[0, 0]]);
    }

    #[test]
    fn tiny_fraction_is_rejected() {
        assert!(make_mask(MaskKind::Random { fraction: 0.001 }, (8, 8), 0).is_err());
        assert!(make_mask(MaskKind::Random { fraction: 0.0 }, (8, 8), 0).is_err());
    }

    #[test]
    fn thirty_radial_lines_cover_a_fraction() {
        let m = make_mask(MaskKind::Radial { lines: 30 }, (64, 64), 0).unwrap();
        let frac = m.count() as f64 / 4096.0;
        assert!(frac > 0.2 && frac < 0.6, "{frac}");
    }

    #[test]
    fn real_round_trip() {
        let m = make_mask(MaskKind::Radial { lines: 5 }, (8, 8), 0).unwrap();
        assert_eq!(SamplingMask::from_real(&m.to_real()).unwrap().keep(), m.keep());
    }
}
