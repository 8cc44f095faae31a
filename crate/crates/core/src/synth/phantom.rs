//! Correlated PET/MRI phantom pairs built from one shared region map.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MriContrast {
    Pd,
    T1,
    T2,
}

impl std::str::FromStr for MriContrast {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pd" => Ok(MriContrast::Pd),
            "t1" => Ok(MriContrast::T1),
            "t2" => Ok(MriContrast::T2),
            other => Err(Error::Config(format!("unknown phantom variant {other:?} (pd|t1|t2)"))),
        }
    }
}

impl std::fmt::Display for MriContrast {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MriContrast::Pd => "pd",
            MriContrast::T1 => "t1",
            MriContrast::T2 => "t2",
        })
    }
}

/// Tissue labels of the region map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Tissue {
    Background = 0,
    Scalp = 1,
    Gray = 2,
    White = 3,
    Csf = 4,
    Nucleus = 5,
    /// PET-only hot spot; anatomically it is white matter.
    Lesion = 6,
}

#[derive(Debug, Clone)]
pub struct PhantomPair {
    pub pet_truth: Image,
    pub mri_truth: Image,
    pub regions: Array2<u8>,
    pub description: String,
}

struct Ellipse {
    cx: f64,
    cy: f64,
    ax: f64,
    ay: f64,
    angle: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (u, v) = (dx * c + dy * s, -dx * s + dy * c);
        (u / self.ax).powi(2) + (v / self.ay).powi(2) <= 1.0
    }
}

fn mri_levels(variant: MriContrast) -> [f64; 6] {
    // background, scalp, gray, white, csf, nucleus
    match variant {
        MriContrast::Pd => [0.0, 0.35, 0.78, 0.55, 0.95, 0.7],
        MriContrast::T1 => [0.0, 0.25, 0.45, 0.8, 0.12, 0.6],
        MriContrast::T2 => [0.0, 0.25, 0.6, 0.38, 1.0, 0.56],
    }
}

const PET_LEVELS: [f64; 7] = [0.0, 0.12, 0.7, 0.22, 0.04, 0.9, 0.95];

/// Piecewise-smooth head phantom pair. Both images share the anatomical
/// region boundaries; each carries its own smooth intensity modulation and
/// the PET contains one lesion that has no MRI counterpart.
pub fn make_phantom_pair(shape: (usize, usize), variant: MriContrast, seed: u64) -> Result<PhantomPair> {
    let (rows, cols) = shape;
    if rows < 32 || cols < 32 {
        return Err(Error::InvalidInput(format!("phantoms need at least 32x32, got {rows}x{cols}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jit = |scale: f64| 1.0 + scale * (rng.random::<f64>() - 0.5);
    let head = Ellipse { cx: 0.0, cy: 0.0, ax: 0.88 * jit(0.04), ay: 0.94 * jit(0.04), angle: 0.0 };
    let brain = Ellipse { cx: 0.0, cy: 0.0, ax: head.ax - 0.1, ay: head.ay - 0.1, angle: 0.0 };
    let white = Ellipse { cx: 0.0, cy: -0.02 * jit(1.0), ax: 0.58 * jit(0.06), ay: 0.66 * jit(0.06), angle: 0.0 };
    let vent_l = Ellipse { cx: -0.17, cy: -0.05, ax: 0.09 * jit(0.1), ay: 0.26 * jit(0.1), angle: 0.3 };
    let vent_r = Ellipse { cx: 0.17, cy: -0.05, ax: 0.09 * jit(0.1), ay: 0.26 * jit(0.1), angle: -0.3 };
    let nucleus = Ellipse { cx: 0.0, cy: 0.42 * jit(0.1), ax: 0.16 * jit(0.1), ay: 0.1 * jit(0.1), angle: 0.0 };
    let lesion = Ellipse {
        cx: 0.33 * jit(0.2),
        cy: -0.38 * jit(0.2),
        ax: 0.09,
        ay: 0.09,
        angle: 0.0,
    };
    let mut regions = Array2::<u8>::zeros(shape);
    for i in 0..rows {
        for j in 0..cols {
            let x = 2.0 * (j as f64 + 0.5) / cols as f64 - 1.0;
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / rows as f64;
            let t = if !head.contains(x, y) {
                Tissue::Background
            } else if !brain.contains(x, y) {
                Tissue::Scalp
            } else if vent_l.contains(x, y) || vent_r.contains(x, y) {
                Tissue::Csf
            } else if nucleus.contains(x, y) {
                Tissue::Nucleus
            } else if lesion.contains(x, y) {
                Tissue::Lesion
            } else if white.contains(x, y) {
                Tissue::White
            } else {
                Tissue::Gray
            };
            regions[[i, j]] = t as u8;
        }
    }
    let levels = mri_levels(variant);
    let phase = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    let mri = Array2::from_shape_fn(shape, |(i, j)| {
        let label = regions[[i, j]];
        let anat = if label == Tissue::Lesion as u8 { Tissue::White as usize } else { label as usize };
        let x = j as f64 / cols as f64;
        let y = i as f64 / rows as f64;
        let bias = 1.0 + 0.08 * (2.0 * std::f64::consts::PI * (0.7 * x + 0.4 * y) + phase).sin();
        (levels[anat] * bias).clamp(0.0, 1.0)
    });
    let pet = Array2::from_shape_fn(shape, |(i, j)| {
        let x = 2.0 * j as f64 / cols as f64 - 1.0;
        let y = 2.0 * i as f64 / rows as f64 - 1.0;
        let falloff = 1.0 - 0.12 * (x * x + y * y);
        (PET_LEVELS[regions[[i, j]] as usize] * falloff).clamp(0.0, 1.0)
    });
    Ok(PhantomPair {
        pet_truth: Image::unit(pet)?,
        mri_truth: Image::unit(mri)?,
        regions,
        description: format!("head phantom {rows}x{cols}, mri contrast {variant}, seed {seed}"),
    })
}

/// Pixels whose forward-difference gradient magnitude exceeds `thresh`.
pub fn strong_edges(u: &Array2<f64>, thresh: f64) -> Array2<bool> {
    let (rows, cols) = u.dim();
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let gx = if j + 1 < cols { u[[i, j + 1]] - u[[i, j]] } else { 0.0 };
        let gy = if i + 1 < rows { u[[i + 1, j]] - u[[i, j]] } else { 0.0 };
        (gx * gx + gy * gy).sqrt() > thresh
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_pair() {
        let a = make_phantom_pair((48, 48), MriContrast::T1, 3).unwrap();
        let b = make_phantom_pair((48, 48), MriContrast::T1, 3).unwrap();
        assert_eq!(a.pet_truth, b.pet_truth);
        assert_eq!(a.mri_truth, b.mri_truth);
        let c = make_phantom_pair((48, 48), MriContrast::T1, 4).unwrap();
        assert_ne!(a.mri_truth, c.mri_truth);
    }

    #[test]
    fn values_in_unit_box() {
        for v in [MriContrast::Pd, MriContrast::T1, MriContrast::T2] {
            let p = make_phantom_pair((64, 64), v, 1).unwrap();
            assert!(p.pet_truth.is_feasible() && p.mri_truth.is_feasible());
        }
    }

    #[test]
    fn lesion_is_pet_only() {
        let p = make_phantom_pair((64, 64), MriContrast::Pd, 0).unwrap();
        let lesion: Vec<_> = p.regions.indexed_iter().filter(|(_, &l)| l == Tissue::Lesion as u8).map(|(ij, _)| ij).collect();
        assert!(!lesion.is_empty());
        let white_mri = p.regions.indexed_iter().find(|(_, &l)| l == Tissue::White as u8).map(|(ij, _)| p.mri_truth.data()[ij]).unwrap();
        let (i, j) = lesion[lesion.len() / 2];
        assert!(p.pet_truth.data()[[i, j]] > 0.8, "{}", p.pet_truth.data()[[i, j]]);
        assert!((p.mri_truth.data()[[i, j]] - white_mri).abs() < 0.1);
    }

    #[test]
    fn edges_are_shared() {
        for v in [MriContrast::Pd, MriContrast::T1, MriContrast::T2] {
            for seed in 0..3 {
                let p = make_phantom_pair((64, 64), v, seed).unwrap();
                let ep = strong_edges(p.pet_truth.data(), 0.1);
                let em = strong_edges(p.mri_truth.data(), 0.1);
                let both = ep.iter().zip(em.iter()).filter(|(a, b)| **a && **b).count();
                let np = ep.iter().filter(|&&e| e).count();
                let nm = em.iter().filter(|&&e| e).count();
                let frac = both as f64 / np.min(nm) as f64;
                assert!(frac >= 0.5, "{v} seed {seed}: {both}/{np}/{nm}");
            }
        }
    }

    #[test]
    fn small_shapes_are_rejected() {
        assert!(make_phantom_pair((16, 64), MriContrast::Pd, 0).is_err());
    }
}
