//! Seeded noise synthesis.
//!
//! Every data element draws from its own ChaCha8 stream (seed, stream id),
//! so results do not depend on evaluation order or thread count.

use ndarray::ArrayView2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::image::{ComplexVector, CountVector};
use crate::operators::{MriOperator, PetOperator};

/// Default counts per unit of expected intensity.
pub const DEFAULT_POISSON_SCALE: f64 = 5000.0;
/// Default per-component k-space noise standard deviation.
pub const DEFAULT_GAUSSIAN_SIGMA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub poisson_scale: f64,
    pub gaussian_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            poisson_scale: DEFAULT_POISSON_SCALE,
            gaussian_sigma: DEFAULT_GAUSSIAN_SIGMA,
            seed: 0,
        }
    }
}

const PET_DOMAIN: u64 = 0x5045_5400;
const MRI_DOMAIN: u64 = 0x4d52_4900;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one element of one data product.
pub fn element_rng(seed: u64, domain: u64, element: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ domain));
    rng.set_stream(element);
    rng
}

/// Exact Poisson sampling: sequential inversion below mean 30, Hörmann's
/// transformed rejection (PTRS) above.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < 30.0 {
        let mut p = (-mean).exp();
        let mut cdf = p;
        let u: f64 = rng.random();
        let mut k = 0u64;
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
            if p == 0.0 && cdf < u {
                // lost all remaining mass to rounding
                break;
            }
        }
        return k;
    }
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -mean + k * loglam - ln_gamma(k + 1.0) {
            return k as u64;
        }
    }
}

/// `f[j] = Poisson(s·(Au + c)[j]) / s`.
pub fn synth_pet(op: &PetOperator, u: ArrayView2<'_, f64>, spec: &NoiseSpec) -> Result<CountVector> {
    let s = spec.poisson_scale;
    if !(s > 0.0) {
        return Err(Error::InvalidInput(format!("poisson scale must be > 0, got {s}")));
    }
    let expected = op.expected_counts(u)?;
    let limit = 2f64.powi(63);
    if let Some((j, y)) = expected.iter().enumerate().find(|(_, y)| s * **y >= limit) {
        return Err(Error::InvalidInput(format!(
            "invalid scale: s·(Au+c)[{j}] = {:e} overflows 2^63",
            s * y
        )));
    }
    let counts: Vec<f64> = expected
        .par_iter()
        .enumerate()
        .map(|(j, &y)| {
            let mut rng = element_rng(spec.seed, PET_DOMAIN, j as u64);
            sample_poisson(&mut rng, s * y) as f64 / s
        })
        .collect();
    CountVector::new(counts)
}

/// `g = F_p u + η`, with independent `N(0, σ²)` real and imaginary parts.
pub fn synth_mri(op: &MriOperator, u: ArrayView2<'_, f64>, spec: &NoiseSpec) -> Result<ComplexVector> {
    let sigma = spec.gaussian_sigma;
    if !(sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("sigma must be >= 0, got {sigma}")));
    }
    let mut g = op.forward(u)?;
    if sigma > 0.0 {
        g.data.par_iter_mut().enumerate().for_each(|(k, z)| {
            let mut rng = element_rng(spec.seed, MRI_DOMAIN, k as u64);
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *z += Complex64::new(sigma * re, sigma * im);
        });
    }
    Ok(g)
}
