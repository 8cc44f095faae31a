//! Reconstruction quality indices: relative error, PSNR and correlation.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::image::{compensated_sum, sq_dist, sq_norm};

fn check(truth: ArrayView2<'_, f64>, recon: ArrayView2<'_, f64>) -> Result<()> {
    if truth.dim() != recon.dim() {
        return Err(Error::Dimension(format!("truth is {:?}, reconstruction is {:?}", truth.dim(), recon.dim())));
    }
    if truth.is_empty() {
        return Err(Error::Dimension("empty images".into()));
    }
    Ok(())
}

/// `‖ũ − u‖ / ‖u‖`.
pub fn rel_err(truth: ArrayView2<'_, f64>, recon: ArrayView2<'_, f64>) -> Result<f64> {
    check(truth, recon)?;
    let nt = sq_norm(truth);
    if nt == 0.0 {
        return Err(Error::Undefined("relative error of a zero truth image"));
    }
    Ok((sq_dist(truth, recon) / nt).sqrt())
}

/// `−10 log₁₀(‖u − ũ‖² / N)`; `+∞` for an exact reconstruction.
pub fn psnr(truth: ArrayView2<'_, f64>, recon: ArrayView2<'_, f64>) -> Result<f64> {
    check(truth, recon)?;
    let mse = sq_dist(truth, recon) / truth.len() as f64;
    Ok(-10.0 * mse.log10())
}

/// Pearson correlation of the two images' pixel values.
pub fn corr(truth: ArrayView2<'_, f64>, recon: ArrayView2<'_, f64>) -> Result<f64> {
    check(truth, recon)?;
    let n = truth.len() as f64;
    let mt = compensated_sum(truth.iter().copied()) / n;
    let mr = compensated_sum(recon.iter().copied()) / n;
    let xy = compensated_sum(truth.iter().zip(recon.iter()).map(|(a, b)| (a - mt) * (b - mr)));
    let xx = compensated_sum(truth.iter().map(|a| (a - mt) * (a - mt)));
    let yy = compensated_sum(recon.iter().map(|b| (b - mr) * (b - mr)));
    if xx == 0.0 || yy == 0.0 {
        return Err(Error::Undefined("correlation with a constant image"));
    }
    Ok((xy / (xx.sqrt() * yy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub rel_err: f64,
    pub psnr: f64,
    pub corr: f64,
}

impl MetricsReport {
    pub fn compute(truth: ArrayView2<'_, f64>, recon: ArrayView2<'_, f64>) -> Result<Self> {
        Ok(MetricsReport {
            rel_err: rel_err(truth, recon)?,
            psnr: psnr(truth, recon)?,
            corr: corr(truth, recon)?,
        })
    }
}

/// Formats a metric for CSV output; infinities become `inf` / `-inf`.
pub fn format_value(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.6}")
    }
}

pub const CSV_HEADER: &str = "model,modality,RelErr,PSNR,Corr";

pub fn csv_row(model: &str, modality: &str, m: &MetricsReport) -> String {
    format!(
        "{model},{modality},{},{},{}",
        format_value(m.rel_err),
        format_value(m.psnr),
        format_value(m.corr)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((16, 16), |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn exact_reconstruction() {
        let u = random(1);
        let m = MetricsReport::compute(u.view(), u.view()).unwrap();
        assert_eq!(m.rel_err, 0.0);
        assert_eq!(m.psnr, f64::INFINITY);
        assert!((m.corr - 1.0).abs() < 1e-15);
        assert_eq!(csv_row("jstf", "pet", &m), "jstf,pet,0.000000,inf,1.000000");
    }

    #[test]
    fn psnr_of_known_mse() {
        let u = Array2::<f64>::zeros((10, 10));
        let r = Array2::from_elem((10, 10), 0.1);
        assert!((psnr(u.view(), r.view()).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn undefined_cases() {
        let z = Array2::<f64>::zeros((4, 4));
        let u = random(2).slice(ndarray::s![..4, ..4]).to_owned();
        assert!(matches!(rel_err(z.view(), u.view()), Err(Error::Undefined(_))));
        assert!(matches!(corr(z.view(), u.view()), Err(Error::Undefined(_))));
        assert!(matches!(corr(u.view(), z.view()), Err(Error::Undefined(_))));
        assert!(rel_err(u.view(), random(3).view()).is_err());
    }

    #[test]
    fn psnr_falls_with_noise_level() {
        let u = random(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Array2::from_shape_fn(u.dim(), |_| rng.random_range(-1.0..1.0));
        let mut last = f64::INFINITY;
        for amp in [0.01, 0.02, 0.05, 0.1, 0.3] {
            let p = psnr(u.view(), (&u + &(&noise * amp)).view()).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    proptest! {
        #[test]
        fn corr_is_affine_invariant(seed in 0u64..1000, a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let u = random(seed);
            let pos = corr(u.view(), u.mapv(|x| a * x + b).view()).unwrap();
            let neg = corr(u.view(), u.mapv(|x| -a * x + b).view()).unwrap();
            prop_assert!((pos - 1.0).abs() < 1e-12);
            prop_assert!((neg + 1.0).abs() < 1e-12);
        }

        #[test]
        fn rel_err_is_relative_norm(seed in 0u64..1000, amp in 0.0f64..2.0) {
            let u = random(seed);
            let d = random(seed + 7919).mapv(|x| amp * (x - 0.5));
            let want = sq_norm(d.view()).sqrt() / sq_norm(u.view()).sqrt();
            let got = rel_err(u.view(), (&u + &d).view()).unwrap();
            prop_assert!((got - want).abs() <= 1e-12 * want.max(1e-300));
        }
    }
}
