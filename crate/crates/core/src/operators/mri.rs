//! Single-coil Cartesian MRI: unitary 2D DFT followed by restriction to the
//! sampled frequencies.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::mask::SamplingMask;
use crate::error::{Error, Result};
use crate::image::{compensated_sum, ComplexVector};

#[derive(Clone)]
pub struct MriOperator {
    mask: SamplingMask,
    kept: Vec<usize>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MriOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MriOperator")
            .field("shape", &self.shape())
            .field("kept", &self.kept.len())
            .finish()
    }
}

impl MriOperator {
    pub fn new(mask: SamplingMask) -> Self {
        let (rows, cols) = mask.shape();
        let mut planner = FftPlanner::new();
        MriOperator {
            kept: mask.indices(),
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
            mask,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mask.shape()
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn n_samples(&self) -> usize {
        self.kept.len()
    }

    /// In-place unitary 2D DFT of a row-major buffer.
    fn fft2(&self, buf: &mut [Complex64], inverse: bool) {
        let (rows, cols) = self.shape();
        let (rf, cf) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        for row in buf.chunks_exact_mut(cols) {
            rf.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); rows];
        for j in 0..cols {
            for i in 0..rows {
                col[i] = buf[i * cols + j];
            }
            cf.process(&mut col);
            for i in 0..rows {
                buf[i * cols + j] = col[i];
            }
        }
        let s = 1.0 / ((rows * cols) as f64).sqrt();
        buf.iter_mut().for_each(|z| *z *= s);
    }

    fn check_shape(&self, dim: (usize, usize)) -> Result<()> {
        if dim != self.shape() {
            return Err(Error::Dimension(format!("image is {dim:?}, operator expects {:?}", self.shape())));
        }
        Ok(())
    }

    fn check_data(&self, g: &ComplexVector) -> Result<()> {
        if g.len() != self.kept.len() {
            return Err(Error::Dimension(format!("{} k-space samples, mask keeps {}", g.len(), self.kept.len())));
        }
        Ok(())
    }

    /// `F_p z` for a complex image.
    pub fn forward_complex(&self, z: &Array2<Complex64>) -> Result<ComplexVector> {
        self.check_shape(z.dim())?;
        let mut buf: Vec<Complex64> = z.iter().copied().collect();
        self.fft2(&mut buf, false);
        Ok(ComplexVector::new(self.kept.iter().map(|&i| buf[i]).collect()))
    }

    /// `F_p u`.
    pub fn forward(&self, u: ArrayView2<'_, f64>) -> Result<ComplexVector> {
        self.forward_complex(&u.mapv(|x| Complex64::new(x, 0.0)))
    }

    /// `F_p^* g`: zero-fill the unsampled frequencies, then inverse DFT.
    pub fn adjoint_complex(&self, g: &ComplexVector) -> Result<Array2<Complex64>> {
        self.check_data(g)?;
        let (rows, cols) = self.shape();
        let mut buf = vec![Complex64::new(0.0, 0.0); rows * cols];
        for (&i, &z) in self.kept.iter().zip(&g.data) {
            buf[i] = z;
        }
        self.fft2(&mut buf, true);
        Ok(Array2::from_shape_vec((rows, cols), buf).unwrap())
    }

    /// `Re(F_p^* g)`, the adjoint for real images.
    pub fn adjoint(&self, g: &ComplexVector) -> Result<Array2<f64>> {
        Ok(self.adjoint_complex(g)?.mapv(|z| z.re))
    }

    fn residual(&self, u: ArrayView2<'_, f64>, g: &ComplexVector) -> Result<ComplexVector> {
        self.check_data(g)?;
        let mut r = self.forward(u)?;
        for (a, b) in r.data.iter_mut().zip(&g.data) {
            *a -= b;
        }
        Ok(r)
    }

    /// `Φ2(u) = (κ/2)‖F_p u − g‖²`.
    pub fn fidelity(&self, u: ArrayView2<'_, f64>, g: &ComplexVector, kappa: f64) -> Result<f64> {
        let r = self.residual(u, g)?;
        Ok(0.5 * kappa * compensated_sum(r.data.iter().map(|z| z.norm_sqr())))
    }

    /// `∇Φ2(u) = κ Re(F_p^*(F_p u − g))`.
    pub fn gradient(&self, u: ArrayView2<'_, f64>, g: &ComplexVector, kappa: f64) -> Result<Array2<f64>> {
        let r = self.residual(u, g)?;
        Ok(self.adjoint(&r)? * kappa)
    }

    /// Solve `(κ Re(F_p^* F_p) + μ I) u = rhs` exactly for real `u`.
    ///
    /// On real images `Re(F^* R F) = F^* M_s F` with `M_s` the
    /// conjugate-symmetrized mask, so the system is diagonal in k-space.
    pub fn solve_normal(&self, rhs: ArrayView2<'_, f64>, kappa: f64, mu: f64) -> Result<Array2<f64>> {
        self.check_shape(rhs.dim())?;
        let (rows, cols) = self.shape();
        let keep = self.mask.keep();
        let mut buf: Vec<Complex64> = rhs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft2(&mut buf, false);
        for i in 0..rows {
            for j in 0..cols {
                let mirror = keep[[(rows - i) % rows, (cols - j) % cols]];
                let ms = 0.5 * (keep[[i, j]] as u8 as f64 + mirror as u8 as f64);
                buf[i * cols + j] /= kappa * ms + mu;
            }
        }
        self.fft2(&mut buf, true);
        Ok(Array2::from_shape_vec((rows, cols), buf.into_iter().map(|z| z.re).collect()).unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::mask::{make_mask, MaskKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn op(kind: MaskKind, n: usize) -> MriOperator {
        MriOperator::new(make_mask(kind, (n, n), 3).unwrap())
    }

    #[test]
    fn dc_only_mask_sees_the_mean() {
        let keep = Array2::from_shape_fn((8, 8), |(i, j)| i == 0 && j == 0);
        let m = MriOperator::new(SamplingMask::from_keep(keep).unwrap());
        let g = m.forward(Array2::from_elem((8, 8), 0.25).view()).unwrap();
        assert_eq!(g.len(), 1);
        assert!((g.data[0] - Complex64::new(8.0 * 0.25, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn full_mask_is_unitary() {
        let m = op(MaskKind::Full, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = Array2::from_shape_fn((16, 16), |_| rng.random_range(0.0..1.0));
        let g = m.forward(u.view()).unwrap();
        let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let ng = g.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((nu - ng).abs() < 1e-12 * nu);
        let back = m.adjoint(&g).unwrap();
        assert!((&back - &u).iter().all(|d| d.abs() < 1e-13));
    }

    #[test]
    fn forward_adjoint_is_identity_on_data() {
        let m = op(MaskKind::Radial { lines: 7 }, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = ComplexVector::new(
            (0..m.n_samples())
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        );
        let back = m.forward_complex(&m.adjoint_complex(&g).unwrap()).unwrap();
        for (a, b) in back.data.iter().zip(&g.data) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_is_dimension_error() {
        let m = op(MaskKind::Radial { lines: 3 }, 8);
        let g = ComplexVector::new(vec![Complex64::new(0.0, 0.0); 2]);
        assert!(matches!(m.adjoint(&g), Err(Error::Dimension(_))));
    }

    #[test]
    fn normal_solve_matches_gradient_equation() {
        let m = op(MaskKind::Random { fraction: 0.3 }, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rhs = Array2::from_shape_fn((12, 12), |_| rng.random_range(-1.0..1.0));
        let (kappa, mu) = (1.0, 0.7);
        let u = m.solve_normal(rhs.view(), kappa, mu).unwrap();
        let zero = ComplexVector::new(vec![Complex64::new(0.0, 0.0); m.n_samples()]);
        let applied = m.gradient(u.view(), &zero, kappa).unwrap() + &u * mu;
        assert!((&applied - &rhs).iter().all(|d| d.abs() < 1e-12));
    }
}
