use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::bank::{verify_uep, Filter, FilterBank};
use crate::error::{Error, Result};

/// Frame coefficients laid out as a `channels × (rows·cols)` matrix.
///
/// Row `c` is channel `c` flattened row-major; column `j` collects every
/// channel's coefficient anchored at pixel `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientStack {
    pub coeffs: Array2<f64>,
    pub shape: (usize, usize),
    pub lowpass_index: usize,
}

impl CoefficientStack {
    pub fn zeros(channels: usize, shape: (usize, usize), lowpass_index: usize) -> Self {
        CoefficientStack {
            coeffs: Array2::zeros((channels, shape.0 * shape.1)),
            shape,
            lowpass_index,
        }
    }

    pub fn channel_count(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn channel(&self, c: usize) -> ArrayView2<'_, f64> {
        self.coeffs
            .row(c)
            .into_shape_with_order(self.shape)
            .expect("channel rows are contiguous")
    }

    pub fn norm(&self) -> f64 {
        crate::image::sq_norm(self.coeffs.view()).sqrt()
    }

    pub fn same_layout(&self, other: &CoefficientStack) -> bool {
        self.coeffs.dim() == other.coeffs.dim()
            && self.shape == other.shape
            && self.lowpass_index == other.lowpass_index
    }
}

/// A tight frame `W` with `W^T W = I` acting on images of a fixed shape.
pub trait TightFrame: Send + Sync {
    fn shape(&self) -> (usize, usize);
    fn channel_count(&self) -> usize;
    fn lowpass_index(&self) -> usize;
    fn analyze(&self, u: ArrayView2<'_, f64>) -> Result<CoefficientStack>;
    fn synthesize(&self, v: &CoefficientStack) -> Result<Array2<f64>>;

    fn check_image(&self, u: ArrayView2<'_, f64>) -> Result<()> {
        if u.dim() != self.shape() {
            return Err(Error::Dimension(format!(
                "image is {:?}, frame expects {:?}",
                u.dim(),
                self.shape()
            )));
        }
        Ok(())
    }

    fn check_stack(&self, v: &CoefficientStack) -> Result<()> {
        if v.shape != self.shape() || v.channel_count() != self.channel_count() {
            return Err(Error::Dimension(format!(
                "stack has {} channels of {:?}, frame expects {} of {:?}",
                v.channel_count(),
                v.shape,
                self.channel_count(),
                self.shape()
            )));
        }
        Ok(())
    }
}

/// Periodic correlation along one axis: `out[n] = Σ_p q[p] a[n + p]`.
fn correlate_axis(a: ArrayView2<'_, f64>, f: &Filter, axis: Axis) -> Array2<f64> {
    let (rows, cols) = a.dim();
    let len = if axis == Axis(0) { rows } else { cols } as i64;
    let mut out = Array2::zeros((rows, cols));
    for (t, &q) in f.taps.iter().enumerate() {
        if q == 0.0 {
            continue;
        }
        let shift = (f.offset + t as i64).rem_euclid(len) as usize;
        if axis == Axis(0) {
            for i in 0..rows {
                let src = a.row((i + shift) % rows);
                out.row_mut(i).scaled_add(q, &src);
            }
        } else {
            for i in 0..rows {
                for j in 0..cols {
                    out[[i, j]] += q * a[[i, (j + shift) % cols]];
                }
            }
        }
    }
    out
}

/// Adjoint of [`correlate_axis`]: `out[n] = Σ_p q[p] a[n − p]`.
fn convolve_axis(a: ArrayView2<'_, f64>, f: &Filter, axis: Axis, out: &mut Array2<f64>) {
    let (rows, cols) = a.dim();
    let len = if axis == Axis(0) { rows } else { cols } as i64;
    for (t, &q) in f.taps.iter().enumerate() {
        if q == 0.0 {
            continue;
        }
        let shift = (f.offset + t as i64).rem_euclid(len) as usize;
        if axis == Axis(0) {
            for i in 0..rows {
                let src = a.row((i + rows - shift) % rows);
                out.row_mut(i).scaled_add(q, &src);
            }
        } else {
            for i in 0..rows {
                for j in 0..cols {
                    out[[i, j]] += q * a[[i, (j + cols - shift) % cols]];
                }
            }
        }
    }
}

/// Undecimated tensor-product framelet transform with periodic boundaries.
///
/// With `L` levels the channels are ordered as: the final low-pass, then the
/// `m² − 1` high-pass channels of level 1, level 2, ... Level `ℓ` uses the
/// filters dilated by `2^(ℓ−1)`.
#[derive(Debug, Clone)]
pub struct FrameTransform {
    levels: Vec<FilterBank>,
    shape: (usize, usize),
    m: usize,
}

impl FrameTransform {
    pub fn new(bank: &FilterBank, shape: (usize, usize)) -> Result<Self> {
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::Dimension(format!("empty image shape {shape:?}")));
        }
        let mut levels = Vec::with_capacity(bank.levels);
        for l in 0..bank.levels {
            let dilated = bank.dilate(1 << l);
            let report = verify_uep(&dilated)?;
            if !report.holds {
                return Err(Error::InvalidInput(format!(
                    "level {} filters violate UEP (deviation {:.3e} at shift {})",
                    l + 1,
                    report.max_deviation,
                    report.worst_shift
                )));
            }
            levels.push(dilated);
        }
        Ok(FrameTransform {
            levels,
            shape,
            m: bank.len(),
        })
    }

    pub fn bank(&self) -> &FilterBank {
        &self.levels[0]
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    fn highs_per_level(&self) -> usize {
        self.m * self.m - 1
    }

    /// All `m²` channels of one level applied to `u`; index `a*m + b`.
    fn analyze_level(&self, bank: &FilterBank, u: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let row_pass: Vec<Array2<f64>> = bank
            .filters
            .par_iter()
            .map(|fb| correlate_axis(u, fb, Axis(1)))
            .collect();
        let pairs: Vec<(usize, usize)> = (0..self.m).flat_map(|a| (0..self.m).map(move |b| (a, b))).collect();
        pairs
            .par_iter()
            .map(|&(a, b)| correlate_axis(row_pass[b].view(), &bank.filters[a], Axis(0)))
            .collect()
    }

    fn synthesize_level(&self, bank: &FilterBank, chans: &[ArrayView2<'_, f64>]) -> Array2<f64> {
        let parts: Vec<Array2<f64>> = (0..self.m)
            .into_par_iter()
            .map(|a| {
                let mut col_acc = Array2::zeros(self.shape);
                for b in 0..self.m {
                    convolve_axis(chans[a * self.m + b], &bank.filters[b], Axis(1), &mut col_acc);
                }
                let mut out = Array2::zeros(self.shape);
                convolve_axis(col_acc.view(), &bank.filters[a], Axis(0), &mut out);
                out
            })
            .collect();
        let mut total = Array2::zeros(self.shape);
        for p in parts {
            total += &p;
        }
        total
    }
}

impl TightFrame for FrameTransform {
    fn shape(&self) -> (usize, usize) {
        self.shape
    }

    fn channel_count(&self) -> usize {
        self.levels.len() * self.highs_per_level() + 1
    }

    fn lowpass_index(&self) -> usize {
        0
    }

    fn analyze(&self, u: ArrayView2<'_, f64>) -> Result<CoefficientStack> {
        self.check_image(u)?;
        let n = self.shape.0 * self.shape.1;
        let mut out = CoefficientStack::zeros(self.channel_count(), self.shape, 0);
        let mut low = u.to_owned();
        for (l, bank) in self.levels.iter().enumerate() {
            let mut chans = self.analyze_level(bank, low.view());
            for (k, c) in chans.iter().enumerate().skip(1) {
                let row = 1 + l * self.highs_per_level() + (k - 1);
                out.coeffs
                    .row_mut(row)
                    .assign(&c.view().into_shape_with_order(n).unwrap());
            }
            low = chans.swap_remove(0);
        }
        out.coeffs.row_mut(0).assign(&low.view().into_shape_with_order(n).unwrap());
        Ok(out)
    }

    fn synthesize(&self, v: &CoefficientStack) -> Result<Array2<f64>> {
        self.check_stack(v)?;
        let mut low = v.channel(0).to_owned();
        for (l, bank) in self.levels.iter().enumerate().rev() {
            let mut chans: Vec<ArrayView2<'_, f64>> = Vec::with_capacity(self.m * self.m);
            chans.push(low.view());
            for k in 1..self.m * self.m {
                chans.push(v.channel(1 + l * self.highs_per_level() + (k - 1)));
            }
            low = self.synthesize_level(bank, &chans);
        }
        Ok(low)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::bank::{cubic_bspline_bank, dct_bank, haar_bank};
    use crate::image::{dot, sq_norm};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
        Array2::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn banks() -> Vec<FilterBank> {
        vec![
            haar_bank(),
            cubic_bspline_bank(),
            cubic_bspline_bank().with_levels(2).unwrap(),
            dct_bank(4).unwrap(),
        ]
    }

    #[test]
    fn constant_image_lives_in_lowpass() {
        let t = FrameTransform::new(&cubic_bspline_bank(), (16, 16)).unwrap();
        let u = Array2::from_elem((16, 16), 0.7);
        let v = t.analyze(u.view()).unwrap();
        assert_eq!(v.channel_count(), 25);
        for (c, row) in v.coeffs.outer_iter().enumerate() {
            let expect = if c == 0 { 0.7 } else { 0.0 };
            assert!(row.iter().all(|x| (x - expect).abs() < 1e-14), "channel {c}");
        }
    }

    #[test]
    fn impulse_gives_flipped_filters_with_unit_energy() {
        let bank = cubic_bspline_bank();
        let t = FrameTransform::new(&bank, (12, 12)).unwrap();
        let mut u = Array2::zeros((12, 12));
        u[[6, 6]] = 1.0;
        let v = t.analyze(u.view()).unwrap();
        assert!((sq_norm(v.coeffs.view()) - 1.0).abs() < 1e-14);
        // channel (a, b) at pixel (6 - p, 6 - s) holds q_a[p] q_b[s]
        let (a, b) = (1, 3);
        let ch = v.channel(1 + (a * 5 + b) - 1);
        for p in -2i64..=2 {
            for s in -2i64..=2 {
                let expect = bank.filters[a].at(p) * bank.filters[b].at(s);
                let got = ch[[(6 - p) as usize, (6 - s) as usize]];
                assert!((got - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn parseval_and_perfect_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for bank in banks() {
            let t = FrameTransform::new(&bank, (16, 20)).unwrap();
            let u = random_image(&mut rng, (16, 20));
            let v = t.analyze(u.view()).unwrap();
            let nu = sq_norm(u.view()).sqrt();
            assert!((v.norm() - nu).abs() <= 1e-12 * nu);
            let back = t.synthesize(&v).unwrap();
            assert!(crate::image::sq_dist(back.view(), u.view()).sqrt() <= 1e-12 * nu);
        }
    }

    #[test]
    fn parseval_matches_dense_operator_norm() {
        // Build W column by column from impulses and compare ‖Wu‖ against
        // the dense product for a random image.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = (16, 16);
        let t = FrameTransform::new(&cubic_bspline_bank(), shape).unwrap();
        let n = 256;
        let mut dense = Array2::<f64>::zeros((t.channel_count() * n, n));
        for j in 0..n {
            let mut e = Array2::zeros(shape);
            e[[j / 16, j % 16]] = 1.0;
            let col = t.analyze(e.view()).unwrap().coeffs;
            dense.column_mut(j).assign(&col.into_shape_with_order(t.channel_count() * n).unwrap());
        }
        let u = random_image(&mut rng, shape);
        let wu = dense.dot(&u.view().into_shape_with_order(n).unwrap());
        let fast = t.analyze(u.view()).unwrap().coeffs.into_shape_with_order(t.channel_count() * n).unwrap();
        let diff = (&wu - &fast).mapv(|x| x * x).sum().sqrt();
        assert!(diff <= 1e-12 * sq_norm(u.view()).sqrt());
        let wnorm = wu.mapv(|x| x * x).sum().sqrt();
        assert!((wnorm - sq_norm(u.view()).sqrt()).abs() <= 1e-12 * wnorm);
    }

    #[test]
    fn synthesis_is_adjoint_of_analysis() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for bank in banks() {
            let t = FrameTransform::new(&bank, (10, 14)).unwrap();
            let u = random_image(&mut rng, (10, 14));
            let mut v = CoefficientStack::zeros(t.channel_count(), (10, 14), 0);
            v.coeffs.mapv_inplace(|_| rng.random_range(-1.0..1.0));
            let lhs = dot(t.analyze(u.view()).unwrap().coeffs.view(), v.coeffs.view());
            let rhs = dot(u.view(), t.synthesize(&v).unwrap().view());
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = FrameTransform::new(&cubic_bspline_bank(), (8, 8)).unwrap();
        let u = random_image(&mut rng, (8, 8));
        let w = random_image(&mut rng, (8, 8));
        let combo = &u * 2.5 - &w * 0.75;
        let lhs = t.analyze(combo.view()).unwrap().coeffs;
        let rhs = t.analyze(u.view()).unwrap().coeffs * 2.5 - t.analyze(w.view()).unwrap().coeffs * 0.75;
        assert!((&lhs - &rhs).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn zero_stack_synthesizes_zero() {
        let t = FrameTransform::new(&cubic_bspline_bank(), (8, 8)).unwrap();
        let v = CoefficientStack::zeros(25, (8, 8), 0);
        assert!(t.synthesize(&v).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn shape_mismatches_are_dimension_errors() {
        let t = FrameTransform::new(&haar_bank(), (8, 8)).unwrap();
        assert!(matches!(t.analyze(Array2::zeros((8, 9)).view()), Err(Error::Dimension(_))));
        let v = CoefficientStack::zeros(3, (8, 8), 0);
        assert!(matches!(t.synthesize(&v), Err(Error::Dimension(_))));
    }

    #[test]
    fn non_tight_bank_is_rejected() {
        let bank = FilterBank::new(vec![Filter::new(0, vec![1.0, 1.0])], 1).unwrap();
        assert!(FrameTransform::new(&bank, (8, 8)).is_err());
    }
}
