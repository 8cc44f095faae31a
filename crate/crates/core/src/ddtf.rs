//! Patch-based data-driven tight frames.
//!
//! An orthogonal `r²×r²` dictionary `D` induces the undecimated frame
//! `W u = r⁻¹ Dᵀ G(u)`, where `G(u)` stacks every stride-1 periodic `r×r`
//! patch of `u` as a column. Each pixel sits in exactly `r²` patches, so
//! `Wᵀ W = I` and `‖W u‖ = ‖u‖` whenever `D` is orthogonal.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::fmat;
use crate::frames::{dct_vector, CoefficientStack, TightFrame};
use crate::image::{compensated_sum, sq_dist};
use crate::linalg::{from_na, orthogonality_defect, procrustes, to_na};

pub const ORTHO_TOL: f64 = 1e-12;

/// `r²×p` matrix whose column `j` is the `r×r` patch anchored (top-left) at
/// pixel `j`, wrapped periodically and vectorized row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    pub r: usize,
    pub shape: (usize, usize),
    pub data: Array2<f64>,
}

pub fn im2patch(u: ArrayView2<'_, f64>, r: usize) -> Result<PatchMatrix> {
    let (rows, cols) = u.dim();
    if r == 0 || r > rows.min(cols) {
        return Err(Error::Dimension(format!("patch size {r} does not fit a {rows}x{cols} image")));
    }
    let mut data = Array2::zeros((r * r, rows * cols));
    for a in 0..r {
        for b in 0..r {
            let mut dst = data.row_mut(a * r + b);
            for y in 0..rows {
                let src = u.row((y + a) % rows);
                for x in 0..cols {
                    dst[y * cols + x] = src[(x + b) % cols];
                }
            }
        }
    }
    Ok(PatchMatrix {
        r,
        shape: (rows, cols),
        data,
    })
}

/// Adjoint of [`im2patch`]: scatter-add every patch back onto the image.
pub fn patch2im(g: &PatchMatrix) -> Result<Array2<f64>> {
    patch2im_raw(g.data.view(), g.r, g.shape)
}

pub(crate) fn patch2im_raw(g: ArrayView2<'_, f64>, r: usize, shape: (usize, usize)) -> Result<Array2<f64>> {
    let (rows, cols) = shape;
    if g.dim() != (r * r, rows * cols) {
        return Err(Error::Dimension(format!(
            "patch matrix is {:?}, expected {}x{}",
            g.dim(),
            r * r,
            rows * cols
        )));
    }
    let mut out = Array2::zeros(shape);
    for a in 0..r {
        for b in 0..r {
            let src = g.row(a * r + b);
            for y in 0..rows {
                let mut dst = out.row_mut((y + a) % rows);
                for x in 0..cols {
                    dst[(x + b) % cols] += src[y * cols + x];
                }
            }
        }
    }
    Ok(out)
}

/// Orthogonal `r²×r²` dictionary; column `k` is the patch filter `q_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    r: usize,
    d: Array2<f64>,
}

impl Dictionary {
    pub fn new(r: usize, d: Array2<f64>) -> Result<Self> {
        if d.dim() != (r * r, r * r) {
            return Err(Error::Dimension(format!("dictionary is {:?}, expected {n}x{n}", d.dim(), n = r * r)));
        }
        let dict = Dictionary { r, d };
        let defect = dict.orthogonality_defect();
        if defect > ORTHO_TOL {
            return Err(Error::ConstraintViolation(format!("dictionary is not orthogonal (max |DDᵀ−I| = {defect:.3e})")));
        }
        Ok(dict)
    }

    /// Separable 2D DCT-II basis; column `a·r + b` is `dct_a ⊗ dct_b`, so
    /// column 0 is the constant low-pass patch.
    pub fn dct(r: usize) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidInput(format!("DCT dictionary needs r >= 2, got {r}")));
        }
        let basis: Vec<Vec<f64>> = (0..r).map(|k| dct_vector(r, k)).collect();
        let d = Array2::from_shape_fn((r * r, r * r), |(row, col)| {
            let (a, b) = (row / r, row % r);
            let (ka, kb) = (col / r, col % r);
            basis[ka][a] * basis[kb][b]
        });
        Ok(Dictionary { r, d })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.d
    }

    pub fn lowpass_index(&self) -> usize {
        0
    }

    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&to_na(self.d.view()))
    }

    /// FMAT payload plus a `<path>.txt` sidecar recording `r` and the
    /// low-pass row.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fmat::write_real(path, self.d.view())?;
        let sidecar = sidecar_path(path);
        std::fs::write(&sidecar, format!("r={} lowpass={}\n", self.r, self.lowpass_index()))
            .map_err(|e| Error::io(sidecar, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let d = fmat::read_matrix(path)?.into_real()?;
        let sidecar = sidecar_path(path);
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let r = text
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix("r="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Config(format!("{} lacks r=", sidecar.display())))?;
        Dictionary::new(r, d)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    s.into()
}

/// The normalized patch frame `W u = r⁻¹ Dᵀ G(u)` on a fixed image shape.
#[derive(Debug, Clone)]
pub struct PatchFrame {
    pub dict: Dictionary,
    shape: (usize, usize),
}

impl PatchFrame {
    pub fn new(dict: Dictionary, shape: (usize, usize)) -> Result<Self> {
        if dict.r > shape.0.min(shape.1) {
            return Err(Error::Dimension(format!("patch size {} exceeds image {shape:?}", dict.r)));
        }
        Ok(PatchFrame { dict, shape })
    }

    /// `r⁻¹ G(u)`, the patch matrix in frame units.
    pub fn scaled_patches(&self, u: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let g = im2patch(u, self.dict.r)?;
        Ok(g.data / self.dict.r as f64)
    }
}

impl TightFrame for PatchFrame {
    fn shape(&self) -> (usize, usize) {
        self.shape
    }

    fn channel_count(&self) -> usize {
        self.dict.r * self.dict.r
    }

    fn lowpass_index(&self) -> usize {
        self.dict.lowpass_index()
    }

    fn analyze(&self, u: ArrayView2<'_, f64>) -> Result<CoefficientStack> {
        self.check_image(u)?;
        let g = self.scaled_patches(u)?;
        Ok(CoefficientStack {
            coeffs: self.dict.d.t().dot(&g),
            shape: self.shape,
            lowpass_index: self.lowpass_index(),
        })
    }

    fn synthesize(&self, v: &CoefficientStack) -> Result<Array2<f64>> {
        self.check_stack(v)?;
        let patches = self.dict.d.dot(&v.coeffs);
        let r = self.dict.r;
        Ok(patch2im_raw(patches.view(), r, self.shape)? / r as f64)
    }
}

/// Objective of the orthogonal dictionary subproblem,
/// `(μ/2)‖DᵀG − V‖² + (β/2)‖D − D_prev‖²`.
pub fn dictionary_objective(
    g: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    d: ArrayView2<'_, f64>,
    d_prev: ArrayView2<'_, f64>,
    mu: f64,
    beta: f64,
) -> f64 {
    let fit = d.t().dot(&g);
    0.5 * mu * sq_dist(fit.view(), v) + 0.5 * beta * sq_dist(d, d_prev)
}

/// Closed-form minimizer of [`dictionary_objective`] over orthogonal `D`:
/// `D = X Yᵀ` for an SVD `X Σ Yᵀ` of `G Vᵀ + (β/μ) D_prev`.
pub fn dictionary_update(
    g: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    d_prev: &Dictionary,
    mu: f64,
    beta: f64,
) -> Result<Dictionary> {
    if !(mu > 0.0) || !(beta >= 0.0) {
        return Err(Error::InvalidParams(format!("dictionary update needs mu > 0 and beta >= 0 (mu={mu}, beta={beta})")));
    }
    let n = d_prev.d.nrows();
    if g.nrows() != n || v.nrows() != n || g.ncols() != v.ncols() {
        return Err(Error::Dimension(format!(
            "G is {:?}, V is {:?}, dictionary is {n}x{n}",
            g.dim(),
            v.dim()
        )));
    }
    let mut m = g.dot(&v.t());
    if beta > 0.0 {
        m.scaled_add(beta / mu, &d_prev.d);
    }
    let q = procrustes(&to_na(m.view()), &to_na(d_prev.d.view()));
    Ok(Dictionary {
        r: d_prev.r,
        d: from_na(&q),
    })
}

fn check_weights(weights: &[f64], lambda: f64) -> Result<()> {
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::InvalidInput(format!("threshold weights must be positive, got {w}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("threshold must be >= 0, got {lambda}")));
    }
    Ok(())
}

/// Generalized hard thresholding `T_{λ,w}` on rows: row `j` survives in every
/// channel iff `Σ_i w_i ‖B_i[j,:]‖² ≥ λ`, otherwise it is zeroed in every
/// channel. Rows in `exempt_rows` always survive.
pub fn joint_hard_threshold(
    channels: &[ArrayView2<'_, f64>],
    weights: &[f64],
    lambda: f64,
    exempt_rows: &[usize],
) -> Result<Vec<Array2<f64>>> {
    if channels.is_empty() || channels.len() != weights.len() {
        return Err(Error::InvalidInput(format!(
            "{} channels but {} weights",
            channels.len(),
            weights.len()
        )));
    }
    check_weights(weights, lambda)?;
    let dim = channels[0].dim();
    if channels.iter().any(|c| c.nrows() != dim.0) {
        return Err(Error::Dimension("channels must share their row count".into()));
    }
    let mut out: Vec<Array2<f64>> = channels.iter().map(|c| c.to_owned()).collect();
    for j in 0..dim.0 {
        if exempt_rows.contains(&j) {
            continue;
        }
        let energy: f64 = channels
            .iter()
            .zip(weights)
            .map(|(c, w)| w * c.row(j).iter().map(|x| x * x).sum::<f64>())
            .sum();
        if !(energy >= lambda) {
            for o in out.iter_mut() {
                o.row_mut(j).fill(0.0);
            }
        }
    }
    Ok(out)
}

/// Entrywise joint hard threshold on coefficient stacks: the "rows" of the
/// rule are the individual coefficient positions (channel, pixel), coupled
/// across the stacks. The low-pass channel is never thresholded.
pub fn threshold_stacks(
    stacks: &[&CoefficientStack],
    weights: &[f64],
    lambda: f64,
) -> Result<Vec<CoefficientStack>> {
    if stacks.is_empty() || stacks.len() != weights.len() {
        return Err(Error::InvalidInput(format!("{} stacks but {} weights", stacks.len(), weights.len())));
    }
    check_weights(weights, lambda)?;
    if stacks.iter().any(|s| !s.same_layout(stacks[0])) {
        return Err(Error::Dimension("coefficient stacks differ in layout".into()));
    }
    let mut out: Vec<CoefficientStack> = stacks.iter().map(|s| (*s).clone()).collect();
    let low = stacks[0].lowpass_index;
    let (chans, n) = stacks[0].coeffs.dim();
    for c in (0..chans).filter(|&c| c != low) {
        for j in 0..n {
            let mut energy = 0.0;
            for (s, w) in stacks.iter().zip(weights) {
                let x = s.coeffs[[c, j]];
                energy += w * x * x;
            }
            if !(energy >= lambda) {
                for o in out.iter_mut() {
                    o.coeffs[[c, j]] = 0.0;
                }
            }
        }
    }
    Ok(out)
}

/// `‖v‖_{2,0}` over non-low-pass positions: the number of positions with
/// nonzero joint energy across the stacks.
pub fn joint_l20(stacks: &[&CoefficientStack]) -> usize {
    let Some(first) = stacks.first() else { return 0 };
    let low = first.lowpass_index;
    let (chans, n) = first.coeffs.dim();
    (0..chans)
        .filter(|&c| c != low)
        .map(|c| {
            (0..n)
                .filter(|&j| stacks.iter().any(|s| s.coeffs[[c, j]] != 0.0))
                .count()
        })
        .sum()
}

/// Outcome of a DDTF learning loop.
#[derive(Debug, Clone)]
pub struct DdtfFit {
    pub dicts: Vec<Dictionary>,
    pub coeffs: Vec<CoefficientStack>,
    pub objective_trace: Vec<f64>,
}

fn count_nonzero(v: &CoefficientStack, exempt_lowpass: bool) -> usize {
    v.coeffs
        .axis_iter(Axis(0))
        .enumerate()
        .filter(|(c, _)| !exempt_lowpass || *c != v.lowpass_index)
        .map(|(_, row)| row.iter().filter(|x| **x != 0.0).count())
        .sum()
}

/// Learn a single-channel data-driven tight frame by alternating
/// `V ← H_λ(W u)` and the orthogonal dictionary update, starting from the
/// `r×r` DCT. Minimizes `‖V − W u‖² + λ²‖V‖₀` with no low-pass exemption.
pub fn learn_ddtf_single(u: ArrayView2<'_, f64>, r: usize, lambda: f64, iters: usize) -> Result<DdtfFit> {
    if iters == 0 {
        return Err(Error::InvalidParams("iters must be >= 1".into()));
    }
    let shape = u.dim();
    let mut frame = PatchFrame::new(Dictionary::dct(r)?, shape)?;
    let g = frame.scaled_patches(u)?;
    let thresh = 2.0 * lambda * lambda;
    let mut trace = Vec::with_capacity(iters);
    let mut v = CoefficientStack::zeros(r * r, shape, 0);
    for _ in 0..iters {
        v = frame.analyze(u)?;
        for x in v.coeffs.iter_mut() {
            if !(2.0 * *x * *x >= thresh) {
                *x = 0.0;
            }
        }
        let dict = dictionary_update(g.view(), v.coeffs.view(), &frame.dict, 1.0, 0.0)?;
        frame = PatchFrame::new(dict, shape)?;
        let fit = frame.analyze(u)?;
        trace.push(sq_dist(fit.coeffs.view(), v.coeffs.view()) + lambda * lambda * count_nonzero(&v, false) as f64);
    }
    Ok(DdtfFit {
        dicts: vec![frame.dict],
        coeffs: vec![v],
        objective_trace: trace,
    })
}

/// Objective `Σ_i μ_i ‖W_i u_i − v_i‖² + λ̃‖v‖_{2,0}` of the multichannel
/// initialization problem.
pub fn multichannel_objective(
    frames: &[&PatchFrame],
    images: &[ArrayView2<'_, f64>],
    coeffs: &[&CoefficientStack],
    mus: &[f64],
    lambda: f64,
) -> Result<f64> {
    let mut terms = Vec::with_capacity(frames.len() + 1);
    for ((f, u), (v, mu)) in frames.iter().zip(images).zip(coeffs.iter().zip(mus)) {
        let wu = f.analyze(*u)?;
        terms.push(mu * sq_dist(wu.coeffs.view(), v.coeffs.view()));
    }
    terms.push(lambda * joint_l20(coeffs) as f64);
    Ok(compensated_sum(terms))
}

/// Jointly learn two dictionaries and a joint-sparse coefficient pair from
/// initial images, minimizing
/// `μ1‖W1u1 − v1‖² + μ2‖W2u2 − v2‖² + λ̃‖v‖_{2,0}` by alternating the exact
/// `v`-step (joint threshold with weights `2μ_i`, threshold `2λ̃`) and the
/// two dictionary updates.
#[allow(clippy::too_many_arguments)]
pub fn init_multichannel(
    u1: ArrayView2<'_, f64>,
    u2: ArrayView2<'_, f64>,
    r: usize,
    mu1: f64,
    mu2: f64,
    lambda: f64,
    iters: usize,
) -> Result<DdtfFit> {
    init_channels(&[u1, u2], r, &[mu1, mu2], lambda, iters)
}

/// [`init_multichannel`] for any number of channels; with one channel it is
/// the single-image DDTF with a low-pass exemption.
pub fn init_channels(images: &[ArrayView2<'_, f64>], r: usize, mus: &[f64], lambda: f64, iters: usize) -> Result<DdtfFit> {
    if images.is_empty() || images.len() != mus.len() {
        return Err(Error::InvalidInput(format!("{} images but {} weights", images.len(), mus.len())));
    }
    let shape = images[0].dim();
    if let Some(u) = images.iter().find(|u| u.dim() != shape) {
        return Err(Error::Dimension(format!("images differ in shape: {shape:?} vs {:?}", u.dim())));
    }
    if iters == 0 {
        return Err(Error::InvalidParams("iters must be >= 1".into()));
    }
    let mut frames = images
        .iter()
        .map(|_| PatchFrame::new(Dictionary::dct(r)?, shape))
        .collect::<Result<Vec<_>>>()?;
    let patches = images
        .iter()
        .zip(&frames)
        .map(|(u, f)| f.scaled_patches(*u))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = mus.iter().map(|m| 2.0 * m).collect();
    let mut trace = Vec::with_capacity(iters);
    let mut v = Vec::new();
    for _ in 0..iters {
        let canon = images
            .iter()
            .zip(&frames)
            .map(|(u, f)| f.analyze(*u))
            .collect::<Result<Vec<_>>>()?;
        v = threshold_stacks(&canon.iter().collect::<Vec<_>>(), &weights, 2.0 * lambda)?;
        for ((f, g), (vi, mu)) in frames.iter_mut().zip(&patches).zip(v.iter().zip(mus)) {
            let d = dictionary_update(g.view(), vi.coeffs.view(), &f.dict, *mu, 0.0)?;
            *f = PatchFrame::new(d, shape)?;
        }
        trace.push(multichannel_objective(
            &frames.iter().collect::<Vec<_>>(),
            images,
            &v.iter().collect::<Vec<_>>(),
            mus,
            lambda,
        )?);
    }
    Ok(DdtfFit {
        dicts: frames.into_iter().map(|f| f.dict).collect(),
        coeffs: v,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{dct_bank, FrameTransform};
    use crate::image::dot;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
        Array2::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn stripes(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(i, j)| if (i + 2 * j) % 8 < 4 { 0.8 } else { 0.2 })
    }

    #[test]
    fn constant_image_gives_constant_patches() {
        let u = Array2::from_elem((6, 6), 0.4);
        let g = im2patch(u.view(), 3).unwrap();
        assert_eq!(g.data.dim(), (9, 36));
        assert!(g.data.iter().all(|&x| x == 0.4));
    }

    #[test]
    fn patch2im_counts_each_pixel_r_squared_times() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random(&mut rng, (16, 16));
        let back = patch2im(&im2patch(u.view(), 4).unwrap()).unwrap() / 16.0;
        assert!((&back - &u).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn patch2im_is_adjoint_of_im2patch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random(&mut rng, (9, 12));
        let g = PatchMatrix {
            r: 3,
            shape: (9, 12),
            data: random(&mut rng, (9, 108)),
        };
        let lhs = dot(im2patch(u.view(), 3).unwrap().data.view(), g.data.view());
        let rhs = dot(u.view(), patch2im(&g).unwrap().view());
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn oversized_patch_is_dimension_error() {
        assert!(matches!(im2patch(Array2::zeros((4, 8)).view(), 5), Err(Error::Dimension(_))));
    }

    #[test]
    fn dct_patch_frame_matches_dct_filter_bank() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random(&mut rng, (16, 16));
        let pf = PatchFrame::new(Dictionary::dct(4).unwrap(), (16, 16)).unwrap();
        let ft = FrameTransform::new(&dct_bank(4).unwrap(), (16, 16)).unwrap();
        let a = pf.analyze(u.view()).unwrap();
        let b = ft.analyze(u.view()).unwrap();
        assert!((&a.coeffs - &b.coeffs).iter().all(|d| d.abs() < 1e-13));
        let back = pf.synthesize(&a).unwrap();
        assert!((&back - &u).iter().all(|d| d.abs() < 1e-13));
    }

    #[test]
    fn dct_dictionary_is_orthogonal_with_constant_first_column() {
        let d = Dictionary::dct(8).unwrap();
        assert!(d.orthogonality_defect() < 1e-14);
        assert!(d.matrix().column(0).iter().all(|&x| (x - 0.125).abs() < 1e-15));
    }

    #[test]
    fn identity_cross_term_gives_identity() {
        let prev = Dictionary::dct(2).unwrap();
        let eye = Array2::<f64>::eye(4);
        let d = dictionary_update(eye.view(), eye.view(), &prev, 1.0, 0.0).unwrap();
        assert!((d.matrix() - &eye).iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn sign_corrected_diagonal_case() {
        // G Vᵀ = diag(2, -3) with 1×1 patches padded to a 2×2 dictionary.
        let g = array![[2.0, 0.0], [0.0, -3.0]];
        let v = Array2::<f64>::eye(2);
        let prev = Dictionary {
            r: 1,
            d: Array2::eye(2),
        };
        let d = dictionary_update(g.view(), v.view(), &prev, 1.0, 0.0).unwrap();
        assert!((d.matrix() - &array![[1.0, 0.0], [0.0, -1.0]]).iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn degenerate_update_keeps_previous_dictionary() {
        let prev = Dictionary::dct(3).unwrap();
        let zeros = Array2::<f64>::zeros((9, 20));
        let d = dictionary_update(zeros.view(), zeros.view(), &prev, 1.0, 0.0).unwrap();
        assert!((d.matrix() - prev.matrix()).iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn update_never_increases_its_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let prev = Dictionary::dct(3).unwrap();
        for _ in 0..20 {
            let g = random(&mut rng, (9, 40));
            let v = random(&mut rng, (9, 40));
            let (mu, beta) = (rng.random_range(0.1..2.0), rng.random_range(0.0..1.0));
            let d = dictionary_update(g.view(), v.view(), &prev, mu, beta).unwrap();
            assert!(d.orthogonality_defect() <= ORTHO_TOL);
            let new = dictionary_objective(g.view(), v.view(), d.matrix().view(), prev.matrix().view(), mu, beta);
            let old = dictionary_objective(g.view(), v.view(), prev.matrix().view(), prev.matrix().view(), mu, beta);
            assert!(new <= old + 1e-12);
        }
    }

    #[test]
    fn invalid_mu_is_rejected() {
        let prev = Dictionary::dct(2).unwrap();
        let z = Array2::<f64>::zeros((4, 4));
        assert!(dictionary_update(z.view(), z.view(), &prev, 0.0, 0.0).is_err());
    }

    #[test]
    fn zero_threshold_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random(&mut rng, (6, 3));
        let b = random(&mut rng, (6, 3));
        let out = joint_hard_threshold(&[a.view(), b.view()], &[1.0, 2.0], 0.0, &[]).unwrap();
        assert_eq!(out[0], a);
        assert_eq!(out[1], b);
    }

    #[test]
    fn threshold_arithmetic_example() {
        let a = array![[1.0], [0.9]];
        let b = array![[1.2], [0.9]];
        let out = joint_hard_threshold(&[a.view(), b.view()], &[1.0, 1.0], 2.0, &[]).unwrap();
        assert_eq!(out[0], array![[1.0], [0.0]]);
        assert_eq!(out[1], array![[1.2], [0.0]]);
    }

    #[test]
    fn exempt_rows_survive_and_ties_are_kept() {
        let a = array![[0.0], [1.0], [0.1]];
        let out = joint_hard_threshold(&[a.view()], &[1.0], 1.0, &[2]).unwrap();
        assert_eq!(out[0], array![[0.0], [1.0], [0.1]]);
    }

    #[test]
    fn nonpositive_weight_is_rejected() {
        let a = array![[1.0]];
        assert!(matches!(
            joint_hard_threshold(&[a.view()], &[0.0], 1.0, &[]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn single_channel_lambda_zero_fits_exactly() {
        let fit = learn_ddtf_single(stripes(16).view(), 4, 0.0, 3).unwrap();
        assert!(fit.objective_trace[0].abs() < 1e-20);
    }

    #[test]
    fn single_channel_huge_lambda_kills_everything() {
        let u = stripes(16);
        let fit = learn_ddtf_single(u.view(), 4, 1e3, 2).unwrap();
        assert!(fit.coeffs[0].coeffs.iter().all(|&x| x == 0.0));
        let dct = Dictionary::dct(4).unwrap();
        assert!((fit.dicts[0].matrix() - dct.matrix()).iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn single_channel_trace_is_nonincreasing_and_sparsifies() {
        let u = stripes(16);
        let lambda = 0.05;
        let fit = learn_ddtf_single(u.view(), 4, lambda, 20).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", fit.objective_trace);
        }
        let pf = PatchFrame::new(Dictionary::dct(4).unwrap(), (16, 16)).unwrap();
        let dense = pf.analyze(u.view()).unwrap().coeffs.iter().filter(|x| x.abs() > 0.0).count();
        let sparse = count_nonzero(&fit.coeffs[0], false);
        assert!(sparse < dense, "{sparse} vs {dense}");
    }

    #[test]
    fn multichannel_symmetry_and_joint_support() {
        let u = stripes(16);
        let fit = init_multichannel(u.view(), u.view(), 4, 0.5, 0.5, 0.01, 5).unwrap();
        assert_eq!(fit.dicts[0], fit.dicts[1]);
        let w = Array2::from_shape_fn((16, 16), |(i, j)| 0.5 * u[[i, j]] + 0.1 * ((i + j) % 3) as f64);
        let fit = init_multichannel(u.view(), w.view(), 4, 0.05, 1.0, 0.01, 5).unwrap();
        for wdw in fit.objective_trace.windows(2) {
            assert!(wdw[1] <= wdw[0] + 1e-12);
        }
    }

    #[test]
    fn stack_threshold_couples_support_across_modalities() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut a = CoefficientStack::zeros(4, (4, 4), 0);
        let mut b = a.clone();
        a.coeffs.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        b.coeffs.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        let out = threshold_stacks(&[&a, &b], &[0.1, 1.0], 0.3).unwrap();
        let mut killed = 0;
        for c in 0..4 {
            for j in 0..16 {
                let (x, y) = (out[0].coeffs[[c, j]], out[1].coeffs[[c, j]]);
                let kept = x == a.coeffs[[c, j]] && y == b.coeffs[[c, j]];
                let zeroed = x == 0.0 && y == 0.0;
                assert!(kept || zeroed);
                if c == 0 {
                    assert!(kept, "low-pass channel must survive");
                }
                if zeroed {
                    killed += 1;
                }
            }
        }
        assert!(killed > 0);
        assert_eq!(joint_l20(&[&out[0], &out[1]]), 48 - killed);
    }

    #[test]
    fn multichannel_lambda_zero_is_exact() {
        let u = stripes(16);
        let w = u.t().to_owned();
        let fit = init_multichannel(u.view(), w.view(), 4, 0.05, 1.0, 0.0, 2).unwrap();
        assert!(fit.objective_trace.iter().all(|&h| h.abs() < 1e-20));
    }

    #[test]
    fn dictionary_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d1.fmat");
        let d = Dictionary::dct(4).unwrap();
        d.save(&p).unwrap();
        assert_eq!(Dictionary::load(&p).unwrap(), d);
    }
}
