//! Parallel-beam strip-integral PET system model with Poisson likelihood.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::image::{compensated_sum, CountVector};

/// Detector layout for the parallel-beam projector. Pixels have unit width
/// and the image is centered on the rotation axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PetGeometry {
    pub n_angles: usize,
    pub n_bins: usize,
    pub strip_width: f64,
    /// Drop detector strips that never cross the image instead of failing
    /// the row-sum check.
    pub prune_empty_rays: bool,
}

impl PetGeometry {
    /// 90 angles over `[0, π)`, `ceil(1.5·side)` unit-width bins.
    pub fn default_for(side: usize) -> Self {
        PetGeometry {
            n_angles: 90,
            n_bins: (1.5 * side as f64).ceil() as usize,
            strip_width: 1.0,
            prune_empty_rays: true,
        }
    }
}

/// Nonnegative system matrix `A` plus constant background `c`.
#[derive(Debug, Clone)]
pub struct PetOperator {
    matrix: CsrMatrix,
    shape: (usize, usize),
    background: f64,
    sensitivity: Vec<f64>,
    /// `(angle, bin)` of every retained row.
    rays: Vec<(usize, usize)>,
}

/// Area of `[x0,x1]×[y0,y1]` on the side `x·cosθ + y·sinθ ≤ t`.
fn halfplane_area(x0: f64, x1: f64, y0: f64, y1: f64, c: f64, s: f64, t: f64) -> f64 {
    let square = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
    let mut poly: Vec<(f64, f64)> = Vec::with_capacity(6);
    for k in 0..4 {
        let p = square[k];
        let q = square[(k + 1) % 4];
        let dp = p.0 * c + p.1 * s - t;
        let dq = q.0 * c + q.1 * s - t;
        if dp <= 0.0 {
            poly.push(p);
        }
        if (dp < 0.0 && dq > 0.0) || (dp > 0.0 && dq < 0.0) {
            let a = dp / (dp - dq);
            poly.push((p.0 + a * (q.0 - p.0), p.1 + a * (q.1 - p.1)));
        }
    }
    let mut area = 0.0;
    for k in 0..poly.len() {
        let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
        area += a.0 * b.1 - b.0 * a.1;
    }
    0.5 * area.abs()
}

fn check_triplets_positive(rows: &[f64], what: &str, label: impl Fn(usize) -> String) -> Result<()> {
    if let Some((i, s)) = rows.iter().enumerate().find(|(_, s)| !(**s > 0.0)) {
        return Err(Error::ConstraintViolation(format!("{what} {} has sum {s}", label(i))));
    }
    Ok(())
}

/// Entries below this are strip/pixel contacts along an edge.
const CONTACT_TOL: f64 = 1e-12;

/// Build `A[i,j] = area(strip_i ∩ pixel_j) / strip_width`, optionally
/// weighted by `exp(−∫ attenuation)` along each strip.
pub fn build_pet_operator(
    side: usize,
    geometry: &PetGeometry,
    attenuation: Option<ArrayView2<'_, f64>>,
) -> Result<PetOperator> {
    build_pet_operator_rect((side, side), geometry, attenuation)
}

pub fn build_pet_operator_rect(
    shape: (usize, usize),
    geometry: &PetGeometry,
    attenuation: Option<ArrayView2<'_, f64>>,
) -> Result<PetOperator> {
    let (rows, cols) = shape;
    if rows == 0 || cols == 0 || geometry.n_angles == 0 || geometry.n_bins == 0 {
        return Err(Error::InvalidInput(format!(
            "need a non-empty image and n_angles, n_bins >= 1 (got {shape:?}, {}, {})",
            geometry.n_angles, geometry.n_bins
        )));
    }
    if !(geometry.strip_width > 0.0) {
        return Err(Error::InvalidInput("strip width must be positive".into()));
    }
    if let Some(mu) = attenuation {
        if mu.dim() != shape {
            return Err(Error::Dimension(format!("attenuation map is {:?}, image is {shape:?}", mu.dim())));
        }
    }
    let w = geometry.strip_width;
    let nb = geometry.n_bins;
    let half_w = cols as f64 / 2.0;
    let half_h = rows as f64 / 2.0;
    let mut trips = Vec::new();
    for a in 0..geometry.n_angles {
        let theta = std::f64::consts::PI * a as f64 / geometry.n_angles as f64;
        let (s, c) = theta.sin_cos();
        for i in 0..rows {
            let (y1, y0) = (half_h - i as f64, half_h - i as f64 - 1.0);
            for j in 0..cols {
                let (x0, x1) = (j as f64 - half_w, j as f64 + 1.0 - half_w);
                let proj = [x0 * c + y0 * s, x1 * c + y0 * s, x0 * c + y1 * s, x1 * c + y1 * s];
                let tmin = proj.iter().copied().fold(f64::INFINITY, f64::min);
                let tmax = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                // bin b covers [(b − (nb−1)/2 − 1/2)·w, (b − (nb−1)/2 + 1/2)·w]
                let first = ((tmin / w + nb as f64 / 2.0).floor().max(0.0)) as usize;
                let last = ((tmax / w + nb as f64 / 2.0).ceil() as i64).min(nb as i64) as usize;
                for b in first..last {
                    let center = (b as f64 - (nb as f64 - 1.0) / 2.0) * w;
                    let lo = center - w / 2.0;
                    let hi = center + w / 2.0;
                    let area = halfplane_area(x0, x1, y0, y1, c, s, hi) - halfplane_area(x0, x1, y0, y1, c, s, lo);
                    let v = area / w;
                    if v > CONTACT_TOL {
                        trips.push((a * nb + b, i * cols + j, v));
                    }
                }
            }
        }
    }
    let full = CsrMatrix::from_triplets(geometry.n_angles * nb, rows * cols, trips)?;
    let sums = full.row_sums();
    let mut rays = Vec::new();
    let mut remap = vec![usize::MAX; sums.len()];
    for (i, &s) in sums.iter().enumerate() {
        if s > 0.0 {
            remap[i] = rays.len();
            rays.push((i / nb, i % nb));
        } else if !geometry.prune_empty_rays {
            return Err(Error::ConstraintViolation(format!(
                "ray {i} (angle {}, bin {}) misses the image",
                i / nb,
                i % nb
            )));
        }
    }
    let trips: Vec<_> = full.triplets().map(|(i, j, v)| (remap[i], j, v)).collect();
    let mut matrix = CsrMatrix::from_triplets(rays.len(), rows * cols, trips)?;
    if let Some(mu) = attenuation {
        let flat: Vec<f64> = mu.iter().copied().collect();
        let integrals = matrix.mul(&flat);
        let factors: Vec<f64> = integrals.iter().map(|l| (-l).exp()).collect();
        matrix = matrix.scale_rows(&factors)?;
    }
    PetOperator::from_matrix(matrix, shape, 1.0).map(|mut op| {
        op.rays = rays;
        op
    })
}

impl PetOperator {
    /// Wrap an explicit system matrix, checking `A ≥ 0`, `A1 > 0`, `Aᵀ1 > 0`
    /// and `c > 0`.
    pub fn from_matrix(matrix: CsrMatrix, shape: (usize, usize), background: f64) -> Result<Self> {
        if matrix.cols() != shape.0 * shape.1 {
            return Err(Error::Dimension(format!("{} columns for a {shape:?} image", matrix.cols())));
        }
        if !(background > 0.0) {
            return Err(Error::InvalidOperator(format!("background c must be > 0, got {background}")));
        }
        if let Some(m) = matrix.min_entry() {
            if m < 0.0 {
                return Err(Error::ConstraintViolation(format!("negative system matrix entry {m}")));
            }
        }
        check_triplets_positive(&matrix.row_sums(), "row", |i| format!("{i}"))?;
        let sensitivity = matrix.col_sums();
        check_triplets_positive(&sensitivity, "column", |j| {
            format!("{j} (pixel {}, {}) is seen by no ray and", j / shape.1, j % shape.1)
        })?;
        let rays = (0..matrix.rows()).map(|i| (0, i)).collect();
        Ok(PetOperator {
            matrix,
            shape,
            background,
            sensitivity,
            rays,
        })
    }

    pub fn with_background(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidOperator(format!("background c must be > 0, got {c}")));
        }
        self.background = c;
        Ok(self)
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn n_measurements(&self) -> usize {
        self.matrix.rows()
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    pub fn rays(&self) -> &[(usize, usize)] {
        &self.rays
    }

    /// `Aᵀ1`.
    pub fn sensitivity(&self) -> &[f64] {
        &self.sensitivity
    }

    fn flat<'a>(&self, u: ArrayView2<'a, f64>) -> Result<std::borrow::Cow<'a, [f64]>> {
        if u.dim() != self.shape {
            return Err(Error::Dimension(format!("image is {:?}, operator expects {:?}", u.dim(), self.shape)));
        }
        Ok(match u.to_slice() {
            Some(s) => std::borrow::Cow::Borrowed(s),
            None => std::borrow::Cow::Owned(u.iter().copied().collect()),
        })
    }

    pub fn forward(&self, u: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.matrix.mul(&self.flat(u)?))
    }

    /// `A u + c`.
    pub fn expected_counts(&self, u: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let mut y = self.forward(u)?;
        y.iter_mut().for_each(|v| *v += self.background);
        Ok(y)
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<Array2<f64>> {
        if y.len() != self.matrix.rows() {
            return Err(Error::Dimension(format!("{} measurements, operator has {}", y.len(), self.matrix.rows())));
        }
        Ok(Array2::from_shape_vec(self.shape, self.matrix.tmul(y)).unwrap())
    }

    fn check_counts(&self, f: &CountVector) -> Result<()> {
        if f.len() != self.matrix.rows() {
            return Err(Error::Dimension(format!("{} counts, operator has {} rays", f.len(), self.matrix.rows())));
        }
        Ok(())
    }

    /// `Φ1(u) = ⟨1, Au + c⟩ − ⟨f, ln(Au + c)⟩`.
    pub fn fidelity(&self, u: ArrayView2<'_, f64>, f: &CountVector) -> Result<f64> {
        self.check_counts(f)?;
        let y = self.expected_counts(u)?;
        Ok(neg_log_likelihood(&y, f.as_slice()))
    }

    /// `∇Φ1(u) = Aᵀ(1 − f ⊘ (Au + c))`.
    pub fn gradient(&self, u: ArrayView2<'_, f64>, f: &CountVector) -> Result<Array2<f64>> {
        self.check_counts(f)?;
        let y = self.expected_counts(u)?;
        let r: Vec<f64> = y.iter().zip(f.as_slice()).map(|(y, f)| 1.0 - f / y).collect();
        self.adjoint(&r)
    }

    /// Text form: header `M N c`, then one `i j value` line per entry.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {:?}\n", self.matrix.rows(), self.matrix.cols(), self.background);
        for (i, j, v) in self.matrix.triplets() {
            writeln!(s, "{i} {j} {v:?}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str, shape: (usize, usize)) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::InvalidInput(format!("operator text line {}: {msg}", line + 1));
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or_else(|| bad(0, "missing header"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 {
            return Err(bad(hl, "header must be `M N c`"));
        }
        let m: usize = h[0].parse().map_err(|_| bad(hl, "bad M"))?;
        let n: usize = h[1].parse().map_err(|_| bad(hl, "bad N"))?;
        let c: f64 = h[2].parse().map_err(|_| bad(hl, "bad c"))?;
        let mut trips = Vec::new();
        for (ln, line) in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(bad(ln, "expected `i j value`"));
            }
            trips.push((
                t[0].parse().map_err(|_| bad(ln, "bad row"))?,
                t[1].parse().map_err(|_| bad(ln, "bad column"))?,
                t[2].parse().map_err(|_| bad(ln, "bad value"))?,
            ));
        }
        PetOperator::from_matrix(CsrMatrix::from_triplets(m, n, trips)?, shape, c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn neg_log_likelihood(expected: &[f64], f: &[f64]) -> f64 {
    compensated_sum(expected.iter().zip(f).map(|(&y, &f)| if f == 0.0 { y } else { y - f * y.ln() }))
}
