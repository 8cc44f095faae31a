//! Core array types shared by every module.

use ndarray::{Array2, ArrayView2, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// A real 2D image living in the box `[0, bound]^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    data: Array2<f64>,
    bound: f64,
}

impl Image {
    pub fn new(data: Array2<f64>, bound: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Dimension(format!(
                "image must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if !(bound > 0.0) {
            return Err(Error::InvalidInput(format!("image bound must be positive, got {bound}")));
        }
        Ok(Image { data, bound })
    }

    /// An image with the default unit bound.
    pub fn unit(data: Array2<f64>) -> Result<Self> {
        Self::new(data, 1.0)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Image {
            data: Array2::zeros((rows, cols)),
            bound: 1.0,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        let data = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Self::unit(data)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn with_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(Error::InvalidInput(format!("image bound must be positive, got {bound}")));
        }
        self.bound = bound;
        Ok(self)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data
            .as_slice()
            .expect("image storage is always standard layout")
    }

    /// Replace the pixel data while keeping the bound.
    pub fn with_data(&self, data: Array2<f64>) -> Image {
        Image {
            data: data.as_standard_layout().into_owned(),
            bound: self.bound,
        }
    }

    /// True when every pixel lies in `[0, bound]`.
    pub fn is_feasible(&self) -> bool {
        self.data.iter().all(|&x| (0.0..=self.bound).contains(&x))
    }

    /// Euclidean projection onto the feasible box `[0, bound]^N`.
    pub fn project(&self) -> Image {
        self.with_data(self.data.mapv(|x| x.clamp(0.0, self.bound)))
    }
}

/// Clamp every entry of `img` to `[lo, hi]`.
pub fn project_box(img: &Image, lo: f64, hi: f64) -> Result<Image> {
    if lo > hi || lo.is_nan() || hi.is_nan() {
        return Err(Error::InvalidRange { lo, hi });
    }
    Ok(img.with_data(img.data().mapv(|x| x.clamp(lo, hi))))
}


/// Complex k-space samples, one per kept frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector {
    pub data: Vec<Complex64>,
}

impl ComplexVector {
    pub fn new(data: Vec<Complex64>) -> Self {
        ComplexVector { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Nonnegative emission counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CountVector {
    data: Vec<f64>,
}

impl CountVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if let Some((i, x)) = data.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
            return Err(Error::InvalidInput(format!("count {i} is {x}, expected >= 0")));
        }
        Ok(CountVector { data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Neumaier-compensated sum; objective values must be bit-stable and accurate
/// enough for 1e-10 descent checks on large sums.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in it {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn sq_norm(a: ArrayView2<'_, f64>) -> f64 {
    compensated_sum(a.iter().map(|x| x * x))
}

pub fn sq_dist(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let mut acc = Vec::with_capacity(a.len());
    Zip::from(a).and(b).for_each(|x, y| acc.push((x - y) * (x - y)));
    compensated_sum(acc)
}

pub fn dot(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let mut acc = Vec::with_capacity(a.len());
    Zip::from(a).and(b).for_each(|x, y| acc.push(x * y));
    compensated_sum(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn clamps_to_unit_box() {
        let img = Image::unit(array![[-0.5, 0.3, 1.7]]).unwrap();
        let p = project_box(&img, 0.0, 1.0).unwrap();
        assert_eq!(p.data(), &array![[0.0, 0.3, 1.0]]);
    }

    #[test]
    fn feasible_image_is_unchanged() {
        let img = Image::unit(array![[0.0, 0.25], [0.5, 1.0]]).unwrap();
        assert_eq!(project_box(&img, 0.0, 1.0).unwrap(), img);
    }

    #[test]
    fn negative_image_projects_to_zero() {
        let img = Image::unit(array![[-1.0, -2.0], [-0.1, -3.0]]).unwrap();
        let p = project_box(&img, 0.0, 1.0).unwrap();
        assert!(p.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn inverted_range_is_rejected() {
        let img = Image::zeros(2, 2);
        assert!(matches!(project_box(&img, 1.0, 0.0), Err(Error::InvalidRange { .. })));
    }

    #[test]
    fn negative_counts_are_rejected() {
        assert!(CountVector::new(vec![1.0, -0.5]).is_err());
    }

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let v = vec![1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    proptest! {
        #[test]
        fn projection_is_nonexpansive_and_idempotent(
            xs in proptest::collection::vec(-3.0f64..3.0, 16),
            ys in proptest::collection::vec(-3.0f64..3.0, 16),
        ) {
            let x = Image::from_vec(4, 4, xs).unwrap();
            let y = Image::from_vec(4, 4, ys).unwrap();
            let px = project_box(&x, 0.0, 1.0).unwrap();
            let py = project_box(&y, 0.0, 1.0).unwrap();
            prop_assert!(sq_dist(px.view(), py.view()) <= sq_dist(x.view(), y.view()) + 1e-15);
            prop_assert_eq!(project_box(&px, 0.0, 1.0).unwrap(), px);
        }
    }
}
