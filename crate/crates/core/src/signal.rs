//! Sampled signals and the discrete L² structure used everywhere else.
//!
//! Inner products are plain sums over samples (unit sample spacing). 2-D
//! buffers are stored row-major: sample `(x, y)` lives at `y * nx + x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// PSNR reported when the two buffers are identical.
pub const PSNR_CAP_DB: f64 = 999.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    D1(usize),
    D2 { nx: usize, ny: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::D1(n) => n,
            Shape::D2 { nx, ny } => nx * ny,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ndim(&self) -> usize {
        match self {
            Shape::D1(_) => 1,
            Shape::D2 { .. } => 2,
        }
    }

    /// `[n, 1]` for 1-D, `[nx, ny]` for 2-D.
    pub fn dims(&self) -> [usize; 2] {
        match *self {
            Shape::D1(n) => [n, 1],
            Shape::D2 { nx, ny } => [nx, ny],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignalBuffer {
    shape: Shape,
    samples: Vec<f64>,
}

impl SignalBuffer {
    pub fn new(shape: Shape, samples: Vec<f64>) -> Result<Self> {
        if shape.len() != samples.len() {
            return Err(Error::LengthMismatch {
                shape,
                got: samples.len(),
            });
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { shape, samples })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            samples: vec![0.0; shape.len()],
        }
    }

    pub fn from_1d(samples: Vec<f64>) -> Result<Self> {
        Self::new(Shape::D1(samples.len()), samples)
    }

    /// Internal constructor for buffers produced by the crate's own synthesis,
    /// whose samples are finite by construction.
    pub(crate) fn from_parts(shape: Shape, samples: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), samples.len());
        debug_assert!(samples.iter().all(|v| v.is_finite()));
        Self { shape, samples }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    fn check_shape(&self, other: &SignalBuffer) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape,
                right: other.shape,
            });
        }
        Ok(())
    }

    pub fn inner_product(&self, other: &SignalBuffer) -> Result<f64> {
        self.check_shape(other)?;
        Ok(dot(&self.samples, &other.samples))
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.samples, &self.samples)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `self += coeff * other`.
    pub fn add_scaled(&mut self, coeff: f64, other: &SignalBuffer) -> Result<()> {
        self.check_shape(other)?;
        if !coeff.is_finite() {
            return Err(Error::Config(format!("non-finite coefficient {coeff}")));
        }
        for (s, o) in self.samples.iter_mut().zip(&other.samples) {
            *s += coeff * o;
        }
        Ok(())
    }

    pub fn scaled(&self, coeff: f64) -> SignalBuffer {
        let samples = self.samples.iter().map(|v| v * coeff).collect();
        SignalBuffer::from_parts(self.shape, samples)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `10·log10(peak² / MSE)`, capped at [`PSNR_CAP_DB`] when the MSE vanishes.
pub fn psnr(reference: &SignalBuffer, approx: &SignalBuffer, peak: f64) -> Result<f64> {
    reference.check_shape(approx)?;
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::Config(format!("PSNR peak must be positive, got {peak}")));
    }
    if reference.is_empty() {
        return Err(Error::Config("PSNR of an empty buffer".into()));
    }
    let sse: f64 = reference
        .samples
        .iter()
        .zip(&approx.samples)
        .map(|(r, a)| (r - a) * (r - a))
        .sum();
    let mse = sse / reference.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(
            SignalBuffer::new(Shape::D2 { nx: 2, ny: 3 }, vec![0.0; 5]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            SignalBuffer::new(Shape::D1(3), vec![0.0, f64::NAN, 1.0]),
            Err(Error::NonFinite(1))
        ));
    }

    #[test]
    fn inner_product_with_zero_and_mismatch() {
        let u = SignalBuffer::from_1d(vec![1.0, -2.0, 3.0]).unwrap();
        let z = SignalBuffer::zeros(Shape::D1(3));
        assert_eq!(u.inner_product(&z).unwrap(), 0.0);
        assert_eq!(u.inner_product(&u).unwrap(), u.norm_sq());
        let w = SignalBuffer::zeros(Shape::D1(4));
        assert!(matches!(
            u.inner_product(&w),
            Err(Error::ShapeMismatch { .. })
        ));
        assert_eq!(z.norm(), 0.0);
        assert!(u.norm() > 0.0);
    }

    #[test]
    fn psnr_cases() {
        let shape = Shape::D2 { nx: 4, ny: 4 };
        let r = SignalBuffer::new(shape, vec![255.0; 16]).unwrap();
        let a = SignalBuffer::new(shape, vec![254.0; 16]).unwrap();
        assert_eq!(psnr(&r, &r, 255.0).unwrap(), PSNR_CAP_DB);
        let v = psnr(&r, &a, 255.0).unwrap();
        assert!((v - 48.130_803_608_679_1).abs() < 1e-9, "{v}");
        // MSE equal to peak² gives 0 dB.
        let z = SignalBuffer::zeros(shape);
        let p = psnr(&r, &z, 255.0).unwrap();
        assert!(p.abs() < 1e-12);
        assert!(psnr(&r, &a, 0.0).is_err());
    }

    fn buffer(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, n)
    }

    proptest! {
        #[test]
        fn cauchy_schwarz(u in buffer(32), v in buffer(32)) {
            let u = SignalBuffer::from_1d(u).unwrap();
            let v = SignalBuffer::from_1d(v).unwrap();
            let ip = u.inner_product(&v).unwrap();
            prop_assert!(ip.abs() <= u.norm() * v.norm() + 1e-12);
        }

        #[test]
        fn subtraction_bookkeeping(u in buffer(32), g in buffer(32), c in -3.0f64..3.0) {
            let u = SignalBuffer::from_1d(u).unwrap();
            let g = SignalBuffer::from_1d(g).unwrap();
            let mut r = u.clone();
            r.add_scaled(-c, &g).unwrap();
            let expected = u.norm_sq() - 2.0 * c * g.inner_product(&u).unwrap() + c * c * g.norm_sq();
            let scale = u.norm_sq() + c * c * g.norm_sq() + 1.0;
            prop_assert!((r.norm_sq() - expected).abs() <= 1e-10 * scale);
        }
    }
}
