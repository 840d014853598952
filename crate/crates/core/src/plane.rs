//! Planes of the form `x + a·y + b·z − c = 0`: closed-form least-squares
//! fitting, threshold testing along pixel rays, and offset refitting with the
//! normal held fixed.
//!
//! The residual that every test uses is the range error along the pixel ray,
//! `|r − r̂|`, which is exactly the error the decoder will make on that pixel.

use thiserror::Error;

use crate::cloud::Point3;
use crate::range_image::{reconstruct_from_plane, PixelRay};

/// Default fit threshold in meters.
pub const DEFAULT_TAU: f64 = 0.02;
/// Reconstructed ranges beyond this are treated as failures.
pub const MAX_RANGE: f64 = 200.0;
/// Fits whose normal matrix is conditioned worse than this are rejected.
pub const CONDITION_LIMIT: f64 = 1e8;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum FitError {
    #[error("need at least 3 samples to fit a plane, got {0}")]
    InsufficientSamples(usize),
    #[error("normal matrix is singular or ill-conditioned (condition estimate {0:e})")]
    DegenerateFit(f64),
    #[error("no samples")]
    Empty,
}

/// `x + a·y + b·z − c = 0`; the normal is `(1, a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Plane {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn normal(&self) -> [f64; 3] {
        [1.0, self.a, self.b]
    }

    /// Distance from the sensor origin to the plane.
    pub fn distance_to_origin(&self) -> f64 {
        self.c.abs() / (1.0 + self.a * self.a + self.b * self.b).sqrt()
    }

    /// Algebraic residual `x + a·y + b·z − c`.
    pub fn evaluate(&self, p: &Point3) -> f64 {
        p.x + self.a * p.y + self.b * p.z - self.c
    }

    /// Coefficients as they survive a round trip through 32-bit floats.
    pub fn to_f32_precision(&self) -> Self {
        Self {
            a: self.a as f32 as f64,
            b: self.b as f32 as f64,
            c: self.c as f32 as f64,
        }
    }

    pub fn with_offset(&self, c: f64) -> Self {
        Self { c, ..*self }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }
}

/// A range measured along a pixel ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub ray: PixelRay,
    pub range: f64,
}

impl Sample {
    pub fn new(ray: PixelRay, range: f64) -> Self {
        Self { ray, range }
    }

    /// Sample for a Cartesian point, using the ray through the point itself.
    pub fn from_point(p: &Point3) -> Option<Self> {
        PixelRay::toward(p).map(|ray| Self { ray, range: p.norm() })
    }

    pub fn point(&self) -> Point3 {
        self.ray.at(self.range)
    }
}

/// Running sums for the least-squares fit, taken relative to the first point
/// pushed so large coordinates do not cancel. Summation order is the push
/// order, so a fit grown tile by tile is bit-identical to fitting the
/// concatenated samples in one call.
#[derive(Debug, Clone, Default)]
pub struct PlaneAccumulator {
    pivot: Option<Point3>,
    n: usize,
    sx: f64,
    sy: f64,
    sz: f64,
    syy: f64,
    szz: f64,
    syz: f64,
    sxy: f64,
    sxz: f64,
}

impl PlaneAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn push(&mut self, p: Point3) {
        let pivot = *self.pivot.get_or_insert(p);
        let d = p - pivot;
        self.n += 1;
        self.sx += d.x;
        self.sy += d.y;
        self.sz += d.z;
        self.syy += d.y * d.y;
        self.szz += d.z * d.z;
        self.syz += d.y * d.z;
        self.sxy += d.x * d.y;
        self.sxz += d.x * d.z;
    }

    pub fn extend(&mut self, samples: &[Sample]) {
        for s in samples {
            self.push(s.point());
        }
    }

    /// Solves the normal equations for `(a, b, c)`.
    pub fn fit(&self) -> Result<Plane, FitError> {
        if self.n < 3 {
            return Err(FitError::InsufficientSamples(self.n));
        }
        let pivot = self.pivot.expect("pivot set once a point is pushed");
        let n = self.n as f64;
        let (my, mz, mx) = (self.sy / n, self.sz / n, self.sx / n);
        // centered second moments
        let cyy = self.syy - self.sy * my;
        let czz = self.szz - self.sz * mz;
        let cyz = self.syz - self.sy * mz;
        let cxy = self.sxy - self.sx * my;
        let cxz = self.sxz - self.sx * mz;

        let half_trace = 0.5 * (cyy + czz);
        let spread = (0.25 * (cyy - czz) * (cyy - czz) + cyz * cyz).sqrt();
        let lambda_max = half_trace + spread;
        let det = cyy * czz - cyz * cyz;
        if !(lambda_max > 0.0) {
            return Err(FitError::DegenerateFit(f64::INFINITY));
        }
        let lambda_min = det / lambda_max;
        let condition = if lambda_min > 0.0 {
            lambda_max / lambda_min
        } else {
            f64::INFINITY
        };
        if !(condition <= CONDITION_LIMIT) {
            return Err(FitError::DegenerateFit(condition));
        }

        let a = -(czz * cxy - cyz * cxz) / det;
        let b = -(cyy * cxz - cyz * cxy) / det;
        let c = (pivot.x + mx) + a * (pivot.y + my) + b * (pivot.z + mz);
        let plane = Plane { a, b, c };
        if !plane.is_finite() {
            return Err(FitError::DegenerateFit(condition));
        }
        Ok(plane)
    }
}

/// Least-squares plane through the samples' Cartesian points.
pub fn fit_plane(samples: &[Sample]) -> Result<Plane, FitError> {
    if samples.len() < 3 {
        return Err(FitError::InsufficientSamples(samples.len()));
    }
    let mut acc = PlaneAccumulator::new();
    acc.extend(samples);
    acc.fit()
}

/// Outcome of checking a plane against samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub plane: Plane,
    /// Largest `|r − r̂|`; infinite when some ray misses the plane.
    pub max_residual: f64,
    pub fitted: bool,
}

#[inline]
fn sample_residual(plane: &Plane, s: &Sample) -> Option<f64> {
    match reconstruct_from_plane(plane, &s.ray) {
        Ok(r) if r <= MAX_RANGE => Some((s.range - r).abs()),
        _ => None,
    }
}

/// Checks every sample's range error against `tau`.
pub fn test_plane(plane: &Plane, samples: &[Sample], tau: f64) -> FitResult {
    let mut max_residual = 0.0_f64;
    let mut fitted = true;
    for s in samples {
        match sample_residual(plane, s) {
            Some(e) => {
                if !(e <= tau) {
                    fitted = false;
                }
                max_residual = max_residual.max(e);
            }
            None => {
                fitted = false;
                max_residual = f64::INFINITY;
            }
        }
    }
    FitResult {
        plane: *plane,
        max_residual,
        fitted,
    }
}

/// Same verdict as [`test_plane`], stopping at the first failing sample.
#[inline]
pub fn plane_fits(plane: &Plane, samples: &[Sample], tau: f64) -> bool {
    samples
        .iter()
        .all(|s| matches!(sample_residual(plane, s), Some(e) if e <= tau))
}

/// Offset refit with the normal `(1, a, b)` fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetFit {
    pub c: f64,
    pub fitted: bool,
    pub max_residual: f64,
}

/// Least-squares `c'` for a fixed normal: the mean of `x + a·y + b·z`.
pub fn refit_offset(plane: &Plane, samples: &[Sample], tau: f64) -> Result<OffsetFit, FitError> {
    if samples.is_empty() {
        return Err(FitError::Empty);
    }
    let c = offset_mean(plane, samples);
    let result = test_plane(&plane.with_offset(c), samples, tau);
    Ok(OffsetFit {
        c,
        fitted: result.fitted,
        max_residual: result.max_residual,
    })
}

pub(crate) fn offset_mean(plane: &Plane, samples: &[Sample]) -> f64 {
    let mut sum = 0.0;
    for s in samples {
        sum += s.range * (s.ray.dx + plane.a * s.ray.dy + plane.b * s.ray.dz);
    }
    sum / samples.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(points: &[[f64; 3]]) -> Vec<Sample> {
        points
            .iter()
            .map(|p| Sample::from_point(&Point3::from_array(*p)).unwrap())
            .collect()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn fits_wall_at_x5() {
        let p = fit_plane(&samples(&[
            [5.0, 0.0, 0.0],
            [5.0, 1.0, 0.0],
            [5.0, 0.0, 1.0],
            [5.0, 1.0, 1.0],
        ]))
        .unwrap();
        assert!(close(p.a, 0.0, 1e-6) && close(p.b, 0.0, 1e-6) && close(p.c, 5.0, 1e-6));
    }

    #[test]
    fn fits_slanted_plane() {
        let p = fit_plane(&samples(&[
            [6.0, 0.0, 0.0],
            [4.0, 1.0, 0.0],
            [3.0, 0.0, 1.0],
            [-2.0, 1.0, 2.0],
        ]))
        .unwrap();
        assert!(close(p.a, 2.0, 1e-6), "{p:?}");
        assert!(close(p.b, 3.0, 1e-6), "{p:?}");
        assert!(close(p.c, 6.0, 1e-6), "{p:?}");
    }

    #[test]
    fn horizontal_plane_is_degenerate() {
        let err = fit_plane(&samples(&[
            [1.0, 0.0, 1.0],
            [2.0, 1.0, 1.0],
            [3.0, -1.0, 1.0],
            [4.0, 2.0, 1.0],
        ]))
        .unwrap_err();
        assert!(matches!(err, FitError::DegenerateFit(_)));
    }

    #[test]
    fn too_few_samples() {
        assert_eq!(
            fit_plane(&samples(&[[1.0, 0.0, 0.0], [2.0, 1.0, 0.0]])),
            Err(FitError::InsufficientSamples(2))
        );
    }

    #[test]
    fn collinear_is_degenerate() {
        let err = fit_plane(&samples(&[[1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [3.0, 3.0, 3.0]])).unwrap_err();
        assert!(matches!(err, FitError::DegenerateFit(_)));
    }

    #[test]
    fn exact_samples_pass_and_perturbed_fail() {
        let plane = Plane::new(0.3, -0.2, 7.0);
        let tau = 0.01;
        let mut s: Vec<Sample> = [[0.9, 0.3, 0.1], [1.0, -0.2, 0.05], [0.8, 0.1, -0.3]]
            .iter()
            .map(|d| {
                let ray = PixelRay::toward(&Point3::from_array(*d)).unwrap();
                Sample::new(ray, reconstruct_from_plane(&plane, &ray).unwrap())
            })
            .collect();
        let ok = test_plane(&plane, &s, tau);
        assert!(ok.fitted && ok.max_residual < 1e-12);
        s[1].range += 2.0 * tau;
        let bad = test_plane(&plane, &s, tau);
        assert!(!bad.fitted);
        assert!(close(bad.max_residual, 2.0 * tau, 1e-9));
        assert_eq!(plane_fits(&plane, &s, tau), bad.fitted);
    }

    #[test]
    fn parallel_ray_fails_without_error() {
        let plane = Plane::new(0.0, 0.0, 5.0);
        let s = [Sample::new(
            PixelRay {
                dx: 0.0,
                dy: 1.0,
                dz: 0.0,
            },
            5.0,
        )];
        let r = test_plane(&plane, &s, 1.0);
        assert!(!r.fitted && r.max_residual.is_infinite());
    }

    #[test]
    fn far_reconstructions_fail() {
        let plane = Plane::new(0.0, 0.0, 500.0);
        let s = [Sample::new(
            PixelRay {
                dx: 1.0,
                dy: 0.0,
                dz: 0.0,
            },
            500.0,
        )];
        assert!(!test_plane(&plane, &s, 1.0).fitted);
    }

    #[test]
    fn offset_refit_translates() {
        let s = samples(&[[5.0, 0.0, 0.0], [5.0, 1.0, 0.5], [5.0, -1.0, 0.2]]);
        let fit = refit_offset(&Plane::new(0.0, 0.0, 4.0), &s, 1e-9).unwrap();
        assert!(close(fit.c, 5.0, 1e-12));
        assert!(fit.fitted);
    }

    #[test]
    fn offset_refit_rejects_wrong_normal() {
        // points on x + y = 5, prior normal (1, 0, 0)
        let s = samples(&[[5.0, 0.0, 0.0], [4.0, 1.0, 0.0], [6.0, -1.0, 0.3]]);
        let fit = refit_offset(&Plane::new(0.0, 0.0, 5.0), &s, 0.01).unwrap();
        assert!(!fit.fitted);
        assert_eq!(refit_offset(&Plane::new(0.0, 0.0, 5.0), &[], 0.1), Err(FitError::Empty));
    }

    #[test]
    fn distance_identity() {
        let p = Plane::new(2.0, 3.0, 6.0);
        // foot of the perpendicular from the origin lies on the plane
        let k = p.c / (1.0 + p.a * p.a + p.b * p.b);
        let foot = Point3::new(k, k * p.a, k * p.b);
        assert!(p.evaluate(&foot).abs() < 1e-12);
        assert!(close(p.distance_to_origin(), foot.norm(), 1e-12));
    }
}
