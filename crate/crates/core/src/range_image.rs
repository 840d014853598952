//! Spherical projection between point clouds and range images.
//!
//! A pixel `(u, v)` covers azimuths `[u·θr, (u+1)·θr)` measured with
//! `atan2(x, y)` in `[0, 2π)`, and polar angles
//! `[φ0 + v·φr, φ0 + (v+1)·φr)` measured from the +z axis. Decoding always
//! casts rays through pixel centers, and the encoders test planes against the
//! same rays, so a plane-coded pixel decodes to exactly the range that was
//! checked against the fit threshold.

use std::f64::consts::TAU;

use thiserror::Error;

use crate::cloud::{Point3, PointCloud};
use crate::plane::Plane;

/// Denominators below this magnitude are treated as a ray parallel to the plane.
pub const PARALLEL_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("angular resolution must be positive and finite (theta {theta}, phi {phi})")]
    BadResolution { theta: f64, phi: f64 },
    #[error("image dimensions must be at least 1x1 (got {width}x{height})")]
    BadDimensions { width: usize, height: usize },
    #[error("phi offset must be finite (got {0})")]
    BadOffset(f64),
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum RayCastError {
    #[error("ray is parallel to the plane")]
    NoIntersection,
    #[error("plane intersection lies behind the sensor (range {0})")]
    BehindSensor(f64),
}

/// Horizontal and vertical radians per pixel.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AngularResolution {
    pub theta: f64,
    pub phi: f64,
}

impl AngularResolution {
    pub fn new(theta: f64, phi: f64) -> Result<Self, GeometryError> {
        if !(theta.is_finite() && phi.is_finite() && theta > 0.0 && phi > 0.0) {
            return Err(GeometryError::BadResolution { theta, phi });
        }
        Ok(Self { theta, phi })
    }
}

/// Unit direction through a pixel center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRay {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl PixelRay {
    pub fn at(&self, range: f64) -> Point3 {
        Point3::new(self.dx * range, self.dy * range, self.dz * range)
    }

    /// Unit ray toward `p`; `None` for the origin or non-finite input.
    pub fn toward(p: &Point3) -> Option<Self> {
        let r = p.norm();
        if !(r > 0.0 && r.is_finite()) {
            return None;
        }
        Some(Self {
            dx: p.x / r,
            dy: p.y / r,
            dz: p.z / r,
        })
    }
}

/// Dimensions and angular layout shared by every image of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ImageGeometry {
    pub width: usize,
    pub height: usize,
    pub resolution: AngularResolution,
    /// Polar angle of the top edge of row 0.
    pub phi_offset: f64,
}

impl ImageGeometry {
    pub fn new(
        width: usize,
        height: usize,
        resolution: AngularResolution,
        phi_offset: f64,
    ) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::BadDimensions { width, height });
        }
        AngularResolution::new(resolution.theta, resolution.phi)?;
        if !phi_offset.is_finite() {
            return Err(GeometryError::BadOffset(phi_offset));
        }
        Ok(Self {
            width,
            height,
            resolution,
            phi_offset,
        })
    }

    /// A 360° image: width is `round(2π / θr)`.
    pub fn full_scan(height: usize, resolution: AngularResolution, phi_offset: f64) -> Result<Self, GeometryError> {
        AngularResolution::new(resolution.theta, resolution.phi)?;
        let width = (TAU / resolution.theta).round() as usize;
        Self::new(width, height, resolution, phi_offset)
    }

    /// 64 rows at 0.4°, 1800 columns at 0.2°, top row about 5° above the horizon.
    pub fn hdl64() -> Self {
        Self {
            width: 1800,
            height: 64,
            resolution: AngularResolution {
                theta: TAU / 1800.0,
                phi: 0.4_f64.to_radians(),
            },
            phi_offset: 1.48,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    /// Ray through the center of pixel `(u, v)`.
    pub fn pixel_ray(&self, u: usize, v: usize) -> PixelRay {
        pixel_ray(u, v, self.resolution, self.phi_offset)
    }

    /// True when the columns cover the full circle, so azimuth wraps.
    pub fn is_full_scan(&self) -> bool {
        self.width as f64 * self.resolution.theta >= TAU - self.resolution.theta / 2.0
    }

    /// Pixel that `p` projects into, or `None` when `p` is degenerate or
    /// falls outside the field of view. Azimuth wraps only for full scans.
    pub fn pixel_of(&self, p: &Point3) -> Option<(usize, usize, f64)> {
        let r = p.norm();
        if !(r > 0.0 && r.is_finite()) {
            return None;
        }
        let mut theta = p.x.atan2(p.y);
        if theta < 0.0 {
            theta += TAU;
        }
        let phi = (p.z / r).clamp(-1.0, 1.0).acos();
        let mut u = (theta / self.resolution.theta).floor() as usize;
        if u >= self.width {
            if !self.is_full_scan() {
                return None;
            }
            u %= self.width;
        }
        let row = ((phi - self.phi_offset) / self.resolution.phi).floor();
        if row < 0.0 || row >= self.height as f64 {
            return None;
        }
        Some((u, row as usize, r))
    }

    /// Half-diagonal of a pixel's angular footprint, scaled by range: the
    /// farthest a point can sit from its pixel-center reconstruction at
    /// equal range.
    pub fn angular_bound(&self, range: f64) -> f64 {
        range * (self.resolution.theta + self.resolution.phi) / 2.0
    }
}

pub fn pixel_ray(u: usize, v: usize, res: AngularResolution, phi_offset: f64) -> PixelRay {
    let theta = (u as f64 + 0.5) * res.theta;
    let phi = phi_offset + (v as f64 + 0.5) * res.phi;
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    PixelRay {
        dx: sp * st,
        dy: sp * ct,
        dz: cp,
    }
}

/// Precomputed pixel-center rays for one geometry, indexed like the image.
#[derive(Debug, Clone)]
pub struct RayTable {
    geometry: ImageGeometry,
    rays: Vec<PixelRay>,
}

impl RayTable {
    pub fn new(geometry: &ImageGeometry) -> Self {
        let mut rays = Vec::with_capacity(geometry.pixel_count());
        for v in 0..geometry.height {
            for u in 0..geometry.width {
                rays.push(geometry.pixel_ray(u, v));
            }
        }
        Self {
            geometry: *geometry,
            rays,
        }
    }

    pub fn geometry(&self) -> &ImageGeometry {
        &self.geometry
    }

    #[inline]
    pub fn ray(&self, index: usize) -> &PixelRay {
        &self.rays[index]
    }
}

/// Range along `ray` to the plane `x + a·y + b·z = c`.
#[inline]
pub fn reconstruct_from_plane(plane: &Plane, ray: &PixelRay) -> Result<f64, RayCastError> {
    let denom = ray.dx + plane.a * ray.dy + plane.b * ray.dz;
    if denom.abs() < PARALLEL_EPSILON {
        return Err(RayCastError::NoIntersection);
    }
    let r = plane.c / denom;
    if r <= 0.0 {
        return Err(RayCastError::BehindSensor(r));
    }
    Ok(r)
}

/// W×H grid of ranges. Invalid pixels hold range 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    geometry: ImageGeometry,
    ranges: Vec<f64>,
    valid: Vec<bool>,
}

impl RangeImage {
    pub fn empty(geometry: ImageGeometry) -> Self {
        let n = geometry.pixel_count();
        Self {
            geometry,
            ranges: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    pub fn geometry(&self) -> &ImageGeometry {
        &self.geometry
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn is_valid(&self, index: usize) -> bool {
        self.valid[index]
    }

    #[inline]
    pub fn range(&self, index: usize) -> Option<f64> {
        self.valid[index].then(|| self.ranges[index])
    }

    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        self.range(self.geometry.index(u, v))
    }

    /// Sets a pixel. Non-positive or non-finite ranges make it invalid.
    pub fn set(&mut self, index: usize, range: f64) {
        if range > 0.0 && range.is_finite() {
            self.ranges[index] = range;
            self.valid[index] = true;
        } else {
            self.clear(index);
        }
    }

    pub fn clear(&mut self, index: usize) {
        self.ranges[index] = 0.0;
        self.valid[index] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Projection output plus accounting of points that did not make it into the image.
#[derive(Debug, Clone)]
pub struct Projection {
    pub image: RangeImage,
    /// Points with non-finite coordinates or at the origin.
    pub rejected: usize,
    /// Points outside the vertical field of view.
    pub out_of_view: usize,
    /// Points that landed on an occupied pixel (the farther one is discarded).
    pub collisions: usize,
}

impl Projection {
    pub fn dropped(&self) -> usize {
        self.rejected + self.out_of_view + self.collisions
    }
}

/// Projects a cloud; on collision the nearer point wins, so the result does
/// not depend on point order.
pub fn project(cloud: &PointCloud, geometry: &ImageGeometry) -> Projection {
    let mut image = RangeImage::empty(*geometry);
    let mut rejected = 0;
    let mut out_of_view = 0;
    let mut collisions = 0;
    for p in cloud {
        if !p.is_finite() || p.norm() == 0.0 {
            rejected += 1;
            continue;
        }
        let Some((u, v, r)) = geometry.pixel_of(p) else {
            out_of_view += 1;
            continue;
        };
        let idx = geometry.index(u, v);
        if image.valid[idx] {
            collisions += 1;
            if r < image.ranges[idx] {
                image.ranges[idx] = r;
            }
        } else {
            image.ranges[idx] = r;
            image.valid[idx] = true;
        }
    }
    Projection {
        image,
        rejected,
        out_of_view,
        collisions,
    }
}

/// One point per valid pixel, placed on the pixel-center ray. Points come
/// out in row-major pixel order.
pub fn unproject(image: &RangeImage) -> PointCloud {
    let g = image.geometry;
    let mut points = Vec::with_capacity(image.valid_count());
    for v in 0..g.height {
        for u in 0..g.width {
            let idx = g.index(u, v);
            if image.valid[idx] {
                points.push(g.pixel_ray(u, v).at(image.ranges[idx]));
            }
        }
    }
    PointCloud::new(points)
}
