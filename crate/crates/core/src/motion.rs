//! Rigid motion between frames: IMU dead reckoning, per-frame transforms into
//! the key frame, and stacking of aligned frames into one multi-channel image.
//!
//! Transforms map a predicted frame's coordinates into the key frame's
//! coordinates, `p' = R·p + T`. For an interval over which the IMU integrates
//! rotation angles `(α, β, γ)` and displacement `Δ`, the interval transform is
//! `R = build_rotation(α, β, γ)` and `T = −R·Δ`: a static point seen from a
//! sensor that moved by `Δ` shifts by `−Δ` in the new sensor frame.

use rayon::prelude::*;
use thiserror::Error;

use crate::cloud::{Point3, PointCloud};
use crate::range_image::{project, ImageGeometry, RangeImage};

pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("no IMU samples")]
    NoSamples,
    #[error("IMU samples are not strictly increasing in time at index {0}")]
    NonMonotonic(usize),
    #[error("IMU sample {0} has non-finite values")]
    NonFinite(usize),
    #[error("IMU data does not cover [{t0}, {t1}] (samples span [{first}, {last}])")]
    Coverage { t0: f64, t1: f64, first: f64, last: f64 },
    #[error("interval end {t1} precedes start {t0}")]
    ReversedInterval { t0: f64, t1: f64 },
    #[error("frame times must be strictly increasing")]
    FrameTimes,
    #[error("key frame index {k} out of range for {n} frames")]
    KeyIndex { k: usize, n: usize },
    #[error("expected {expected} transforms, got {got}")]
    Count { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Linear acceleration with gravity removed, m/s².
    pub accel: Vec3,
    /// Angular rate, rad/s.
    pub gyro: Vec3,
}

/// Accumulated motion over one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuDelta {
    pub translation: Vec3,
    /// `(Δα, Δβ, Δγ)`: rotation about z, y and x, integrated from the gyro's
    /// z, y and x rates respectively.
    pub angles: Vec3,
    pub velocity: Vec3,
    /// Sample gaps longer than twice the nominal period, as `(start, end)`.
    pub gaps: Vec<(f64, f64)>,
}

fn validate_samples(samples: &[ImuSample]) -> Result<(), MotionError> {
    if samples.is_empty() {
        return Err(MotionError::NoSamples);
    }
    for (i, s) in samples.iter().enumerate() {
        if !(s.t.is_finite() && s.accel.iter().chain(&s.gyro).all(|v| v.is_finite())) {
            return Err(MotionError::NonFinite(i));
        }
        if i > 0 && s.t <= samples[i - 1].t {
            return Err(MotionError::NonMonotonic(i));
        }
    }
    Ok(())
}

fn nominal_period(samples: &[ImuSample]) -> Option<f64> {
    let mut dts: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).collect();
    if dts.is_empty() {
        return None;
    }
    dts.sort_by(f64::total_cmp);
    Some(dts[dts.len() / 2])
}

/// First-order (Euler) integration over `[t0, t1]`. Each sample's values are
/// held until the next sample; per step, velocity is updated before it is
/// used for displacement.
pub fn integrate_imu(samples: &[ImuSample], t0: f64, t1: f64, v0: Vec3) -> Result<ImuDelta, MotionError> {
    validate_samples(samples)?;
    if t1 < t0 {
        return Err(MotionError::ReversedInterval { t0, t1 });
    }
    let mut out = ImuDelta {
        translation: [0.0; 3],
        angles: [0.0; 3],
        velocity: v0,
        gaps: Vec::new(),
    };
    if t1 == t0 {
        return Ok(out);
    }
    let (first, last) = (samples[0].t, samples[samples.len() - 1].t);
    if t0 < first || t1 > last {
        return Err(MotionError::Coverage { t0, t1, first, last });
    }
    let gap_limit = nominal_period(samples).map(|p| 2.0 * p);

    let start = samples.partition_point(|s| s.t <= t0).saturating_sub(1);
    for pair in samples[start..].windows(2) {
        let (s, next) = (&pair[0], &pair[1]);
        if s.t >= t1 {
            break;
        }
        let a = s.t.max(t0);
        let b = next.t.min(t1);
        let dt = b - a;
        if dt <= 0.0 {
            continue;
        }
        if gap_limit.is_some_and(|g| next.t - s.t > g) {
            log::warn!("IMU gap of {:.4} s between t={} and t={}", next.t - s.t, s.t, next.t);
            out.gaps.push((s.t, next.t));
        }
        for k in 0..3 {
            out.velocity[k] += s.accel[k] * dt;
            out.translation[k] += out.velocity[k] * dt;
            out.angles[k] += s.gyro[2 - k] * dt;
        }
    }
    Ok(out)
}

/// `Rz(α)·Ry(β)·Rx(γ)` with each factor written exactly as:
///
/// ```text
/// [ cos α  sin α  0 ]   [ cos β  0  −sin β ]   [ 1    0      0   ]
/// [−sin α  cos α  0 ] · [   0    1    0    ] · [ 0  cos γ  sin γ ]
/// [   0      0    1 ]   [ sin β  0   cos β ]   [ 0 −sin γ  cos γ ]
/// ```
pub fn build_rotation(alpha: f64, beta: f64, gamma: f64) -> Mat3 {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    let rz = [[ca, sa, 0.0], [-sa, ca, 0.0], [0.0, 0.0, 1.0]];
    let ry = [[cb, 0.0, -sb], [0.0, 1.0, 0.0], [sb, 0.0, cb]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cg, sg], [0.0, -sg, cg]];
    mat_mul(&mat_mul(&rz, &ry), &rx)
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn transpose(m: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = m[j][i];
        }
    }
    t
}

fn determinant(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Homogeneous `[R T; 0 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        translation: [0.0; 3],
    };

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            translation,
            ..Self::IDENTITY
        }
    }

    /// Transform for an interval with integrated displacement `Δ` and angles.
    pub fn from_motion(delta: &ImuDelta) -> Self {
        let rotation = build_rotation(delta.angles[0], delta.angles[1], delta.angles[2]);
        let t = mat_vec(&rotation, &delta.translation);
        Self {
            rotation,
            translation: [-t[0], -t[1], -t[2]],
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        let v = mat_vec(&self.rotation, &p.to_array());
        Point3::new(
            v[0] + self.translation[0],
            v[1] + self.translation[1],
            v[2] + self.translation[2],
        )
    }

    /// `(Rᵀ, −Rᵀ·T)`; exact only for orthonormal `R`.
    pub fn inverse(&self) -> Self {
        let rt = transpose(&self.rotation);
        let t = mat_vec(&rt, &self.translation);
        Self {
            rotation: rt,
            translation: [-t[0], -t[1], -t[2]],
        }
    }

    /// Inverse through the adjugate, exact for any invertible matrix. Used on
    /// transforms that went through 32-bit storage and are orthonormal only
    /// to f32 precision.
    pub fn inverse_general(&self) -> Self {
        let m = &self.rotation;
        let det = determinant(m);
        let mut inv = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                inv[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
            }
        }
        let t = mat_vec(&inv, &self.translation);
        Self {
            rotation: inv,
            translation: [-t[0], -t[1], -t[2]],
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        let rotation = mat_mul(&self.rotation, &other.rotation);
        let t = mat_vec(&self.rotation, &other.translation);
        Self {
            rotation,
            translation: [
                t[0] + self.translation[0],
                t[1] + self.translation[1],
                t[2] + self.translation[2],
            ],
        }
    }

    /// Largest deviation of `RᵀR` from identity and of `det R` from 1.
    pub fn rigidity_error(&self) -> f64 {
        let rtr = mat_mul(&transpose(&self.rotation), &self.rotation);
        let mut err: f64 = (determinant(&self.rotation) - 1.0).abs();
        for (i, row) in rtr.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((v - target).abs());
            }
        }
        err
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// Row-major `r11..r33` then `t1 t2 t3`.
    pub fn to_array(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2], t[0], t[1], t[2],
        ]
    }

    pub fn from_array(v: &[f64; 12]) -> Self {
        Self {
            rotation: [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]],
            translation: [v[9], v[10], v[11]],
        }
    }

    /// Entries as they survive 32-bit storage.
    pub fn to_f32_precision(&self) -> Self {
        let mut v = self.to_array();
        for x in &mut v {
            *x = *x as f32 as f64;
        }
        Self::from_array(&v)
    }
}

/// Key frame for a group of `n` frames: the middle one.
pub fn default_key_index(n: usize) -> usize {
    n / 2
}

fn chain_to_key(steps: &[RigidTransform], k_index: usize) -> Vec<RigidTransform> {
    // steps[i] maps frame i coordinates into frame i + 1
    let n = steps.len() + 1;
    let mut out = vec![RigidTransform::IDENTITY; n];
    for i in (0..k_index).rev() {
        out[i] = out[i + 1].compose(&steps[i]);
    }
    for i in k_index + 1..n {
        out[i] = out[i - 1].compose(&steps[i - 1].inverse());
    }
    out
}

/// Per-frame transforms into the key frame from IMU integration. Velocity is
/// carried across frames starting from `v0` at the first frame time.
pub fn frame_transforms(
    imu: &[ImuSample],
    frame_times: &[f64],
    k_index: usize,
    v0: Vec3,
) -> Result<Vec<RigidTransform>, MotionError> {
    let n = frame_times.len();
    if k_index >= n.max(1) {
        return Err(MotionError::KeyIndex { k: k_index, n });
    }
    if n <= 1 {
        return Ok(vec![RigidTransform::IDENTITY; n]);
    }
    if frame_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MotionError::FrameTimes);
    }
    let mut velocity = v0;
    let mut steps = Vec::with_capacity(n - 1);
    for w in frame_times.windows(2) {
        let delta = integrate_imu(imu, w[0], w[1], velocity)?;
        velocity = delta.velocity;
        steps.push(RigidTransform::from_motion(&delta));
    }
    Ok(chain_to_key(&steps, k_index))
}

/// Per-frame transforms into the key frame from sensor-to-world poses.
pub fn transforms_from_poses(poses: &[RigidTransform], k_index: usize) -> Result<Vec<RigidTransform>, MotionError> {
    let n = poses.len();
    if k_index >= n.max(1) {
        return Err(MotionError::KeyIndex { k: k_index, n });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let key_inv = poses[k_index].inverse();
    Ok(poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if i == k_index {
                RigidTransform::IDENTITY
            } else {
                key_inv.compose(p)
            }
        })
        .collect())
}

pub fn transform_cloud(cloud: &PointCloud, m: &RigidTransform) -> PointCloud {
    if m.is_identity() {
        return cloud.clone();
    }
    cloud.iter().map(|p| m.apply(p)).collect()
}

/// Aligned frames projected into images of one geometry.
#[derive(Debug, Clone)]
pub struct FrameStack {
    pub k_index: usize,
    pub channels: Vec<RangeImage>,
    pub transforms: Vec<RigidTransform>,
    pub stats: Vec<ChannelStats>,
}

/// Per-channel projection accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct ChannelStats {
    pub points: usize,
    pub collisions: usize,
    pub out_of_view: usize,
    pub rejected: usize,
}

impl ChannelStats {
    pub fn collision_fraction(&self) -> f64 {
        if self.points == 0 {
            0.0
        } else {
            self.collisions as f64 / self.points as f64
        }
    }

    pub fn dropped(&self) -> usize {
        self.collisions + self.out_of_view + self.rejected
    }
}

impl FrameStack {
    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn geometry(&self) -> Option<&ImageGeometry> {
        self.channels.first().map(|c| c.geometry())
    }
}

/// Transforms every frame into the key frame and projects it. Frames are
/// processed in parallel.
pub fn build_stack(
    clouds: &[PointCloud],
    transforms: &[RigidTransform],
    geometry: &ImageGeometry,
    k_index: usize,
) -> Result<FrameStack, MotionError> {
    if clouds.len() != transforms.len() {
        return Err(MotionError::Count {
            expected: clouds.len(),
            got: transforms.len(),
        });
    }
    if k_index >= clouds.len().max(1) {
        return Err(MotionError::KeyIndex {
            k: k_index,
            n: clouds.len(),
        });
    }
    let projected: Vec<_> = clouds
        .par_iter()
        .zip(transforms.par_iter())
        .map(|(cloud, m)| {
            let p = project(&transform_cloud(cloud, m), geometry);
            let stats = ChannelStats {
                points: cloud.len(),
                collisions: p.collisions,
                out_of_view: p.out_of_view,
                rejected: p.rejected,
            };
            (p.image, stats)
        })
        .collect();
    let (channels, stats) = projected.into_iter().unzip();
    Ok(FrameStack {
        k_index,
        channels,
        transforms: transforms.to_vec(),
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn series(n: usize, dt: f64, accel: Vec3, gyro: Vec3) -> Vec<ImuSample> {
        (0..n)
            .map(|i| ImuSample {
                t: i as f64 * dt,
                accel,
                gyro,
            })
            .collect()
    }

    #[test]
    fn still_imu_integrates_to_zero() {
        let s = series(101, 0.01, [0.0; 3], [0.0; 3]);
        let d = integrate_imu(&s, 0.0, 1.0, [0.0; 3]).unwrap();
        assert_eq!(d.translation, [0.0; 3]);
        assert_eq!(d.angles, [0.0; 3]);
    }

    #[test]
    fn constant_rate_is_linear() {
        let s = series(1001, 0.001, [0.0; 3], [0.0, 0.0, FRAC_PI_2]);
        let d = integrate_imu(&s, 0.0, 1.0, [0.0; 3]).unwrap();
        assert!((d.angles[0] - FRAC_PI_2).abs() < 1e-12);
        assert_eq!(&d.angles[1..], &[0.0, 0.0]);
    }

    #[test]
    fn empty_interval_is_zero() {
        let s = series(10, 0.1, [1.0; 3], [1.0; 3]);
        let d = integrate_imu(&s, 0.3, 0.3, [2.0, 0.0, 0.0]).unwrap();
        assert_eq!(d.translation, [0.0; 3]);
        assert_eq!(d.velocity, [2.0, 0.0, 0.0]);
    }

    #[test]
    fn coverage_and_ordering_errors() {
        let s = series(10, 0.1, [0.0; 3], [0.0; 3]);
        assert!(matches!(
            integrate_imu(&s, 0.0, 2.0, [0.0; 3]),
            Err(MotionError::Coverage { .. })
        ));
        assert!(matches!(
            integrate_imu(&s, 0.5, 0.2, [0.0; 3]),
            Err(MotionError::ReversedInterval { .. })
        ));
        let mut bad = s.clone();
        bad[3].t = bad[2].t;
        assert_eq!(
            integrate_imu(&bad, 0.0, 0.5, [0.0; 3]),
            Err(MotionError::NonMonotonic(3))
        );
        assert_eq!(integrate_imu(&[], 0.0, 0.5, [0.0; 3]), Err(MotionError::NoSamples));
    }

    #[test]
    fn gaps_are_reported() {
        let mut s = series(20, 0.01, [0.0; 3], [0.0; 3]);
        s.drain(5..9);
        let d = integrate_imu(&s, 0.0, 0.19, [0.0; 3]).unwrap();
        assert_eq!(d.gaps.len(), 1);
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(build_rotation(0.0, 0.0, 0.0), RigidTransform::IDENTITY.rotation);
        let r = build_rotation(FRAC_PI_2, 0.0, 0.0);
        let expected = [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[i][j] - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn translation_only() {
        let m = RigidTransform::from_translation([1.0, 0.0, 0.0]);
        assert_eq!(m.apply(&Point3::ORIGIN), Point3::new(1.0, 0.0, 0.0));
        let cloud = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)]);
        assert_eq!(transform_cloud(&cloud, &RigidTransform::IDENTITY), cloud);
    }

    #[test]
    fn single_frame_and_still_sequences_are_identity() {
        let s = series(101, 0.01, [0.0; 3], [0.0; 3]);
        assert_eq!(
            frame_transforms(&s, &[0.0], 0, [0.0; 3]).unwrap(),
            vec![RigidTransform::IDENTITY]
        );
        let t = frame_transforms(&s, &[0.0, 0.25, 0.5, 0.75, 1.0], 2, [0.0; 3]).unwrap();
        assert!(t.iter().all(|m| m.is_identity()
            || m.to_array()
                .iter()
                .zip(RigidTransform::IDENTITY.to_array())
                .all(|(a, b)| (a - b).abs() < 1e-15)));
        assert!(t[2].is_identity());
    }

    #[test]
    fn key_index_validation() {
        assert!(matches!(
            transforms_from_poses(&[RigidTransform::IDENTITY], 1),
            Err(MotionError::KeyIndex { .. })
        ));
        assert_eq!(default_key_index(5), 2);
        assert_eq!(default_key_index(1), 0);
        assert_eq!(default_key_index(4), 2);
    }

    #[test]
    fn general_inverse_matches_on_rigid() {
        let m = RigidTransform::new(build_rotation(0.3, -0.2, 0.1), [1.0, -2.0, 0.5]);
        let a = m.inverse().to_array();
        let b = m.inverse_general().to_array();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pose_transforms_map_into_key_frame() {
        // sensor at x = 0, 1, 2 in the world, looking the same way
        let poses: Vec<_> = (0..3)
            .map(|i| RigidTransform::from_translation([i as f64, 0.0, 0.0]))
            .collect();
        let t = transforms_from_poses(&poses, 1).unwrap();
        // a world point at x = 5 is at 5 in frame 0 and 4 in frame 1
        let p = t[0].apply(&Point3::new(5.0, 0.0, 0.0));
        assert!((p.x - 4.0).abs() < 1e-12);
        assert!(t[1].is_identity());
    }
}
