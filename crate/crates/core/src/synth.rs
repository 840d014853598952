//! Analytic scenes for tests and benchmarks.
//!
//! Every frame is produced by casting the sensor's beams into a world made of
//! planes and boxes, so the true surface under each point is known. Poses are
//! exact sensor-to-world transforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cloud::{Point3, PointCloud};
use crate::motion::{ImuSample, RigidTransform, Vec3};
use crate::range_image::ImageGeometry;

#[derive(Debug, Clone, Copy, PartialEq, clap::ValueEnum)]
pub enum SceneKind {
    /// Closed rectangular corridor, rotated in yaw, sensor moving along its axis.
    Corridor,
    /// Two vertical walls `x + y = 8` and `x − y = 8` meeting ahead of the sensor.
    Corner,
    /// Flat ground at `z = 0` with a few solid boxes.
    GroundBoxes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub geometry: ImageGeometry,
    /// World-frame velocity, m/s.
    pub velocity: Vec3,
    /// Rotation rate about the vertical axis, rad/s.
    pub yaw_rate: f64,
    /// Seconds between frames.
    pub frame_period: f64,
    /// Largest per-frame shift of beam azimuths, as a fraction of a column.
    /// Zero fires every beam through its pixel center.
    pub azimuth_jitter: f64,
    /// Standard deviation of Gaussian range noise, meters.
    pub range_noise: f64,
    pub max_range: f64,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            geometry: ImageGeometry::hdl64(),
            velocity: [0.0; 3],
            yaw_rate: 0.0,
            frame_period: 0.1,
            azimuth_jitter: 0.0,
            range_noise: 0.0,
            max_range: 120.0,
            seed: 0,
        }
    }
}

impl SceneParams {
    /// Driving down the corridor at 1 m/s while turning slowly, with a
    /// random firing phase per sweep and 3 mm range noise.
    pub fn corridor_drive(seed: u64) -> Self {
        let axis = Scene::corridor_axis();
        Self {
            velocity: axis,
            yaw_rate: 0.05,
            azimuth_jitter: 1.0,
            range_noise: 0.003,
            seed,
            ..Self::default()
        }
    }
}

/// A plane `n·p = d` in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldPlane {
    pub normal: Vec3,
    pub d: f64,
}

impl WorldPlane {
    pub fn distance(&self, p: &Point3) -> f64 {
        let n = self.normal;
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        (n[0] * p.x + n[1] * p.y + n[2] * p.z - self.d).abs() / len
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Surface {
    /// Rays start inside a convex region bounded by these planes (normals
    /// pointing outward) and stop where they leave it.
    Interior(Vec<WorldPlane>),
    /// Horizontal plane `z = height`, hit from above or below.
    Level(f64),
    /// Axis-aligned solid box.
    Solid { min: Vec3, max: Vec3 },
}

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Surface {
    /// Ray parameter of the first hit.
    fn hit(&self, o: &Vec3, d: &Vec3) -> Option<f64> {
        match self {
            Surface::Interior(planes) => planes
                .iter()
                .filter_map(|p| {
                    let den = dot(&p.normal, d);
                    (den > 1e-12).then(|| (p.d - dot(&p.normal, o)) / den)
                })
                .filter(|t| *t > 0.0)
                .min_by(f64::total_cmp),
            Surface::Level(h) => {
                let t = (h - o[2]) / d[2];
                (d[2].abs() > 1e-12 && t > 0.0).then_some(t)
            }
            Surface::Solid { min, max } => {
                let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
                for k in 0..3 {
                    if d[k].abs() < 1e-15 {
                        if o[k] < min[k] || o[k] > max[k] {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = ((min[k] - o[k]) / d[k], (max[k] - o[k]) / d[k]);
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                (t0 <= t1 && t0 > 0.0).then_some(t0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub kind: SceneKind,
    pub params: SceneParams,
    start: RigidTransform,
    surfaces: Vec<Surface>,
}

fn yaw_matrix(psi: f64) -> [[f64; 3]; 3] {
    let (s, c) = psi.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

pub const SENSOR_HEIGHT: f64 = 1.73;
const CORRIDOR_YAW: f64 = 20.0 * std::f64::consts::PI / 180.0;

impl Scene {
    pub fn new(kind: SceneKind, params: SceneParams) -> Self {
        match kind {
            SceneKind::Corridor => Self::corridor(params),
            SceneKind::Corner => Self::corner(params),
            SceneKind::GroundBoxes => Self::ground_boxes(params),
        }
    }

    /// Unit vector along the corridor, for driving the sensor down it.
    pub fn corridor_axis() -> Vec3 {
        let (s, c) = CORRIDOR_YAW.sin_cos();
        [s, c, 0.0]
    }

    /// A 4 m wide, 3 m tall, 120 m long corridor whose axis is yawed 20°
    /// from the sensor's forward axis. The sensor starts on the axis, 1.2 m
    /// above the floor, 20 m from the near end.
    pub fn corridor(params: SceneParams) -> Self {
        let (s, c) = CORRIDOR_YAW.sin_cos();
        // corridor axis in world coordinates; across is perpendicular in the horizontal
        let axis = [s, c, 0.0];
        let across = [c, -s, 0.0];
        let neg = |v: Vec3| [-v[0], -v[1], -v[2]];
        let planes = vec![
            WorldPlane { normal: across, d: 2.0 },
            WorldPlane {
                normal: neg(across),
                d: 2.0,
            },
            WorldPlane { normal: axis, d: 100.0 },
            WorldPlane {
                normal: neg(axis),
                d: 20.0,
            },
            WorldPlane {
                normal: [0.0, 0.0, 1.0],
                d: 1.8,
            },
            WorldPlane {
                normal: [0.0, 0.0, -1.0],
                d: 1.2,
            },
        ];
        Self {
            kind: SceneKind::Corridor,
            params,
            start: RigidTransform::IDENTITY,
            surfaces: vec![Surface::Interior(planes)],
        }
    }

    /// Two infinite vertical walls meeting 8 m ahead of the sensor; the seam
    /// is at azimuth π/2.
    pub fn corner(params: SceneParams) -> Self {
        let planes = vec![
            WorldPlane {
                normal: [1.0, 1.0, 0.0],
                d: 8.0,
            },
            WorldPlane {
                normal: [1.0, -1.0, 0.0],
                d: 8.0,
            },
        ];
        Self {
            kind: SceneKind::Corner,
            params,
            start: RigidTransform::IDENTITY,
            surfaces: vec![Surface::Interior(planes)],
        }
    }

    /// Ground at `z = 0`, sensor at [`SENSOR_HEIGHT`], boxes scattered around.
    pub fn ground_boxes(params: SceneParams) -> Self {
        let boxes = [
            ([4.0, 6.0, 0.0], [6.0, 10.0, 1.5]),
            ([-8.0, 3.0, 0.0], [-5.0, 5.0, 2.5]),
            ([-3.0, -12.0, 0.0], [3.0, -9.0, 4.0]),
            ([10.0, -4.0, 0.0], [12.0, 2.0, 1.0]),
        ];
        let mut surfaces = vec![Surface::Level(0.0)];
        surfaces.extend(boxes.iter().map(|(min, max)| Surface::Solid { min: *min, max: *max }));
        Self {
            kind: SceneKind::GroundBoxes,
            params,
            start: RigidTransform::from_translation([0.0, 0.0, SENSOR_HEIGHT]),
            surfaces,
        }
    }

    /// Analytic planes of the scene in world coordinates.
    pub fn planes(&self) -> Vec<WorldPlane> {
        let mut out = Vec::new();
        for s in &self.surfaces {
            match s {
                Surface::Interior(p) => out.extend_from_slice(p),
                Surface::Level(h) => out.push(WorldPlane {
                    normal: [0.0, 0.0, 1.0],
                    d: *h,
                }),
                Surface::Solid { min, max } => {
                    for k in 0..3 {
                        let mut n = [0.0; 3];
                        n[k] = 1.0;
                        out.push(WorldPlane { normal: n, d: max[k] });
                        out.push(WorldPlane { normal: n, d: min[k] });
                    }
                }
            }
        }
        out
    }

    pub fn frame_time(&self, i: usize) -> f64 {
        i as f64 * self.params.frame_period
    }

    pub fn frame_times(&self, n: usize) -> Vec<f64> {
        (0..n).map(|i| self.frame_time(i)).collect()
    }

    /// Sensor-to-world transform at time `t`.
    pub fn pose_at(&self, t: f64) -> RigidTransform {
        let p = &self.params;
        let s = self.start.translation;
        RigidTransform::new(
            yaw_matrix(p.yaw_rate * t),
            [
                s[0] + p.velocity[0] * t,
                s[1] + p.velocity[1] * t,
                s[2] + p.velocity[2] * t,
            ],
        )
    }

    pub fn pose(&self, i: usize) -> RigidTransform {
        self.pose_at(self.frame_time(i))
    }

    pub fn poses(&self, n: usize) -> Vec<RigidTransform> {
        (0..n).map(|i| self.pose(i)).collect()
    }

    /// One sweep in the sensor's own coordinates.
    pub fn frame(&self, i: usize) -> PointCloud {
        let p = &self.params;
        let g = &p.geometry;
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let phase = if p.azimuth_jitter > 0.0 {
            rng.gen_range(-0.5..0.5) * p.azimuth_jitter.min(1.0)
        } else {
            0.0
        };
        let pose = self.pose(i);
        let o = pose.translation;
        let level_pose = pose.rotation[2] == [0.0, 0.0, 1.0];
        let mut points = Vec::with_capacity(g.pixel_count());
        for v in 0..g.height {
            let phi = g.phi_offset + (v as f64 + 0.5) * g.resolution.phi;
            let (sp, cp) = phi.sin_cos();
            for u in 0..g.width {
                let theta = (u as f64 + 0.5 + phase) * g.resolution.theta;
                let (st, ct) = theta.sin_cos();
                let ds = [sp * st, sp * ct, cp];
                let dw = [
                    dot(&pose.rotation[0], &ds),
                    dot(&pose.rotation[1], &ds),
                    dot(&pose.rotation[2], &ds),
                ];
                let hit = self
                    .surfaces
                    .iter()
                    .filter_map(|s| s.hit(&o, &dw).map(|t| (t, matches!(s, Surface::Level(_)))))
                    .min_by(|a, b| a.0.total_cmp(&b.0));
                let Some((mut t, level)) = hit else { continue };
                if p.range_noise > 0.0 {
                    let n: f64 = rng.sample(StandardNormal);
                    t += n * p.range_noise;
                }
                if !(t > 0.0 && t <= p.max_range) {
                    continue;
                }
                let mut point = Point3::new(t * ds[0], t * ds[1], t * ds[2]);
                if level && level_pose && p.range_noise == 0.0 {
                    if let Some(Surface::Level(h)) = self.surfaces.iter().find(|s| matches!(s, Surface::Level(_))) {
                        point.z = h - o[2];
                    }
                }
                points.push(point);
            }
        }
        PointCloud::new(points)
    }

    pub fn frames(&self, n: usize) -> Vec<PointCloud> {
        (0..n).into_par_iter().map(|i| self.frame(i)).collect()
    }

    /// IMU samples covering `n` frames at `rate` Hz, in the sensor frame, with
    /// the body velocity at time zero. Rotation is yaw only, so the gyro reads
    /// `ω` about z and the accelerometer reads the rate of change of the body
    /// velocity.
    pub fn imu(&self, n: usize, rate: f64) -> (Vec<ImuSample>, Vec3) {
        let p = &self.params;
        let body_velocity = |t: f64| {
            let r = yaw_matrix(p.yaw_rate * t);
            let v = p.velocity;
            // Rᵀ v
            [
                r[0][0] * v[0] + r[1][0] * v[1] + r[2][0] * v[2],
                r[0][1] * v[0] + r[1][1] * v[1] + r[2][1] * v[2],
                r[0][2] * v[0] + r[1][2] * v[1] + r[2][2] * v[2],
            ]
        };
        let end = self.frame_time(n.saturating_sub(1));
        let count = (end * rate).ceil() as usize + 1;
        let samples = (0..=count)
            .map(|j| {
                let t = j as f64 / rate;
                let vb = body_velocity(t);
                ImuSample {
                    t,
                    accel: [p.yaw_rate * vb[1], -p.yaw_rate * vb[0], 0.0],
                    gyro: [0.0, 0.0, p.yaw_rate],
                }
            })
            .collect();
        (samples, body_velocity(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::range_image::AngularResolution;

    fn small() -> ImageGeometry {
        ImageGeometry::new(
            360,
            16,
            AngularResolution::new(std::f64::consts::TAU / 360.0, 0.01).unwrap(),
            1.5,
        )
        .unwrap()
    }

    #[test]
    fn static_corridor_repeats() {
        let scene = Scene::corridor(SceneParams {
            geometry: small(),
            ..SceneParams::default()
        });
        let f = scene.frames(2);
        assert_eq!(f[0], f[1]);
        assert!(scene.poses(2).iter().all(RigidTransform::is_identity));
        assert!(f[0].len() > 360 * 15);
    }

    #[test]
    fn ground_points_are_on_the_ground() {
        let scene = Scene::ground_boxes(SceneParams {
            geometry: small(),
            ..SceneParams::default()
        });
        let pose = scene.pose(0);
        let cloud = scene.frame(0);
        let ground: Vec<_> = cloud
            .iter()
            .map(|p| pose.apply(p))
            .filter(|w| w.z.abs() < 1e-6)
            .collect();
        assert!(!ground.is_empty());
        assert!(ground.iter().all(|w| w.z == 0.0));
    }
}
