use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stpc::cloud::Point3;
use stpc::motion::{
    build_rotation, build_stack, frame_transforms, integrate_imu, transforms_from_poses, ImuSample, RigidTransform,
};
use stpc::range_image::PixelRay;
use stpc::synth::{Scene, SceneParams};

#[test]
fn constant_acceleration_matches_half_a_t_squared() {
    let dt = 0.001;
    let samples: Vec<_> = (0..=1000)
        .map(|i| ImuSample {
            t: i as f64 * dt,
            accel: [1.0, 0.0, 0.0],
            gyro: [0.0; 3],
        })
        .collect();
    let d = integrate_imu(&samples, 0.0, 1.0, [0.0; 3]).unwrap();
    let analytic = 0.5;
    assert!(
        (d.translation[0] - analytic).abs() <= dt * 1.0 / 2.0 + 1e-12,
        "{}",
        d.translation[0]
    );
    assert!((d.velocity[0] - 1.0).abs() < 1e-9);
    assert_eq!(&d.translation[1..], &[0.0, 0.0]);
}

fn symbolic_rotation(a: f64, b: f64, g: f64) -> [[f64; 3]; 3] {
    let (sa, ca) = (a.sin(), a.cos());
    let (sb, cb) = (b.sin(), b.cos());
    let (sg, cg) = (g.sin(), g.cos());
    [
        [ca * cb, sa * cg + ca * sb * sg, sa * sg - ca * sb * cg],
        [-sa * cb, ca * cg - sa * sb * sg, ca * sg + sa * sb * cg],
        [sb, -cb * sg, cb * cg],
    ]
}

#[test]
fn rotation_matches_symbolic_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10_000 {
        let (a, b, g) = (
            rng.gen_range(-6.3..6.3),
            rng.gen_range(-6.3..6.3),
            rng.gen_range(-6.3..6.3),
        );
        let got = build_rotation(a, b, g);
        let want = symbolic_rotation(a, b, g);
        for i in 0..3 {
            for j in 0..3 {
                assert!((got[i][j] - want[i][j]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn constant_velocity_imu_matches_poses() {
    let params = SceneParams {
        velocity: [1.0, 2.0, 0.0],
        ..SceneParams::default()
    };
    let scene = Scene::corner(params);
    let n = 5;
    let (imu, v0) = scene.imu(n, 1000.0);
    let from_imu = frame_transforms(&imu, &scene.frame_times(n), 2, v0).unwrap();
    let from_poses = transforms_from_poses(&scene.poses(n), 2).unwrap();
    for (i, (a, b)) in from_imu.iter().zip(&from_poses).enumerate() {
        for k in 0..3 {
            // analytic displacement of frame i relative to the key frame
            let analytic = (i as f64 - 2.0) * 0.1 * scene.params.velocity[k];
            assert!((a.translation[k] - analytic).abs() < 1e-9, "frame {i}: {a:?}");
            assert!(
                (a.translation[k] - b.translation[k]).abs() < 1e-9,
                "frame {i}: {a:?} vs {b:?}"
            );
        }
    }
}

#[test]
fn turning_trajectory_error_is_second_order_in_frame_period() {
    let params = SceneParams {
        velocity: [0.0, 3.0, 0.0],
        yaw_rate: 0.3,
        ..SceneParams::default()
    };
    let scene = Scene::corner(params);
    let n = 5;
    let (imu, v0) = scene.imu(n, 1000.0);
    let from_imu = frame_transforms(&imu, &scene.frame_times(n), 2, v0).unwrap();
    let from_poses = transforms_from_poses(&scene.poses(n), 2).unwrap();
    // body-frame velocity is summed without rotating it back, which costs
    // about ω·|v|·h²/2 per frame step of length h
    let (w, speed, h) = (0.3, 3.0, 0.1);
    for (i, (a, b)) in from_imu.iter().zip(&from_poses).enumerate() {
        let steps = (i as f64 - 2.0).abs();
        let err = Point3::from_array(a.translation).distance(&Point3::from_array(b.translation));
        assert!(err <= steps * w * speed * h * h, "frame {i}: {err}");
        for k in 0..3 {
            for j in 0..3 {
                assert!((a.rotation[k][j] - b.rotation[k][j]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn inverse_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..1000 {
        let m = RigidTransform::new(
            build_rotation(
                rng.gen_range(-3.2..3.2),
                rng.gen_range(-3.2..3.2),
                rng.gen_range(-3.2..3.2),
            ),
            [
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-5.0..5.0),
            ],
        );
        let p = Point3::new(
            rng.gen_range(-100.0..100.0),
            rng.gen_range(-100.0..100.0),
            rng.gen_range(-10.0..10.0),
        );
        let stored = m.to_f32_precision();
        for (fwd, inv) in [
            (m, m.inverse()),
            (m, m.inverse_general()),
            (stored, stored.inverse_general()),
        ] {
            assert!(inv.apply(&fwd.apply(&p)).distance(&p) < 1e-9);
        }
    }
}

/// Range to `n·p = d` along `ray`, if hit in front.
fn hit(n: [f64; 3], d: f64, ray: &PixelRay) -> Option<f64> {
    let den = n[0] * ray.dx + n[1] * ray.dy + n[2] * ray.dz;
    (den > 1e-12).then(|| d / den)
}

#[test]
fn offset_samplings_differ_by_at_most_the_footprint_variation() {
    let params = SceneParams {
        azimuth_jitter: 1.0,
        seed: 5,
        ..SceneParams::default()
    };
    let scene = Scene::corner(params);
    let clouds = scene.frames(2);
    let g = scene.params.geometry;
    let stack = build_stack(&clouds, &[RigidTransform::IDENTITY; 2], &g, 0).unwrap();
    let planes = scene.planes();
    let mut compared = 0;
    for v in 0..g.height {
        for u in 0..g.width {
            let idx = g.index(u, v);
            let (Some(r0), Some(r1)) = (stack.channels[0].range(idx), stack.channels[1].range(idx)) else {
                continue;
            };
            let corners: Vec<PixelRay> = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
                .iter()
                .map(|(du, dv)| {
                    let theta = (u as f64 + du) * g.resolution.theta;
                    let phi = g.phi_offset + (v as f64 + dv) * g.resolution.phi;
                    PixelRay {
                        dx: phi.sin() * theta.sin(),
                        dy: phi.sin() * theta.cos(),
                        dz: phi.cos(),
                    }
                })
                .collect();
            // the visible surface is the nearest wall; skip pixels straddling the seam
            let per_corner: Vec<Option<(usize, f64)>> = corners
                .iter()
                .map(|ray| {
                    planes
                        .iter()
                        .enumerate()
                        .filter_map(|(i, p)| hit(p.normal, p.d, ray).map(|t| (i, t)))
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                })
                .collect();
            let Some(Some((wall, _))) = per_corner.first().copied() else {
                continue;
            };
            if per_corner.iter().any(|c| c.is_none_or(|(w, _)| w != wall)) {
                continue;
            }
            let ranges: Vec<f64> = per_corner.iter().map(|c| c.unwrap().1).collect();
            let lo = ranges.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ranges.iter().copied().fold(0.0, f64::max);
            assert!(
                (r0 - r1).abs() <= hi - lo + 1e-9,
                "pixel ({u},{v}): {r0} vs {r1}, bound {}",
                hi - lo
            );
            compared += 1;
        }
    }
    assert!(compared > 10_000);
}
