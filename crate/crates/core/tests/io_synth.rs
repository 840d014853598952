use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stpc::cloud::{Point3, PointCloud};
use stpc::io::{self, CloudFormat};
use stpc::synth::{Scene, SceneParams, SENSOR_HEIGHT};

fn fixture() -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    (0..1000)
        .map(|_| {
            // f32-representable so the KITTI layout is exact too
            let c = |rng: &mut ChaCha8Rng| rng.gen_range(-80.0f32..80.0) as f64;
            Point3::new(c(&mut rng), c(&mut rng), c(&mut rng))
        })
        .collect()
}

#[test]
fn fixture_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = fixture();
    for format in [CloudFormat::KittiBin, CloudFormat::Ply] {
        let path = dir.path().join(format!("fixture.{}", format.extension()));
        io::write_cloud(&path, &cloud, format).unwrap();
        assert_eq!(io::ingest(&path, None).unwrap(), cloud, "{format:?}");
    }
}

#[test]
fn ply_keeps_full_precision() {
    let cloud = PointCloud::new(vec![
        Point3::new(0.1, 1.0 / 3.0, -2.0f64.sqrt()),
        Point3::new(1e-300, 5e300, 0.0),
    ]);
    assert_eq!(io::read_ply(io::write_ply(&cloud).as_bytes()).unwrap(), cloud);
}

#[test]
fn sequence_files_are_sorted_and_filtered() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["b.bin", "a.bin", "c.ply", "notes.txt"] {
        std::fs::write(dir.path().join(name), b"").unwrap();
    }
    let names: Vec<_> = io::sequence_files(dir.path())
        .unwrap()
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["a.bin", "b.bin", "c.ply"]);
}

#[test]
fn corner_points_lie_on_the_walls() {
    let scene = Scene::corner(SceneParams {
        velocity: [0.3, -0.2, 0.0],
        yaw_rate: 0.1,
        azimuth_jitter: 1.0,
        ..SceneParams::default()
    });
    let planes = scene.planes();
    for i in 0..3 {
        let pose = scene.pose(i);
        let cloud = scene.frame(i);
        assert!(cloud.len() > 50_000);
        for p in cloud.iter() {
            let w = pose.apply(p);
            let d = planes.iter().map(|pl| pl.distance(&w)).fold(f64::INFINITY, f64::min);
            assert!(d <= 1e-12, "{w:?} is {d} from the nearest wall");
        }
    }
}

#[test]
fn ground_points_are_exactly_level() {
    let scene = Scene::ground_boxes(SceneParams::default());
    let cloud = scene.frame(0);
    let ground: Vec<_> = cloud.iter().filter(|p| (p.z + SENSOR_HEIGHT).abs() < 1e-6).collect();
    assert!(ground.len() > 30_000);
    assert!(ground.iter().all(|p| p.z == -SENSOR_HEIGHT));
}

#[test]
fn frames_are_reproducible() {
    let scene = Scene::corridor(SceneParams::corridor_drive(7));
    assert_eq!(scene.frame(3), scene.frame(3));
    assert_ne!(scene.frame(3), scene.frame(4));
}
