use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use stpc::bench::{run_sweep, write_csv, Sweep};
use stpc::bitstream::{
    compress_sequence, decompress, inspect, split_blobs, CodecConfig, CodecError, Mode, MotionSource,
};
use stpc::cloud::PointCloud;
use stpc::io::{self, CloudFormat};
use stpc::metrics::{pair_error, CloudError};
use stpc::motion::Vec3;
use stpc::range_image::{AngularResolution, ImageGeometry};
use stpc::synth::{Scene, SceneKind, SceneParams};

#[derive(Parser)]
#[command(name = "stpc", version, about = "Spatio-temporal LiDAR point cloud codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress point cloud frames into .stpc blobs.
    Encode(EncodeArgs),
    /// Decode blobs back into point cloud files.
    Decode(DecodeArgs),
    /// Show the header and configuration of every blob in a file.
    Info {
        /// Blob file, or `-` for stdin.
        input: PathBuf,
    },
    /// Nearest-neighbor error between a source and a decoded cloud or sequence.
    Metrics(MetricsArgs),
    /// Sweep frames per blob, thresholds and threads over a sequence; CSV out.
    Bench(BenchArgs),
    /// Generate an analytic scene sequence with exact poses.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct GeometryArgs {
    /// Range image columns.
    #[arg(long, default_value_t = 1800)]
    width: usize,
    /// Range image rows.
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Azimuth resolution in radians; defaults to a full circle over `width`.
    #[arg(long)]
    theta_res: Option<f64>,
    /// Elevation resolution in radians.
    #[arg(long, default_value_t = 0.4f64.to_radians())]
    phi_res: f64,
    /// Polar angle of the top of row 0, radians.
    #[arg(long, default_value_t = 1.48)]
    phi_offset: f64,
}

impl GeometryArgs {
    fn geometry(&self) -> Result<ImageGeometry, String> {
        let theta = self
            .theta_res
            .unwrap_or(std::f64::consts::TAU / self.width.max(1) as f64);
        let res = AngularResolution::new(theta, self.phi_res).map_err(|e| e.to_string())?;
        ImageGeometry::new(self.width, self.height, res, self.phi_offset).map_err(|e| e.to_string())
    }
}

#[derive(Args)]
struct EncodeArgs {
    /// Frame files, or directories of `.bin`/`.ply` files in name order.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<CloudFormat>,
    #[arg(long, value_enum, default_value_t = Mode::Stream)]
    mode: Mode,
    /// Plane fit threshold, meters.
    #[arg(long, default_value_t = 0.02)]
    tau: f64,
    /// Tile width and height in pixels.
    #[arg(long, num_args = 2, value_names = ["W", "H"], default_values_t = [4, 4])]
    tile: Vec<usize>,
    /// Frames per blob.
    #[arg(long, default_value_t = 5)]
    frames: usize,
    /// Key frame within each blob; the middle frame by default.
    #[arg(long)]
    key: Option<usize>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Meters per LSB of residual ranges.
    #[arg(long, default_value_t = 0.005)]
    range_quant: f64,
    /// IMU samples (CSV `t,ax,ay,az,wx,wy,wz`).
    #[arg(long, conflicts_with = "poses")]
    imu: Option<PathBuf>,
    /// Sensor-to-world pose per frame, 12 values per line.
    #[arg(long)]
    poses: Option<PathBuf>,
    /// Seconds between frames when using IMU motion.
    #[arg(long, default_value_t = 0.1)]
    frame_period: f64,
    /// Capture time of the first frame; the first IMU sample time by default.
    #[arg(long)]
    t0: Option<f64>,
    /// Sensor velocity at the first frame, `vx,vy,vz` in m/s.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    v0: Option<Vec<f64>>,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Output file, or `-` for stdout.
    #[arg(long, short)]
    out: PathBuf,
    /// Write the effective configuration as JSON.
    #[arg(long)]
    dump_config: Option<PathBuf>,
    /// Write per-blob compression reports as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Blob file, or `-` for stdin.
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = CloudFormat::Ply)]
    format: CloudFormat,
}

#[derive(Args)]
struct MetricsArgs {
    /// Source cloud file or directory.
    source: PathBuf,
    /// Decoded cloud file or directory.
    decoded: PathBuf,
    /// Blob file the decoded clouds came from, to report the compression rate.
    #[arg(long)]
    blob: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of frames, optionally with `poses.txt` or `imu.csv`.
    dir: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Mode::Stream])]
    modes: Vec<Mode>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 3, 5, 9])]
    n_frames: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.02])]
    tau: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0])]
    threads: Vec<usize>,
    /// Skip nearest-neighbor error computation.
    #[arg(long)]
    no_errors: bool,
    /// Seconds between frames when using `imu.csv`.
    #[arg(long, default_value_t = 0.1)]
    frame_period: f64,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// CSV output; stdout by default.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SceneKind::Corridor)]
    scene: SceneKind,
    #[arg(long, default_value_t = 5)]
    frames: usize,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = CloudFormat::KittiBin)]
    format: CloudFormat,
    /// Sensor speed in m/s; along the corridor axis, or +y for other scenes.
    #[arg(long, default_value_t = 0.0)]
    speed: f64,
    /// Yaw rate, rad/s.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    yaw_rate: f64,
    /// Per-sweep azimuth phase jitter as a fraction of a column.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Range noise standard deviation, meters.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.1)]
    frame_period: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write `imu.csv` sampled at this rate in Hz.
    #[arg(long)]
    imu_rate: Option<f64>,
    #[command(flatten)]
    geometry: GeometryArgs,
}

enum Failure {
    Usage(String),
    Data(String),
    Decode(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Decode(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Decode(m) => m,
        }
    }
}

impl From<io::IoError> for Failure {
    fn from(e: io::IoError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<CodecError> for Failure {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Decode(d) => Failure::Decode(d.to_string()),
            CodecError::Config(c) => Failure::Usage(c.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

fn data_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    if path.as_os_str() == "-" {
        let mut buf = Vec::new();
        std::io::stdin().read_to_end(&mut buf).map_err(data_err(path))?;
        Ok(buf)
    } else {
        fs::read(path).map_err(data_err(path))
    }
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if path.as_os_str() == "-" {
        let mut out = std::io::stdout().lock();
        out.write_all(bytes).and_then(|_| out.flush()).map_err(data_err(path))
    } else {
        fs::write(path, bytes).map_err(data_err(path))
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_output(Path::new("-"), text.as_bytes())
}

fn frame_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            out.extend(io::sequence_files(p)?);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn load_frames(paths: &[PathBuf], format: Option<CloudFormat>) -> Result<Vec<PointCloud>, Failure> {
    paths
        .iter()
        .map(|p| io::ingest(p, format).map_err(Failure::from))
        .collect()
}

fn imu_motion(path: &Path, n: usize, period: f64, t0: Option<f64>, v0: Vec3) -> Result<MotionSource, Failure> {
    let samples = io::load_imu(path)?;
    let start = t0.or_else(|| samples.first().map(|s| s.t)).unwrap_or(0.0);
    Ok(MotionSource::Imu {
        samples,
        frame_times: (0..n).map(|i| start + i as f64 * period).collect(),
        v0,
    })
}

fn encode(a: EncodeArgs) -> Result<(), Failure> {
    if a.tile.len() != 2 {
        return Err(Failure::Usage("--tile takes a width and a height".into()));
    }
    let cfg = CodecConfig {
        mode: a.mode,
        tau: a.tau,
        tile_w: a.tile[0],
        tile_h: a.tile[1],
        geometry: a.geometry.geometry().map_err(Failure::Usage)?,
        n_frames: a.frames,
        k_index: a.key,
        range_quant: a.range_quant,
        threads: a.threads,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if !(a.frame_period > 0.0) {
        return Err(Failure::Usage("--frame-period must be positive".into()));
    }
    if a.v0.as_ref().is_some_and(|v| v.len() != 3) {
        return Err(Failure::Usage("--v0 takes three comma-separated values".into()));
    }
    if let Some(path) = &a.dump_config {
        let json = serde_json::to_string_pretty(&cfg).expect("config serializes");
        fs::write(path, json).map_err(data_err(path))?;
    }

    let paths = frame_paths(&a.inputs)?;
    if paths.is_empty() {
        return Err(Failure::Data("no input frames found".into()));
    }
    let clouds = load_frames(&paths, a.format)?;
    let v0 = a.v0.as_deref().map_or([0.0; 3], |v| [v[0], v[1], v[2]]);
    let motion = match (&a.imu, &a.poses) {
        (Some(p), _) => imu_motion(p, clouds.len(), a.frame_period, a.t0, v0)?,
        (_, Some(p)) => MotionSource::Poses(io::load_poses(p)?),
        _ => MotionSource::Identity,
    };
    let blobs = compress_sequence(&clouds, &motion, &cfg)?;
    let bytes: Vec<u8> = blobs.iter().flat_map(|b| b.blob.iter().copied()).collect();
    write_output(&a.out, &bytes)?;
    let points: usize = clouds.iter().map(PointCloud::len).sum();
    eprintln!(
        "{} frames, {} points -> {} bytes in {} blob(s), rate {:.1}",
        clouds.len(),
        points,
        bytes.len(),
        blobs.len(),
        (points * 12) as f64 / bytes.len() as f64
    );
    if let Some(path) = &a.report {
        let reports: Vec<_> = blobs.iter().map(|b| &b.report).collect();
        let json = serde_json::to_string_pretty(&reports).expect("report serializes");
        fs::write(path, json).map_err(data_err(path))?;
    }
    Ok(())
}

fn decode_all(bytes: &[u8]) -> Result<Vec<PointCloud>, Failure> {
    let blobs = split_blobs(bytes).map_err(|e| Failure::Decode(e.to_string()))?;
    let mut clouds = Vec::new();
    for b in blobs {
        let d = decompress(b).map_err(|e| Failure::Decode(e.to_string()))?;
        clouds.extend(d.clouds);
    }
    Ok(clouds)
}

fn decode(a: DecodeArgs) -> Result<(), Failure> {
    let bytes = read_input(&a.input)?;
    let clouds = decode_all(&bytes)?;
    fs::create_dir_all(&a.out_dir).map_err(data_err(&a.out_dir))?;
    for (i, c) in clouds.iter().enumerate() {
        let path = a.out_dir.join(format!("frame_{i:06}.{}", a.format.extension()));
        io::write_cloud(&path, c, a.format)?;
    }
    eprintln!("decoded {} frames into {}", clouds.len(), a.out_dir.display());
    Ok(())
}

fn info(input: &Path) -> Result<(), Failure> {
    let bytes = read_input(input)?;
    let blobs = split_blobs(&bytes).map_err(|e| Failure::Decode(e.to_string()))?;
    let mut out = Vec::new();
    for b in blobs {
        let i = inspect(b).map_err(|e| Failure::Decode(e.to_string()))?;
        out.push(serde_json::json!({
            "version": i.version,
            "total_bytes": i.total_bytes,
            "payload_bytes": i.payload_bytes,
            "coded_bytes": i.coded_bytes,
            "config": i.config,
        }));
    }
    print_json(&out)
}

fn load_any(path: &Path) -> Result<Vec<PointCloud>, Failure> {
    let paths = frame_paths(&[path.to_path_buf()])?;
    load_frames(&paths, None)
}

fn metrics(a: MetricsArgs) -> Result<(), Failure> {
    let source = load_any(&a.source)?;
    let decoded = load_any(&a.decoded)?;
    if source.len() != decoded.len() {
        return Err(Failure::Data(format!(
            "{} source frames but {} decoded",
            source.len(),
            decoded.len()
        )));
    }
    let mut forward = CloudError::default();
    let mut backward = CloudError::default();
    for (s, d) in source.iter().zip(&decoded) {
        let e = pair_error(s, d);
        forward = forward.merge(&e.decoded_to_source);
        backward = backward.merge(&e.source_to_decoded);
    }
    let points: usize = source.iter().map(PointCloud::len).sum();
    let blob_bytes = match &a.blob {
        Some(p) => Some(fs::metadata(p).map_err(data_err(p))?.len() as usize),
        None => None,
    };
    let json = serde_json::json!({
        "frames": source.len(),
        "points": points,
        "decoded_points": decoded.iter().map(PointCloud::len).sum::<usize>(),
        "blob_bytes": blob_bytes,
        "compression_rate": blob_bytes.map(|b| (points * 12) as f64 / b as f64),
        "max_err": forward.max,
        "rmse": forward.rmse,
        "source_max_err": backward.max,
        "source_rmse": backward.rmse,
    });
    print_json(&json)
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let geometry = a.geometry.geometry().map_err(Failure::Usage)?;
    let sweep = Sweep {
        modes: a.modes,
        n_frames: a.n_frames,
        taus: a.tau,
        threads: a.threads,
        errors: !a.no_errors,
    };
    let base = CodecConfig {
        geometry,
        ..CodecConfig::default()
    };
    for &n in &sweep.n_frames {
        for &tau in &sweep.taus {
            CodecConfig {
                n_frames: n,
                tau,
                ..base.clone()
            }
            .validate()
            .map_err(|e| Failure::Usage(e.to_string()))?;
        }
    }
    let paths = io::sequence_files(&a.dir)?;
    if paths.is_empty() {
        return Err(Failure::Data(format!("no frames in {}", a.dir.display())));
    }
    let clouds = load_frames(&paths, None)?;
    let poses = a.dir.join("poses.txt");
    let imu = a.dir.join("imu.csv");
    let motion = if poses.is_file() {
        MotionSource::Poses(io::load_poses(&poses)?)
    } else if imu.is_file() {
        imu_motion(&imu, clouds.len(), a.frame_period, None, [0.0; 3])?
    } else {
        MotionSource::Identity
    };
    let rows = run_sweep(&clouds, &motion, &base, &sweep)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).map_err(|e| Failure::Data(e.to_string()))?;
    match &a.out {
        Some(p) => fs::write(p, &buf).map_err(data_err(p)),
        None => write_output(Path::new("-"), &buf),
    }
}

fn synth(a: SynthArgs) -> Result<(), Failure> {
    let geometry = a.geometry.geometry().map_err(Failure::Usage)?;
    if a.frames == 0 || !(a.frame_period > 0.0) || a.noise < 0.0 || !(0.0..=1.0).contains(&a.jitter) {
        return Err(Failure::Usage(
            "need frames > 0, frame period > 0, noise >= 0, jitter in [0, 1]".into(),
        ));
    }
    let dir = match a.scene {
        SceneKind::Corridor => Scene::corridor_axis(),
        _ => [0.0, 1.0, 0.0],
    };
    let params = SceneParams {
        geometry,
        velocity: [dir[0] * a.speed, dir[1] * a.speed, dir[2] * a.speed],
        yaw_rate: a.yaw_rate,
        frame_period: a.frame_period,
        azimuth_jitter: a.jitter,
        range_noise: a.noise,
        seed: a.seed,
        ..SceneParams::default()
    };
    let scene = Scene::new(a.scene, params);
    fs::create_dir_all(&a.out_dir).map_err(data_err(&a.out_dir))?;
    let t = Instant::now();
    for (i, cloud) in scene.frames(a.frames).iter().enumerate() {
        let path = a.out_dir.join(format!("frame_{i:06}.{}", a.format.extension()));
        io::write_cloud(&path, cloud, a.format)?;
    }
    let poses = a.out_dir.join("poses.txt");
    fs::write(&poses, io::write_poses(&scene.poses(a.frames))).map_err(data_err(&poses))?;
    if let Some(rate) = a.imu_rate {
        let (samples, v0) = scene.imu(a.frames, rate);
        let path = a.out_dir.join("imu.csv");
        fs::write(&path, io::write_imu_csv(&samples)).map_err(data_err(&path))?;
        eprintln!("initial body velocity {:?}", v0);
    }
    eprintln!(
        "wrote {} frames to {} in {:.1?}",
        a.frames,
        a.out_dir.display(),
        t.elapsed()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Info { input } => info(&input),
        Command::Metrics(a) => metrics(a),
        Command::Bench(a) => bench(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("stpc: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
