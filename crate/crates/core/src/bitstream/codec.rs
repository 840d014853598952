use std::ops::Range;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use super::{deserialize, serialize, CodecConfig, ConfigError, DecodeError, Encoded, Mode, SpatialFrames};
use crate::cloud::PointCloud;
use crate::motion::{
    build_stack, frame_transforms, integrate_imu, transform_cloud, transforms_from_poses, ChannelStats, ImuSample,
    MotionError, RigidTransform, Vec3,
};
use crate::range_image::{unproject, RangeImage, RayTable};
use crate::spatial::{decode_spatial_with_rays, encode_spatial_with_rays, spatial_coverage, DecodeDiagnostics};
use crate::temporal::{decode_stream_images, encode_stream_with_rays, stream_coverage, ChannelCoverage};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("{0}")]
    Input(String),
}

/// Where per-frame motion comes from.
#[derive(Debug, Clone)]
pub enum MotionSource {
    /// Frames are already in one coordinate system.
    Identity,
    /// IMU samples; `frame_times[i]` is the capture time of frame `i` and
    /// `v0` the velocity at `frame_times[0]`.
    Imu {
        samples: Vec<ImuSample>,
        frame_times: Vec<f64>,
        v0: Vec3,
    },
    /// Sensor-to-world pose per frame.
    Poses(Vec<RigidTransform>),
}

impl MotionSource {
    fn frames(&self) -> Option<usize> {
        match self {
            MotionSource::Identity => None,
            MotionSource::Imu { frame_times, .. } => Some(frame_times.len()),
            MotionSource::Poses(p) => Some(p.len()),
        }
    }

    /// Transforms into the key frame of the frames in `range`.
    pub fn group_transforms(&self, range: Range<usize>, k: usize) -> Result<Vec<RigidTransform>, MotionError> {
        match self {
            MotionSource::Identity => Ok(vec![RigidTransform::IDENTITY; range.len()]),
            MotionSource::Poses(p) => transforms_from_poses(&p[range], k),
            MotionSource::Imu {
                samples,
                frame_times,
                v0,
            } => {
                let v = if range.start == 0 {
                    *v0
                } else {
                    integrate_imu(samples, frame_times[0], frame_times[range.start], *v0)?.velocity
                };
                frame_transforms(samples, &frame_times[range], k, v)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct StageTimings {
    /// Alignment and projection.
    pub project_ms: f64,
    pub encode_ms: f64,
    /// Serialization and entropy coding.
    pub serialize_ms: f64,
}

impl StageTimings {
    pub fn total_ms(&self) -> f64 {
        self.project_ms + self.encode_ms + self.serialize_ms
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CompressionReport {
    pub frames: usize,
    pub points: usize,
    /// Three f32 coordinates per input point.
    pub raw_bytes: usize,
    pub blob_bytes: usize,
    pub projection: Vec<ChannelStats>,
    pub coverage: Vec<ChannelCoverage>,
    pub timings: StageTimings,
}

impl CompressionReport {
    pub fn ratio(&self) -> f64 {
        self.raw_bytes as f64 / self.blob_bytes as f64
    }

    pub fn dropped_points(&self) -> usize {
        self.projection.iter().map(ChannelStats::dropped).sum()
    }

    fn fraction(&self, f: impl Fn(&ChannelCoverage) -> usize) -> f64 {
        let valid: usize = self.coverage.iter().map(|c| c.valid).sum();
        if valid == 0 {
            return 0.0;
        }
        self.coverage.iter().map(f).sum::<usize>() as f64 / valid as f64
    }

    /// Share of valid pixels reconstructed from temporal runs.
    pub fn temporal_fraction(&self) -> f64 {
        self.fraction(|c| c.temporal)
    }

    pub fn spatial_fraction(&self) -> f64 {
        self.fraction(|c| c.spatial)
    }

    pub fn residual_fraction(&self) -> f64 {
        self.fraction(|c| c.residual)
    }
}

#[derive(Debug, Clone)]
pub struct Compressed {
    pub blob: Vec<u8>,
    pub report: CompressionReport,
}

#[derive(Debug, Clone)]
pub struct Decompressed {
    pub clouds: Vec<PointCloud>,
    pub config: CodecConfig,
    pub diagnostics: DecodeDiagnostics,
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CodecError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CodecError::Input(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn compress_group(
    clouds: &[PointCloud],
    transforms: Vec<RigidTransform>,
    cfg: &CodecConfig,
    rays: &RayTable,
) -> Result<Compressed, CodecError> {
    let grid = cfg.grid();
    let n = clouds.len();
    let t0 = Instant::now();
    let (mut encoded, projection, coverage, t_project) = match cfg.mode {
        Mode::Single => {
            let identity = vec![RigidTransform::IDENTITY; n];
            let stack = build_stack(clouds, &identity, &cfg.geometry, 0)?;
            let t_project = t0.elapsed();
            let frames: Vec<_> = stack
                .channels
                .par_iter()
                .map(|img| encode_spatial_with_rays(img, rays, &grid, cfg.tau))
                .collect();
            let coverage = stack
                .channels
                .iter()
                .zip(&frames)
                .map(|(img, f)| {
                    let c = spatial_coverage(img, &grid, f);
                    ChannelCoverage {
                        temporal: 0,
                        spatial: c.plane,
                        residual: c.residual,
                        valid: c.valid,
                    }
                })
                .collect();
            let enc = Encoded::Single(SpatialFrames {
                geometry: cfg.geometry,
                grid,
                frames,
            });
            (enc, stack.stats, coverage, t_project)
        }
        Mode::Stream => {
            let k = cfg.key_index(n);
            // the decoder sees f32 transforms, so align with exactly those
            let transforms: Vec<_> = transforms.iter().map(RigidTransform::to_f32_precision).collect();
            let stack = build_stack(clouds, &transforms, &cfg.geometry, k)?;
            let t_project = t0.elapsed();
            let enc = encode_stream_with_rays(&stack, rays, &grid, cfg.tau);
            let coverage = stream_coverage(&stack, &enc).map_err(CodecError::Input)?;
            (Encoded::Stream(enc), stack.stats, coverage, t_project)
        }
    };
    let t_encode = t0.elapsed() - t_project;
    encoded.quantize_residuals(cfg.range_quant);
    let t1 = Instant::now();
    let blob = serialize(&encoded, cfg);
    let timings = StageTimings {
        project_ms: ms(t_project),
        encode_ms: ms(t_encode),
        serialize_ms: ms(t1.elapsed()),
    };
    let points = clouds.iter().map(PointCloud::len).sum();
    let report = CompressionReport {
        frames: n,
        points,
        raw_bytes: points * 12,
        blob_bytes: blob.len(),
        projection,
        coverage,
        timings,
    };
    log::debug!(
        "group of {n}: {} bytes, ratio {:.1}, {:.1} ms",
        blob.len(),
        report.ratio(),
        timings.total_ms()
    );
    Ok(Compressed { blob, report })
}

fn check_motion(clouds: &[PointCloud], motion: &MotionSource) -> Result<(), CodecError> {
    if clouds.is_empty() {
        return Err(CodecError::Input("no frames to compress".into()));
    }
    if let Some(m) = motion.frames() {
        if m != clouds.len() {
            return Err(MotionError::Count {
                expected: clouds.len(),
                got: m,
            }
            .into());
        }
    }
    Ok(())
}

/// Compresses `clouds` as one blob. In stream mode the key frame is
/// `cfg.k_index` or the middle frame.
pub fn compress(clouds: &[PointCloud], motion: &MotionSource, cfg: &CodecConfig) -> Result<Compressed, CodecError> {
    cfg.validate()?;
    check_motion(clouds, motion)?;
    if clouds.len() > super::MAX_FRAMES {
        return Err(CodecError::Input(format!("{} frames exceed one blob", clouds.len())));
    }
    if let Some(k) = cfg.k_index {
        if k >= clouds.len() {
            return Err(MotionError::KeyIndex { k, n: clouds.len() }.into());
        }
    }
    with_pool(cfg.threads, || {
        let rays = RayTable::new(&cfg.geometry);
        let transforms = match cfg.mode {
            Mode::Single => vec![RigidTransform::IDENTITY; clouds.len()],
            Mode::Stream => motion.group_transforms(0..clouds.len(), cfg.key_index(clouds.len()))?,
        };
        compress_group(clouds, transforms, cfg, &rays)
    })?
}

/// Splits a sequence into groups of `cfg.n_frames` (the last may be shorter)
/// and compresses each into its own blob.
pub fn compress_sequence(
    clouds: &[PointCloud],
    motion: &MotionSource,
    cfg: &CodecConfig,
) -> Result<Vec<Compressed>, CodecError> {
    cfg.validate()?;
    check_motion(clouds, motion)?;
    with_pool(cfg.threads, || {
        let rays = RayTable::new(&cfg.geometry);
        let mut out = Vec::new();
        for start in (0..clouds.len()).step_by(cfg.n_frames) {
            let range = start..(start + cfg.n_frames).min(clouds.len());
            let n = range.len();
            let mut group_cfg = cfg.clone();
            group_cfg.n_frames = n;
            if group_cfg.k_index.is_some_and(|k| k >= n) {
                group_cfg.k_index = None;
            }
            let transforms = match cfg.mode {
                Mode::Single => vec![RigidTransform::IDENTITY; n],
                Mode::Stream => motion.group_transforms(range.clone(), group_cfg.key_index(n))?,
            };
            out.push(compress_group(&clouds[range], transforms, &group_cfg, &rays)?);
        }
        Ok(out)
    })?
}

/// Decodes one blob back into per-frame clouds in their own sensor frames.
pub fn decompress(blob: &[u8]) -> Result<Decompressed, DecodeError> {
    let (encoded, config) = deserialize(blob)?;
    let (clouds, diagnostics) = match &encoded {
        Encoded::Single(s) => {
            let (images, diagnostics) = single_images(s)?;
            (images.par_iter().map(unproject).collect(), diagnostics)
        }
        Encoded::Stream(s) => {
            let (images, diagnostics) = decode_stream_images(s)?;
            let clouds = images
                .par_iter()
                .zip(s.transforms.par_iter())
                .map(|(img, m)| transform_cloud(&unproject(img), &m.inverse_general()))
                .collect();
            (clouds, diagnostics)
        }
    };
    if diagnostics.failed_reconstructions > 0 {
        log::warn!("{} pixels failed to reconstruct", diagnostics.failed_reconstructions);
    }
    Ok(Decompressed {
        clouds,
        config,
        diagnostics,
    })
}

fn single_images(s: &SpatialFrames) -> Result<(Vec<RangeImage>, DecodeDiagnostics), DecodeError> {
    let rays = RayTable::new(&s.geometry);
    let decoded: Vec<_> = s
        .frames
        .par_iter()
        .map(|f| decode_spatial_with_rays(f, &s.grid, &rays))
        .collect::<Result<_, _>>()?;
    let mut diagnostics = DecodeDiagnostics::default();
    let images = decoded
        .into_iter()
        .map(|(img, d)| {
            diagnostics.failed_reconstructions += d.failed_reconstructions;
            img
        })
        .collect();
    Ok((images, diagnostics))
}

/// Decoded range images with the transforms that align each frame to the
/// key frame. In stream mode the images are in key-frame coordinates.
pub fn decompress_images(
    blob: &[u8],
) -> Result<(Vec<RangeImage>, Vec<RigidTransform>, DecodeDiagnostics), DecodeError> {
    let (encoded, _) = deserialize(blob)?;
    match &encoded {
        Encoded::Single(s) => {
            let (images, d) = single_images(s)?;
            let n = images.len();
            Ok((images, vec![RigidTransform::IDENTITY; n], d))
        }
        Encoded::Stream(s) => {
            let (images, d) = decode_stream_images(s)?;
            Ok((images, s.transforms.clone(), d))
        }
    }
}
