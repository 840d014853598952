//! Parameter sweeps over a frame sequence, reported as CSV.
//!
//! Columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `mode` | `single` or `stream` |
//! | `n_frames` | frames per blob |
//! | `tau` | fit threshold, meters |
//! | `threads` | worker threads |
//! | `frames`, `points` | sequence size |
//! | `blob_bytes` | total size of all blobs |
//! | `rate` | `12 × points / blob_bytes` |
//! | `encode_fps`, `decode_fps` | frames per second, wall clock |
//! | `max_err`, `rmse` | decoded-to-source nearest-neighbor error, meters (empty when skipped) |
//! | `dropped_points` | collisions and out-of-view points |
//! | `temporal_fraction`, `spatial_fraction`, `residual_fraction` | share of valid pixels per encoding type |
//! | `project_ms`, `encode_ms`, `serialize_ms` | summed stage timings |

use std::io::Write;
use std::time::Instant;

use crate::bitstream::{compress_sequence, decompress, CodecConfig, CodecError, Mode, MotionSource, StageTimings};
use crate::cloud::PointCloud;
use crate::metrics::{nearest_error, CloudError};

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub modes: Vec<Mode>,
    pub n_frames: Vec<usize>,
    pub taus: Vec<f64>,
    pub threads: Vec<usize>,
    /// Compute nearest-neighbor errors; the slowest part of a sweep.
    pub errors: bool,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            modes: vec![Mode::Stream],
            n_frames: vec![1, 3, 5, 9],
            taus: vec![crate::plane::DEFAULT_TAU],
            threads: vec![0],
            errors: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BenchRow {
    pub mode: Mode,
    pub n_frames: usize,
    pub tau: f64,
    pub threads: usize,
    pub frames: usize,
    pub points: usize,
    pub blob_bytes: usize,
    pub rate: f64,
    pub encode_fps: f64,
    pub decode_fps: f64,
    pub max_err: Option<f64>,
    pub rmse: Option<f64>,
    pub dropped_points: usize,
    pub temporal_fraction: f64,
    pub spatial_fraction: f64,
    pub residual_fraction: f64,
    pub project_ms: f64,
    pub encode_ms: f64,
    pub serialize_ms: f64,
}

/// Compresses and decompresses the whole sequence once.
pub fn run_config(
    clouds: &[PointCloud],
    motion: &MotionSource,
    cfg: &CodecConfig,
    errors: bool,
) -> Result<BenchRow, CodecError> {
    let t0 = Instant::now();
    let blobs = compress_sequence(clouds, motion, cfg)?;
    let encode_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let mut decoded = Vec::with_capacity(clouds.len());
    for b in &blobs {
        decoded.extend(decompress(&b.blob)?.clouds);
    }
    let decode_s = t1.elapsed().as_secs_f64();

    let err = errors.then(|| {
        clouds
            .iter()
            .zip(&decoded)
            .map(|(src, dec)| nearest_error(dec, src))
            .fold(CloudError::default(), |a, b| a.merge(&b))
    });

    let mut timings = StageTimings::default();
    let (mut valid, mut temporal, mut spatial, mut residual, mut dropped) = (0, 0, 0, 0, 0);
    for b in &blobs {
        let r = &b.report;
        timings.project_ms += r.timings.project_ms;
        timings.encode_ms += r.timings.encode_ms;
        timings.serialize_ms += r.timings.serialize_ms;
        dropped += r.dropped_points();
        for c in &r.coverage {
            valid += c.valid;
            temporal += c.temporal;
            spatial += c.spatial;
            residual += c.residual;
        }
    }
    let frac = |x: usize| if valid == 0 { 0.0 } else { x as f64 / valid as f64 };
    let points: usize = clouds.iter().map(PointCloud::len).sum();
    let blob_bytes: usize = blobs.iter().map(|b| b.blob.len()).sum();
    Ok(BenchRow {
        mode: cfg.mode,
        n_frames: cfg.n_frames,
        tau: cfg.tau,
        threads: cfg.threads,
        frames: clouds.len(),
        points,
        blob_bytes,
        rate: (points * 12) as f64 / blob_bytes as f64,
        encode_fps: clouds.len() as f64 / encode_s,
        decode_fps: clouds.len() as f64 / decode_s,
        max_err: err.map(|e| e.max),
        rmse: err.map(|e| e.rmse),
        dropped_points: dropped,
        temporal_fraction: frac(temporal),
        spatial_fraction: frac(spatial),
        residual_fraction: frac(residual),
        project_ms: timings.project_ms,
        encode_ms: timings.encode_ms,
        serialize_ms: timings.serialize_ms,
    })
}

/// Every combination of the sweep, in mode, n, tau, threads order. `base`
/// supplies everything the sweep does not vary.
pub fn run_sweep(
    clouds: &[PointCloud],
    motion: &MotionSource,
    base: &CodecConfig,
    sweep: &Sweep,
) -> Result<Vec<BenchRow>, CodecError> {
    let mut rows = Vec::new();
    for &mode in &sweep.modes {
        for &n in &sweep.n_frames {
            for &tau in &sweep.taus {
                for &threads in &sweep.threads {
                    let cfg = CodecConfig {
                        mode,
                        n_frames: n,
                        tau,
                        threads,
                        ..base.clone()
                    };
                    let row = run_config(clouds, motion, &cfg, sweep.errors)?;
                    log::info!("{mode:?} n={n} tau={tau} threads={threads}: rate {:.1}", row.rate);
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
