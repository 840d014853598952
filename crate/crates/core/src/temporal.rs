//! Multi-frame encoding against a key frame.
//!
//! Pass 1 grows runs on the key channel exactly like single-frame encoding,
//! then tries each run on every other channel with the normal held fixed and
//! only the offset refit. Pass 2 spatially encodes, channel by channel,
//! whatever pass 1 left uncovered. Pass 3 stores the leftovers as residuals.

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::motion::{FrameStack, RigidTransform};
use crate::plane::{offset_mean, plane_fits, Plane, Sample};
use crate::range_image::{unproject, ImageGeometry, RangeImage, RayTable};
use crate::spatial::{
    decode_channel, encode_rows, mark_rows, residual_for, row_layer, validate_rows, DecodeDiagnostics, EncodedRow,
    PlaneRun, ResidualMap, SpanLayer, StructureError, TileGrid,
};

/// A key-frame run reused across channels.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalRun {
    pub row_id: u32,
    pub s: u32,
    pub len: u32,
    pub plane: Plane,
    /// Offset `c'` per channel; `None` where the channel failed the test or
    /// has no valid pixels in the span. The key channel holds `plane.c`.
    pub offsets: Vec<Option<f64>>,
}

impl TemporalRun {
    fn plane_run(&self, c: f64) -> PlaneRun {
        PlaneRun {
            s: self.s,
            len: self.len,
            plane: self.plane.with_offset(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamEncoding {
    pub geometry: ImageGeometry,
    pub grid: TileGrid,
    pub k_index: usize,
    pub transforms: Vec<RigidTransform>,
    pub temporal_runs: Vec<TemporalRun>,
    /// Per-channel spatial runs over pixels that pass 1 did not cover.
    pub fallback_rows: Vec<Vec<EncodedRow>>,
    pub residuals: Vec<ResidualMap>,
}

impl StreamEncoding {
    pub fn channels(&self) -> usize {
        self.transforms.len()
    }
}

/// Valid-pixel counts per mechanism for one channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct ChannelCoverage {
    pub temporal: usize,
    pub spatial: usize,
    pub residual: usize,
    pub valid: usize,
}

impl ChannelCoverage {
    pub fn is_partition(&self) -> bool {
        self.temporal + self.spatial + self.residual == self.valid
    }
}

fn span_samples(image: &RangeImage, rays: &RayTable, grid: &TileGrid, row_id: u32, s: u32, len: u32) -> Vec<Sample> {
    grid.span_pixels(row_id as usize, s as usize, len as usize)
        .filter_map(|idx| image.range(idx).map(|r| Sample::new(*rays.ray(idx), r)))
        .collect()
}

/// Offset for one channel over a run's span, rounded to f32 before the test.
fn channel_offset(
    image: &RangeImage,
    rays: &RayTable,
    grid: &TileGrid,
    row_id: u32,
    run: &PlaneRun,
    tau: f64,
) -> Option<f64> {
    let samples = span_samples(image, rays, grid, row_id, run.s, run.len);
    if samples.is_empty() {
        return None;
    }
    let c = offset_mean(&run.plane, &samples) as f32 as f64;
    plane_fits(&run.plane.with_offset(c), &samples, tau).then_some(c)
}

fn temporal_mask(runs: &[TemporalRun], channel: usize, grid: &TileGrid, pixels: usize) -> Vec<bool> {
    let mut mask = vec![false; pixels];
    for run in runs.iter().filter(|r| r.offsets[channel].is_some()) {
        for idx in grid.span_pixels(run.row_id as usize, run.s as usize, run.len as usize) {
            mask[idx] = true;
        }
    }
    mask
}

pub fn encode_stream(stack: &FrameStack, grid: &TileGrid, tau: f64) -> StreamEncoding {
    let geometry = *stack.geometry().expect("frame stack has at least one channel");
    let rays = RayTable::new(&geometry);
    encode_stream_with_rays(stack, &rays, grid, tau)
}

pub fn encode_stream_with_rays(stack: &FrameStack, rays: &RayTable, grid: &TileGrid, tau: f64) -> StreamEncoding {
    let geometry = *rays.geometry();
    let n = stack.len();
    let k = stack.k_index;
    assert!(k < n, "key index out of range");
    let pixels = geometry.pixel_count();

    let key_rows = encode_rows(&stack.channels[k], rays, grid, tau);
    let flat: Vec<(u32, PlaneRun)> = key_rows
        .iter()
        .flat_map(|row| row.runs.iter().map(move |run| (row.row_id, *run)))
        .collect();
    let temporal_runs: Vec<TemporalRun> = flat
        .par_iter()
        .map(|(row_id, run)| {
            let offsets = (0..n)
                .map(|ch| {
                    if ch == k {
                        Some(run.plane.c)
                    } else {
                        channel_offset(&stack.channels[ch], rays, grid, *row_id, run, tau)
                    }
                })
                .collect();
            TemporalRun {
                row_id: *row_id,
                s: run.s,
                len: run.len,
                plane: run.plane,
                offsets,
            }
        })
        .collect();

    let per_channel: Vec<(Vec<EncodedRow>, ResidualMap)> = (0..n)
        .into_par_iter()
        .map(|ch| {
            let image = &stack.channels[ch];
            let mut covered = temporal_mask(&temporal_runs, ch, grid, pixels);
            let fallback = if ch == k {
                Vec::new()
            } else {
                let mut rest = image.clone();
                for (idx, c) in covered.iter().enumerate() {
                    if *c {
                        rest.clear(idx);
                    }
                }
                encode_rows(&rest, rays, grid, tau)
            };
            mark_rows(&mut covered, grid, &fallback);
            (fallback, residual_for(image, &covered))
        })
        .collect();
    let (fallback_rows, residuals) = per_channel.into_iter().unzip();

    StreamEncoding {
        geometry,
        grid: *grid,
        k_index: k,
        transforms: stack.transforms.clone(),
        temporal_runs,
        fallback_rows,
        residuals,
    }
}

/// Checks that every valid pixel of every channel is encoded by exactly one
/// mechanism and no invalid pixel is, and returns the per-channel counts.
pub fn stream_coverage(stack: &FrameStack, enc: &StreamEncoding) -> Result<Vec<ChannelCoverage>, String> {
    let grid = &enc.grid;
    let pixels = enc.geometry.pixel_count();
    let mut out = Vec::with_capacity(stack.len());
    for (ch, image) in stack.channels.iter().enumerate() {
        let temporal = temporal_mask(&enc.temporal_runs, ch, grid, pixels);
        let mut fallback = vec![false; pixels];
        mark_rows(&mut fallback, grid, &enc.fallback_rows[ch]);
        let mut residual = vec![false; pixels];
        for e in &enc.residuals[ch].entries {
            if residual[e.index as usize] {
                return Err(format!("channel {ch}: residual pixel {} listed twice", e.index));
            }
            residual[e.index as usize] = true;
        }
        let mut cov = ChannelCoverage::default();
        for idx in 0..pixels {
            let t = temporal[idx];
            let f = fallback[idx] && !t;
            let r = residual[idx];
            let claims = t as u8 + f as u8 + r as u8;
            if image.is_valid(idx) {
                cov.valid += 1;
                if claims != 1 {
                    return Err(format!("channel {ch}: valid pixel {idx} claimed {claims} times"));
                }
                cov.temporal += t as usize;
                cov.spatial += f as usize;
                cov.residual += r as usize;
            } else if r {
                return Err(format!("channel {ch}: invalid pixel {idx} stored as residual"));
            }
        }
        out.push(cov);
    }
    Ok(out)
}

fn validate(enc: &StreamEncoding) -> Result<(), StructureError> {
    let n = enc.channels();
    if n == 0 {
        return Err(StructureError::new("config", "no channels"));
    }
    if enc.k_index >= n {
        return Err(StructureError::new(
            "config",
            format!("key index {} >= {n}", enc.k_index),
        ));
    }
    if enc.fallback_rows.len() != n || enc.residuals.len() != n {
        return Err(StructureError::new("config", "per-channel section count mismatch"));
    }
    for run in &enc.temporal_runs {
        if run.offsets.len() != n {
            return Err(StructureError::new("temporal runs", "offset table has wrong width"));
        }
        if run.offsets[enc.k_index] != Some(run.plane.c) {
            return Err(StructureError::new(
                "temporal runs",
                "key channel offset differs from plane",
            ));
        }
    }
    for rows in &enc.fallback_rows {
        validate_rows(rows, &enc.grid, "fallback rows")?;
    }
    Ok(())
}

/// Per-channel range images in the key frame's coordinates.
pub fn decode_stream_images(enc: &StreamEncoding) -> Result<(Vec<RangeImage>, DecodeDiagnostics), StructureError> {
    validate(enc)?;
    let rays = RayTable::new(&enc.geometry);
    let decoded: Vec<_> = (0..enc.channels())
        .into_par_iter()
        .map(|ch| {
            let temporal = SpanLayer {
                section: "temporal runs",
                runs: enc
                    .temporal_runs
                    .iter()
                    .filter_map(|r| r.offsets[ch].map(|c| (r.row_id, r.plane_run(c))))
                    .collect(),
            };
            let fallback = row_layer("fallback rows", &enc.fallback_rows[ch]);
            decode_channel(&rays, &enc.grid, &[temporal, fallback], &enc.residuals[ch])
        })
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

/// Decoded clouds, each returned to its own sensor frame.
pub fn decode_stream(enc: &StreamEncoding) -> Result<Vec<PointCloud>, StructureError> {
    let (images, _) = decode_stream_images(enc)?;
    Ok(images
        .par_iter()
        .zip(enc.transforms.par_iter())
        .map(|(img, m)| {
            let cloud = unproject(img);
            if m.is_identity() {
                cloud
            } else {
                let back = m.inverse_general();
                cloud.iter().map(|p| back.apply(p)).collect()
            }
        })
        .collect())
}
