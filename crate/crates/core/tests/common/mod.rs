#![allow(dead_code)]

use stpc::bitstream::{decompress, decompress_images, deserialize, Encoded};
use stpc::motion::transform_cloud;
use stpc::range_image::project;
use stpc::range_image::{AngularResolution, ImageGeometry};
use stpc::spatial::{EncodedRow, TileGrid};
use stpc::temporal::ChannelCoverage;
use stpc::{CodecConfig, PointCloud};

/// Small full-circle geometry for fast tests.
pub fn small_geometry() -> ImageGeometry {
    ImageGeometry::new(
        360,
        16,
        AngularResolution::new(std::f64::consts::TAU / 360.0, 0.02).unwrap(),
        1.4,
    )
    .unwrap()
}

fn mark(mask: &mut [bool], grid: &TileGrid, rows: &[EncodedRow]) {
    for row in rows {
        for run in &row.runs {
            for idx in grid.span_pixels(row.row_id as usize, run.s as usize, run.len as usize) {
                mask[idx] = true;
            }
        }
    }
}

/// Recomputes per-channel coverage from the blob alone and checks that the
/// three mechanisms are disjoint and together cover every valid pixel.
pub fn partition_from_blob(blob: &[u8]) -> Result<Vec<ChannelCoverage>, String> {
    let (encoded, _) = deserialize(blob).map_err(|e| e.to_string())?;
    let (images, _, _) = decompress_images(blob).map_err(|e| e.to_string())?;
    let pixels = encoded.geometry().pixel_count();
    let mut out = Vec::new();
    for (ch, image) in images.iter().enumerate() {
        let mut temporal = vec![false; pixels];
        let mut spatial = vec![false; pixels];
        let residual_entries = match &encoded {
            Encoded::Single(s) => {
                mark(&mut spatial, &s.grid, &s.frames[ch].rows);
                &s.frames[ch].residual.entries
            }
            Encoded::Stream(s) => {
                for run in s.temporal_runs.iter().filter(|r| r.offsets[ch].is_some()) {
                    for idx in s
                        .grid
                        .span_pixels(run.row_id as usize, run.s as usize, run.len as usize)
                    {
                        temporal[idx] = true;
                    }
                }
                mark(&mut spatial, &s.grid, &s.fallback_rows[ch]);
                &s.residuals[ch].entries
            }
        };
        let mut residual = vec![false; pixels];
        for e in residual_entries {
            let i = e.index as usize;
            if residual[i] {
                return Err(format!("channel {ch}: duplicate residual pixel {i}"));
            }
            residual[i] = true;
        }
        let mut cov = ChannelCoverage::default();
        for idx in 0..pixels {
            let t = temporal[idx];
            let s = spatial[idx] && !t;
            let r = residual[idx];
            if r && (temporal[idx] || spatial[idx]) {
                return Err(format!("channel {ch}: residual pixel {idx} also inside a plane span"));
            }
            if !image.is_valid(idx) {
                if r {
                    return Err(format!("channel {ch}: residual pixel {idx} decodes invalid"));
                }
                continue;
            }
            match (t, s, r) {
                (true, false, false) => cov.temporal += 1,
                (false, true, false) => cov.spatial += 1,
                (false, false, true) => cov.residual += 1,
                _ => return Err(format!("channel {ch}: valid pixel {idx} has no unique encoding")),
            }
            cov.valid += 1;
        }
        out.push(cov);
    }
    Ok(out)
}

/// Checks one encoded group pixel by pixel and point by point.
pub fn error_bound_violations(clouds: &[PointCloud], cfg: &CodecConfig, blob: &[u8]) -> (usize, usize) {
    let (encoded, _) = deserialize(blob).unwrap();
    let (images, transforms, _) = decompress_images(blob).unwrap();
    let decoded = decompress(blob).unwrap().clouds;
    let g: ImageGeometry = cfg.geometry;
    let half_q = cfg.range_quant / 2.0;
    let mut violations = 0;
    let mut checked = 0;
    for (ch, cloud) in clouds.iter().enumerate() {
        let aligned = transform_cloud(cloud, &transforms[ch]);
        let truth = project(&aligned, &g).image;
        let residual = match &encoded {
            Encoded::Single(s) => &s.frames[ch].residual,
            Encoded::Stream(s) => &s.residuals[ch],
        };
        let mut is_residual = vec![false; g.pixel_count()];
        for e in &residual.entries {
            is_residual[e.index as usize] = true;
        }
        let mut rank = vec![usize::MAX; g.pixel_count()];
        let mut next = 0;
        for idx in 0..g.pixel_count() {
            if truth.is_valid(idx) != images[ch].is_valid(idx) {
                violations += 1;
            }
            let (Some(r), Some(r_hat)) = (truth.range(idx), images[ch].range(idx)) else {
                continue;
            };
            rank[idx] = next;
            next += 1;
            let bound = if is_residual[idx] { half_q } else { cfg.tau };
            if !((r - r_hat).abs() <= bound) {
                violations += 1;
            }
        }
        for (p, q) in cloud.iter().zip(aligned.iter()) {
            let Some((u, v, r)) = g.pixel_of(q) else { continue };
            let idx = g.index(u, v);
            if truth.range(idx) != Some(r) || rank[idx] == usize::MAX {
                continue;
            }
            checked += 1;
            let d = p.distance(&decoded[ch].points[rank[idx]]);
            if !(d <= cfg.tau + g.angular_bound(r) + half_q) {
                violations += 1;
            }
        }
    }
    (violations, checked)
}
