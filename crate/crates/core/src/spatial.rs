//! Single-frame encoding: horizontal tile growth over a range image.
//!
//! Each tile-row is scanned left to right. A run starts at a tile whose own
//! pixels fit a plane, then absorbs the next tile as long as the plane refit
//! on the whole union still passes the threshold on every pixel. Tiles that
//! cannot start a run go to the residual map.

use std::ops::Range;

use rayon::prelude::*;
use thiserror::Error;

use crate::plane::{plane_fits, FitError, Plane, PlaneAccumulator, Sample};
use crate::range_image::{reconstruct_from_plane, ImageGeometry, RangeImage, RayTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("tile dimensions must be at least 1x1 (got {0}x{1})")]
    BadTile(usize, usize),
}

/// Malformed plane runs or residual entries found while decoding.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("malformed {section}: {reason}")]
pub struct StructureError {
    pub section: &'static str,
    pub reason: String,
}

impl StructureError {
    pub(crate) fn new(section: &'static str, reason: impl Into<String>) -> Self {
        Self {
            section,
            reason: reason.into(),
        }
    }
}

/// Fixed tiling of an image; edge tiles may be partial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    pub tile_w: usize,
    pub tile_h: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    width: usize,
    height: usize,
}

impl TileGrid {
    pub fn new(geometry: &ImageGeometry, tile_w: usize, tile_h: usize) -> Result<Self, GridError> {
        if tile_w == 0 || tile_h == 0 {
            return Err(GridError::BadTile(tile_w, tile_h));
        }
        Ok(Self {
            tile_w,
            tile_h,
            tiles_x: geometry.width.div_ceil(tile_w),
            tiles_y: geometry.height.div_ceil(tile_h),
            width: geometry.width,
            height: geometry.height,
        })
    }

    pub fn columns(&self, tx: usize) -> Range<usize> {
        tx * self.tile_w..((tx + 1) * self.tile_w).min(self.width)
    }

    pub fn rows(&self, ty: usize) -> Range<usize> {
        ty * self.tile_h..((ty + 1) * self.tile_h).min(self.height)
    }

    /// Columns covered by `len` tiles starting at tile column `s`.
    pub fn span_columns(&self, s: usize, len: usize) -> Range<usize> {
        s * self.tile_w..((s + len) * self.tile_w).min(self.width)
    }

    /// Pixel indices of a run, row-major.
    pub fn span_pixels(&self, row_id: usize, s: usize, len: usize) -> impl Iterator<Item = usize> {
        let cols = self.span_columns(s, len);
        let width = self.width;
        self.rows(row_id)
            .flat_map(move |v| cols.clone().map(move |u| v * width + u))
    }

    fn matches(&self, geometry: &ImageGeometry) -> bool {
        self.width == geometry.width && self.height == geometry.height
    }
}

/// `len` adjacent tiles starting at tile column `s`, all reconstructed from one plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneRun {
    pub s: u32,
    pub len: u32,
    pub plane: Plane,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedRow {
    pub row_id: u32,
    pub runs: Vec<PlaneRun>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPixel {
    pub index: u32,
    pub range: f64,
}

/// Raw ranges for pixels no plane encodes, plus the invalid pixels that sit
/// inside plane-covered spans (the decoder would otherwise fill them).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResidualMap {
    /// Sorted by pixel index.
    pub entries: Vec<ResidualPixel>,
    /// Sorted pixel indices.
    pub holes: Vec<u32>,
}

impl ResidualMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Snaps every stored range to the serialized fixed-point grid.
    pub fn quantize(&mut self, step: f64) {
        for e in &mut self.entries {
            e.range = quantize_range(e.range, step);
        }
    }
}

/// Largest quantized value stored directly; the next code is the escape.
pub const RANGE_ESCAPE: u16 = u16::MAX;

/// Code for `range` at `step` meters per LSB, or `None` when it needs the escape.
pub fn range_code(range: f64, step: f64) -> Option<u16> {
    let q = (range / step).round();
    (q >= 0.0 && q < RANGE_ESCAPE as f64).then_some(q as u16)
}

/// The value a range decodes to after fixed-point storage (or f32 escape).
pub fn quantize_range(range: f64, step: f64) -> f64 {
    match range_code(range, step) {
        Some(q) => q as f64 * step,
        None => range as f32 as f64,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpatialEncoding {
    pub rows: Vec<EncodedRow>,
    pub residual: ResidualMap,
}

impl SpatialEncoding {
    pub fn run_count(&self) -> usize {
        self.rows.iter().map(|r| r.runs.len()).sum()
    }
}

/// How many valid pixels each mechanism encodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SpatialCoverage {
    pub plane: usize,
    pub residual: usize,
    pub valid: usize,
}

/// Valid pixels of a tile, in row-major order.
pub(crate) fn tile_samples(
    image: &RangeImage,
    rays: &RayTable,
    grid: &TileGrid,
    tx: usize,
    ty: usize,
    out: &mut Vec<Sample>,
) {
    out.clear();
    let width = image.width();
    let ranges = image.ranges();
    let valid = image.valid_mask();
    for v in grid.rows(ty) {
        for u in grid.columns(tx) {
            let idx = v * width + u;
            if valid[idx] {
                out.push(Sample::new(*rays.ray(idx), ranges[idx]));
            }
        }
    }
}

fn fit_rounded(acc: &PlaneAccumulator) -> Result<Plane, FitError> {
    acc.fit().map(|p| p.to_f32_precision())
}

/// Runs for one tile-row. Planes are rounded to f32 before testing so the
/// decoder reproduces exactly the ranges that passed.
pub(crate) fn grow_tile_row(
    image: &RangeImage,
    rays: &RayTable,
    grid: &TileGrid,
    ty: usize,
    tau: f64,
) -> Vec<PlaneRun> {
    let mut runs = Vec::new();
    let mut tile = Vec::with_capacity(grid.tile_w * grid.tile_h);
    let mut next = Vec::with_capacity(grid.tile_w * grid.tile_h);
    let mut tx = 0;
    while tx < grid.tiles_x {
        tile_samples(image, rays, grid, tx, ty, &mut tile);
        if tile.len() < 3 {
            tx += 1;
            continue;
        }
        let mut acc = PlaneAccumulator::new();
        acc.extend(&tile);
        let plane = match fit_rounded(&acc) {
            Ok(p) if plane_fits(&p, &tile, tau) => p,
            _ => {
                tx += 1;
                continue;
            }
        };
        let mut union = std::mem::take(&mut tile);
        let mut current = plane;
        let mut len = 1;
        while tx + len < grid.tiles_x {
            tile_samples(image, rays, grid, tx + len, ty, &mut next);
            let mut trial = acc.clone();
            trial.extend(&next);
            let Ok(candidate) = fit_rounded(&trial) else {
                break;
            };
            // the new tile is the likeliest to fail, so test it first
            if !plane_fits(&candidate, &next, tau) || !plane_fits(&candidate, &union, tau) {
                break;
            }
            acc = trial;
            union.append(&mut next);
            current = candidate;
            len += 1;
        }
        runs.push(PlaneRun {
            s: tx as u32,
            len: len as u32,
            plane: current,
        });
        tile = union;
        tx += len;
    }
    runs
}

/// Runs for every tile-row, in row order. Rows are encoded in parallel.
pub(crate) fn encode_rows(image: &RangeImage, rays: &RayTable, grid: &TileGrid, tau: f64) -> Vec<EncodedRow> {
    (0..grid.tiles_y)
        .into_par_iter()
        .map(|ty| EncodedRow {
            row_id: ty as u32,
            runs: grow_tile_row(image, rays, grid, ty, tau),
        })
        .filter(|row| !row.runs.is_empty())
        .collect()
}

pub(crate) fn mark_rows(covered: &mut [bool], grid: &TileGrid, rows: &[EncodedRow]) {
    for row in rows {
        for run in &row.runs {
            for idx in grid.span_pixels(row.row_id as usize, run.s as usize, run.len as usize) {
                covered[idx] = true;
            }
        }
    }
}

/// Residual entries for valid uncovered pixels and holes for invalid covered ones.
pub(crate) fn residual_for(image: &RangeImage, covered: &[bool]) -> ResidualMap {
    let mut map = ResidualMap::default();
    for (idx, (&valid, &cov)) in image.valid_mask().iter().zip(covered).enumerate() {
        match (valid, cov) {
            (true, false) => map.entries.push(ResidualPixel {
                index: idx as u32,
                range: image.ranges()[idx],
            }),
            (false, true) => map.holes.push(idx as u32),
            _ => {}
        }
    }
    map
}

pub fn encode_spatial(image: &RangeImage, grid: &TileGrid, tau: f64) -> SpatialEncoding {
    let rays = RayTable::new(image.geometry());
    encode_spatial_with_rays(image, &rays, grid, tau)
}

pub fn encode_spatial_with_rays(image: &RangeImage, rays: &RayTable, grid: &TileGrid, tau: f64) -> SpatialEncoding {
    assert!(grid.matches(image.geometry()), "tile grid does not match image");
    let rows = encode_rows(image, rays, grid, tau);
    let mut covered = vec![false; image.geometry().pixel_count()];
    mark_rows(&mut covered, grid, &rows);
    let residual = residual_for(image, &covered);
    SpatialEncoding { rows, residual }
}

/// Counts which mechanism encodes each valid pixel of `image`.
pub fn spatial_coverage(image: &RangeImage, grid: &TileGrid, enc: &SpatialEncoding) -> SpatialCoverage {
    let mut covered = vec![false; image.geometry().pixel_count()];
    mark_rows(&mut covered, grid, &enc.rows);
    let plane = covered
        .iter()
        .zip(image.valid_mask())
        .filter(|(c, v)| **c && **v)
        .count();
    SpatialCoverage {
        plane,
        residual: enc.residual.len(),
        valid: image.valid_count(),
    }
}

/// Counters for pixels the decoder could not reconstruct.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeDiagnostics {
    pub failed_reconstructions: usize,
}

/// Plane layers applied in order: earlier layers win where spans overlap.
pub(crate) struct SpanLayer {
    pub section: &'static str,
    pub runs: Vec<(u32, PlaneRun)>,
}

pub(crate) fn validate_rows(rows: &[EncodedRow], grid: &TileGrid, section: &'static str) -> Result<(), StructureError> {
    let mut last_row = None;
    for row in rows {
        if row.row_id as usize >= grid.tiles_y {
            return Err(StructureError::new(section, format!("row {} out of range", row.row_id)));
        }
        if last_row.is_some_and(|r| r >= row.row_id) {
            return Err(StructureError::new(section, "rows not strictly increasing"));
        }
        last_row = Some(row.row_id);
        let mut end = 0u64;
        for run in &row.runs {
            validate_run(run, grid, section)?;
            if (run.s as u64) < end {
                return Err(StructureError::new(section, "runs overlap or are unsorted"));
            }
            end = run.s as u64 + run.len as u64;
        }
    }
    Ok(())
}

pub(crate) fn validate_run(run: &PlaneRun, grid: &TileGrid, section: &'static str) -> Result<(), StructureError> {
    if run.len == 0 || run.s as u64 + run.len as u64 > grid.tiles_x as u64 {
        return Err(StructureError::new(
            section,
            format!("run s={} len={} exceeds {} tiles", run.s, run.len, grid.tiles_x),
        ));
    }
    if !run.plane.is_finite() {
        return Err(StructureError::new(section, "non-finite plane coefficients"));
    }
    Ok(())
}

/// Rebuilds one channel from plane layers and a residual map.
pub(crate) fn decode_channel(
    rays: &RayTable,
    grid: &TileGrid,
    layers: &[SpanLayer],
    residual: &ResidualMap,
) -> Result<(RangeImage, DecodeDiagnostics), StructureError> {
    let geometry = *rays.geometry();
    let n = geometry.pixel_count();
    let mut image = RangeImage::empty(geometry);
    let mut filled = vec![false; n];
    let mut diagnostics = DecodeDiagnostics::default();

    let mut last = None;
    for &h in &residual.holes {
        if h as usize >= n || last.is_some_and(|l| l >= h) {
            return Err(StructureError::new("residual", "hole indices out of range or unsorted"));
        }
        last = Some(h);
        filled[h as usize] = true;
    }

    for layer in layers {
        for (row_id, run) in &layer.runs {
            if *row_id as usize >= grid.tiles_y {
                return Err(StructureError::new(layer.section, format!("row {row_id} out of range")));
            }
            validate_run(run, grid, layer.section)?;
            for idx in grid.span_pixels(*row_id as usize, run.s as usize, run.len as usize) {
                if filled[idx] {
                    continue;
                }
                filled[idx] = true;
                match reconstruct_from_plane(&run.plane, rays.ray(idx)) {
                    Ok(r) if r.is_finite() => image.set(idx, r),
                    _ => diagnostics.failed_reconstructions += 1,
                }
            }
        }
    }

    let mut last = None;
    for e in &residual.entries {
        let idx = e.index as usize;
        if idx >= n || last.is_some_and(|l| l >= e.index) {
            return Err(StructureError::new(
                "residual",
                "entry indices out of range or unsorted",
            ));
        }
        last = Some(e.index);
        if filled[idx] {
            return Err(StructureError::new(
                "residual",
                format!("entry {idx} overlaps a plane-coded pixel"),
            ));
        }
        if !(e.range > 0.0 && e.range.is_finite()) {
            return Err(StructureError::new("residual", format!("bad range at pixel {idx}")));
        }
        image.set(idx, e.range);
    }
    Ok((image, diagnostics))
}

pub(crate) fn row_layer(section: &'static str, rows: &[EncodedRow]) -> SpanLayer {
    SpanLayer {
        section,
        runs: rows
            .iter()
            .flat_map(|row| row.runs.iter().map(move |run| (row.row_id, *run)))
            .collect(),
    }
}

pub fn decode_spatial(
    enc: &SpatialEncoding,
    grid: &TileGrid,
    geometry: &ImageGeometry,
) -> Result<(RangeImage, DecodeDiagnostics), StructureError> {
    let rays = RayTable::new(geometry);
    decode_spatial_with_rays(enc, grid, &rays)
}

pub fn decode_spatial_with_rays(
    enc: &SpatialEncoding,
    grid: &TileGrid,
    rays: &RayTable,
) -> Result<(RangeImage, DecodeDiagnostics), StructureError> {
    if !grid.matches(rays.geometry()) {
        return Err(StructureError::new("config", "tile grid does not match image"));
    }
    validate_rows(&enc.rows, grid, "plane rows")?;
    decode_channel(rays, grid, &[row_layer("plane rows", &enc.rows)], &enc.residual)
}
