//! The `.stpc` container: canonical serialization of encodings, fixed-point
//! residual ranges, canonical Huffman over the whole payload, and CRC-32.
//!
//! ```text
//! offset      size  field
//! 0           4     magic "STPC"
//! 4           2     format version (u16, currently 1)
//! 6           4     payload length before entropy coding (u32)
//! 10          128   Huffman code lengths, one nibble per byte value
//! 138         4     coded payload length in bytes (u32)
//! 142         n     coded payload, canonical codes, MSB first
//! 142+n       4     CRC-32 (IEEE) of bytes 6..142+n
//! ```
//!
//! All multi-byte fields are little-endian. The payload layout is described
//! in the book's format chapter.

mod codec;
pub mod huffman;
mod wire;

use thiserror::Error;

pub use codec::{
    compress, compress_sequence, decompress, decompress_images, CodecError, Compressed, CompressionReport,
    Decompressed, MotionSource, StageTimings,
};

use crate::motion::RigidTransform;
use crate::plane::Plane;
use crate::range_image::{AngularResolution, ImageGeometry};
use crate::spatial::{
    quantize_range, range_code, EncodedRow, PlaneRun, ResidualMap, ResidualPixel, SpatialEncoding, StructureError,
    TileGrid, RANGE_ESCAPE,
};
use crate::temporal::{StreamEncoding, TemporalRun};
use huffman::{CanonicalHuffman, EntropyCoder, HuffmanError, FRAME_HEADER};
use wire::{Reader, Writer};

pub const MAGIC: &[u8; 4] = b"STPC";
pub const VERSION: u16 = 1;
/// Magic, version, Huffman framing and checksum.
pub const OVERHEAD_BYTES: usize = 6 + FRAME_HEADER + 4;
/// Largest image a blob may describe.
pub const MAX_PIXELS: usize = 1 << 24;
pub const MAX_FRAMES: usize = u16::MAX as usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("not an STPC blob")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated {section} at byte {offset}")]
    Truncated { section: &'static str, offset: usize },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("entropy-coded payload: {0}")]
    Entropy(#[from] HuffmanError),
    #[error("invalid {section}: {reason}")]
    Invalid { section: &'static str, reason: String },
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error("{0} unexpected bytes after the blob")]
    TrailingBytes(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every frame spatially encoded on its own.
    Single,
    /// Frames encoded against a key frame.
    Stream,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid codec configuration: {0}")]
pub struct ConfigError(pub String);

/// Everything needed to encode; the subset that decoding needs is written
/// into every blob.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CodecConfig {
    pub mode: Mode,
    /// Fit threshold, meters of range error.
    pub tau: f64,
    pub tile_w: usize,
    pub tile_h: usize,
    pub geometry: ImageGeometry,
    /// Frames per blob.
    pub n_frames: usize,
    /// Key frame within a group; the middle frame when unset.
    pub k_index: Option<usize>,
    /// Meters per LSB of stored residual ranges.
    pub range_quant: f64,
    /// Worker threads; 0 uses every available core. Output does not depend on it.
    #[serde(default)]
    pub threads: usize,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Stream,
            tau: crate::plane::DEFAULT_TAU,
            tile_w: 4,
            tile_h: 4,
            geometry: ImageGeometry::hdl64(),
            n_frames: 5,
            k_index: None,
            range_quant: 0.005,
            threads: 0,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.range_quant > 0.0 && self.range_quant.is_finite()) {
            return bad(format!("range_quant must be positive, got {}", self.range_quant));
        }
        if self.tile_w == 0 || self.tile_h == 0 || self.tile_w > u16::MAX as usize || self.tile_h > u16::MAX as usize {
            return bad(format!("bad tile size {}x{}", self.tile_w, self.tile_h));
        }
        let g = &self.geometry;
        if let Err(e) = ImageGeometry::new(g.width, g.height, g.resolution, g.phi_offset) {
            return bad(e.to_string());
        }
        if g.pixel_count() > MAX_PIXELS || g.width > u32::MAX as usize {
            return bad(format!("image {}x{} is too large", g.width, g.height));
        }
        if self.n_frames == 0 || self.n_frames > MAX_FRAMES {
            return bad(format!("n_frames must be in 1..={MAX_FRAMES}"));
        }
        if let Some(k) = self.k_index {
            if k >= self.n_frames {
                return bad(format!("k_index {k} must be below n_frames {}", self.n_frames));
            }
        }
        if self.range_quant > self.tau / 2.0 {
            log::warn!(
                "range_quant {} exceeds tau/2 ({}); residual error will dominate",
                self.range_quant,
                self.tau / 2.0
            );
        }
        Ok(())
    }

    pub fn grid(&self) -> TileGrid {
        TileGrid::new(&self.geometry, self.tile_w, self.tile_h).expect("validated tile size")
    }

    /// Key frame for a group of `n` frames.
    pub fn key_index(&self, n: usize) -> usize {
        match self.k_index {
            Some(k) if k < n => k,
            _ => crate::motion::default_key_index(n),
        }
    }
}

/// Independently encoded frames sharing one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFrames {
    pub geometry: ImageGeometry,
    pub grid: TileGrid,
    pub frames: Vec<SpatialEncoding>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoded {
    Single(SpatialFrames),
    Stream(StreamEncoding),
}

impl Encoded {
    pub fn mode(&self) -> Mode {
        match self {
            Encoded::Single(_) => Mode::Single,
            Encoded::Stream(_) => Mode::Stream,
        }
    }

    pub fn frames(&self) -> usize {
        match self {
            Encoded::Single(s) => s.frames.len(),
            Encoded::Stream(s) => s.channels(),
        }
    }

    pub fn geometry(&self) -> &ImageGeometry {
        match self {
            Encoded::Single(s) => &s.geometry,
            Encoded::Stream(s) => &s.geometry,
        }
    }

    /// Snaps residual ranges to the stored fixed-point grid.
    pub fn quantize_residuals(&mut self, step: f64) {
        match self {
            Encoded::Single(s) => s.frames.iter_mut().for_each(|f| f.residual.quantize(step)),
            Encoded::Stream(s) => s.residuals.iter_mut().for_each(|r| r.quantize(step)),
        }
    }
}

fn write_plane(w: &mut Writer, p: &Plane) {
    w.f32(p.a);
    w.f32(p.b);
    w.f32(p.c);
}

fn write_rows(w: &mut Writer, rows: &[EncodedRow]) {
    w.varint(rows.len() as u64);
    for row in rows {
        w.varint(row.row_id as u64);
        w.varint(row.runs.len() as u64);
        for run in &row.runs {
            w.varint(run.s as u64);
            w.varint(run.len as u64);
            write_plane(w, &run.plane);
        }
    }
}

fn write_indices(w: &mut Writer, indices: impl ExactSizeIterator<Item = u32>) {
    w.varint(indices.len() as u64);
    let mut next = 0u64;
    for i in indices {
        w.varint(i as u64 - next);
        next = i as u64 + 1;
    }
}

fn write_residual(w: &mut Writer, r: &ResidualMap, step: f64) {
    write_indices(w, r.holes.iter().copied());
    write_indices(w, r.entries.iter().map(|e| e.index));
    for e in &r.entries {
        match range_code(e.range, step) {
            Some(q) => w.u16(q),
            None => {
                w.u16(RANGE_ESCAPE);
                w.f32(e.range);
            }
        }
    }
}

fn write_temporal(w: &mut Writer, runs: &[TemporalRun], k: usize, n: usize) {
    w.varint(runs.len() as u64);
    let mask_bytes = n.div_ceil(8);
    for run in runs {
        w.varint(run.row_id as u64);
        w.varint(run.s as u64);
        w.varint(run.len as u64);
        write_plane(w, &run.plane);
        let mut mask = vec![0u8; mask_bytes];
        for (ch, c) in run.offsets.iter().enumerate() {
            if c.is_some() {
                mask[ch / 8] |= 1 << (ch % 8);
            }
        }
        w.bytes(&mask);
        for (ch, c) in run.offsets.iter().enumerate() {
            if let (Some(c), true) = (c, ch != k) {
                w.f32(*c);
            }
        }
    }
}

fn payload(enc: &Encoded, cfg: &CodecConfig) -> Vec<u8> {
    let mut w = Writer::default();
    let (geometry, grid, k, transforms) = match enc {
        Encoded::Single(s) => (s.geometry, s.grid, 0, vec![RigidTransform::IDENTITY; s.frames.len()]),
        Encoded::Stream(s) => (s.geometry, s.grid, s.k_index, s.transforms.clone()),
    };
    w.u8(match enc.mode() {
        Mode::Single => 0,
        Mode::Stream => 1,
    });
    w.u32(geometry.width as u32);
    w.u32(geometry.height as u32);
    w.f64(geometry.resolution.theta);
    w.f64(geometry.resolution.phi);
    w.f64(geometry.phi_offset);
    w.u16(grid.tile_w as u16);
    w.u16(grid.tile_h as u16);
    w.f64(cfg.tau);
    w.f64(cfg.range_quant);
    w.u16(transforms.len() as u16);
    w.u16(k as u16);
    for m in &transforms {
        for v in m.to_array() {
            w.f32(v);
        }
    }
    match enc {
        Encoded::Single(s) => {
            for f in &s.frames {
                write_rows(&mut w, &f.rows);
                write_residual(&mut w, &f.residual, cfg.range_quant);
            }
        }
        Encoded::Stream(s) => {
            write_temporal(&mut w, &s.temporal_runs, s.k_index, s.channels());
            for rows in &s.fallback_rows {
                write_rows(&mut w, rows);
            }
            for r in &s.residuals {
                write_residual(&mut w, r, cfg.range_quant);
            }
        }
    }
    w.buf
}

/// Serializes an encoding into a self-contained blob. Identical input gives
/// identical bytes.
pub fn serialize(enc: &Encoded, cfg: &CodecConfig) -> Vec<u8> {
    let raw = payload(enc, cfg);
    let coded = CanonicalHuffman.encode(&raw);
    let mut out = Vec::with_capacity(6 + coded.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&coded);
    let crc = crc32fast::hash(&out[6..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Sizes and configuration read from a blob without decoding any frames.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobInfo {
    pub version: u16,
    pub total_bytes: usize,
    pub payload_bytes: usize,
    pub coded_bytes: usize,
    pub config: CodecConfig,
}

/// Verifies framing and checksum; returns the raw payload and the blob length.
fn open(blob: &[u8]) -> Result<(Vec<u8>, usize, usize), DecodeError> {
    if blob.len() < 6 {
        if !MAGIC.starts_with(&blob[..blob.len().min(4)]) {
            return Err(DecodeError::BadMagic);
        }
        return Err(DecodeError::Truncated {
            section: "header",
            offset: blob.len(),
        });
    }
    if &blob[..4] != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    let version = u16::from_le_bytes([blob[4], blob[5]]);
    if version != VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    if blob.len() < 6 + FRAME_HEADER {
        return Err(DecodeError::Truncated {
            section: "header",
            offset: blob.len(),
        });
    }
    let coded_len = u32::from_le_bytes(blob[6 + FRAME_HEADER - 4..6 + FRAME_HEADER].try_into().unwrap()) as usize;
    let end = (6 + FRAME_HEADER).saturating_add(coded_len);
    if blob.len() < end.saturating_add(4) {
        return Err(DecodeError::Truncated {
            section: "payload",
            offset: blob.len(),
        });
    }
    let stored = u32::from_le_bytes(blob[end..end + 4].try_into().unwrap());
    let computed = crc32fast::hash(&blob[6..end]);
    if stored != computed {
        return Err(DecodeError::Checksum { stored, computed });
    }
    let (raw, used) = CanonicalHuffman.decode(&blob[6..end])?;
    debug_assert_eq!(used, end - 6);
    Ok((raw, end + 4, coded_len))
}

fn read_config(r: &mut Reader<'_>) -> Result<(CodecConfig, Vec<RigidTransform>), DecodeError> {
    r.section = "config";
    let mode = match r.u8()? {
        0 => Mode::Single,
        1 => Mode::Stream,
        m => return Err(r.invalid(format!("unknown mode {m}"))),
    };
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let theta = r.f64()?;
    let phi = r.f64()?;
    let phi_offset = r.f64()?;
    let tile_w = r.u16()? as usize;
    let tile_h = r.u16()? as usize;
    let tau = r.f64()?;
    let range_quant = r.f64()?;
    let n = r.u16()? as usize;
    let k = r.u16()? as usize;
    let resolution = AngularResolution::new(theta, phi).map_err(|e| r.invalid(e.to_string()))?;
    let geometry = ImageGeometry::new(width, height, resolution, phi_offset).map_err(|e| r.invalid(e.to_string()))?;
    let config = CodecConfig {
        mode,
        tau,
        tile_w,
        tile_h,
        geometry,
        n_frames: n,
        k_index: Some(k),
        range_quant,
        threads: 0,
    };
    if n == 0 {
        return Err(r.invalid("zero frames"));
    }
    config.validate().map_err(|e| r.invalid(e.0))?;
    if mode == Mode::Single && k != 0 {
        return Err(r.invalid("key index set in single-frame mode"));
    }

    r.section = "transforms";
    let mut transforms = Vec::with_capacity(n.min(r.remaining() / 48));
    for _ in 0..n {
        let mut v = [0.0; 12];
        for x in &mut v {
            *x = r.f32()?;
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(r.invalid("non-finite transform entry"));
        }
        let m = RigidTransform::from_array(&v);
        if mode == Mode::Single && !m.is_identity() {
            return Err(r.invalid("single-frame blobs carry identity transforms"));
        }
        transforms.push(m);
    }
    Ok((config, transforms))
}

fn read_plane(r: &mut Reader<'_>) -> Result<Plane, DecodeError> {
    let p = Plane::new(r.f32()?, r.f32()?, r.f32()?);
    if !p.is_finite() {
        return Err(r.invalid("non-finite plane coefficient"));
    }
    Ok(p)
}

fn read_u32_varint(r: &mut Reader<'_>, what: &str) -> Result<u32, DecodeError> {
    let v = r.varint()?;
    u32::try_from(v).map_err(|_| r.invalid(format!("{what} {v} out of range")))
}

fn read_rows(r: &mut Reader<'_>) -> Result<Vec<EncodedRow>, DecodeError> {
    let count = r.count(2)?;
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let row_id = read_u32_varint(r, "row id")?;
        let runs_n = r.count(14)?;
        let mut runs = Vec::with_capacity(runs_n);
        for _ in 0..runs_n {
            let s = read_u32_varint(r, "run start")?;
            let len = read_u32_varint(r, "run length")?;
            runs.push(PlaneRun {
                s,
                len,
                plane: read_plane(r)?,
            });
        }
        rows.push(EncodedRow { row_id, runs });
    }
    Ok(rows)
}

fn read_indices(r: &mut Reader<'_>, min_bytes: usize, limit: usize) -> Result<Vec<u32>, DecodeError> {
    let count = r.count(min_bytes)?;
    let mut out = Vec::with_capacity(count);
    let mut next = 0u64;
    for _ in 0..count {
        let idx = next.checked_add(r.varint()?).filter(|&i| i < limit as u64);
        let Some(idx) = idx else {
            return Err(r.invalid("pixel index out of range"));
        };
        out.push(idx as u32);
        next = idx + 1;
    }
    Ok(out)
}

fn read_residual(r: &mut Reader<'_>, step: f64, pixels: usize) -> Result<ResidualMap, DecodeError> {
    let holes = read_indices(r, 1, pixels)?;
    let indices = read_indices(r, 3, pixels)?;
    let mut entries = Vec::with_capacity(indices.len());
    for index in indices {
        let code = r.u16()?;
        let range = if code == RANGE_ESCAPE {
            let v = r.f32()?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(r.invalid("bad escaped range"));
            }
            v
        } else {
            quantize_range(code as f64 * step, step)
        };
        entries.push(ResidualPixel { index, range });
    }
    Ok(ResidualMap { entries, holes })
}

fn read_temporal(r: &mut Reader<'_>, k: usize, n: usize) -> Result<Vec<TemporalRun>, DecodeError> {
    let mask_bytes = n.div_ceil(8);
    let count = r.count(15 + mask_bytes)?;
    let mut runs = Vec::with_capacity(count);
    for _ in 0..count {
        let row_id = read_u32_varint(r, "row id")?;
        let s = read_u32_varint(r, "run start")?;
        let len = read_u32_varint(r, "run length")?;
        let plane = read_plane(r)?;
        let mask = r.bytes(mask_bytes)?.to_vec();
        let present = |ch: usize| mask[ch / 8] & (1 << (ch % 8)) != 0;
        if !present(k) {
            return Err(r.invalid("key channel missing from offset mask"));
        }
        if (n..mask_bytes * 8).any(present) {
            return Err(r.invalid("offset mask has bits past the channel count"));
        }
        let mut offsets = Vec::with_capacity(n);
        for ch in 0..n {
            offsets.push(match (present(ch), ch == k) {
                (true, true) => Some(plane.c),
                (true, false) => {
                    let c = r.f32()?;
                    if !c.is_finite() {
                        return Err(r.invalid("non-finite offset"));
                    }
                    Some(c)
                }
                (false, _) => None,
            });
        }
        runs.push(TemporalRun {
            row_id,
            s,
            len,
            plane,
            offsets,
        });
    }
    Ok(runs)
}

fn parse(raw: &[u8]) -> Result<(Encoded, CodecConfig), DecodeError> {
    let mut r = Reader::new(raw, "config");
    let (config, transforms) = read_config(&mut r)?;
    let geometry = config.geometry;
    let grid = config.grid();
    let pixels = geometry.pixel_count();
    let n = transforms.len();
    let enc = match config.mode {
        Mode::Single => {
            let mut frames = Vec::with_capacity(n);
            for _ in 0..n {
                r.section = "plane rows";
                let rows = read_rows(&mut r)?;
                r.section = "residual";
                let residual = read_residual(&mut r, config.range_quant, pixels)?;
                frames.push(SpatialEncoding { rows, residual });
            }
            Encoded::Single(SpatialFrames { geometry, grid, frames })
        }
        Mode::Stream => {
            let k = config.k_index.unwrap_or(0);
            r.section = "temporal runs";
            let temporal_runs = read_temporal(&mut r, k, n)?;
            r.section = "fallback rows";
            let fallback_rows = (0..n).map(|_| read_rows(&mut r)).collect::<Result<_, _>>()?;
            r.section = "residual";
            let residuals = (0..n)
                .map(|_| read_residual(&mut r, config.range_quant, pixels))
                .collect::<Result<_, _>>()?;
            Encoded::Stream(StreamEncoding {
                geometry,
                grid,
                k_index: k,
                transforms,
                temporal_runs,
                fallback_rows,
                residuals,
            })
        }
    };
    if r.remaining() != 0 {
        return Err(DecodeError::TrailingBytes(r.remaining()));
    }
    Ok((enc, config))
}

/// Reads one blob from the front of `bytes`; returns the number of bytes it used.
pub fn deserialize_prefix(bytes: &[u8]) -> Result<(Encoded, CodecConfig, usize), DecodeError> {
    let (raw, used, _) = open(bytes)?;
    let (enc, cfg) = parse(&raw)?;
    Ok((enc, cfg, used))
}

/// Exact inverse of [`serialize`]. `blob` must hold exactly one blob.
pub fn deserialize(blob: &[u8]) -> Result<(Encoded, CodecConfig), DecodeError> {
    let (enc, cfg, used) = deserialize_prefix(blob)?;
    if used != blob.len() {
        return Err(DecodeError::TrailingBytes(blob.len() - used));
    }
    Ok((enc, cfg))
}

/// Splits a concatenation of blobs.
pub fn split_blobs(mut bytes: &[u8]) -> Result<Vec<&[u8]>, DecodeError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (_, used, _) = open(bytes)?;
        out.push(&bytes[..used]);
        bytes = &bytes[used..];
    }
    Ok(out)
}

pub fn inspect(blob: &[u8]) -> Result<BlobInfo, DecodeError> {
    let (raw, used, coded_len) = open(blob)?;
    let mut r = Reader::new(&raw, "config");
    let (config, _) = read_config(&mut r)?;
    Ok(BlobInfo {
        version: VERSION,
        total_bytes: used,
        payload_bytes: raw.len(),
        coded_bytes: coded_len,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(mode: Mode) -> CodecConfig {
        CodecConfig {
            mode,
            geometry: ImageGeometry::new(16, 8, AngularResolution::new(0.05, 0.05).unwrap(), 1.3).unwrap(),
            n_frames: 1,
            ..CodecConfig::default()
        }
    }

    fn empty_single(cfg: &CodecConfig) -> Encoded {
        Encoded::Single(SpatialFrames {
            geometry: cfg.geometry,
            grid: cfg.grid(),
            frames: vec![SpatialEncoding::default()],
        })
    }

    #[test]
    fn empty_encoding_round_trips() {
        let cfg = tiny_config(Mode::Single);
        let enc = empty_single(&cfg);
        let blob = serialize(&enc, &cfg);
        let (back, cfg2) = deserialize(&blob).unwrap();
        assert_eq!(back, enc);
        assert_eq!(cfg2.geometry, cfg.geometry);
        assert_eq!(inspect(&blob).unwrap().total_bytes, blob.len());
    }

    #[test]
    fn corruption_is_detected() {
        let cfg = tiny_config(Mode::Single);
        let blob = serialize(&empty_single(&cfg), &cfg);
        let mut bad = blob.clone();
        let last_payload = blob.len() - 5;
        bad[last_payload] ^= 0x40;
        assert!(matches!(deserialize(&bad), Err(DecodeError::Checksum { .. })));
        assert!(matches!(deserialize(&blob[..20]), Err(DecodeError::Truncated { .. })));
        assert!(matches!(deserialize(&blob[..3]), Err(DecodeError::Truncated { .. })));
        let mut v2 = blob.clone();
        v2[4] = 9;
        assert_eq!(deserialize(&v2), Err(DecodeError::UnsupportedVersion(9)));
        assert_eq!(deserialize(b"NOPE and more"), Err(DecodeError::BadMagic));
        let mut two = blob.clone();
        two.extend_from_slice(&blob);
        assert!(matches!(deserialize(&two), Err(DecodeError::TrailingBytes(_))));
        assert_eq!(split_blobs(&two).unwrap().len(), 2);
    }

    #[test]
    fn escaped_ranges_survive() {
        let cfg = tiny_config(Mode::Single);
        let mut frame = SpatialEncoding::default();
        frame.residual.entries = vec![
            ResidualPixel {
                index: 3,
                range: quantize_range(12.3456, cfg.range_quant),
            },
            ResidualPixel {
                index: 9,
                range: quantize_range(1234.5, cfg.range_quant),
            },
        ];
        let enc = Encoded::Single(SpatialFrames {
            geometry: cfg.geometry,
            grid: cfg.grid(),
            frames: vec![frame],
        });
        let (back, _) = deserialize(&serialize(&enc, &cfg)).unwrap();
        assert_eq!(back, enc);
    }

    #[test]
    fn config_validation() {
        let mut cfg = CodecConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.tau = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = CodecConfig {
            k_index: Some(7),
            ..CodecConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert_eq!(CodecConfig::default().key_index(5), 2);
    }
}
