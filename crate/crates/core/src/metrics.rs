//! Geometric error between clouds and the per-run metrics report.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::bitstream::StageTimings;
use crate::cloud::{Point3, PointCloud};

/// Exact nearest-neighbor queries over a uniform hash grid.
#[derive(Debug, Clone)]
pub struct NearestIndex<'a> {
    points: &'a [Point3],
    cell: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
    /// Cell-coordinate bounds of the indexed points.
    lo: [i64; 3],
    hi: [i64; 3],
}

impl<'a> NearestIndex<'a> {
    /// Cell size defaults to about two points per occupied cell along each axis.
    pub fn new(cloud: &'a PointCloud) -> Self {
        let pts = &cloud.points;
        let (lo, hi) = bounds(pts);
        let extent = (hi.x - lo.x).max(hi.y - lo.y).max(hi.z - lo.z).max(1e-9);
        // points of a scan lie on surfaces, so scale with the square root
        let per_axis = ((pts.len() as f64).sqrt() / 2.0).clamp(1.0, 4096.0);
        Self::with_cell(cloud, extent / per_axis)
    }

    pub fn with_cell(cloud: &'a PointCloud, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in cloud.points.iter().enumerate() {
            cells.entry(key(p, cell)).or_default().push(i as u32);
        }
        let (lo, hi) = bounds(&cloud.points);
        Self {
            points: &cloud.points,
            cell,
            cells,
            lo: key(&lo, cell),
            hi: key(&hi, cell),
        }
    }

    /// Nearest point and its distance, or `None` for an empty index.
    pub fn nearest(&self, q: &Point3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let c = key(q, self.cell);
        if (0..3).any(|k| c[k] < self.lo[k] - 2 || c[k] > self.hi[k] + 2) {
            return self.scan(q);
        }
        let max_ring = (0..3)
            .map(|k| (c[k] - self.lo[k]).max(self.hi[k] - c[k]))
            .max()
            .unwrap_or(0);
        let mut best: Option<(usize, f64)> = None;
        for ring in 0..=max_ring {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                            continue;
                        };
                        for &i in ids {
                            let d = self.points[i as usize].distance(q);
                            if best.is_none_or(|(_, b)| d < b) {
                                best = Some((i as usize, d));
                            }
                        }
                    }
                }
            }
            // anything outside the searched cube is at least `ring` cells away
            if best.is_some_and(|(_, d)| d <= ring as f64 * self.cell) {
                break;
            }
        }
        best
    }

    fn scan(&self, q: &Point3) -> Option<(usize, f64)> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.distance(q)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

fn key(p: &Point3, cell: f64) -> [i64; 3] {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}

fn bounds(pts: &[Point3]) -> (Point3, Point3) {
    let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        lo = Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
        hi = Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
    }
    if pts.is_empty() {
        (Point3::ORIGIN, Point3::ORIGIN)
    } else {
        (lo, hi)
    }
}

/// Nearest-neighbor distances from every point of `from` into `to`.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct CloudError {
    pub count: usize,
    pub max: f64,
    pub rmse: f64,
}

impl CloudError {
    pub fn merge(&self, other: &CloudError) -> CloudError {
        let count = self.count + other.count;
        if count == 0 {
            return CloudError::default();
        }
        let sq = self.rmse.powi(2) * self.count as f64 + other.rmse.powi(2) * other.count as f64;
        CloudError {
            count,
            max: self.max.max(other.max),
            rmse: (sq / count as f64).sqrt(),
        }
    }
}

/// One-sided error: how far each point of `from` is from its nearest point in `to`.
pub fn nearest_error(from: &PointCloud, to: &PointCloud) -> CloudError {
    if from.is_empty() {
        return CloudError::default();
    }
    if to.is_empty() {
        return CloudError {
            count: from.len(),
            max: f64::INFINITY,
            rmse: f64::INFINITY,
        };
    }
    let index = NearestIndex::new(to);
    let (max, sq) = from
        .points
        .par_iter()
        .map(|p| index.nearest(p).map_or(f64::INFINITY, |(_, d)| d))
        .fold(|| (0.0f64, 0.0f64), |(m, s), d| (m.max(d), s + d * d))
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1 + b.1));
    CloudError {
        count: from.len(),
        max,
        rmse: (sq / from.len() as f64).sqrt(),
    }
}

/// Error of a reconstruction against its source, in both directions.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct PairError {
    /// Decoded points against the source.
    pub decoded_to_source: CloudError,
    /// Source points against the decoded cloud; includes dropped points.
    pub source_to_decoded: CloudError,
}

pub fn pair_error(source: &PointCloud, decoded: &PointCloud) -> PairError {
    PairError {
        decoded_to_source: nearest_error(decoded, source),
        source_to_decoded: nearest_error(source, decoded),
    }
}

/// Summary of one encode/decode run.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MetricsReport {
    pub frames: usize,
    pub points: usize,
    pub blob_bytes: usize,
    pub compression_rate: f64,
    pub encode_fps: f64,
    pub decode_fps: f64,
    /// Decoded-to-source nearest-neighbor error, meters.
    pub max_err: f64,
    pub rmse: f64,
    pub dropped_points: usize,
    pub temporal_fraction: f64,
    pub spatial_fraction: f64,
    pub residual_fraction: f64,
    pub timings: StageTimings,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_search_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud: PointCloud = (0..2000)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-20.0..20.0),
                    rng.gen_range(-20.0..20.0),
                    rng.gen_range(-2.0..2.0),
                )
            })
            .collect();
        let index = NearestIndex::new(&cloud);
        for _ in 0..300 {
            let q = Point3::new(
                rng.gen_range(-30.0..30.0),
                rng.gen_range(-30.0..30.0),
                rng.gen_range(-5.0..5.0),
            );
            let (_, d) = index.nearest(&q).unwrap();
            assert_eq!(d, index.scan(&q).unwrap().1);
        }
        let far = Point3::new(1e4, 0.0, 0.0);
        assert_eq!(index.nearest(&far).unwrap().1, index.scan(&far).unwrap().1);
    }

    #[test]
    fn identical_clouds_have_zero_error() {
        let cloud: PointCloud = (0..50).map(|i| Point3::new(i as f64, 0.0, 1.0)).collect();
        let e = pair_error(&cloud, &cloud);
        assert_eq!(e.decoded_to_source.max, 0.0);
        assert_eq!(e.source_to_decoded.rmse, 0.0);
        let shifted: PointCloud = cloud.iter().map(|p| Point3::new(p.x, 0.1, 1.0)).collect();
        assert!((nearest_error(&shifted, &cloud).max - 0.1).abs() < 1e-12);
    }
}
