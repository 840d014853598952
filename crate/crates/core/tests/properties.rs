mod common;

use proptest::prelude::*;

use stpc::bitstream::huffman;
use stpc::range_image::{project, unproject, RangeImage};
use stpc::spatial::{decode_spatial, encode_spatial, spatial_coverage, TileGrid};

fn image_from(ranges: &[Option<f64>]) -> RangeImage {
    let g = common::small_geometry();
    let mut image = RangeImage::empty(g);
    for (idx, r) in ranges.iter().enumerate().take(g.pixel_count()) {
        if let Some(r) = r {
            image.set(idx, *r);
        }
    }
    image
}

/// Piecewise-smooth ranges: flat runs with noise and gaps.
fn ranges() -> impl Strategy<Value = Vec<Option<f64>>> {
    let pixels = common::small_geometry().pixel_count();
    (prop::collection::vec((1.0..60.0f64, 1usize..200), 1..80), any::<u64>()).prop_map(move |(runs, seed)| {
        let mut out = Vec::with_capacity(pixels);
        let mut state = seed;
        'fill: loop {
            for &(base, len) in &runs {
                for _ in 0..len {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    let u = (state >> 33) as f64 / (1u64 << 31) as f64;
                    out.push((u > 0.05).then_some(base + (u - 0.5) * 0.01));
                    if out.len() == pixels {
                        break 'fill;
                    }
                }
            }
        }
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn huffman_round_trip(data in prop::collection::vec(any::<u8>(), 0..4096), skew in 0u8..4) {
        let data: Vec<u8> = data.iter().map(|b| b >> (2 * skew)).collect();
        let (lengths, bits) = huffman::encode(&data);
        prop_assert_eq!(huffman::decode(&lengths, &bits, data.len()).unwrap(), data);
    }

    #[test]
    fn coverage_is_a_partition(ranges in ranges(), tw in 1usize..8, th in 1usize..8, tau in 0.001..0.05f64) {
        let image = image_from(&ranges);
        let grid = TileGrid::new(image.geometry(), tw, th).unwrap();
        let enc = encode_spatial(&image, &grid, tau);
        let cov = spatial_coverage(&image, &grid, &enc);
        prop_assert_eq!(cov.plane + cov.residual, cov.valid);
        let (decoded, _) = decode_spatial(&enc, &grid, image.geometry()).unwrap();
        for idx in 0..image.geometry().pixel_count() {
            prop_assert_eq!(decoded.is_valid(idx), image.is_valid(idx));
            if let (Some(a), Some(b)) = (decoded.range(idx), image.range(idx)) {
                prop_assert!((a - b).abs() <= tau);
            }
        }
    }

    #[test]
    fn project_of_unproject_is_identity(ranges in ranges()) {
        let image = image_from(&ranges);
        let back = project(&unproject(&image), image.geometry());
        prop_assert_eq!(back.dropped(), 0);
        for idx in 0..image.geometry().pixel_count() {
            prop_assert_eq!(back.image.is_valid(idx), image.is_valid(idx));
            if let (Some(a), Some(b)) = (back.image.range(idx), image.range(idx)) {
                prop_assert!((a - b).abs() <= 1e-12 * b);
            }
        }
    }
}
