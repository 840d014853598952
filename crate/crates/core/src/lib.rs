//! Spatio-temporal compression of spinning-LiDAR point clouds.
//!
//! Frames are projected into range images, aligned to a key frame with IMU
//! or pose motion, and described by planar runs shared across frames. What
//! no plane explains is stored as fixed-point residual ranges.
//!
//! ```
//! use stpc::{compress, decompress, CodecConfig, Mode, MotionSource};
//! use stpc::synth::{Scene, SceneParams};
//!
//! let scene = Scene::corridor(SceneParams::default());
//! let clouds = scene.frames(3);
//! let cfg = CodecConfig { n_frames: 3, mode: Mode::Stream, ..CodecConfig::default() };
//! let packed = compress(&clouds, &MotionSource::Poses(scene.poses(3)), &cfg).unwrap();
//! let restored = decompress(&packed.blob).unwrap();
//! assert_eq!(restored.clouds.len(), 3);
//! ```

pub mod bench;
pub mod bitstream;
pub mod cloud;
pub mod io;
pub mod metrics;
pub mod motion;
pub mod plane;
pub mod range_image;
pub mod spatial;
pub mod synth;
pub mod temporal;

pub use bitstream::{
    compress, compress_sequence, decompress, CodecConfig, CodecError, Compressed, DecodeError, Decompressed, Mode,
    MotionSource,
};
pub use cloud::{Point3, PointCloud};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/range-images.md")]
    pub struct RangeImages;
    #[doc = include_str!("../../../book/src/planes.md")]
    pub struct Planes;
    #[doc = include_str!("../../../book/src/spatial.md")]
    pub struct Spatial;
    #[doc = include_str!("../../../book/src/motion.md")]
    pub struct Motion;
    #[doc = include_str!("../../../book/src/temporal.md")]
    pub struct Temporal;
    #[doc = include_str!("../../../book/src/format.md")]
    pub struct Format;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    pub struct Benchmarks;
    #[doc = include_str!("../../../book/src/scenes.md")]
    pub struct Scenes;
}
