//! File formats, configuration and the `lane3d` command line around
//! [`lane3d_core`].
//!
//! * [`jsonl`] – one frame per line: camera, lanes, optional anchor tensor.
//! * [`raster_file`] – `L3DR` typed rasters for depth and semantic maps.
//! * [`config`] – flat TOML settings with `--set` overrides.
//! * [`cli`] – subcommands and exit codes.

pub mod cli;
pub mod config;
pub mod jsonl;
pub mod raster_file;

pub use config::Settings;
pub use jsonl::{read_jsonl, write_jsonl, FrameRecord, JsonlError};
