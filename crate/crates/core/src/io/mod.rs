//! Run configuration, on-disk formats and the commands behind the CLI.
//!
//! Arrays are raw little-endian f32, row-major, each with a JSON sidecar.
//! Every command writes a manifest with the config hash, the derived seeds
//! and the sha256 of each file it produced.

mod commands;
mod config;
mod files;
mod logs;
mod png;

pub use commands::{
    cmd_ablate, cmd_export_png, cmd_metrics, cmd_reconstruct, cmd_simulate, image_name, load_reconstruction, load_simulation,
    run_manifest_name, sinogram_name, truth_name, SimulatedData, KNOWN_TAGS, MANIFEST_NAME, NO_PRIOR_TAG,
};
pub use config::{config_schema, DerivedSeeds, GeometryConfig, MetricsConfig, NoiseConfig, RunConfig};
pub use files::{decode_f32, encode_f32, read_raw, sha256_hex, sidecar_path, write_raw, Manifest, Sidecar, MANIFEST_FORMAT, RAW_FORMAT};
pub use logs::{losses_csv, metrics_csv, residuals_csv, LOSS_HEADER, METRIC_HEADER, RESIDUAL_HEADER};
pub use png::{encode_png, window_to_gray, write_png};
