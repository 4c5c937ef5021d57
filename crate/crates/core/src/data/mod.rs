//! Meter ingestion, alignment, normalization, windowing and synthetic
//! households.

pub mod canonical;
pub mod ingest;
pub mod norm;
pub mod series;
pub mod synth;
pub mod windows;

pub use canonical::{
    parse_canonical_csv, parse_series_column, read_canonical_csv, read_series_column, to_canonical_csv,
    write_canonical_csv,
};
pub use ingest::{
    household_from_channels, parse_meter_file, parse_meter_str, resample_1min, MeterFormat, ParsedMeter, RawChannel,
};
pub use norm::NormStats;
pub use series::{align, AlignedHousehold, PowerSeries, MINUTE};
pub use synth::{generate_synthetic, SyntheticApplianceSpec, SyntheticHouseSpec, Transition};
pub use windows::{make_windows, valid_runs, Target, TargetMode, WindowBatch};
