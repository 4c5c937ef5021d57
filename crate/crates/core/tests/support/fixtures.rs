//! Small seeded synthetic corpora and fast training settings.

use std::path::Path;

use nilm_core::data::{generate_synthetic, write_canonical_csv, AlignedHousehold, SyntheticHouseSpec};
use nilm_core::optim::TrainConfig;
use nilm_core::pipeline::StageSettings;

pub const START: i64 = 1_704_067_200;

pub fn desk_house(days: usize, seed: u64) -> AlignedHousehold {
    generate_synthetic(&SyntheticHouseSpec::desk(START), days, seed).unwrap()
}

pub fn quick_settings(epochs: usize, windows: usize, seed: u64) -> StageSettings {
    StageSettings {
        train: TrainConfig {
            batch_size: 64,
            max_epochs: epochs,
            patience: epochs,
            windows_per_epoch: Some(windows),
            seed,
            ..TrainConfig::default()
        },
        val_fraction: 0.1,
        max_val_windows: Some(256),
        reinit_output_head: false,
    }
}

/// Writes `house_1.csv` (target) and `house_2.csv`, `house_3.csv` (sources).
pub fn write_corpus(dir: &Path, days: usize, seed: u64) {
    for i in 0..3u64 {
        let h = desk_house(days, seed + i);
        write_canonical_csv(&h, dir.join(format!("house_{}.csv", i + 1))).unwrap();
    }
}

/// A case over the corpus of [`write_corpus`] with a 1-day test span.
pub fn case_toml(days: usize, architectures: &str, appliances: &str, epochs: usize, windows: usize) -> String {
    format!(
        r#"name = "fixture"
seed = 5
architectures = [{architectures}]
schemes = ["zsl", "fssl", "pssl"]
appliances = [{appliances}]
batch_size = 64
max_epochs = {epochs}
patience = {epochs}
windows_per_epoch = {windows}
max_val_windows = 128

[data]
pretext = [{{ path = "house_1.csv", days = [0, {p}] }}]
source = [{{ path = "house_2.csv" }}, {{ path = "house_3.csv" }}]
test = {{ path = "house_1.csv", days = [{p}, {days}] }}
"#,
        p = days - 1
    )
}
