//! Loading case data under an explicit channel exposure, with an access log
//! that records every channel handed to a stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::DataRef;
use crate::data::{read_canonical_csv, AlignedHousehold};
use crate::error::{Error, Result};

/// Which channels of a file a consumer may see.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Exposure {
    AggregateOnly,
    /// The aggregate plus the named appliance channels.
    Appliances(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRecord {
    pub stage: String,
    pub path: String,
    pub channel: String,
}

#[derive(Clone, Debug, Default)]
pub struct AccessLog {
    records: Vec<AccessRecord>,
}

impl AccessLog {
    pub fn records(&self) -> &[AccessRecord] {
        &self.records
    }

    fn note(&mut self, stage: &str, path: &Path, channel: &str) {
        let r = AccessRecord {
            stage: stage.to_string(),
            path: path.display().to_string(),
            channel: channel.to_string(),
        };
        if !self.records.contains(&r) {
            self.records.push(r);
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,path,channel\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{}\n", r.stage, r.path, r.channel));
        }
        out
    }
}

/// Parsed household files, loaded once and handed out as restricted views.
#[derive(Default)]
pub(crate) struct DataStore {
    files: BTreeMap<PathBuf, AlignedHousehold>,
}

impl DataStore {
    fn file(&mut self, path: &Path) -> Result<&AlignedHousehold> {
        if !self.files.contains_key(path) {
            let h = read_canonical_csv(path)?;
            self.files.insert(path.to_path_buf(), h);
        }
        Ok(&self.files[path])
    }

    /// The referenced span of a file with only the exposed channels.
    pub(crate) fn view(
        &mut self,
        path: &Path,
        data: &DataRef,
        exposure: &Exposure,
        stage: &str,
        log: &mut AccessLog,
    ) -> Result<AlignedHousehold> {
        let full = self.file(path)?;
        let appliances = match exposure {
            Exposure::AggregateOnly => Vec::new(),
            Exposure::Appliances(names) => names
                .iter()
                .map(|n| {
                    full.appliance(n)
                        .map(|s| (n.clone(), s.clone()))
                        .ok_or_else(|| Error::Pipeline(format!("{} has no `{n}` channel", path.display())))
                })
                .collect::<Result<_>>()?,
        };
        let mut h = AlignedHousehold {
            aggregate: full.aggregate.clone(),
            appliances,
        };
        if let Some([a, b]) = data.days {
            h = h.day_range(a, b)?;
        }
        log.note(stage, path, "aggregate");
        for (n, _) in &h.appliances {
            log.note(stage, path, n);
        }
        Ok(h)
    }
}
