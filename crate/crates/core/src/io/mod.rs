//! Configuration documents, presets, serialization and run orchestration.

mod config_doc;
mod series;
mod snapshot;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{AngularProfile, ConfigError, ModelConfig};
use crate::diagnostics::{verdicts, DiagnosticsRecord, Verdict};
use crate::integrator::{run_with, IntegratorError, MonitorSummary};

pub use config_doc::{config_table, config_to_toml, parse_config, parse_radius, parse_table};
pub use series::{emit_directions, emit_series, parse_series, SeriesWriter};
pub use snapshot::{from_snapshot, to_snapshot, Snapshot, SnapshotDirection, SnapshotShell};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error("unknown preset `{name}`; available: {}", PRESETS.join(", "))]
    UnknownPreset { name: String },
}

impl IoError {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
        move |source| IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(path: &Path, message: impl ToString) -> IoError {
        IoError::Parse {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}

pub const PRESETS: [&str; 6] = [
    "default",
    "deep",
    "radial",
    "nonradial-sin",
    "no-condensate-channel",
    "picard-xval",
];

/// Named configurations.
pub fn preset(name: &str) -> Result<ModelConfig, IoError> {
    let base = ModelConfig::default();
    let config = match name {
        "default" => base,
        "deep" => ModelConfig {
            rho_max: 8,
            n_dir: 8,
            t_end: 10.0,
            ..base
        },
        "radial" => ModelConfig {
            angular_profile: AngularProfile::Constant,
            ..base
        },
        "nonradial-sin" => ModelConfig {
            angular_profile: AngularProfile::Sinusoidal,
            n_dir: 16,
            t_end: 5.0,
            ..base
        },
        "no-condensate-channel" => ModelConfig {
            condensate_channel: false,
            ..base
        },
        "picard-xval" => {
            let c = ModelConfig {
                angular_profile: AngularProfile::Sinusoidal,
                n_dir: 4,
                rho_max: 3,
                ..base
            };
            let window = crate::integrator::contraction_window(&crate::build_initial(&c)?);
            ModelConfig {
                t_end: window,
                output_interval: window,
                ..c
            }
        }
        _ => {
            return Err(IoError::UnknownPreset {
                name: name.to_string(),
            })
        }
    };
    Ok(config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    SeriesCsv,
    DirectionsCsv,
    SnapshotJson,
    VerdictJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmittedFile {
    pub kind: FileKind,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Started,
    Finished,
    Failed,
}

/// Everything needed to reproduce a run, written before it starts and
/// finalized after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    pub seed: u64,
    pub preset_name: Option<String>,
    pub output_dir: PathBuf,
    pub emitted_files: Vec<EmittedFile>,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub summary: Option<SummaryDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub records: usize,
    pub steps: usize,
    pub rejects: usize,
    pub min_dt: f64,
    pub max_dt: f64,
    pub mass_worst_increase: f64,
    pub phi_worst_decrease: f64,
    pub energy_worst_defect: f64,
    pub clamped_total: f64,
    pub discarded_condensate_total: f64,
}

impl SummaryDoc {
    fn new(records: usize, s: &MonitorSummary) -> Self {
        SummaryDoc {
            records,
            steps: s.steps,
            rejects: s.rejects,
            min_dt: s.min_dt,
            max_dt: s.max_dt,
            mass_worst_increase: s.mass_worst_increase,
            phi_worst_decrease: s.phi_worst_decrease,
            energy_worst_defect: s.energy_worst_defect,
            clamped_total: s.clamped_total,
            discarded_condensate_total: s.discarded_condensate_total,
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SERIES_FILE: &str = "series.csv";
pub const DIRECTIONS_FILE: &str = "directions.csv";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const VERDICT_FILE: &str = "verdict.json";

impl RunManifest {
    pub fn new(config: &ModelConfig, preset_name: Option<&str>, output_dir: &Path) -> Self {
        RunManifest {
            config: serde_json::to_value(config_table(config)).expect("config table serializes"),
            seed: config.seed,
            preset_name: preset_name.map(str::to_string),
            output_dir: output_dir.to_path_buf(),
            emitted_files: Vec::new(),
            status: RunStatus::Started,
            error: None,
            summary: None,
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig, ConfigError> {
        let table: toml::Table = serde_json::from_value(self.config.clone())
            .map_err(|e| ConfigError::new("config", e.to_string()))?;
        parse_table(&table)
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(IoError::io(path))?;
        serde_json::from_str(&text).map_err(|e| IoError::parse(path, e))
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(IoError::io(path))
    }
}

/// Reads a TOML config document or a run manifest (by `.json` extension).
pub fn load_config(path: &Path) -> Result<(ModelConfig, Option<String>), IoError> {
    let text = fs::read_to_string(path).map_err(IoError::io(path))?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| IoError::parse(path, e))?;
        Ok((m.model_config()?, m.preset_name))
    } else {
        Ok((parse_config(&text)?, None))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).expect("document serializes");
    fs::write(path, text + "\n").map_err(IoError::io(path))
}

/// Result of [`simulate`].
#[derive(Debug)]
pub struct SimulateOutput {
    pub manifest: RunManifest,
    pub records: Vec<DiagnosticsRecord>,
    pub verdicts: std::collections::BTreeMap<String, Verdict>,
}

/// Runs `config`, writing the manifest, both CSV files, the final snapshot
/// and the verdict document into `out`. Records are flushed as they are
/// produced; on failure the manifest is finalized with the error.
pub fn simulate(
    config: &ModelConfig,
    preset_name: Option<&str>,
    out: &Path,
    progress: &mut dyn FnMut(&DiagnosticsRecord),
) -> Result<SimulateOutput, IoError> {
    config.validate()?;
    fs::create_dir_all(out).map_err(IoError::io(out))?;
    let manifest_path = out.join(MANIFEST_FILE);
    let mut manifest = RunManifest::new(config, preset_name, out);
    manifest.write(&manifest_path)?;

    let series_path = out.join(SERIES_FILE);
    let dirs_path = out.join(DIRECTIONS_FILE);
    let open = |p: &Path| File::create(p).map(BufWriter::new).map_err(IoError::io(p));
    let mut series = SeriesWriter::new(open(&series_path)?, config, false);
    let mut dirs = SeriesWriter::new(open(&dirs_path)?, config, true);
    series.header().map_err(IoError::io(&series_path))?;
    dirs.header().map_err(IoError::io(&dirs_path))?;

    let mut write_err: Option<IoError> = None;
    let result = run_with(config, &mut |r| {
        if write_err.is_some() {
            return;
        }
        if let Err(e) = series.write(r).and_then(|_| series.flush()) {
            write_err = Some(IoError::Io {
                path: series_path.clone(),
                source: e,
            });
        } else if let Err(e) = dirs.write(r).and_then(|_| dirs.flush()) {
            write_err = Some(IoError::Io {
                path: dirs_path.clone(),
                source: e,
            });
        }
        progress(r);
    });
    manifest.emitted_files.push(EmittedFile {
        kind: FileKind::SeriesCsv,
        path: PathBuf::from(SERIES_FILE),
    });
    manifest.emitted_files.push(EmittedFile {
        kind: FileKind::DirectionsCsv,
        path: PathBuf::from(DIRECTIONS_FILE),
    });
    let output = match (result, write_err) {
        (_, Some(e)) => Err(e),
        (Err(e), None) => Err(IoError::from(e)),
        (Ok(o), None) => Ok(o),
    };
    let output = match output {
        Ok(o) => o,
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            manifest.write(&manifest_path)?;
            return Err(e);
        }
    };

    let snap_path = out.join(SNAPSHOT_FILE);
    write_json(&snap_path, &to_snapshot(&output.final_state))?;
    manifest.emitted_files.push(EmittedFile {
        kind: FileKind::SnapshotJson,
        path: PathBuf::from(SNAPSHOT_FILE),
    });

    let v = verdicts(&output.records, config);
    let verdict_path = out.join(VERDICT_FILE);
    write_json(&verdict_path, &v)?;
    manifest.emitted_files.push(EmittedFile {
        kind: FileKind::VerdictJson,
        path: PathBuf::from(VERDICT_FILE),
    });

    manifest.status = RunStatus::Finished;
    manifest.summary = Some(SummaryDoc::new(output.records.len(), &output.summary));
    manifest.write(&manifest_path)?;
    Ok(SimulateOutput {
        manifest,
        records: output.records,
        verdicts: v,
    })
}

/// Reads a run directory's records back from its CSV files.
pub fn read_run(dir: &Path) -> Result<(ModelConfig, Vec<DiagnosticsRecord>), IoError> {
    let manifest = RunManifest::read(&dir.join(MANIFEST_FILE))?;
    let config = manifest.model_config()?;
    let series_path = dir.join(SERIES_FILE);
    let series = fs::read_to_string(&series_path).map_err(IoError::io(&series_path))?;
    let dirs_path = dir.join(DIRECTIONS_FILE);
    let dirs = fs::read_to_string(&dirs_path).map_err(IoError::io(&dirs_path))?;
    let records =
        parse_series(&series, Some(&dirs), &config).map_err(|e| IoError::parse(&series_path, e))?;
    Ok((config, records))
}

/// Re-runs every check on a finished (or partial) run directory.
pub fn verify_run(dir: &Path) -> Result<std::collections::BTreeMap<String, Verdict>, IoError> {
    let (config, records) = read_run(dir)?;
    Ok(verdicts(&records, &config))
}

pub fn write_verdicts(
    path: &Path,
    v: &std::collections::BTreeMap<String, Verdict>,
) -> Result<(), IoError> {
    write_json(path, v)
}

pub fn write_all(path: &Path, text: &str) -> Result<(), IoError> {
    let mut f = File::create(path).map_err(IoError::io(path))?;
    f.write_all(text.as_bytes()).map_err(IoError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for name in PRESETS {
            preset(name).unwrap().validate().unwrap();
        }
        let d = preset("default").unwrap();
        assert_eq!(
            (d.xi, d.rho_max, d.eta_max, d.n_dir, d.t_end),
            (3, 6, 12, 64, 50.0)
        );
        assert_eq!(d.norm_weight, 2.0);
        assert_eq!(preset("deep").unwrap().rho_max, 8);
        let nc = preset("no-condensate-channel").unwrap();
        assert_eq!(
            ModelConfig {
                condensate_channel: true,
                ..nc
            },
            d
        );
        let err = preset("nope").unwrap_err().to_string();
        assert!(err.contains("picard-xval") && err.contains("radial"));
    }

    #[test]
    fn radial_directions_identical() {
        let s = crate::state::build_initial(&preset("radial").unwrap()).unwrap();
        assert!(s.directions.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn manifest_config_round_trip() {
        let config = preset("nonradial-sin").unwrap();
        let m = RunManifest::new(&config, Some("nonradial-sin"), Path::new("out"));
        let text = serde_json::to_string(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.model_config().unwrap(), config);
    }
}
