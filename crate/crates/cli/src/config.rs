//! Pipeline configuration: a TOML file of flat keys plus CLI-flag overrides
//! (flags win). The resolved configuration is hashed into every output file's
//! provenance header, and the single `seed` drives all randomness.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use msar_core::cohort::CohortConfig;
use msar_core::comorbidity::CategoryId;
use msar_core::eval::CvConfig;
use msar_core::ingest::{InputFormat, SyntheticConfig, VisitCountRange};

/// Raw file contents; everything is optional and falls back to defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub visits: Option<PathBuf>,
    pub visits_format: Option<String>,
    pub mapping: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub n: Option<usize>,
    pub min_count: Option<u64>,
    pub top_fraction: Option<f64>,
    pub rbo_p: Option<f64>,
    pub readmit_window_days: Option<i64>,
    pub visit_window_days: Option<i64>,
    pub inpatient_threshold: Option<u32>,
    pub ed_threshold: Option<u32>,
    pub cv_folds: Option<usize>,
    pub cv_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub synthetic: Option<SyntheticSection>,
}

/// `[synthetic]` section: either `preset = "sample"` or explicit maps.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub preset: Option<String>,
    pub num_patients: Option<usize>,
    pub baseline_recurrence_probability: Option<f64>,
    pub visits_min: Option<u32>,
    pub visits_max: Option<u32>,
    pub base_prevalence: Option<BTreeMap<String, f64>>,
    pub recurrence_logit: Option<BTreeMap<String, f64>>,
}

/// Flag-level overrides shared by every subcommand.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub mapping: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Fully resolved settings; serialized canonically for the config hash.
/// The output directory is excluded from the hash so identical analyses
/// produce identical bytes wherever they are written.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub visits: Option<PathBuf>,
    pub visits_format: InputFormat,
    /// `None` means the bundled mapping table.
    pub mapping: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    pub n: usize,
    pub min_count: u64,
    pub top_fraction: f64,
    pub rbo_p: f64,
    pub cohort: CohortConfig,
    pub cv_folds: usize,
    pub cv_fraction: f64,
    pub seed: u64,
    pub synthetic: Option<SyntheticSection>,
}

impl PipelineConfig {
    pub fn load(config_path: Option<&Path>, overrides: &Overrides) -> Result<PipelineConfig> {
        let file: FileConfig = match config_path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("cannot parse config file {}", path.display()))?
            }
            None => FileConfig::default(),
        };

        let visits_format = match file.visits_format.as_deref() {
            None => match &file.visits {
                Some(p) if p.extension().is_some_and(|e| e == "jsonl") => InputFormat::Jsonl,
                _ => InputFormat::Csv,
            },
            Some("csv") => InputFormat::Csv,
            Some("jsonl") => InputFormat::Jsonl,
            Some(other) => bail!("unknown visits_format `{other}` (expected csv or jsonl)"),
        };

        let config = PipelineConfig {
            visits: file.visits,
            visits_format,
            mapping: overrides.mapping.clone().or(file.mapping),
            out_dir: overrides
                .out_dir
                .clone()
                .or(file.out_dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            n: file.n.unwrap_or(msar_core::rules::DEFAULT_TUPLE_SIZE),
            min_count: file
                .min_count
                .unwrap_or(msar_core::rules::DEFAULT_MIN_COUNT),
            top_fraction: file.top_fraction.unwrap_or(0.259),
            rbo_p: file.rbo_p.unwrap_or(0.9),
            cohort: CohortConfig {
                readmit_window_days: file.readmit_window_days.unwrap_or(30),
                visit_window_days: file.visit_window_days.unwrap_or(365),
                inpatient_threshold: file.inpatient_threshold.unwrap_or(4),
                ed_threshold: file.ed_threshold.unwrap_or(4),
            },
            cv_folds: file.cv_folds.unwrap_or(10),
            cv_fraction: file.cv_fraction.unwrap_or(0.8),
            seed: overrides.seed.or(file.seed).unwrap_or(0),
            synthetic: file.synthetic,
        };
        config.cohort.validate()?;
        Ok(config)
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            folds: self.cv_folds,
            sample_fraction: self.cv_fraction,
            seed: self.seed,
            n: self.n,
            min_count: self.min_count,
            top_fraction: self.top_fraction,
        }
    }

    /// Materialize the generator settings, if configured.
    pub fn synthetic_config(&self) -> Result<Option<SyntheticConfig>> {
        let Some(section) = &self.synthetic else {
            return Ok(None);
        };
        let num_patients = section.num_patients.unwrap_or(500);
        let mut config = match (section.preset.as_deref(), &section.base_prevalence) {
            (Some("sample"), None) => SyntheticConfig::sample(num_patients, self.seed),
            (Some("sample"), Some(_)) => {
                bail!("[synthetic] preset and explicit maps are mutually exclusive")
            }
            (Some(other), _) => bail!("unknown synthetic preset `{other}`"),
            (None, None) => bail!(
                "[synthetic] needs either `preset = \"sample\"` or explicit base_prevalence/recurrence_logit maps"
            ),
            (None, Some(prevalence)) => SyntheticConfig {
                num_patients,
                base_prevalence: prevalence
                    .iter()
                    .map(|(k, v)| (CategoryId::new(k.clone()), *v))
                    .collect(),
                recurrence_logit: section
                    .recurrence_logit
                    .clone()
                    .unwrap_or_default()
                    .into_iter()
                    .map(|(k, v)| (CategoryId::new(k), v))
                    .collect(),
                baseline_recurrence_probability: section
                    .baseline_recurrence_probability
                    .unwrap_or(0.1),
                visits_per_patient: VisitCountRange::default(),
                seed: self.seed,
            },
        };
        if let Some(p) = section.baseline_recurrence_probability {
            config.baseline_recurrence_probability = p;
        }
        if let (Some(min), Some(max)) = (section.visits_min, section.visits_max) {
            config.visits_per_patient = VisitCountRange { min, max };
        }
        config.num_patients = num_patients;
        config.seed = self.seed;
        Ok(Some(config))
    }

    /// Short hash of the canonical serialized config, for provenance headers.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex_prefix(&digest, 8)
    }
}

fn hex_prefix(bytes: &[u8], len: usize) -> String {
    bytes.iter().take(len).map(|b| format!("{b:02x}")).collect()
}
