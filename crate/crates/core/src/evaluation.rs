//! Leave-one-subject-out scoring of personalized and standard patterns
//! against recorded cycles.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::types::{Dataset, GaitCycle, JointChannel, Side};
use crate::error::{GaitError, Result};
use crate::events::{templates_to_toml, Templates};
use crate::regression::bank::{extract_dataset_events, train_bank_from_events, CycleEvents, DEFAULT_ALPHA};
use crate::trajectory::pattern::{digest, generate_personalized, generate_standard, GaitPattern};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Order in which per-cycle errors are reduced, written into every report.
pub const AVERAGING_ORDER: &str = "mean over sides, then speed levels, then subjects";

/// Root mean square difference of two sample vectors.
pub fn rmse_samples(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(GaitError::GridMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(GaitError::EmptyInput("rmse of empty series".into()));
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

pub fn rmse(a: &GaitCycle, b: &GaitCycle) -> Result<f64> {
    if a.channel != b.channel {
        return Err(GaitError::MixedChannels(format!("{} vs {}", a.channel, b.channel)));
    }
    rmse_samples(&a.samples, &b.samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelScore {
    pub rmse_personalized: f64,
    pub rmse_standard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectScore {
    pub subject_id: String,
    pub channels: BTreeMap<JointChannel, ChannelScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format_version: u32,
    pub config_hash: String,
    pub averaging: String,
    pub n_folds: usize,
    pub channels: BTreeMap<JointChannel, ChannelScore>,
    pub subjects: Vec<SubjectScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvConfig {
    /// Significance level of stepwise elimination.
    pub alpha: f64,
}

impl Default for LoocvConfig {
    fn default() -> Self {
        LoocvConfig { alpha: DEFAULT_ALPHA }
    }
}

fn config_hash(ds: &Dataset, templates: &Templates, cfg: &LoocvConfig) -> String {
    let ids: Vec<&str> = ds.subjects.iter().map(|s| s.id.as_str()).collect();
    let text = format!(
        "alpha={}\ngrid={}\ncycles={}\nsubjects={}\n{}",
        cfg.alpha,
        ds.grid_size,
        ds.cycles.len(),
        ids.join(","),
        templates_to_toml(templates)
    );
    digest(&text)
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Per-cycle errors of one held-out subject, keyed by channel, level and side.
type CycleErrors = BTreeMap<(JointChannel, u16, Side), ChannelScore>;

fn reduce_subject(subject_id: &str, errors: &CycleErrors) -> Result<SubjectScore> {
    let mut channels = BTreeMap::new();
    for channel in JointChannel::ALL {
        let levels: BTreeSet<u16> = errors.keys().filter(|k| k.0 == channel).map(|k| k.1).collect();
        if levels.is_empty() {
            return Err(GaitError::EmptyChannel(format!("{channel} of subject {subject_id}")));
        }
        let per_level = |pick: fn(&ChannelScore) -> f64| {
            mean(levels.iter().map(|&l| {
                mean(
                    errors
                        .iter()
                        .filter(|(k, _)| k.0 == channel && k.1 == l)
                        .map(|(_, s)| pick(s)),
                )
            }))
        };
        channels.insert(
            channel,
            ChannelScore {
                rmse_personalized: per_level(|s| s.rmse_personalized),
                rmse_standard: per_level(|s| s.rmse_standard),
            },
        );
    }
    Ok(SubjectScore {
        subject_id: subject_id.to_string(),
        channels,
    })
}

fn evaluate_fold(
    ds: &Dataset,
    events: &[CycleEvents],
    templates: &Templates,
    cfg: &LoocvConfig,
    held_out: &str,
) -> Result<SubjectScore> {
    let subject = ds
        .subject(held_out)
        .ok_or_else(|| GaitError::InvariantViolation(format!("cycles of unknown subject {held_out}")))?;
    let train_ds = ds.filter_subjects(|id| id != held_out);
    let train_events: Vec<CycleEvents> = events.iter().filter(|e| e.subject_id != held_out).cloned().collect();
    let leaked = train_ds.subjects.iter().any(|s| s.id == held_out)
        || train_ds.cycles.iter().any(|c| c.subject_id == held_out)
        || train_events.iter().any(|e| e.subject_id == held_out);
    if leaked {
        return Err(GaitError::InvariantViolation(format!("subject {held_out} leaked into its training fold")));
    }
    let bank = train_bank_from_events(&train_ds.subjects, &train_events, templates, cfg.alpha)?;

    let mut personalized: BTreeMap<u64, GaitPattern> = BTreeMap::new();
    let mut standard: Option<GaitPattern> = None;
    let mut grids: BTreeMap<(u64, bool, JointChannel), Vec<f64>> = BTreeMap::new();
    let mut errors = CycleErrors::new();
    for cycle in ds.cycles_of(held_out).filter(|c| c.level().is_some()) {
        let key = cycle.speed.to_bits();
        if !personalized.contains_key(&key) {
            personalized.insert(key, generate_personalized(&bank, subject, cycle.speed)?);
        }
        if standard.is_none() {
            standard = Some(generate_standard(&train_ds, cycle.speed, subject.height)?);
        }
        let actual = cycle.in_right_convention();
        let mut score = [0.0; 2];
        for (k, is_standard) in [false, true].into_iter().enumerate() {
            let gkey = (if is_standard { 0 } else { key }, is_standard, cycle.channel);
            if !grids.contains_key(&gkey) {
                let pattern = if is_standard { standard.as_ref() } else { personalized.get(&key) };
                let pattern = pattern.expect("pattern generated above");
                grids.insert(gkey, pattern.grid(cycle.channel, ds.grid_size)?);
            }
            score[k] = rmse_samples(&grids[&gkey], &actual.samples)?;
        }
        errors.insert(
            (cycle.channel, cycle.percent, cycle.side),
            ChannelScore {
                rmse_personalized: score[0],
                rmse_standard: score[1],
            },
        );
    }
    reduce_subject(held_out, &errors)
}

/// Leave-one-subject-out cross-validation over the training speed levels.
/// Each fold trains a bank and a standard pattern on the other subjects and
/// scores both on the held-out subject's cycles at their recorded speeds.
pub fn loocv(ds: &Dataset, templates: &Templates, cfg: &LoocvConfig) -> Result<EvaluationReport> {
    let ds = Dataset {
        subjects: ds.subjects.clone(),
        cycles: ds.cycles.iter().filter(|c| c.level().is_some()).cloned().collect(),
        grid_size: ds.grid_size,
    };
    let ids = ds.subject_ids_with_cycles();
    if ids.len() < 2 {
        return Err(GaitError::InsufficientData(format!(
            "cross-validation needs at least 2 subjects with cycles, found {}",
            ids.len()
        )));
    }
    let events = extract_dataset_events(&ds, templates)?;
    let subjects = ids
        .par_iter()
        .map(|id| {
            evaluate_fold(&ds, &events, templates, cfg, id).map_err(|e| GaitError::Fold {
                subject: id.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut channels = BTreeMap::new();
    for channel in JointChannel::ALL {
        channels.insert(
            channel,
            ChannelScore {
                rmse_personalized: mean(subjects.iter().map(|s| s.channels[&channel].rmse_personalized)),
                rmse_standard: mean(subjects.iter().map(|s| s.channels[&channel].rmse_standard)),
            },
        );
    }
    Ok(EvaluationReport {
        format_version: REPORT_FORMAT_VERSION,
        config_hash: config_hash(&ds, templates, cfg),
        averaging: AVERAGING_ORDER.to_string(),
        n_folds: subjects.len(),
        channels,
        subjects,
    })
}

impl EvaluationReport {
    pub fn validate(&self) -> Result<()> {
        for channel in JointChannel::ALL {
            let Some(s) = self.channels.get(&channel) else {
                return Err(GaitError::EmptyChannel(channel.to_string()));
            };
            for v in [s.rmse_personalized, s.rmse_standard] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(GaitError::InvariantViolation(format!("{channel}: RMSE {v} is not a finite non-negative value")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string_pretty(self).expect("report serializes") + "\n")
    }

    /// Human-readable table, one row per channel.
    pub fn to_table(&self) -> Result<String> {
        self.validate()?;
        let mut out = String::new();
        let _ = writeln!(out, "# config_hash={}", self.config_hash);
        let _ = writeln!(out, "# folds={}", self.n_folds);
        let _ = writeln!(out, "# averaging: {}", self.averaging);
        let _ = writeln!(out, "{:<22}{:>22}{:>22}", "Joint", "RMSE Act-Personalized", "RMSE Act-Standard");
        for channel in JointChannel::ALL {
            let s = &self.channels[&channel];
            let _ = writeln!(
                out,
                "{:<22}{:>22.3}{:>22.3}",
                channel.label(),
                s.rmse_personalized,
                s.rmse_standard
            );
        }
        Ok(out)
    }

    /// Writes `<stem>.json` and `<stem>.txt` into `dir`.
    pub fn emit(&self, dir: &Path, stem: &str) -> Result<()> {
        let json = self.to_json()?;
        let table = self.to_table()?;
        std::fs::create_dir_all(dir).map_err(|e| GaitError::io(dir, e))?;
        for (ext, text) in [("json", json), ("txt", table)] {
            let path = dir.join(format!("{stem}.{ext}"));
            std::fs::write(&path, text).map_err(|e| GaitError::io(&path, e))?;
        }
        Ok(())
    }
}
