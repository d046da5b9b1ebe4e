//! Per-parameter key-event regression models and their prediction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::types::{Dataset, JointChannel, Side, Subject};
use crate::events::{
    check_separation, extract_events, EventDetector, KeyEvent,
    KeyEventSet, Parameter, Templates, MIN_EVENT_SEPARATION,
};
use crate::error::{GaitError, Result};
use crate::regression::cycle_time::CycleTimeModel;
use crate::regression::ols::{select_columns, stepwise_select_from};
use crate::regression::robust::fit_robust_bisquare;

pub const BANK_FORMAT_VERSION: u32 = 1;
/// Significance level for stepwise elimination.
pub const DEFAULT_ALPHA: f64 = 0.01;
/// Fewest rows a target may be trained on.
pub const MIN_ROWS: usize = 10;
/// Fewest distinct training subjects: the intercept and the four subject
/// attributes (h, w, a, s) need five subjects to be linearly independent.
pub const MIN_SUBJECTS: usize = 5;
/// Relative margin around the training speed range accepted for prediction.
pub const ENVELOPE_MARGIN: f64 = 0.10;
/// Largest summed shift, % of cycle, allowed when spacing predicted events.
pub const MAX_TOTAL_NUDGE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predictor {
    Intercept,
    V,
    V2,
    H,
    W,
    A,
    S,
}

impl Predictor {
    /// Design-matrix column order; also the tie-break order of stepwise elimination.
    pub const ALL: [Predictor; 7] = [
        Predictor::Intercept,
        Predictor::V,
        Predictor::V2,
        Predictor::H,
        Predictor::W,
        Predictor::A,
        Predictor::S,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predictor::Intercept => "intercept",
            Predictor::V => "v",
            Predictor::V2 => "v2",
            Predictor::H => "h",
            Predictor::W => "w",
            Predictor::A => "a",
            Predictor::S => "s",
        }
    }
}

/// Predictors of one observation: speed (km/h), its square, height (m),
/// mass (kg), age (years) and gender code (±1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorVector {
    pub v: f64,
    pub v2: f64,
    pub h: f64,
    pub w: f64,
    pub a: f64,
    pub s: f64,
}

impl PredictorVector {
    pub fn new(subject: &Subject, v: f64) -> PredictorVector {
        PredictorVector {
            v,
            v2: v * v,
            h: subject.height,
            w: subject.mass,
            a: subject.age,
            s: subject.gender.code(),
        }
    }

    pub fn row(&self) -> [f64; 7] {
        [1.0, self.v, self.v2, self.h, self.w, self.a, self.s]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    /// Mask over [`Predictor::ALL`]; the intercept is always included.
    pub included: [bool; 7],
    /// One coefficient per included predictor, in column order.
    pub coefficients: Vec<f64>,
    pub n: usize,
    /// Robust residual scale σ̂.
    pub scale: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl RegressionModel {
    pub fn predict(&self, x: &PredictorVector) -> f64 {
        x.row()
            .iter()
            .zip(&self.included)
            .filter(|(_, inc)| **inc)
            .zip(&self.coefficients)
            .map(|((xi, _), b)| xi * b)
            .sum()
    }

    pub fn coefficient(&self, p: Predictor) -> Option<f64> {
        let j = Predictor::ALL.iter().position(|q| *q == p)?;
        if !self.included[j] {
            return None;
        }
        let k = self.included[..j].iter().filter(|b| **b).count();
        Some(self.coefficients[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelEntry {
    Regressed(RegressionModel),
    /// Fixed by the template (pinned time or derivative constraint).
    Fixed { value: f64 },
}

impl ModelEntry {
    pub fn predict(&self, x: &PredictorVector) -> f64 {
        match self {
            ModelEntry::Regressed(m) => m.predict(x),
            ModelEntry::Fixed { value } => *value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub channel: JointChannel,
    pub detector_id: String,
    pub parameter: Parameter,
    pub model: ModelEntry,
}

impl fmt::Display for BankEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.channel, self.detector_id, self.parameter)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBank {
    pub format_version: u32,
    pub alpha: f64,
    pub templates: Templates,
    /// Lowest and highest training speed, km/h.
    pub speed_envelope: [f64; 2],
    pub cycle_time_personalized: CycleTimeModel,
    pub cycle_time_standard: CycleTimeModel,
    pub entries: Vec<BankEntry>,
}

impl ModelBank {
    pub fn entry(&self, channel: JointChannel, detector_id: &str, parameter: Parameter) -> Option<&BankEntry> {
        self.entries
            .iter()
            .find(|e| e.channel == channel && e.detector_id == detector_id && e.parameter == parameter)
    }

    pub fn regressed_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e.model, ModelEntry::Regressed(_)))
            .count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bank serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<ModelBank> {
        let bank: ModelBank =
            serde_json::from_str(text).map_err(|e| GaitError::schema("model bank", e.to_string()))?;
        if bank.format_version != BANK_FORMAT_VERSION {
            return Err(GaitError::schema(
                "model bank",
                format!("format version {} (expected {BANK_FORMAT_VERSION})", bank.format_version),
            ));
        }
        for t in bank.templates.values() {
            t.validate()?;
        }
        Ok(bank)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| GaitError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ModelBank> {
        let text = std::fs::read_to_string(path).map_err(|_| GaitError::MissingFile(path.to_path_buf()))?;
        Self::from_json(&text)
    }
}

/// Events of one cycle together with the data needed to regress them.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleEvents {
    pub subject_id: String,
    pub side: Side,
    pub percent: u16,
    /// km/h.
    pub speed: f64,
    /// Extracted in the right-side sign convention.
    pub events: KeyEventSet,
}

/// Extracts events from every cycle of the dataset, left frontal-plane
/// channels mirrored into the right-side convention first.
pub fn extract_dataset_events(ds: &Dataset, templates: &Templates) -> Result<Vec<CycleEvents>> {
    ds.cycles
        .par_iter()
        .map(|c| {
            let tmpl = templates
                .get(&c.channel)
                .ok_or_else(|| GaitError::Config(format!("no template for {}", c.channel)))?;
            let events = extract_events(&c.in_right_convention(), tmpl, c.cycle_time).map_err(|e| {
                e.context(format!(
                    "cycle {}/{}/{:?}/{}%",
                    c.subject_id, c.channel, c.side, c.percent
                ))
            })?;
            Ok(CycleEvents {
                subject_id: c.subject_id.clone(),
                side: c.side,
                percent: c.percent,
                speed: c.speed,
                events,
            })
        })
        .collect()
}

/// Extracts events and trains the bank with the default significance level.
pub fn train_bank(ds: &Dataset, templates: &Templates) -> Result<ModelBank> {
    let events = extract_dataset_events(ds, templates)?;
    train_bank_from_events(&ds.subjects, &events, templates, DEFAULT_ALPHA)
}

/// Maps timings onto one continuous branch around their circular mean so
/// events straddling the cycle boundary regress sensibly.
fn unwrap_timings(t: &mut [f64]) {
    let (s, c) = t.iter().fold((0.0, 0.0), |(s, c), v| {
        let a = std::f64::consts::TAU * v / 100.0;
        (s + a.sin(), c + a.cos())
    });
    if s == 0.0 && c == 0.0 {
        return;
    }
    let center = s.atan2(c).rem_euclid(std::f64::consts::TAU) * 100.0 / std::f64::consts::TAU;
    for v in t.iter_mut() {
        *v = center + (*v - center + 50.0).rem_euclid(100.0) - 50.0;
    }
}

fn fixed_value(d: &EventDetector, p: Parameter) -> Option<f64> {
    if !d.fixed_parameters().contains(&p) {
        return None;
    }
    Some(match p {
        Parameter::T => d.pinned_time.unwrap_or(0.0),
        _ => 0.0,
    })
}

fn fit_target(x: &DMatrix<f64>, y: &DVector<f64>, alpha: f64) -> Result<RegressionModel> {
    let n = x.nrows();
    // Constant predictors are collinear with the intercept and never enter.
    let mut start = [true; 7];
    for (j, col) in x.column_iter().enumerate().skip(1) {
        let mean = col.mean();
        let spread = col.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        start[j] = spread > 1e-12 * mean.abs().max(1.0);
    }
    let mask = stepwise_select_from(x, y, alpha, &start)?;
    let fit = fit_robust_bisquare(&select_columns(x, &mask), y)?;
    let mut included = [false; 7];
    included.copy_from_slice(&mask);
    if fit.coefficients.iter().any(|b| !b.is_finite()) {
        return Err(GaitError::InvariantViolation("non-finite regression coefficient".into()));
    }
    Ok(RegressionModel {
        included,
        coefficients: fit.coefficients.iter().copied().collect(),
        n,
        scale: fit.scale,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

/// Fits one model per (channel, detector, parameter) not fixed by the
/// template: stepwise selection at `alpha`, then bisquare coefficients.
/// Every cycle (subject × side × level) contributes one row.
pub fn train_bank_from_events(
    subjects: &[Subject],
    events: &[CycleEvents],
    templates: &Templates,
    alpha: f64,
) -> Result<ModelBank> {
    let by_id: BTreeMap<&str, &Subject> = subjects.iter().map(|s| (s.id.as_str(), s)).collect();
    let trained: BTreeSet<&str> = events.iter().map(|e| e.subject_id.as_str()).collect();
    if trained.len() < MIN_SUBJECTS {
        return Err(GaitError::InsufficientData(format!(
            "{} training subjects, need {MIN_SUBJECTS}",
            trained.len()
        )));
    }
    let mut targets = Vec::new();
    for (channel, tmpl) in templates {
        for d in &tmpl.detectors {
            for p in Parameter::ALL {
                targets.push((*channel, d, p));
            }
        }
    }
    let entries = targets
        .par_iter()
        .map(|&(channel, d, p)| {
            let model = if let Some(value) = fixed_value(d, p) {
                ModelEntry::Fixed { value }
            } else {
                let mut rows: Vec<[f64; 7]> = Vec::new();
                let mut ys = Vec::new();
                for ce in events.iter().filter(|ce| ce.events.channel == channel) {
                    let subject = by_id.get(ce.subject_id.as_str()).ok_or_else(|| {
                        GaitError::InvariantViolation(format!("events reference unknown subject {}", ce.subject_id))
                    })?;
                    let e = ce.events.event(&d.id).ok_or_else(|| {
                        GaitError::InvariantViolation(format!("{channel}: event {} missing", d.id))
                    })?;
                    rows.push(PredictorVector::new(subject, ce.speed).row());
                    ys.push(e.get(p));
                }
                let target = format!("{channel}/{}/{p}", d.id);
                if rows.len() < MIN_ROWS {
                    return Err(GaitError::InsufficientData(format!(
                        "{target}: {} rows, need {MIN_ROWS}",
                        rows.len()
                    )));
                }
                if p == Parameter::T {
                    unwrap_timings(&mut ys);
                }
                let x = DMatrix::from_fn(rows.len(), 7, |i, j| rows[i][j]);
                let y = DVector::from_vec(ys);
                ModelEntry::Regressed(fit_target(&x, &y, alpha).map_err(|e| e.context(target))?)
            };
            Ok(BankEntry {
                channel,
                detector_id: d.id.clone(),
                parameter: p,
                model,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let speeds = events.iter().map(|e| e.speed);
    let lo = speeds.clone().fold(f64::INFINITY, f64::min);
    let hi = speeds.fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(GaitError::InsufficientData("no training cycles".into()));
    }
    Ok(ModelBank {
        format_version: BANK_FORMAT_VERSION,
        alpha,
        templates: templates.clone(),
        speed_envelope: [lo, hi],
        cycle_time_personalized: CycleTimeModel::PERSONALIZED,
        cycle_time_standard: CycleTimeModel::STANDARD,
        entries,
    })
}

/// Sorts events by time and pushes later events forward until consecutive
/// events are at least 1 % apart.
fn space_events(channel: JointChannel, events: &mut [KeyEvent]) -> Result<()> {
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut total = 0.0;
    for k in 1..events.len() {
        let min = events[k - 1].t + MIN_EVENT_SEPARATION;
        if events[k].t < min {
            total += min - events[k].t;
            events[k].t = min;
        }
    }
    let n = events.len();
    let wrap_gap = if n > 1 { events[0].t + 100.0 - events[n - 1].t } else { 100.0 };
    if total > MAX_TOTAL_NUDGE + 1e-12 || wrap_gap < MIN_EVENT_SEPARATION - 1e-12 {
        return Err(GaitError::NonMonotoneEvents(format!(
            "{channel}: spacing events needs {total:.3}% of shift, wrap gap {wrap_gap:.3}%"
        )));
    }
    check_separation(channel, events)
}

/// Evaluates the bank for one subject walking at `v` km/h. Events are in the
/// right-side convention with the personalized cycle time.
pub fn predict_events(bank: &ModelBank, subject: &Subject, v: f64) -> Result<BTreeMap<JointChannel, KeyEventSet>> {
    let [lo, hi] = bank.speed_envelope;
    let (lo, hi) = (lo * (1.0 - ENVELOPE_MARGIN), hi * (1.0 + ENVELOPE_MARGIN));
    if !(v >= lo && v <= hi) {
        return Err(GaitError::SpeedOutOfEnvelope { speed: v, lo, hi });
    }
    let cycle_time = bank.cycle_time_personalized.predict(v, subject.age)?;
    let x = PredictorVector::new(subject, v);
    let mut out = BTreeMap::new();
    for (&channel, tmpl) in &bank.templates {
        let mut events = Vec::with_capacity(tmpl.detectors.len());
        for d in &tmpl.detectors {
            let mut e = KeyEvent {
                t: 0.0,
                y: 0.0,
                ydot: 0.0,
                yddot: 0.0,
                detector_id: d.id.clone(),
            };
            for p in Parameter::ALL {
                let entry = bank.entry(channel, &d.id, p).ok_or_else(|| {
                    GaitError::InvariantViolation(format!("bank has no model for {channel}/{}/{p}", d.id))
                })?;
                e.set(p, entry.model.predict(&x));
            }
            e.t = e.t.rem_euclid(100.0);
            if d.pinned_time.is_some() {
                e.t = d.pinned_time.unwrap_or(0.0);
            }
            events.push(e);
        }
        space_events(channel, &mut events)?;
        let set = KeyEventSet {
            channel,
            side: Side::Right,
            events,
            cycle_time,
        };
        set.validate()?;
        out.insert(channel, set);
    }
    Ok(out)
}
