//! Synthetic gait datasets whose key events follow known linear laws of the
//! subject predictors. Used for testing, demos and the bundled example data.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::types::{Dataset, GaitCycle, Gender, JointChannel, Side, SpeedLevel, Subject};
use crate::events::{default_templates, extract_events, KeyEvent, KeyEventSet, Parameter, Signal, Templates};
use crate::error::{GaitError, Result};
use crate::regression::bank::{Predictor, PredictorVector};
use crate::regression::cycle_time::predict_cycle_time_personalized;
use crate::trajectory::spline::build_spline;

/// Reference predictor values the laws are centred on.
const REFERENCE: [f64; 7] = [1.0, 2.3, 2.3 * 2.3, 1.70, 70.0, 50.0, 0.0];
/// Largest timing offset between a designed event and its re-extraction, %.
const SELF_CHECK_TOLERANCE: f64 = 0.5;
/// Subjects redrawn at most, over a whole dataset, before giving up.
const MAX_REJECTIONS: usize = 1000;

/// Samples per cycle used to locate the base events on the analytic shapes.
const SHAPE_SAMPLES: usize = 2001;

fn bump(p: f64, center: f64, kappa: f64) -> f64 {
    (kappa * ((std::f64::consts::TAU * (p - center)).cos() - 1.0)).exp()
}

fn harmonic(p: f64, k: f64, phase: f64) -> f64 {
    (std::f64::consts::TAU * k * (p - phase)).sin()
}

/// Reference waveform of each channel (right-side convention) over one
/// cycle, `p` in [0, 1).
fn shape(channel: JointChannel, p: f64) -> f64 {
    match channel {
        JointChannel::HipAbAd => 0.5 + 7.0 * bump(p, 0.17, 5.0) - 6.0 * bump(p, 0.64, 5.0) + 1.5 * bump(p, 0.42, 12.0),
        JointChannel::HipFlexExt => {
            4.0 + 20.0 * harmonic(p, 1.0, 0.631) + 6.3 * harmonic(p, 2.0, 0.144) + 2.9 * harmonic(p, 3.0, 0.03)
        }
        JointChannel::KneeFlexExt => 4.0 + 14.0 * bump(p, 0.15, 5.0) + 56.0 * bump(p, 0.72, 2.2),
        JointChannel::PelvisLateral => 18.0 * harmonic(p, 1.0, 0.03) + 2.0 * harmonic(p, 2.0, 0.1),
    }
}

/// Events of the reference shape at the reference subject's cycle time.
fn base_events(channel: JointChannel, templates: &Templates) -> Result<KeyEventSet> {
    let cycle_time = predict_cycle_time_personalized(REFERENCE[1], REFERENCE[5])?;
    let cycle = GaitCycle {
        subject_id: "reference".into(),
        channel,
        side: Side::Right,
        percent: 55,
        speed: REFERENCE[1],
        cycle_time,
        samples: (0..SHAPE_SAMPLES)
            .map(|i| shape(channel, i as f64 / (SHAPE_SAMPLES - 1) as f64))
            .collect(),
    };
    extract_events(&cycle, &templates[&channel], cycle_time)
}

/// Population range of each predictor, used to size the law slopes.
const RANGES: [f64; 7] = [0.0, 1.6, 6.0, 0.45, 50.0, 63.0, 2.0];

/// Centred slopes on speed plus up to two random further predictors, each
/// moving the parameter by 40-100 % of `scale` across its range.
fn sparse_centred(rng: &mut ChaCha8Rng, scale: f64) -> [f64; 7] {
    let mut support = vec![Predictor::V];
    for q in [Predictor::V2, Predictor::H, Predictor::W, Predictor::A, Predictor::S] {
        if support.len() < 3 && rng.random_bool(0.35) {
            support.push(q);
        }
    }
    let mut centred = [0.0; 7];
    for q in support {
        let j = Predictor::ALL.iter().position(|x| *x == q).unwrap_or(0);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        centred[j] = sign * rng.random_range(0.4..1.0) * scale / RANGES[j];
    }
    centred
}

/// Raw coefficients of `base + Σ c·(x − ref)`.
fn raw(base: f64, centred: &[f64; 7]) -> [f64; 7] {
    let mut out = *centred;
    out[0] = base - (1..7).map(|j| centred[j] * REFERENCE[j]).sum::<f64>();
    out
}

/// Least-squares law in `[1, v, v², a]` for `(t_ref / T)^power` over the
/// speeds and ages of the synthetic population.
fn inverse_cycle_time_law(power: i32, t_ref: f64) -> [f64; 7] {
    let mut rows = Vec::new();
    let mut target = Vec::new();
    for i in 0..=40 {
        let v = 1.56 + 1.59 * i as f64 / 40.0;
        for k in 0..=20 {
            let a = 21.0 + 63.0 * k as f64 / 20.0;
            let t = predict_cycle_time_personalized(v, a).expect("cycle time positive over the population box");
            rows.extend_from_slice(&[1.0, v, v * v, a]);
            target.push((t_ref / t).powi(power));
        }
    }
    let x = DMatrix::from_row_slice(target.len(), 4, &rows);
    let beta = x
        .svd(true, true)
        .solve(&DVector::from_vec(target), 1e-12)
        .expect("full SVD was requested");
    [beta[0], beta[1], beta[2], 0.0, 0.0, beta[3], 0.0]
}

/// Key-event laws: every parameter is a linear function of
/// `[1, v, v², h, w, a, s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLaws {
    pub templates: Templates,
    /// Coefficients over [`Predictor::ALL`] per (channel, detector, parameter).
    pub laws: BTreeMap<(JointChannel, String, Parameter), [f64; 7]>,
    /// Cycle time of the reference subject, seconds.
    pub reference_cycle_time: f64,
}

impl SyntheticLaws {
    /// Laws drawn under `seed`. Timings and positions depend on speed and
    /// up to two further predictors; positions share a per-channel offset.
    /// Velocities and accelerations are the reference values times linear
    /// fits of `T_ref / T` and `(T_ref / T)²`, which keeps the waveform
    /// close to the reference shape in % of cycle.
    pub fn generate(seed: u64) -> SyntheticLaws {
        let templates = default_templates();
        let bases: BTreeMap<JointChannel, KeyEventSet> = JointChannel::ALL
            .iter()
            .map(|&c| (c, base_events(c, &templates).expect("reference shapes match the default templates")))
            .collect();
        let reference_cycle_time = bases[&JointChannel::KneeFlexExt].cycle_time;
        let rate = [
            inverse_cycle_time_law(1, reference_cycle_time),
            inverse_cycle_time_law(2, reference_cycle_time),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut laws = BTreeMap::new();
        for (&channel, tmpl) in &templates {
            let set = &bases[&channel];
            let amplitude = set.events.iter().map(|e| e.y.abs()).fold(10.0, f64::max);
            let offset = sparse_centred(&mut rng, 0.06 * amplitude);
            // Own timing and position terms are drawn for position events;
            // velocity events interpolate those of the position events
            // around them so their extrema stay where the shape puts them.
            let mut own: BTreeMap<&str, ([f64; 7], [f64; 7])> = BTreeMap::new();
            for d in tmpl.detectors.iter().filter(|d| d.signal == Signal::Position) {
                let t_own = if d.pinned_time.is_some() { [0.0; 7] } else { sparse_centred(&mut rng, 0.3) };
                own.insert(d.id.as_str(), (t_own, sparse_centred(&mut rng, 0.005 * amplitude)));
            }
            let anchors: Vec<&KeyEvent> = set.events.iter().filter(|e| own.contains_key(e.detector_id.as_str())).collect();
            for d in tmpl.detectors.iter().filter(|d| d.signal == Signal::Velocity) {
                let t = set.event(&d.id).expect("every detector yields an event").t;
                let next = anchors.iter().position(|e| e.t > t).unwrap_or(0);
                let prev = (next + anchors.len() - 1) % anchors.len();
                let (a, b) = (anchors[prev], anchors[next]);
                let span = (b.t - a.t).rem_euclid(100.0);
                let w = (t - a.t).rem_euclid(100.0) / span;
                let (ta, ya) = own[a.detector_id.as_str()];
                let (tb, yb) = own[b.detector_id.as_str()];
                own.insert(
                    d.id.as_str(),
                    (
                        std::array::from_fn(|j| (1.0 - w) * ta[j] + w * tb[j]),
                        std::array::from_fn(|j| (1.0 - w) * ya[j] + w * yb[j]),
                    ),
                );
            }
            for d in &tmpl.detectors {
                let base = set.event(&d.id).expect("every detector yields an event");
                let (t_own, y_own) = own[d.id.as_str()];
                let fixed = d.fixed_parameters();
                for p in Parameter::ALL {
                    if fixed.contains(&p) {
                        laws.insert((channel, d.id.clone(), p), [0.0; 7]);
                        continue;
                    }
                    let law = match p {
                        Parameter::T => raw(base.t, &t_own),
                        Parameter::Y => raw(base.y, &std::array::from_fn(|j| offset[j] + y_own[j])),
                        Parameter::Ydot => rate[0].map(|c| c * base.ydot),
                        Parameter::Yddot => rate[1].map(|c| c * base.yddot),
                    };
                    laws.insert((channel, d.id.clone(), p), law);
                }
            }
        }
        SyntheticLaws {
            templates,
            laws,
            reference_cycle_time,
        }
    }

    pub fn law(&self, channel: JointChannel, detector_id: &str, p: Parameter) -> Option<&[f64; 7]> {
        self.laws.get(&(channel, detector_id.to_string(), p))
    }

    /// Events of every channel for a subject walking at `v` km/h, right-side
    /// convention, with the personalized cycle time.
    pub fn events(&self, subject: &Subject, v: f64) -> Result<BTreeMap<JointChannel, KeyEventSet>> {
        let cycle_time = predict_cycle_time_personalized(v, subject.age)?;
        let x = PredictorVector::new(subject, v).row();
        let mut out = BTreeMap::new();
        for (&channel, tmpl) in &self.templates {
            let mut events = Vec::new();
            for d in &tmpl.detectors {
                let mut e = KeyEvent {
                    t: 0.0,
                    y: 0.0,
                    ydot: 0.0,
                    yddot: 0.0,
                    detector_id: d.id.clone(),
                };
                for p in Parameter::ALL {
                    let law = self.law(channel, &d.id, p).ok_or_else(|| {
                        GaitError::InvariantViolation(format!("no law for {channel}/{}/{p}", d.id))
                    })?;
                    e.set(p, law.iter().zip(&x).map(|(b, xi)| b * xi).sum());
                }
                e.t = e.t.rem_euclid(100.0);
                events.push(e);
            }
            events.sort_by(|a, b| a.t.total_cmp(&b.t));
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
}

/// Options of [`generate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub seed: u64,
    pub grid_size: usize,
    /// Speeds as percentages of the self-selected speed.
    pub percents: Vec<u16>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 24,
            seed: 1,
            grid_size: 101,
            percents: SpeedLevel::ALL.iter().map(|l| l.percent()).collect(),
        }
    }
}

fn random_subject(rng: &mut ChaCha8Rng, k: usize) -> Subject {
    Subject {
        id: format!("SYN{:02}", k + 1),
        age: (rng.random_range(21.0..84.0_f64) * 10.0).round() / 10.0,
        height: (rng.random_range(1.47..1.92_f64) * 1000.0).round() / 1000.0,
        mass: (rng.random_range(45.0..95.0_f64) * 10.0).round() / 10.0,
        gender: if rng.random_bool(0.5) { Gender::Female } else { Gender::Male },
        self_selected_speed: (rng.random_range(3.9..4.5_f64) * 100.0).round() / 100.0,
    }
}

/// Builds every channel's cycle from the law events and checks that the
/// default templates recover each event near its designed time.
pub fn cycles_for(
    laws: &SyntheticLaws,
    subject: &Subject,
    percent: u16,
    grid_size: usize,
) -> Result<Vec<GaitCycle>> {
    let v = subject.self_selected_speed * percent as f64 / 100.0;
    let events = laws.events(subject, v)?;
    let mut out = Vec::new();
    for (channel, set) in events {
        let spline = build_spline(&set)?;
        let right = GaitCycle {
            subject_id: subject.id.clone(),
            channel,
            side: Side::Right,
            percent,
            speed: v,
            cycle_time: set.cycle_time,
            samples: spline.sample_grid(grid_size),
        };
        let found = extract_events(&right, &laws.templates[&channel], set.cycle_time)
            .map_err(|e| e.context(format!("synthetic {}/{channel}/{percent}%", subject.id)))?;
        for designed in &set.events {
            let got = found.event(&designed.detector_id).map(|e| e.t).unwrap_or(f64::NAN);
            let gap = (got - designed.t + 50.0).rem_euclid(100.0) - 50.0;
            if !(gap.abs() < SELF_CHECK_TOLERANCE) {
                return Err(GaitError::InvariantViolation(format!(
                    "synthetic {}/{channel}/{percent}%: {} designed at {:.3}% re-extracted at {got:.3}%",
                    subject.id, designed.detector_id, designed.t
                )));
            }
        }
        let left = GaitCycle {
            side: Side::Left,
            ..right.clone()
        };
        out.push(right);
        // Stored in the left-side convention; pooling mirrors it back.
        out.push(left.in_right_convention());
    }
    Ok(out)
}

/// A dataset of `n_subjects` random subjects whose cycles are the splines
/// through the law events, identical for both sides. Subjects for whom the
/// templates do not recover the designed event times are redrawn.
pub fn generate_dataset(cfg: &SynthConfig, laws: &SyntheticLaws) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut subjects = Vec::with_capacity(cfg.n_subjects);
    let mut cycles = Vec::new();
    let mut rejected = 0;
    while subjects.len() < cfg.n_subjects {
        let s = random_subject(&mut rng, subjects.len());
        let drawn: Result<Vec<Vec<GaitCycle>>> = cfg.percents.iter().map(|&p| cycles_for(laws, &s, p, cfg.grid_size)).collect();
        match drawn {
            Ok(c) => {
                cycles.extend(c.into_iter().flatten());
                subjects.push(s);
            }
            Err(GaitError::InvariantViolation(_)) if rejected < MAX_REJECTIONS => rejected += 1,
            Err(e) => return Err(e),
        }
    }
    log::debug!("synthetic dataset: {rejected} subjects redrawn");
    let ds = Dataset {
        subjects,
        cycles,
        grid_size: cfg.grid_size,
    };
    ds.validate()?;
    Ok(ds)
}
