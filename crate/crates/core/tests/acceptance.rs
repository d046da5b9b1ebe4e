//! One line per acceptance criterion. Runs with `cargo test --test acceptance`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use exo_kinematics::{forward_kinematics, inverse_kinematics, ExoGeometry, HipJointAngles, PelvisPose, CLOSURE_TOLERANCE};
use gaitgen_core::data::types::{JointChannel, Side};
use gaitgen_core::data::{filter_speed_levels, ingest_dataset, DatasetSchema, DEFAULT_TREADMILL_LIMIT_KMH};
use gaitgen_core::evaluation::{loocv, LoocvConfig};
use gaitgen_core::events::{default_templates, load_templates, KeyEvent, KeyEventSet};
use gaitgen_core::regression::bank::DEFAULT_ALPHA;
use gaitgen_core::regression::{
    fit_ols, fit_robust_bisquare, predict_cycle_time_personalized, predict_cycle_time_standard, stepwise_select,
};
use gaitgen_core::synth::{generate_dataset, SynthConfig, SyntheticLaws};
use gaitgen_core::trajectory::build_spline;
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn cycle_time_formulas() -> Outcome {
    let horner = |c: [f64; 4], v: f64, x: f64| (c[2] * v + c[1]) * v + c[0] + c[3] * x;
    let p = predict_cycle_time_personalized(1.8, 25.0).unwrap();
    let s = predict_cycle_time_standard(1.8, 1.70).unwrap();
    let hp = horner([2.7662, -0.7458, 0.0903, -0.0037], 1.8, 25.0);
    let hs = horner([1.8993, -0.6909, 0.0789, 0.3928], 1.8, 1.70);
    let ok = (p - hp).abs() < 1e-4 && (s - hs).abs() < 1e-4 && (p - 1.6238).abs() < 1e-4 && (s - 1.5791).abs() < 1e-4;
    check(ok, format!("personalized {p:.4} s, standard {s:.4} s"))
}

fn kinematics_round_trip() -> Outcome {
    let g = ExoGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_q, mut worst_res, mut checked) = (0.0_f64, 0.0_f64, 0);
    while checked < 1000 {
        let pelvis = PelvisPose {
            alpha: rng.random_range(-0.05..0.05),
            beta: rng.random_range(-0.05..0.05),
            gamma: rng.random_range(-0.05..0.05),
            t_fp: g.t_fp_nominal + Vector3::new(rng.random_range(-0.03..0.03), 0.0, 0.0),
        };
        let q = HipJointAngles::new(rng.random_range(-0.6..1.0), rng.random_range(-0.3..0.3), g.theta_ro);
        let Ok(fk) = forward_kinematics(&g, &pelvis, &q) else {
            continue;
        };
        let ik = match inverse_kinematics(&g, &pelvis, &fk.actuators) {
            Ok(ik) => ik,
            Err(e) => return Outcome::Fail(format!("IK failed on a reachable configuration: {e}")),
        };
        worst_q = worst_q
            .max((ik.hip.theta_fl - q.theta_fl).abs())
            .max((ik.hip.theta_ab - q.theta_ab).abs());
        for c in [fk.chain, ik.chain] {
            worst_res = worst_res.max(c.residual_h).max(c.residual_e);
        }
        checked += 1;
    }
    let pelvis = PelvisPose::neutral(&g);
    let at = |fl: f64, ab: f64| forward_kinematics(&g, &pelvis, &HipJointAngles::new(fl, ab, 0.0)).unwrap().actuators;
    let mut signs_ok = true;
    for k in 0..20 {
        let fl = -0.4 + 0.06 * k as f64;
        let (a, b) = (at(fl, 0.0), at(fl + 0.02, 0.0));
        signs_ok &= b.p_int > a.p_int && b.p_ext > a.p_ext;
        let step = if k < 10 { -0.15 + 0.0145 * k as f64 } else { 0.005 + 0.0145 * (k - 10) as f64 };
        let (a, b) = (at(0.0, 0.0), at(0.0, step));
        signs_ok &= (b.p_int - a.p_int) * (b.p_ext - a.p_ext) < 0.0;
    }
    check(
        worst_q < 1e-8 && worst_res < CLOSURE_TOLERANCE && signs_ok,
        format!("1000 configurations, max joint error {worst_q:.1e} rad, max closure residual {worst_res:.1e} m, sign properties {}", if signs_ok { "hold" } else { "violated" }),
    )
}

fn spline_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    let (mut knot, mut wrap) = (0.0_f64, 0.0_f64);
    for _ in 0..200 {
        let n = rng.random_range(4..=6);
        let mut times: Vec<f64> = Vec::new();
        while times.len() < n {
            let t = rng.random_range(0.0..100.0);
            if times.iter().all(|s: &f64| (t - s).abs() >= 2.0 && (t - s).abs() <= 98.0) {
                times.push(t);
            }
        }
        times.sort_by(f64::total_cmp);
        let set = KeyEventSet {
            channel: JointChannel::HipFlexExt,
            side: Side::Right,
            events: times
                .iter()
                .enumerate()
                .map(|(k, &t)| KeyEvent {
                    t,
                    y: rng.random_range(-20.0..70.0),
                    ydot: rng.random_range(-400.0..400.0),
                    yddot: rng.random_range(-4000.0..4000.0),
                    detector_id: format!("e{k}"),
                })
                .collect(),
            cycle_time: rng.random_range(0.9..2.0),
        };
        let spline = match build_spline(&set) {
            Ok(s) => s,
            Err(e) => return Outcome::Fail(e.to_string()),
        };
        for e in &set.events {
            let [y, v, a] = spline.eval(e.t);
            knot = knot.max(rel(y, e.y)).max(rel(v, e.ydot)).max(rel(a, e.yddot));
        }
        let (last, first) = (spline.segments.last().unwrap(), &spline.segments[0]);
        let scaled = |seg: &gaitgen_core::trajectory::QuinticSegment, s: f64| {
            let secs = seg.span() * spline.cycle_time / 100.0;
            let [p, d1, d2, _] = seg.local(s);
            [p, d1 / secs, d2 / (secs * secs)]
        };
        let (l, r) = (scaled(last, 1.0), scaled(first, 0.0));
        for k in 0..3 {
            wrap = wrap.max(rel(l[k], r[k]));
        }
    }
    check(
        knot < 1e-9 && wrap < 1e-9,
        format!("200 event sets, max knot mismatch {knot:.1e}, max wrap discontinuity {wrap:.1e} (relative)"),
    )
}

fn line(rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let noise = Normal::new(0.0, 0.1).unwrap();
    let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.random_range(1.5..3.2) });
    let y = DVector::from_fn(n, |i, _| 1.0 + 2.0 * x[(i, 1)] + noise.sample(rng));
    (x, y)
}

fn robust_regression() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let truth = DVector::from_column_slice(&[1.0, 2.0]);
    let (x, mut y) = line(&mut rng, 200);
    for i in (0..200).step_by(10) {
        y[i] += 100.0;
    }
    let ols_err = (&fit_ols(&x, &y).unwrap().coefficients - &truth).amax();
    let irls_err = (&fit_robust_bisquare(&x, &y).unwrap().coefficients - &truth).amax();
    let clean_y = &x * &truth;
    let ols = fit_ols(&x, &clean_y).unwrap().coefficients;
    let irls = fit_robust_bisquare(&x, &clean_y).unwrap().coefficients;
    let agree = ols.iter().zip(irls.iter()).map(|(a, b)| ((a - b) / a).abs()).fold(0.0, f64::max);
    check(
        irls_err < 0.05 && ols_err > 1.0 && agree < 1e-6,
        format!("10% outliers: IRLS error {irls_err:.4}, OLS error {ols_err:.2}; clean data IRLS vs OLS {agree:.1e} relative"),
    )
}

fn stepwise_selection() -> Outcome {
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut hits = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::zeros(300, 7);
        for i in 0..300 {
            let v: f64 = rng.random_range(1.5..3.2);
            x[(i, 0)] = 1.0;
            x[(i, 1)] = v;
            x[(i, 2)] = v * v;
            x[(i, 3)] = rng.random_range(1.47..1.92);
            x[(i, 4)] = rng.random_range(45.0..95.0);
            x[(i, 5)] = rng.random_range(21.0..84.0);
            x[(i, 6)] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        }
        let y = DVector::from_fn(300, |i, _| 3.0 + 5.0 * x[(i, 3)] + noise.sample(&mut rng));
        if stepwise_select(&x, &y, DEFAULT_ALPHA).unwrap() == [true, false, false, true, false, false, false] {
            hits += 1;
        }
    }
    check(hits >= 18, format!("true support recovered in {hits} of 20 datasets"))
}

fn synthetic_loocv() -> Outcome {
    let laws = SyntheticLaws::generate(1);
    let ds = match generate_dataset(&SynthConfig::default(), &laws) {
        Ok(ds) => ds,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let r = match loocv(&ds, &laws.templates, &LoocvConfig::default()) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let worst = r.channels.values().map(|s| s.rmse_personalized).fold(0.0, f64::max);
    let detail: Vec<String> = r
        .channels
        .iter()
        .map(|(c, s)| format!("{} {:.3}", c.name(), s.rmse_personalized))
        .collect();
    check(worst < 0.1, format!("{} subjects, personalized RMSE {}", r.n_folds, detail.join(", ")))
}

const REFERENCE_RMSE: [(JointChannel, f64, f64); 4] = [
    (JointChannel::HipAbAd, 2.906, 2.772),
    (JointChannel::HipFlexExt, 7.573, 6.953),
    (JointChannel::KneeFlexExt, 5.809, 6.385),
    (JointChannel::PelvisLateral, 6.321, 6.779),
];

fn database_rmse() -> Outcome {
    let Some(root) = std::env::var_os("GAIT_DB_ROOT").map(PathBuf::from) else {
        return Outcome::NotRun("GAIT_DB_ROOT is not set; the public database is required".into());
    };
    let schema_path = std::env::var_os("GAIT_DB_SCHEMA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/schema.toml"));
    let run = || -> gaitgen_core::Result<_> {
        let schema = DatasetSchema::load(&schema_path)?;
        let templates = match std::env::var_os("GAIT_TEMPLATES") {
            Some(p) => load_templates(&PathBuf::from(p))?,
            None => default_templates(),
        };
        let ds = filter_speed_levels(&ingest_dataset(&root, &schema)?, DEFAULT_TREADMILL_LIMIT_KMH)?;
        loocv(&ds, &templates, &LoocvConfig::default())
    };
    let r = match run() {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (channel, p, s) in REFERENCE_RMSE {
        let got = r.channels[&channel];
        for (value, target) in [(got.rmse_personalized, p), (got.rmse_standard, s)] {
            ok &= (value - target).abs() <= 0.25 * target;
        }
        parts.push(format!(
            "{} {:.3}/{:.3} (reference {p}/{s})",
            channel.name(),
            got.rmse_personalized,
            got.rmse_standard
        ));
    }
    check(ok, parts.join(", "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 7] = [
        ("1 cycle-time formulas", cycle_time_formulas, Duration::from_secs(1)),
        ("2 kinematics round trip", kinematics_round_trip, Duration::from_secs(5)),
        ("3 spline contract", spline_contract, Duration::from_secs(5)),
        ("4 robust regression", robust_regression, Duration::from_secs(5)),
        ("5 stepwise selection", stepwise_selection, Duration::from_secs(10)),
        ("6 synthetic LOOCV", synthetic_loocv, Duration::from_secs(60)),
        ("7 database RMSE reproduction", database_rmse, Duration::MAX),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let over = elapsed > budget;
        let (status, detail) = match outcome {
            Outcome::Pass(d) if over => ("FAIL", format!("{d}; took {elapsed:.2?}, budget {budget:?}")),
            Outcome::Pass(d) => ("PASS", format!("{d}; {elapsed:.2?}")),
            Outcome::Fail(d) => ("FAIL", format!("{d}; {elapsed:.2?}")),
            Outcome::NotRun(d) => ("NOT RUN", d),
        };
        // Criterion 7 is best-effort: a miss is reported, not a build failure.
        if status == "FAIL" && !name.starts_with('7') {
            failed += 1;
        }
        println!("criterion {name}: {status}: {detail}");
    }
    println!("criterion 8 user study: NOT RUN: human-subject data, not reproducible");
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
