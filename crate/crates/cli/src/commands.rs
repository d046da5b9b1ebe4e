use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use exo_kinematics::{forward_kinematics, inverse_kinematics, ActuatorState, ExoGeometry, HipJointAngles, PelvisPose, Side};
use gaitgen_core::actuators::{actuator_csv, pattern_to_actuators};
use gaitgen_core::data::types::{parse_side, parse_speed_label, Gender, SpeedLevel, Subject};
use gaitgen_core::data::{export_dataset, filter_speed_levels, ingest_dataset, Dataset, DatasetSchema};
use gaitgen_core::evaluation::{loocv, LoocvConfig};
use gaitgen_core::events::{default_templates, load_templates, Templates};
use gaitgen_core::regression::bank::DEFAULT_ALPHA;
use gaitgen_core::regression::{train_bank, ModelBank};
use gaitgen_core::synth::{generate_dataset, SynthConfig, SyntheticLaws};
use gaitgen_core::trajectory::{
    events_csv, generate_personalized, generate_standard, pattern_csv, pick_random_pattern, plot_data_csv, GaitPattern,
};
use gaitgen_core::GaitError;
use nalgebra::Vector3;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{CliError, Command};

type Result<T> = std::result::Result<T, CliError>;

/// Files a command writes, relative to nothing: already joined with the
/// output directory.
fn planned_outputs(cmd: &Command, cfg: &RunConfig) -> Vec<PathBuf> {
    let out = &cfg.output;
    let pattern = |stem: &str, with_events: bool| {
        let mut v = vec![
            out.join(format!("{stem}.json")),
            out.join(format!("{stem}_series.csv")),
            out.join(format!("{stem}_plot.csv")),
        ];
        if with_events {
            v.push(out.join(format!("{stem}_events.csv")));
        }
        v
    };
    match cmd {
        Command::Ingest => vec![out.join("dataset")],
        Command::Train => vec![cfg.bank_path()],
        Command::Predict { .. } => pattern("personalized", true),
        Command::Standard { .. } => pattern("standard", false),
        Command::Random { .. } => pattern("random", false),
        Command::Evaluate { .. } => vec![out.join("loocv.json"), out.join("loocv.txt")],
        Command::Fk { .. } => vec![out.join("fk.json")],
        Command::Ik { .. } => vec![out.join("ik.json")],
        Command::ExportActuators { pattern, .. } => vec![out.join(format!("{}_actuators.csv", stem(pattern)))],
        Command::Plotdata { pattern, .. } => vec![out.join(format!("{}_plot.csv", stem(pattern)))],
        Command::Synth { .. } => vec![out.join("synth")],
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "pattern".into())
}

pub fn run(cmd: &Command, cfg: &RunConfig, dry_run: bool) -> Result<String> {
    cfg.check_inputs()?;
    let outputs = planned_outputs(cmd, cfg);
    if dry_run {
        let mut text = cfg.to_toml();
        text.push_str("# planned outputs\n");
        for p in &outputs {
            let _ = writeln!(text, "#   {}", p.display());
        }
        let _ = write!(text, "dry run: nothing written");
        return Ok(text);
    }
    fs::create_dir_all(&cfg.output).map_err(|e| GaitError::io(&cfg.output, e))?;
    match cmd {
        Command::Ingest => ingest(cfg, &outputs[0]),
        Command::Train => train(cfg, &outputs[0]),
        Command::Predict { subject, speed, dt } => {
            let gender: Gender = subject.gender.parse()?;
            let s = Subject {
                id: "subject".into(),
                age: subject.age,
                height: subject.height,
                mass: subject.mass,
                gender,
                self_selected_speed: cfg.speed_unit.to_kmh(*speed),
            };
            s.validate()?;
            let bank = ModelBank::load(&cfg.bank_path())?;
            let p = generate_personalized(&bank, &s, cfg.speed_unit.to_kmh(*speed))?;
            write_pattern(&p, cfg, *dt, &outputs)
        }
        Command::Standard { speed, height, dt } => {
            let ds = load_dataset(cfg)?;
            let p = generate_standard(&ds, cfg.speed_unit.to_kmh(*speed), *height)?;
            write_pattern(&p, cfg, *dt, &outputs)
        }
        Command::Random { level, dt } => {
            let percent = parse_speed_label(level)?;
            let level = SpeedLevel::from_percent(percent)
                .ok_or_else(|| CliError::Usage(format!("{percent}% is not a speed level")))?;
            let ds = load_dataset(cfg)?;
            let p = pick_random_pattern(&ds, level, cfg.seed)?;
            write_pattern(&p, cfg, *dt, &outputs)
        }
        Command::Evaluate { alpha } => {
            let ds = load_dataset(cfg)?;
            let lc = LoocvConfig {
                alpha: alpha.unwrap_or(DEFAULT_ALPHA),
            };
            let report = loocv(&ds, &templates(cfg)?, &lc)?;
            report.emit(&cfg.output, "loocv")?;
            let mut s = format!("evaluate: {} folds", report.n_folds);
            for (channel, score) in &report.channels {
                let _ = write!(
                    s,
                    ", {channel} {:.3}/{:.3}",
                    score.rmse_personalized, score.rmse_standard
                );
            }
            let _ = write!(s, " (personalized/standard RMSE) -> {}", cfg.output.join("loocv.txt").display());
            Ok(s)
        }
        Command::Fk {
            theta_fl,
            theta_ab,
            pelvis,
            side,
        } => {
            let geom = geometry(cfg, parse_side(side)?)?;
            let pose = pelvis_pose(&geom, *pelvis);
            let hip = HipJointAngles::new(theta_fl.to_radians(), theta_ab.to_radians(), geom.theta_ro);
            let fk = forward_kinematics(&geom, &pose, &hip)?;
            let a = fk.actuators;
            write_json(
                &outputs[0],
                &FkOutput {
                    p_int_m: a.p_int,
                    p_ext_m: a.p_ext,
                    theta_a_rad: a.theta_a,
                    residual_h_m: fk.chain.residual_h,
                    residual_e_m: fk.chain.residual_e,
                },
            )?;
            Ok(format!(
                "fk: p_int={:.6} m p_ext={:.6} m theta_A={:.6} rad (residual {:.1e} m) -> {}",
                a.p_int,
                a.p_ext,
                a.theta_a,
                fk.chain.residual_h.max(fk.chain.residual_e),
                outputs[0].display()
            ))
        }
        Command::Ik {
            p_int,
            p_ext,
            pelvis,
            side,
        } => {
            let geom = geometry(cfg, parse_side(side)?)?;
            let pose = pelvis_pose(&geom, *pelvis);
            let act = ActuatorState {
                p_int: *p_int,
                p_ext: *p_ext,
                theta_a: 0.0,
            };
            let ik = inverse_kinematics(&geom, &pose, &act)?;
            let hip = IkOutput {
                theta_fl_deg: ik.hip.theta_fl.to_degrees(),
                theta_ab_deg: ik.hip.theta_ab.to_degrees(),
                theta_a_rad: ik.actuators.theta_a,
                iterations: ik.iterations,
            };
            write_json(&outputs[0], &hip)?;
            Ok(format!(
                "ik: theta_fl={:.6} deg theta_ab={:.6} deg after {} iterations -> {}",
                hip.theta_fl_deg,
                hip.theta_ab_deg,
                hip.iterations,
                outputs[0].display()
            ))
        }
        Command::ExportActuators { pattern, dt } => {
            let p = GaitPattern::load(pattern)?;
            let right = geometry(cfg, Side::Right)?;
            let left = geometry(cfg, Side::Left)?;
            let series = pattern_to_actuators(&left, &right, &p, *dt)?;
            write_text(&outputs[0], &actuator_csv(&p, &series))?;
            Ok(format!(
                "export-actuators: {} samples over {:.4} s -> {}",
                series.time.len(),
                p.cycle_time,
                outputs[0].display()
            ))
        }
        Command::Plotdata { pattern, points } => {
            let p = GaitPattern::load(pattern)?;
            let n = points.unwrap_or(cfg.grid_size);
            write_text(&outputs[0], &plot_data_csv(&p, n)?)?;
            Ok(format!("plotdata: {n} points per channel -> {}", outputs[0].display()))
        }
        Command::Synth { subjects } => {
            let laws = SyntheticLaws::generate(cfg.seed);
            let sc = SynthConfig {
                n_subjects: *subjects,
                seed: cfg.seed,
                grid_size: cfg.grid_size,
                ..SynthConfig::default()
            };
            let ds = generate_dataset(&sc, &laws)?;
            export_dataset(&ds, &outputs[0])?;
            Ok(format!(
                "synth: {} subjects, {} cycles -> {}",
                ds.subjects.len(),
                ds.cycles.len(),
                outputs[0].display()
            ))
        }
    }
}

#[derive(Serialize)]
struct FkOutput {
    p_int_m: f64,
    p_ext_m: f64,
    theta_a_rad: f64,
    residual_h_m: f64,
    residual_e_m: f64,
}

#[derive(Serialize)]
struct IkOutput {
    theta_fl_deg: f64,
    theta_ab_deg: f64,
    theta_a_rad: f64,
    iterations: usize,
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let root = cfg.dataset_root()?;
    let mut schema = match &cfg.schema {
        Some(p) => DatasetSchema::load(p)?,
        None => DatasetSchema::canonical(cfg.grid_size),
    };
    schema.grid_size = cfg.grid_size;
    let ds = ingest_dataset(root, &schema)?;
    Ok(filter_speed_levels(&ds, cfg.treadmill_limit_kmh)?)
}

fn templates(cfg: &RunConfig) -> Result<Templates> {
    Ok(match &cfg.templates {
        Some(p) => load_templates(p)?,
        None => default_templates(),
    })
}

fn geometry(cfg: &RunConfig, side: Side) -> Result<ExoGeometry> {
    let right = match &cfg.geometry_right {
        Some(p) => ExoGeometry::load(p)?,
        None => ExoGeometry::default(),
    };
    Ok(match side {
        Side::Right => right,
        Side::Left => match &cfg.geometry_left {
            Some(p) => ExoGeometry::load(p)?,
            None => right.mirrored(),
        },
    })
}

fn pelvis_pose(geom: &ExoGeometry, lateral_mm: f64) -> PelvisPose {
    PelvisPose {
        t_fp: geom.t_fp_nominal + Vector3::new(lateral_mm / 1000.0, 0.0, 0.0),
        ..PelvisPose::neutral(geom)
    }
}

fn ingest(cfg: &RunConfig, dir: &Path) -> Result<String> {
    let ds = load_dataset(cfg)?;
    export_dataset(&ds, dir)?;
    Ok(format!(
        "ingest: {} subjects, {} cycles on a {}-point grid -> {}",
        ds.subjects.len(),
        ds.cycles.len(),
        ds.grid_size,
        dir.display()
    ))
}

fn train(cfg: &RunConfig, path: &Path) -> Result<String> {
    let ds = load_dataset(cfg)?;
    let bank = train_bank(&ds, &templates(cfg)?)?;
    bank.save(path)?;
    Ok(format!(
        "train: {} models ({} regressed) from {} subjects -> {}",
        bank.entries.len(),
        bank.regressed_count(),
        ds.subjects.len(),
        path.display()
    ))
}

fn write_pattern(p: &GaitPattern, cfg: &RunConfig, dt: f64, outputs: &[PathBuf]) -> Result<String> {
    let series = pattern_csv(p, dt, 1)?;
    let plot = plot_data_csv(p, cfg.grid_size)?;
    p.save(&outputs[0])?;
    write_text(&outputs[1], &series)?;
    write_text(&outputs[2], &plot)?;
    if let Some(events) = outputs.get(3) {
        write_text(events, &events_csv(p))?;
    }
    Ok(format!(
        "{}: cycle time {:.4} s at {:.3} km/h, {} channels -> {}",
        p.kind,
        p.cycle_time,
        p.speed,
        p.channels.len(),
        outputs[0].display()
    ))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| GaitError::io(path, e).into())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write_text(path, &text)
}
