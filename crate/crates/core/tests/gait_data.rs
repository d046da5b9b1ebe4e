use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use gaitgen_core::data::types::{GaitCycle, JointChannel, Side};
use gaitgen_core::data::{
    ensemble_average, export_dataset, filter_speed_levels, ingest_dataset, load_canonical, resample_cycle,
    DatasetSchema, DEFAULT_TREADMILL_LIMIT_KMH,
};
use gaitgen_core::synth::{generate_dataset, SynthConfig, SyntheticLaws};
use gaitgen_core::GaitError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cycle(rng: &mut ChaCha8Rng) -> GaitCycle {
    GaitCycle {
        subject_id: "r".into(),
        channel: JointChannel::HipFlexExt,
        side: Side::Left,
        percent: 55,
        speed: rng.random_range(1.5..3.0),
        cycle_time: rng.random_range(1.0..1.8),
        samples: (0..101).map(|_| rng.random_range(-40.0..40.0)).collect(),
    }
}

#[test]
fn ensemble_matches_per_sample_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cycles: Vec<GaitCycle> = (0..5).map(|_| random_cycle(&mut rng)).collect();
    let avg = ensemble_average(&cycles).unwrap();
    for i in 0..101 {
        let mut sum = 0.0;
        for c in &cycles {
            sum += c.samples[i];
        }
        assert!((avg.samples[i] - sum / 5.0).abs() < 1e-12);
    }
    let t: f64 = cycles.iter().map(|c| c.cycle_time).sum::<f64>() / 5.0;
    assert!((avg.cycle_time - t).abs() < 1e-12);

    let flipped: Vec<GaitCycle> = cycles.iter().map(GaitCycle::negated).collect();
    let avg_flipped = ensemble_average(&flipped).unwrap();
    for (a, b) in avg.samples.iter().zip(&avg_flipped.samples) {
        assert!((a + b).abs() < 1e-12);
    }
}

#[test]
fn band_limited_resampling_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let harmonics: Vec<(f64, f64)> = (1..=4)
            .map(|_| (rng.random_range(-10.0..10.0), rng.random_range(0.0..TAU)))
            .collect();
        let f = |p: f64| -> f64 {
            harmonics
                .iter()
                .enumerate()
                .map(|(k, (a, ph))| a * (TAU * (k + 1) as f64 * p + ph).sin())
                .sum()
        };
        let m = rng.random_range(120..240);
        let raw: Vec<f64> = (0..=m).map(|i| f(i as f64 / m as f64)).collect();
        let grid = resample_cycle(&raw, 101).unwrap();
        let back = resample_cycle(&grid, m + 1).unwrap();
        let amplitude = raw.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for (a, b) in raw.iter().zip(&back) {
            assert!((a - b).abs() < 1e-3 * amplitude, "{a} vs {b}");
        }
    }
}

fn mini_dataset() -> gaitgen_core::data::Dataset {
    let laws = SyntheticLaws::generate(3);
    let cfg = SynthConfig {
        n_subjects: 2,
        seed: 3,
        ..SynthConfig::default()
    };
    generate_dataset(&cfg, &laws).unwrap()
}

#[test]
fn canonical_export_round_trips() {
    let ds = mini_dataset();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    export_dataset(&ds, &a).unwrap();
    let back = ingest_dataset(&a, &DatasetSchema::canonical(101)).unwrap();
    assert_eq!(back, ds);
    export_dataset(&back, &b).unwrap();
    for file in ["subjects.json", "cycles.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn canonical_load_resamples_to_requested_grid() {
    let ds = mini_dataset();
    let dir = tempfile::tempdir().unwrap();
    export_dataset(&ds, dir.path()).unwrap();
    let coarse = load_canonical(dir.path(), 51).unwrap();
    assert_eq!(coarse.grid_size, 51);
    for (c, orig) in coarse.cycles.iter().zip(&ds.cycles) {
        assert_eq!(c.samples.len(), 51);
        assert!((c.samples[25] - orig.samples[50]).abs() < 1e-9);
    }
}

#[test]
fn filter_keeps_training_levels_and_is_idempotent() {
    let laws = SyntheticLaws::generate(3);
    let cfg = SynthConfig {
        n_subjects: 2,
        seed: 4,
        percents: vec![40, 55, 70, 85],
        ..SynthConfig::default()
    };
    let ds = generate_dataset(&cfg, &laws).unwrap();
    let once = filter_speed_levels(&ds, DEFAULT_TREADMILL_LIMIT_KMH).unwrap();
    assert!(once.cycles.iter().all(|c| [40, 55, 70].contains(&c.percent)));
    assert_eq!(once.cycles.len(), ds.cycles.len() * 3 / 4);
    assert_eq!(filter_speed_levels(&once, DEFAULT_TREADMILL_LIMIT_KMH).unwrap(), once);

    // A limit just under every subject's 70% speed removes that level only.
    let limit = ds
        .subjects
        .iter()
        .map(|s| s.self_selected_speed * 0.7)
        .fold(f64::INFINITY, f64::min)
        - 1e-6;
    let slow = filter_speed_levels(&ds, limit).unwrap();
    assert!(slow.cycles.iter().all(|c| [40, 55].contains(&c.percent)));
}

const SCHEMA: &str = r#"
format = "trials"
[subjects]
file = "info.csv"
id = "Subject"
age = "Age"
height = "Height"
height_unit = "cm"
mass = "Mass"
gender = "Gender"
female = "F"
male = "M"
speed = "Speed"
speed_unit = "m/s"
[trials]
percents = [40, 55, 70]
angle_file = "{subject}/T{trial:02}_{channel}.csv"
time_column = "time"
left_column = "left"
right_column = "right"
angle_unit = "rad"
pelvis_unit = "mm"
"#;

fn write_trial(root: &Path, subject: &str, trial: usize, channel: JointChannel) {
    let mut text = String::from("time,left,right\n");
    for i in 0..=150 {
        let p = i as f64 / 150.0;
        let v = 0.5 * (TAU * p).sin();
        text.push_str(&format!("{},{},{}\n", 1.3 * p, -v, v));
    }
    let dir = root.join(subject);
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join(format!("T{trial:02}_{}.csv", channel.name())), text).unwrap();
}

fn trial_root(skip: Option<JointChannel>) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("info.csv"),
        "Subject,Age,Height,Mass,Gender,Speed\nS01,33,172,68.5,F,1.2\n",
    )
    .unwrap();
    for trial in 1..=3 {
        for channel in JointChannel::ALL {
            if Some(channel) != skip {
                write_trial(dir.path(), "S01", trial, channel);
            }
        }
    }
    dir
}

#[test]
fn trial_files_ingest_with_unit_conversion() {
    let dir = trial_root(None);
    let schema = DatasetSchema::from_toml_str(SCHEMA).unwrap();
    let ds = ingest_dataset(dir.path(), &schema).unwrap();
    let s = &ds.subjects[0];
    assert!((s.height - 1.72).abs() < 1e-12);
    assert!((s.self_selected_speed - 4.32).abs() < 1e-12);
    assert_eq!(ds.cycles.len(), 3 * 4 * 2);
    let knee = ds
        .cycles
        .iter()
        .find(|c| c.channel == JointChannel::KneeFlexExt && c.side == Side::Right && c.percent == 55)
        .unwrap();
    assert_eq!(knee.samples.len(), 101);
    assert!((knee.speed - 4.32 * 0.55).abs() < 1e-12);
    assert!((knee.cycle_time - 1.3).abs() < 1e-12);
    let peak = knee.samples.iter().cloned().fold(f64::MIN, f64::max);
    assert!((peak - 0.5_f64.to_degrees()).abs() < 0.05, "{peak}");
    // Pelvis displacement is already in mm and is not converted.
    let pelvis = ds.cycles.iter().find(|c| c.channel == JointChannel::PelvisLateral).unwrap();
    let peak = pelvis.samples.iter().cloned().fold(f64::MIN, f64::max);
    assert!((peak - 0.5).abs() < 0.01, "{peak}");
}

#[test]
fn missing_channel_file_is_named() {
    let dir = trial_root(Some(JointChannel::KneeFlexExt));
    let schema = DatasetSchema::from_toml_str(SCHEMA).unwrap();
    let err = ingest_dataset(dir.path(), &schema).unwrap_err();
    assert!(matches!(err, GaitError::InvariantViolation(_)), "{err}");
    assert!(err.to_string().contains("knee_flex_ext"), "{err}");
}

#[test]
fn pelvis_derived_from_markers_when_file_absent() {
    let dir = trial_root(Some(JointChannel::PelvisLateral));
    let fs_hz = 100.0;
    let stride = 120;
    for trial in 1..=3 {
        let mut markers = String::from("RASI_x,RASI_y,RASI_z,LASI_x,LASI_y,LASI_z\n");
        for i in 0..stride * 5 {
            let lateral = 15.0 * (TAU * i as f64 / stride as f64).sin();
            markers.push_str(&format!("{},0,900,{},0,900\n", lateral + 120.0, lateral - 120.0));
        }
        fs::write(dir.path().join(format!("S01/T{trial:02}_markers.csv")), markers).unwrap();
        let mut events = String::from("side,frame\n");
        for k in 0..5 {
            events.push_str(&format!("right,{}\nleft,{}\n", k * stride, k * stride + stride / 2));
        }
        fs::write(dir.path().join(format!("S01/T{trial:02}_events.csv")), events).unwrap();
    }
    let schema = format!(
        "{SCHEMA}[markers]\nmarker_file = \"{{subject}}/T{{trial:02}}_markers.csv\"\n\
         events_file = \"{{subject}}/T{{trial:02}}_events.csv\"\nsample_rate_hz = {fs_hz}\n\
         pelvis = [\"RASI\", \"LASI\"]\nlateral_axis = \"x\"\n"
    );
    let schema = DatasetSchema::from_toml_str(&schema).unwrap();
    let ds = ingest_dataset(dir.path(), &schema).unwrap();
    let pelvis: Vec<&GaitCycle> = ds
        .cycles
        .iter()
        .filter(|c| c.channel == JointChannel::PelvisLateral)
        .collect();
    assert_eq!(pelvis.len(), 6);
    for c in pelvis {
        let max = c.samples.iter().cloned().fold(f64::MIN, f64::max);
        let min = c.samples.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - 15.0).abs() < 0.5 && (min + 15.0).abs() < 0.5, "{min} {max}");
        assert!((c.cycle_time - stride as f64 / fs_hz).abs() < 1e-9);
    }
}
