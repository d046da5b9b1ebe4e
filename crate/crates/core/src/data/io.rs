//! Dataset ingestion and the canonical export format.
//!
//! Two layouts are read:
//!
//! * `trials`: a subject metadata table plus one delimited angle file per
//!   subject, trial and channel (columns: time in seconds, left, right),
//!   located through file-name templates. A missing pelvis file is derived
//!   from the trial's marker file when a marker layout is configured.
//! * `canonical`: `subjects.json` plus `cycles.csv`, as written by
//!   [`export_dataset`]. Floats are written in shortest round-trip form, so
//!   export → ingest → export is byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::markers::{derive_pelvis_lateral, MarkerTrace};
use crate::data::resample::resample_cycle;
use crate::data::types::{
    parse_side, parse_speed_label, side_name, speed_label, Dataset, GaitCycle, Gender,
    JointChannel, Side, Subject, DEFAULT_GRID_SIZE,
};
use crate::error::{GaitError, Result};

pub const SUBJECTS_FILE: &str = "subjects.json";
pub const CYCLES_FILE: &str = "cycles.csv";
const CANONICAL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Canonical,
    Trials,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeightUnit {
    #[serde(rename = "m")]
    Meter,
    #[serde(rename = "cm")]
    Centimeter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedUnit {
    #[serde(rename = "km/h")]
    KmPerHour,
    #[serde(rename = "m/s")]
    MeterPerSecond,
}

impl SpeedUnit {
    pub fn to_kmh(self, v: f64) -> f64 {
        match self {
            SpeedUnit::KmPerHour => v,
            SpeedUnit::MeterPerSecond => v * 3.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    Deg,
    Rad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisplacementUnit {
    Mm,
    M,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

fn default_delimiter() -> char {
    ','
}

fn default_grid() -> usize {
    DEFAULT_GRID_SIZE
}

/// Column names of the subject metadata table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectColumns {
    pub file: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub id: String,
    pub age: String,
    pub height: String,
    pub height_unit: HeightUnit,
    pub mass: String,
    pub gender: String,
    pub female: String,
    pub male: String,
    pub speed: String,
    pub speed_unit: SpeedUnit,
}

/// Location and layout of the per-trial angle files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialLayout {
    /// Speed of trial `k` (1-based) as a percentage of the self-selected speed.
    pub percents: Vec<u16>,
    /// Template with `{subject}`, `{trial}`, `{trial:02}`, `{percent}`, `{channel}`.
    pub angle_file: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub time_column: String,
    pub left_column: String,
    pub right_column: String,
    pub angle_unit: AngleUnit,
    pub pelvis_unit: DisplacementUnit,
    /// Value substituted for `{channel}`; defaults to the channel name.
    #[serde(default)]
    pub channel_names: BTreeMap<JointChannel, String>,
}

/// Marker files used to derive the pelvis lateral channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerLayout {
    /// Template as for angle files; columns `<label>_x`, `<label>_y`, `<label>_z` in mm.
    pub marker_file: String,
    /// Template; columns `side`, `frame`.
    pub events_file: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub sample_rate_hz: f64,
    pub pelvis: Vec<String>,
    pub lateral_axis: Axis,
}

/// Dataset schema configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub format: DatasetFormat,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    pub subjects: Option<SubjectColumns>,
    pub trials: Option<TrialLayout>,
    pub markers: Option<MarkerLayout>,
}

impl DatasetSchema {
    pub fn canonical(grid_size: usize) -> DatasetSchema {
        DatasetSchema {
            format: DatasetFormat::Canonical,
            grid_size,
            subjects: None,
            trials: None,
            markers: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<DatasetSchema> {
        toml::from_str(text).map_err(|e| GaitError::Config(format!("dataset schema: {e}")))
    }

    pub fn load(path: &Path) -> Result<DatasetSchema> {
        let text = fs::read_to_string(path).map_err(|_| GaitError::MissingFile(path.to_path_buf()))?;
        Self::from_toml_str(&text)
    }
}

/// Reads and validates a dataset under `root`.
pub fn ingest_dataset(root: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    let ds = match schema.format {
        DatasetFormat::Canonical => load_canonical(root, schema.grid_size)?,
        DatasetFormat::Trials => ingest_trials(root, schema)?,
    };
    ds.validate()?;
    Ok(ds)
}

fn fill_template(template: &str, subject: &str, trial: usize, percent: u16, channel: &str) -> String {
    template
        .replace("{subject}", subject)
        .replace("{trial:02}", &format!("{trial:02}"))
        .replace("{trial}", &trial.to_string())
        .replace("{percent}", &percent.to_string())
        .replace("{channel}", channel)
}

fn open_table(path: &Path, delimiter: char) -> Result<csv::Reader<fs::File>> {
    if !path.exists() {
        return Err(GaitError::MissingFile(path.to_path_buf()));
    }
    csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| GaitError::schema(path.display(), e.to_string()))
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| GaitError::schema(path.display(), format!("missing column {name:?}")))
}

fn parse_number(field: &str, path: &Path, row: usize, column: &str) -> Result<f64> {
    let value: f64 = field.parse().map_err(|_| {
        GaitError::schema(path.display(), format!("row {row}, column {column}: {field:?} is not a number"))
    })?;
    if !value.is_finite() {
        return Err(GaitError::InvariantViolation(format!(
            "{}: row {row}, column {column}: non-finite value",
            path.display()
        )));
    }
    Ok(value)
}

fn read_subjects(root: &Path, cols: &SubjectColumns) -> Result<Vec<Subject>> {
    let path = root.join(&cols.file);
    let mut reader = open_table(&path, cols.delimiter)?;
    let headers = reader
        .headers()
        .map_err(|e| GaitError::schema(path.display(), e.to_string()))?
        .clone();
    let idx = |name: &str| column_index(&headers, name, &path);
    let (i_id, i_age, i_height, i_mass, i_gender, i_speed) = (
        idx(&cols.id)?,
        idx(&cols.age)?,
        idx(&cols.height)?,
        idx(&cols.mass)?,
        idx(&cols.gender)?,
        idx(&cols.speed)?,
    );
    let mut subjects = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| GaitError::schema(path.display(), e.to_string()))?;
        let row = row + 2;
        let field = |i: usize| record.get(i).unwrap_or("");
        let gender_raw = field(i_gender);
        let gender = if gender_raw == cols.female {
            Gender::Female
        } else if gender_raw == cols.male {
            Gender::Male
        } else {
            return Err(GaitError::schema(
                path.display(),
                format!("row {row}: gender {gender_raw:?} matches neither {:?} nor {:?}", cols.female, cols.male),
            ));
        };
        let height = parse_number(field(i_height), &path, row, &cols.height)?;
        let subject = Subject {
            id: field(i_id).to_string(),
            age: parse_number(field(i_age), &path, row, &cols.age)?,
            height: match cols.height_unit {
                HeightUnit::Meter => height,
                HeightUnit::Centimeter => height / 100.0,
            },
            mass: parse_number(field(i_mass), &path, row, &cols.mass)?,
            gender,
            self_selected_speed: cols
                .speed_unit
                .to_kmh(parse_number(field(i_speed), &path, row, &cols.speed)?),
        };
        subject
            .validate()
            .map_err(|e| GaitError::InvariantViolation(format!("{} row {row}: {e}", path.display())))?;
        subjects.push(subject);
    }
    Ok(subjects)
}

/// Reads one angle file: returns the cycle duration and the raw left/right columns.
fn read_angle_file(path: &Path, layout: &TrialLayout) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut reader = open_table(path, layout.delimiter)?;
    let headers = reader
        .headers()
        .map_err(|e| GaitError::schema(path.display(), e.to_string()))?
        .clone();
    let i_time = column_index(&headers, &layout.time_column, path)?;
    let i_left = column_index(&headers, &layout.left_column, path)?;
    let i_right = column_index(&headers, &layout.right_column, path)?;
    let (mut time, mut left, mut right) = (Vec::new(), Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| GaitError::schema(path.display(), e.to_string()))?;
        let row = row + 2;
        let get = |i: usize, name: &str| parse_number(record.get(i).unwrap_or(""), path, row, name);
        time.push(get(i_time, &layout.time_column)?);
        left.push(get(i_left, &layout.left_column)?);
        right.push(get(i_right, &layout.right_column)?);
    }
    if time.len() < 5 {
        return Err(GaitError::InvariantViolation(format!(
            "{}: {} rows, need at least 5",
            path.display(),
            time.len()
        )));
    }
    let duration = time[time.len() - 1] - time[0];
    if !(duration > 0.0) {
        return Err(GaitError::InvariantViolation(format!(
            "{}: time column does not increase",
            path.display()
        )));
    }
    Ok((duration, left, right))
}

fn read_marker_trace(
    root: &Path,
    layout: &MarkerLayout,
    subject: &Subject,
    trial: usize,
    percent: u16,
) -> Result<Option<MarkerTrace>> {
    let marker_path = root.join(fill_template(&layout.marker_file, &subject.id, trial, percent, ""));
    if !marker_path.exists() {
        return Ok(None);
    }
    let mut reader = open_table(&marker_path, layout.delimiter)?;
    let headers = reader
        .headers()
        .map_err(|e| GaitError::schema(marker_path.display(), e.to_string()))?
        .clone();
    let mut columns: BTreeMap<String, [Option<usize>; 3]> = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some((label, axis)) = h.rsplit_once('_') {
            let slot = match axis.to_ascii_lowercase().as_str() {
                "x" => 0,
                "y" => 1,
                "z" => 2,
                _ => continue,
            };
            columns.entry(label.to_string()).or_default()[slot] = Some(i);
        }
    }
    let mut markers: BTreeMap<String, Vec<[f64; 3]>> = BTreeMap::new();
    let records: Vec<csv::StringRecord> = reader
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| GaitError::schema(marker_path.display(), e.to_string()))?;
    for (label, idx) in &columns {
        let [Some(ix), Some(iy), Some(iz)] = *idx else {
            continue;
        };
        let mut pos = Vec::with_capacity(records.len());
        for (row, rec) in records.iter().enumerate() {
            let get = |i: usize| parse_number(rec.get(i).unwrap_or(""), &marker_path, row + 2, label);
            pos.push([get(ix)?, get(iy)?, get(iz)?]);
        }
        markers.insert(label.clone(), pos);
    }

    let events_path = root.join(fill_template(&layout.events_file, &subject.id, trial, percent, ""));
    let mut reader = open_table(&events_path, layout.delimiter)?;
    let headers = reader
        .headers()
        .map_err(|e| GaitError::schema(events_path.display(), e.to_string()))?
        .clone();
    let i_side = column_index(&headers, "side", &events_path)?;
    let i_frame = column_index(&headers, "frame", &events_path)?;
    let mut heel_strikes: BTreeMap<Side, Vec<usize>> = BTreeMap::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| GaitError::schema(events_path.display(), e.to_string()))?;
        let side = parse_side(rec.get(i_side).unwrap_or(""))
            .map_err(|e| GaitError::schema(events_path.display(), format!("row {}: {e}", row + 2)))?;
        let frame: usize = rec.get(i_frame).unwrap_or("").parse().map_err(|_| {
            GaitError::schema(events_path.display(), format!("row {}: bad frame index", row + 2))
        })?;
        heel_strikes.entry(side).or_default().push(frame);
    }
    Ok(Some(MarkerTrace {
        subject_id: subject.id.clone(),
        percent,
        speed: subject.self_selected_speed * percent as f64 / 100.0,
        sample_rate: layout.sample_rate_hz,
        markers,
        heel_strikes,
        pelvis_markers: layout.pelvis.clone(),
        lateral_axis: layout.lateral_axis.index(),
    }))
}

fn ingest_trials(root: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    let cols = schema
        .subjects
        .as_ref()
        .ok_or_else(|| GaitError::Config("trials format needs a [subjects] table".into()))?;
    let layout = schema
        .trials
        .as_ref()
        .ok_or_else(|| GaitError::Config("trials format needs a [trials] table".into()))?;
    let subjects = read_subjects(root, cols)?;
    let mut cycles = Vec::new();
    for subject in &subjects {
        for (k, &percent) in layout.percents.iter().enumerate() {
            let trial = k + 1;
            let path_of = |channel: JointChannel| {
                let name = layout
                    .channel_names
                    .get(&channel)
                    .map(String::as_str)
                    .unwrap_or(channel.name());
                root.join(fill_template(&layout.angle_file, &subject.id, trial, percent, name))
            };
            let paths: Vec<(JointChannel, PathBuf)> =
                JointChannel::ALL.iter().map(|&c| (c, path_of(c))).collect();
            if paths.iter().all(|(_, p)| !p.exists()) {
                continue;
            }
            let speed = subject.self_selected_speed * percent as f64 / 100.0;
            for (channel, path) in paths {
                if !path.exists() {
                    if channel == JointChannel::PelvisLateral {
                        if let Some(markers) = &schema.markers {
                            if let Some(trace) = read_marker_trace(root, markers, subject, trial, percent)? {
                                cycles.extend(derive_pelvis_lateral(&trace, schema.grid_size)?);
                                continue;
                            }
                        }
                    }
                    return Err(GaitError::InvariantViolation(format!(
                        "subject {} trial {trial}: channel {channel} missing ({})",
                        subject.id,
                        path.display()
                    )));
                }
                let (duration, left, right) = read_angle_file(&path, layout)?;
                let scale = match channel {
                    JointChannel::PelvisLateral => match layout.pelvis_unit {
                        DisplacementUnit::Mm => 1.0,
                        DisplacementUnit::M => 1000.0,
                    },
                    _ => match layout.angle_unit {
                        AngleUnit::Deg => 1.0,
                        AngleUnit::Rad => 180.0 / std::f64::consts::PI,
                    },
                };
                for (side, raw) in [(Side::Left, left), (Side::Right, right)] {
                    let scaled: Vec<f64> = raw.iter().map(|v| v * scale).collect();
                    cycles.push(GaitCycle {
                        subject_id: subject.id.clone(),
                        channel,
                        side,
                        percent,
                        speed,
                        cycle_time: duration,
                        samples: resample_cycle(&scaled, schema.grid_size)?,
                    });
                }
            }
        }
    }
    Ok(Dataset {
        subjects,
        cycles,
        grid_size: schema.grid_size,
    })
}

#[derive(Serialize, Deserialize)]
struct SubjectsFile {
    format_version: u32,
    grid_size: usize,
    subjects: Vec<Subject>,
}

/// Writes the canonical `subjects.json` and `cycles.csv` into `dir`.
pub fn export_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| GaitError::io(dir, e))?;
    let meta = SubjectsFile {
        format_version: CANONICAL_VERSION,
        grid_size: ds.grid_size,
        subjects: ds.subjects.clone(),
    };
    let json = serde_json::to_string_pretty(&meta).expect("subjects serialize") + "\n";
    let path = dir.join(SUBJECTS_FILE);
    fs::write(&path, json).map_err(|e| GaitError::io(&path, e))?;

    let mut out = String::from("subject_id,channel,side,level,speed,cycle_time");
    for i in 0..ds.grid_size {
        out.push_str(&format!(",s{i:03}"));
    }
    out.push('\n');
    for c in &ds.cycles {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            c.subject_id,
            c.channel,
            side_name(c.side),
            speed_label(c.percent),
            c.speed,
            c.cycle_time
        ));
        for v in &c.samples {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    let path = dir.join(CYCLES_FILE);
    fs::write(&path, out).map_err(|e| GaitError::io(&path, e))
}

/// Reads a canonical export, resampling cycles if `grid_size` differs.
pub fn load_canonical(dir: &Path, grid_size: usize) -> Result<Dataset> {
    let meta_path = dir.join(SUBJECTS_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|_| GaitError::MissingFile(meta_path.clone()))?;
    let meta: SubjectsFile =
        serde_json::from_str(&text).map_err(|e| GaitError::schema(meta_path.display(), e.to_string()))?;
    if meta.format_version != CANONICAL_VERSION {
        return Err(GaitError::schema(
            meta_path.display(),
            format!("format version {} (expected {CANONICAL_VERSION})", meta.format_version),
        ));
    }
    let path = dir.join(CYCLES_FILE);
    let mut reader = open_table(&path, ',')?;
    let headers = reader
        .headers()
        .map_err(|e| GaitError::schema(path.display(), e.to_string()))?
        .clone();
    let fixed = ["subject_id", "channel", "side", "level", "speed", "cycle_time"];
    if headers.len() != fixed.len() + meta.grid_size || fixed.iter().zip(headers.iter()).any(|(a, b)| *a != b) {
        return Err(GaitError::schema(path.display(), "unexpected header"));
    }
    let mut cycles = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| GaitError::schema(path.display(), e.to_string()))?;
        let row = row + 2;
        let bad = |e: GaitError| GaitError::schema(path.display(), format!("row {row}: {e}"));
        let samples = (fixed.len()..record.len())
            .map(|i| parse_number(&record[i], &path, row, &headers[i]))
            .collect::<Result<Vec<f64>>>()?;
        let samples = if meta.grid_size == grid_size {
            samples
        } else {
            resample_cycle(&samples, grid_size)?
        };
        cycles.push(GaitCycle {
            subject_id: record[0].to_string(),
            channel: record[1].parse().map_err(bad)?,
            side: parse_side(&record[2]).map_err(bad)?,
            percent: parse_speed_label(&record[3]).map_err(bad)?,
            speed: parse_number(&record[4], &path, row, "speed")?,
            cycle_time: parse_number(&record[5], &path, row, "cycle_time")?,
            samples,
        });
    }
    Ok(Dataset {
        subjects: meta.subjects,
        cycles,
        grid_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_fill_all_placeholders() {
        let s = fill_template("{subject}/T{trial:02}_{percent}_{channel}.csv", "WBDS01", 3, 70, "knee");
        assert_eq!(s, "WBDS01/T03_70_knee.csv");
        assert_eq!(fill_template("{subject}-{trial}", "a", 12, 40, ""), "a-12");
    }

    #[test]
    fn schema_parses() {
        let text = r#"
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
            angle_unit = "deg"
            pelvis_unit = "mm"
            [trials.channel_names]
            knee_flex_ext = "knee"
        "#;
        let schema = DatasetSchema::from_toml_str(text).unwrap();
        assert_eq!(schema.grid_size, 101);
        let layout = schema.trials.unwrap();
        assert_eq!(layout.channel_names[&JointChannel::KneeFlexExt], "knee");
        assert_eq!(schema.subjects.unwrap().speed_unit.to_kmh(0.5), 1.8);
    }

    #[test]
    fn missing_canonical_files_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_canonical(dir.path(), 101),
            Err(GaitError::MissingFile(_))
        ));
    }
}
