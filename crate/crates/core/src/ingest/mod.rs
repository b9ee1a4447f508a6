//! Visit-level record ingestion: file parsing, validation, and canonical
//! serialization for the two supported wire formats (CSV and JSONL).
//!
//! Parsing is a pure function of its input bytes. Rejected rows are hard
//! errors naming the offending row; recoverable oddities (exact duplicate
//! rows, unknown extra columns) are deduplicated/ignored and surfaced as
//! warnings so nothing is ever dropped silently.

mod synthetic;

pub use synthetic::{generate_synthetic, SyntheticConfig, VisitCountRange};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::comorbidity::normalize_code;
use crate::error::{Error, Result};

/// Exact CSV column set, in order.
pub const VISIT_CSV_HEADER: &str =
    "patient_id,admit_time,discharge_time,visit_class,elective,diagnosis_codes";

const COLUMNS: [&str; 6] = [
    "patient_id",
    "admit_time",
    "discharge_time",
    "visit_class",
    "elective",
    "diagnosis_codes",
];

/// Encounter setting of a visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VisitClass {
    Ed,
    Inpatient,
}

impl VisitClass {
    pub fn parse(s: &str) -> Option<VisitClass> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ED" => Some(VisitClass::Ed),
            "INPATIENT" => Some(VisitClass::Inpatient),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            VisitClass::Ed => "ED",
            VisitClass::Inpatient => "INPATIENT",
        }
    }
}

impl fmt::Display for VisitClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One hospital encounter.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VisitRecord {
    pub patient_id: String,
    pub admit_time: DateTime<Utc>,
    pub discharge_time: DateTime<Utc>,
    pub visit_class: VisitClass,
    pub elective: bool,
    /// Normalized ICD-9/ICD-10 code strings (uppercase, no whitespace).
    pub diagnosis_codes: Vec<String>,
}

impl VisitRecord {
    /// Total order used inside a patient history: admit, then discharge,
    /// then the remaining fields so sorting never depends on input order.
    fn timeline_key(&self) -> impl Ord + '_ {
        (
            self.admit_time,
            self.discharge_time,
            self.visit_class.as_str(),
            self.elective,
            &self.diagnosis_codes,
        )
    }
}

/// All visits of one patient, sorted ascending by admit time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientHistory {
    patient_id: String,
    visits: Vec<VisitRecord>,
}

impl PatientHistory {
    /// Build a history, sorting visits and checking that every visit carries
    /// the same patient id. At least one visit is required: a patient exists
    /// in a dataset because a visit does.
    pub fn new(patient_id: String, mut visits: Vec<VisitRecord>) -> Result<PatientHistory> {
        if visits.is_empty() {
            return Err(Error::EmptyInput(format!(
                "patient {patient_id} has no visits"
            )));
        }
        for v in &visits {
            if v.patient_id != patient_id {
                return Err(Error::Config(format!(
                    "visit for patient {} grouped under {}",
                    v.patient_id, patient_id
                )));
            }
            if v.discharge_time < v.admit_time {
                return Err(Error::Config(format!(
                    "patient {patient_id}: discharge_time precedes admit_time"
                )));
            }
        }
        visits.sort_by(|a, b| a.timeline_key().cmp(&b.timeline_key()));
        Ok(PatientHistory { patient_id, visits })
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn visits(&self) -> &[VisitRecord] {
        &self.visits
    }

    /// Admit time of the final visit (the default as-of point).
    pub fn last_admit(&self) -> DateTime<Utc> {
        self.visits
            .last()
            .expect("history is never empty")
            .admit_time
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Parsed {
        format: InputFormat,
        source: Option<String>,
    },
    Synthetic {
        seed: u64,
    },
    InMemory,
}

/// A collection of patient histories with unique patient ids, kept sorted
/// by patient id.
#[derive(Debug, Clone)]
pub struct Dataset {
    patients: Vec<PatientHistory>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(mut patients: Vec<PatientHistory>, provenance: Provenance) -> Result<Dataset> {
        patients.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
        for pair in patients.windows(2) {
            if pair[0].patient_id == pair[1].patient_id {
                return Err(Error::Config(format!(
                    "duplicate patient_id {}",
                    pair[0].patient_id
                )));
            }
        }
        Ok(Dataset {
            patients,
            provenance,
        })
    }

    pub fn patients(&self) -> &[PatientHistory] {
        &self.patients
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn get(&self, patient_id: &str) -> Option<&PatientHistory> {
        self.patients
            .binary_search_by(|p| p.patient_id.as_str().cmp(patient_id))
            .ok()
            .map(|i| &self.patients[i])
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Dataset {
        self.provenance = provenance;
        self
    }
}

/// Supported input encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputFormat::Csv => f.write_str("csv"),
            InputFormat::Jsonl => f.write_str("jsonl"),
        }
    }
}

/// A parsed dataset plus anything the caller should know about.
#[derive(Debug)]
pub struct ParseOutcome {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

fn parse_timestamp(value: &str, row: usize, field: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(value.trim())
        .map(|t| {
            let t = t.with_timezone(&Utc);
            // Second resolution is the contract; drop anything finer.
            t - chrono::Duration::nanoseconds(i64::from(t.timestamp_subsec_nanos()))
        })
        .map_err(|e| Error::Parse {
            row,
            message: format!("malformed {field} `{value}`: {e}"),
        })
}

fn parse_bool(value: &str, row: usize, field: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(Error::Parse {
            row,
            message: format!("malformed {field} `{other}` (expected true/false)"),
        }),
    }
}

fn split_codes(raw: &str) -> Vec<String> {
    raw.split(';')
        .map(normalize_code)
        .filter(|c| !c.is_empty())
        .collect()
}

fn finish(
    visits: Vec<VisitRecord>,
    format: InputFormat,
    warnings: Vec<String>,
) -> Result<ParseOutcome> {
    let mut grouped: BTreeMap<String, Vec<VisitRecord>> = BTreeMap::new();
    for v in visits {
        grouped.entry(v.patient_id.clone()).or_default().push(v);
    }
    let patients = grouped
        .into_iter()
        .map(|(id, vs)| PatientHistory::new(id, vs))
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset::new(
        patients,
        Provenance::Parsed {
            format,
            source: None,
        },
    )?;
    Ok(ParseOutcome { dataset, warnings })
}

/// Parse visit records from a byte stream in the declared format.
///
/// Every rejected row aborts with an error naming its (1-based) data row;
/// exact duplicate rows are dropped with a warning.
pub fn parse_visits(source: impl Read, format: InputFormat) -> Result<ParseOutcome> {
    match format {
        InputFormat::Csv => parse_csv(source),
        InputFormat::Jsonl => parse_jsonl(source),
    }
}

fn parse_csv(source: impl Read) -> Result<ParseOutcome> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(source);
    let mut warnings = Vec::new();

    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        // Entirely empty input: a dataset with zero patients.
        return finish(Vec::new(), InputFormat::Csv, warnings);
    }
    let mut column_index = [0usize; 6];
    for (slot, name) in column_index.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                row: 0,
                message: format!("missing required column `{name}` in header"),
            })?;
    }
    for extra in headers.iter().filter(|h| !COLUMNS.contains(h)) {
        warnings.push(format!("ignoring unknown column `{extra}`"));
    }

    let mut visits = Vec::new();
    let mut seen: HashSet<VisitRecord> = HashSet::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record?;
        let field = |i: usize| -> Result<&str> {
            record.get(column_index[i]).ok_or_else(|| Error::Parse {
                row,
                message: format!("missing field `{}`", COLUMNS[i]),
            })
        };
        let class_field = field(3)?;
        let visit = VisitRecord {
            patient_id: field(0)?.trim().to_string(),
            admit_time: parse_timestamp(field(1)?, row, "admit_time")?,
            discharge_time: parse_timestamp(field(2)?, row, "discharge_time")?,
            visit_class: VisitClass::parse(class_field).ok_or_else(|| Error::Parse {
                row,
                message: format!("unknown visit_class `{}`", class_field.trim()),
            })?,
            elective: parse_bool(field(4)?, row, "elective")?,
            diagnosis_codes: split_codes(field(5)?),
        };
        validate_visit(&visit, row)?;
        if seen.insert(visit.clone()) {
            visits.push(visit);
        } else {
            warnings.push(format!(
                "row {row}: exact duplicate of an earlier row, dropped"
            ));
        }
    }
    finish(visits, InputFormat::Csv, warnings)
}

#[derive(Deserialize)]
struct VisitWire {
    patient_id: String,
    admit_time: String,
    discharge_time: String,
    visit_class: String,
    elective: bool,
    diagnosis_codes: Vec<String>,
}

fn parse_jsonl(source: impl Read) -> Result<ParseOutcome> {
    let reader = BufReader::new(source);
    let mut warnings = Vec::new();
    let mut visits = Vec::new();
    let mut seen: HashSet<VisitRecord> = HashSet::new();
    let mut row = 0usize;

    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        row += 1;

        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            row,
            message: format!("invalid JSON: {e}"),
        })?;
        if let Some(object) = value.as_object() {
            for key in object.keys().filter(|k| !COLUMNS.contains(&k.as_str())) {
                warnings.push(format!("row {row}: ignoring unknown field `{key}`"));
            }
        }
        let wire: VisitWire = serde_json::from_value(value).map_err(|e| Error::Parse {
            row,
            message: format!("{e}"),
        })?;

        let visit = VisitRecord {
            patient_id: wire.patient_id.trim().to_string(),
            admit_time: parse_timestamp(&wire.admit_time, row, "admit_time")?,
            discharge_time: parse_timestamp(&wire.discharge_time, row, "discharge_time")?,
            visit_class: VisitClass::parse(&wire.visit_class).ok_or_else(|| Error::Parse {
                row,
                message: format!("unknown visit_class `{}`", wire.visit_class),
            })?,
            elective: wire.elective,
            diagnosis_codes: wire
                .diagnosis_codes
                .iter()
                .map(|c| normalize_code(c))
                .filter(|c| !c.is_empty())
                .collect(),
        };
        validate_visit(&visit, row)?;
        if seen.insert(visit.clone()) {
            visits.push(visit);
        } else {
            warnings.push(format!(
                "row {row}: exact duplicate of an earlier row, dropped"
            ));
        }
    }
    finish(visits, InputFormat::Jsonl, warnings)
}

fn validate_visit(visit: &VisitRecord, row: usize) -> Result<()> {
    if visit.patient_id.is_empty() {
        return Err(Error::Parse {
            row,
            message: "empty patient_id".to_string(),
        });
    }
    if visit.discharge_time < visit.admit_time {
        return Err(Error::Parse {
            row,
            message: "discharge_time precedes admit_time".to_string(),
        });
    }
    Ok(())
}

fn format_timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Write a dataset in canonical order (patients by id, visits by timeline)
/// so equal datasets serialize byte-identically.
pub fn write_visits(dataset: &Dataset, format: InputFormat, out: &mut impl Write) -> Result<()> {
    match format {
        InputFormat::Csv => write_csv(dataset, out),
        InputFormat::Jsonl => write_jsonl(dataset, out),
    }
}

fn write_csv(dataset: &Dataset, out: &mut impl Write) -> Result<()> {
    writeln!(out, "{VISIT_CSV_HEADER}")?;
    for patient in dataset.patients() {
        for v in patient.visits() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                v.patient_id,
                format_timestamp(v.admit_time),
                format_timestamp(v.discharge_time),
                v.visit_class,
                v.elective,
                v.diagnosis_codes.join(";")
            )?;
        }
    }
    Ok(())
}

fn write_jsonl(dataset: &Dataset, out: &mut impl Write) -> Result<()> {
    for patient in dataset.patients() {
        for v in patient.visits() {
            let line = serde_json::json!({
                "patient_id": v.patient_id,
                "admit_time": format_timestamp(v.admit_time),
                "discharge_time": format_timestamp(v.discharge_time),
                "visit_class": v.visit_class.as_str(),
                "elective": v.elective,
                "diagnosis_codes": v.diagnosis_codes,
            });
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}
