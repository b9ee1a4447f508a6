//! ICD code to comorbidity category mapping.
//!
//! Diagnosis codes are resolved against a prefix table with longest-prefix-match
//! semantics: a code belongs to the category of the longest table prefix that
//! prefixes it, within the code's ICD version. The bundled table is a desk-scale
//! subset covering all 30 categories with at least 3 prefixes each; it is not a
//! clinically complete mapping.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PatientHistory;

const CATEGORIES_CSV: &str = include_str!("../data/categories.csv");
const PREFIXES_CSV: &str = include_str!("../data/icd_prefixes.csv");

/// Stable short token identifying one comorbidity category (e.g. `DRUG`).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(String);

impl CategoryId {
    pub fn new(id: impl Into<String>) -> Self {
        CategoryId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CategoryId {
    fn from(s: &str) -> Self {
        CategoryId(s.to_string())
    }
}

/// One comorbidity category from the registry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComorbidityCategory {
    pub id: CategoryId,
    pub display_name: String,
}

/// ICD code system of a table prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IcdVersion {
    Icd9,
    Icd10,
}

impl IcdVersion {
    fn parse(s: &str) -> Option<IcdVersion> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ICD9" => Some(IcdVersion::Icd9),
            "ICD10" => Some(IcdVersion::Icd10),
            _ => None,
        }
    }

    /// Infer the version of a normalized code: ICD-9 code strings in this
    /// artifact are all-numeric, ICD-10 codes start with a letter.
    pub fn infer(code: &str) -> IcdVersion {
        if code.chars().next().is_some_and(|c| c.is_ascii_digit()) {
            IcdVersion::Icd9
        } else {
            IcdVersion::Icd10
        }
    }
}

impl fmt::Display for IcdVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IcdVersion::Icd9 => f.write_str("ICD9"),
            IcdVersion::Icd10 => f.write_str("ICD10"),
        }
    }
}

/// Uppercase a diagnosis code and strip whitespace and dots, so `"i50.9 "`
/// and `"I509"` resolve identically.
pub fn normalize_code(code: &str) -> String {
    code.chars()
        .filter(|c| !c.is_whitespace() && *c != '.')
        .map(|c| c.to_ascii_uppercase())
        .collect()
}

/// A deduplicated set of comorbidity category ids held by one patient.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComorbiditySet(BTreeSet<CategoryId>);

impl ComorbiditySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: CategoryId) {
        self.0.insert(id);
    }

    pub fn contains(&self, id: &CategoryId) -> bool {
        self.0.contains(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Iterate in sorted id order.
    pub fn iter(&self) -> impl Iterator<Item = &CategoryId> {
        self.0.iter()
    }

    pub fn union_with(&mut self, other: &ComorbiditySet) {
        for id in other.iter() {
            self.0.insert(id.clone());
        }
    }

    pub fn is_subset(&self, other: &ComorbiditySet) -> bool {
        self.0.is_subset(&other.0)
    }
}

impl FromIterator<CategoryId> for ComorbiditySet {
    fn from_iter<I: IntoIterator<Item = CategoryId>>(iter: I) -> Self {
        ComorbiditySet(iter.into_iter().collect())
    }
}

impl<'a> FromIterator<&'a str> for ComorbiditySet {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        iter.into_iter().map(CategoryId::from).collect()
    }
}

/// Prefix table mapping version-tagged ICD code prefixes to category ids,
/// together with the category registry the targets must belong to.
///
/// Immutable after load; safe to share across worker threads.
#[derive(Debug, Clone)]
pub struct MappingTable {
    categories: Vec<ComorbidityCategory>,
    entries: BTreeMap<(IcdVersion, String), CategoryId>,
}

impl MappingTable {
    /// The table bundled with the crate: all 30 categories, >= 3 prefixes each.
    pub fn bundled() -> MappingTable {
        load_mapping(PREFIXES_CSV.as_bytes()).expect("bundled mapping table is valid")
    }

    pub fn categories(&self) -> &[ComorbidityCategory] {
        &self.categories
    }

    pub fn category_ids(&self) -> impl Iterator<Item = &CategoryId> {
        self.categories.iter().map(|c| &c.id)
    }

    pub fn has_category(&self, id: &CategoryId) -> bool {
        self.categories.iter().any(|c| &c.id == id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All prefixes registered for a category, sorted by (version, prefix).
    pub fn prefixes_for(&self, id: &CategoryId) -> Vec<(IcdVersion, &str)> {
        self.entries
            .iter()
            .filter(|(_, cat)| *cat == id)
            .map(|((version, prefix), _)| (*version, prefix.as_str()))
            .collect()
    }

    /// Resolve one code by longest matching prefix of its inferred version.
    /// Returns `None` when no prefix matches.
    pub fn lookup(&self, code: &str) -> Option<&CategoryId> {
        let normalized = normalize_code(code);
        if normalized.is_empty() {
            return None;
        }
        let version = IcdVersion::infer(&normalized);
        // Probe progressively shorter prefixes; the first hit is the longest.
        for end in (1..=normalized.len()).rev() {
            if let Some(cat) = self.entries.get(&(version, normalized[..end].to_string())) {
                return Some(cat);
            }
        }
        None
    }
}

fn load_registry() -> Vec<ComorbidityCategory> {
    let mut reader = csv::Reader::from_reader(CATEGORIES_CSV.as_bytes());
    let mut categories = Vec::new();
    for record in reader.records() {
        let record = record.expect("bundled category registry is valid");
        categories.push(ComorbidityCategory {
            id: CategoryId::new(&record[0]),
            display_name: record[1].to_string(),
        });
    }
    categories
}

/// Parse and validate a mapping CSV with header `icd_version,code_prefix,category_id`.
///
/// Duplicate (version, prefix) keys, unknown category ids, and empty tables
/// are rejected.
pub fn load_mapping(source: impl Read) -> Result<MappingTable> {
    let categories = load_registry();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(source);

    let headers = reader.headers()?.clone();
    let expected = ["icd_version", "code_prefix", "category_id"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Mapping(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut entries = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2; // 1-based, after the header line
        let record = record?;
        if record.len() != 3 {
            return Err(Error::Mapping(format!("row {row}: expected 3 fields")));
        }
        let version = IcdVersion::parse(&record[0]).ok_or_else(|| {
            Error::Mapping(format!(
                "row {row}: unknown icd_version `{}` (expected ICD9 or ICD10)",
                &record[0]
            ))
        })?;
        let prefix = normalize_code(&record[1]);
        if prefix.is_empty() {
            return Err(Error::Mapping(format!("row {row}: empty code_prefix")));
        }
        let category = CategoryId::new(&record[2]);
        if !categories.iter().any(|c| c.id == category) {
            return Err(Error::Mapping(format!(
                "row {row}: unknown category_id `{category}`"
            )));
        }
        if entries
            .insert((version, prefix.clone()), category)
            .is_some()
        {
            return Err(Error::Mapping(format!(
                "row {row}: duplicate key ({version}, {prefix})"
            )));
        }
    }

    if entries.is_empty() {
        return Err(Error::Mapping("table has no entries".to_string()));
    }

    Ok(MappingTable {
        categories,
        entries,
    })
}

/// Result of mapping a batch of diagnosis codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappedCodes {
    pub categories: ComorbiditySet,
    /// Codes with no matching prefix; reported, never fatal.
    pub unmatched: usize,
}

/// Map raw diagnosis codes to a comorbidity set.
pub fn map_codes<S: AsRef<str>>(codes: &[S], table: &MappingTable) -> MappedCodes {
    let mut categories = ComorbiditySet::new();
    let mut unmatched = 0usize;
    for code in codes {
        match table.lookup(code.as_ref()) {
            Some(cat) => categories.insert(cat.clone()),
            None => unmatched += 1,
        }
    }
    MappedCodes {
        categories,
        unmatched,
    }
}

/// Union of mapped categories over the up-to-`max_visits` most recent visits
/// with `admit_time` in `(as_of - lookback_days, as_of]`.
pub fn collect_comorbidities(
    history: &PatientHistory,
    as_of: DateTime<Utc>,
    table: &MappingTable,
    lookback_days: i64,
    max_visits: usize,
) -> ComorbiditySet {
    let window_start = as_of - Duration::days(lookback_days);
    let mut set = ComorbiditySet::new();
    let recent = history
        .visits()
        .iter()
        .rev()
        .filter(|v| v.admit_time > window_start && v.admit_time <= as_of)
        .take(max_visits);
    for visit in recent {
        set.union_with(&map_codes(&visit.diagnosis_codes, table).categories);
    }
    set
}

/// Defaults from the study design: codes from the previous <= 3 visits within 1 year.
pub const DEFAULT_LOOKBACK_DAYS: i64 = 365;
pub const DEFAULT_MAX_VISITS: usize = 3;
