//! Training-row construction, n-tuple rule enumeration, confidence/support
//! statistics, z-normalization, and the conventional maximum-confidence
//! selection baseline.
//!
//! Each patient contributes exactly one training row. A rule is a sorted
//! combination of `n` distinct comorbidity categories; its confidence is the
//! fraction of matching patients that are recurrent and its support is the
//! fraction of all training rows that match. Rules seen fewer than
//! `min_count` times are dropped so no rule identifies an individual.

use std::collections::hash_map::HashMap;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{identify_recurrent, CohortConfig};
use crate::comorbidity::{
    collect_comorbidities, CategoryId, ComorbiditySet, MappingTable, DEFAULT_LOOKBACK_DAYS,
    DEFAULT_MAX_VISITS,
};
use crate::error::{Error, Result};
use crate::ingest::Dataset;

/// Default minimum patients per rule; small enough to keep low-support rules,
/// large enough that no surviving rule is individually identifying.
pub const DEFAULT_MIN_COUNT: u64 = 5;

/// Default combination size.
pub const DEFAULT_TUPLE_SIZE: usize = 3;

/// One patient's mined view: recent comorbidities plus the recurrence label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub patient_id: String,
    pub comorbidities: ComorbiditySet,
    pub is_recurrent: bool,
}

/// Which time point each patient is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsOfPolicy {
    /// The patient's final admit time (the default).
    LastVisit,
    Fixed(DateTime<Utc>),
}

/// Build exactly one row per patient: comorbidities from the up-to-3 most
/// recent visits within a year of the as-of point, label from the cohort
/// criteria at the same point.
pub fn build_training_rows(
    dataset: &Dataset,
    cohort_config: &CohortConfig,
    table: &MappingTable,
    policy: AsOfPolicy,
) -> Vec<TrainingRow> {
    dataset
        .patients()
        .par_iter()
        .map(|history| {
            let as_of = match policy {
                AsOfPolicy::LastVisit => history.last_admit(),
                AsOfPolicy::Fixed(t) => t,
            };
            let comorbidities = collect_comorbidities(
                history,
                as_of,
                table,
                DEFAULT_LOOKBACK_DAYS,
                DEFAULT_MAX_VISITS,
            );
            let flags = identify_recurrent(history, as_of, cohort_config);
            TrainingRow {
                patient_id: history.patient_id().to_string(),
                comorbidities,
                is_recurrent: flags.is_recurrent,
            }
        })
        .collect()
}

/// A sorted tuple of distinct comorbidity category ids.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RuleKey {
    members: Vec<CategoryId>,
}

impl RuleKey {
    /// Sorts the members; rejects duplicates and empty tuples.
    pub fn new(members: impl IntoIterator<Item = CategoryId>) -> Result<RuleKey> {
        let mut members: Vec<CategoryId> = members.into_iter().collect();
        members.sort();
        if members.is_empty() {
            return Err(Error::Config(
                "a rule needs at least one member".to_string(),
            ));
        }
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(format!(
                "duplicate member in rule {}",
                members.iter().join(";")
            )));
        }
        Ok(RuleKey { members })
    }

    /// Caller guarantees `members` is strictly sorted.
    fn from_sorted(members: Vec<CategoryId>) -> RuleKey {
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        RuleKey { members }
    }

    /// Parse a `;`-joined member list.
    pub fn parse(s: &str) -> Result<RuleKey> {
        RuleKey::new(s.split(';').map(|m| CategoryId::new(m.trim())))
    }

    pub fn members(&self) -> &[CategoryId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Number of shared members with another key.
    pub fn intersection_size(&self, other: &RuleKey) -> usize {
        // Both sides are sorted; walk them together.
        let mut a = self.members.iter().peekable();
        let mut b = other.members.iter().peekable();
        let mut shared = 0;
        while let (Some(x), Some(y)) = (a.peek(), b.peek()) {
            match x.cmp(y) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    shared += 1;
                    a.next();
                    b.next();
                }
            }
        }
        shared
    }
}

impl fmt::Display for RuleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.members.iter().join(";"))
    }
}

impl fmt::Debug for RuleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Counts and statistics for one rule.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleStats {
    pub key: RuleKey,
    /// Patients whose comorbidity set contains every member.
    pub count_total: u64,
    pub count_recurrent: u64,
    pub confidence: f64,
    pub support: f64,
    pub z_confidence: f64,
    pub z_support: f64,
    pub msar_score: Option<f64>,
}

/// All rules of one tuple size mined from a row set.
#[derive(Debug, Clone)]
pub struct RuleTable {
    n: usize,
    total_rows: usize,
    min_count: u64,
    rules: BTreeMap<RuleKey, RuleStats>,
    normalized: bool,
}

impl RuleTable {
    /// Assemble a table from precomputed stats (e.g. read back from a file).
    /// Statistics are trusted as given; keys must be unique and of size `n`.
    pub fn from_stats(
        n: usize,
        total_rows: usize,
        min_count: u64,
        stats: Vec<RuleStats>,
        normalized: bool,
    ) -> Result<RuleTable> {
        let mut rules = BTreeMap::new();
        for s in stats {
            if s.key.len() != n {
                return Err(Error::Config(format!(
                    "rule {} has {} members, table expects {n}",
                    s.key,
                    s.key.len()
                )));
            }
            if rules.insert(s.key.clone(), s).is_some() {
                return Err(Error::Config("duplicate rule key".to_string()));
            }
        }
        Ok(RuleTable {
            n,
            total_rows,
            min_count,
            rules,
            normalized,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total_rows(&self) -> usize {
        self.total_rows
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, key: &RuleKey) -> Option<&RuleStats> {
        self.rules.get(key)
    }

    /// Iterate rules in lexicographic key order.
    pub fn rules(&self) -> impl Iterator<Item = &RuleStats> {
        self.rules.values()
    }

    pub fn keys(&self) -> impl Iterator<Item = &RuleKey> {
        self.rules.keys()
    }

    /// Every category appearing in at least one rule, sorted.
    pub fn categories(&self) -> Vec<CategoryId> {
        let mut cats: Vec<CategoryId> = self
            .rules
            .keys()
            .flat_map(|k| k.members().iter().cloned())
            .collect();
        cats.sort();
        cats.dedup();
        cats
    }
}

/// Count every n-subset of every row's comorbidity set and keep rules seen at
/// least `min_count` times. Rows are processed in parallel with an
/// associative counter merge, so the result is independent of partitioning.
pub fn enumerate_rules(rows: &[TrainingRow], n: usize, min_count: u64) -> Result<RuleTable> {
    if n < 1 {
        return Err(Error::Config("tuple size n must be >= 1".to_string()));
    }
    if min_count < 1 {
        return Err(Error::Config("min_count must be >= 1".to_string()));
    }

    let counts: HashMap<RuleKey, (u64, u64)> = rows
        .par_iter()
        .fold(
            HashMap::new,
            |mut acc: HashMap<RuleKey, (u64, u64)>, row| {
                let members: Vec<&CategoryId> = row.comorbidities.iter().collect();
                if members.len() >= n {
                    for combo in members.iter().combinations(n) {
                        let key =
                            RuleKey::from_sorted(combo.into_iter().map(|c| (*c).clone()).collect());
                        let entry = acc.entry(key).or_insert((0, 0));
                        entry.0 += 1;
                        if row.is_recurrent {
                            entry.1 += 1;
                        }
                    }
                }
                acc
            },
        )
        .reduce(HashMap::new, |mut left, right| {
            for (key, (total, recurrent)) in right {
                let entry = left.entry(key).or_insert((0, 0));
                entry.0 += total;
                entry.1 += recurrent;
            }
            left
        });

    let total_rows = rows.len();
    let rules: BTreeMap<RuleKey, RuleStats> = counts
        .into_iter()
        .filter(|(_, (total, _))| *total >= min_count)
        .map(|(key, (count_total, count_recurrent))| {
            let stats = RuleStats {
                key: key.clone(),
                count_total,
                count_recurrent,
                confidence: count_recurrent as f64 / count_total as f64,
                support: count_total as f64 / total_rows as f64,
                z_confidence: 0.0,
                z_support: 0.0,
                msar_score: None,
            };
            (key, stats)
        })
        .collect();

    Ok(RuleTable {
        n,
        total_rows,
        min_count,
        rules,
        normalized: false,
    })
}

fn population_mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let count = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / count;
    let variance = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
    (mean, variance.sqrt())
}

/// Populate `z_confidence` and `z_support` using the population mean and
/// standard deviation over all rules in the table.
pub fn z_normalize(mut table: RuleTable) -> Result<RuleTable> {
    if table.rules.len() < 2 {
        return Err(Error::Config(format!(
            "z-normalization needs at least 2 rules, table has {}",
            table.rules.len()
        )));
    }
    let (conf_mean, conf_std) = population_mean_std(table.rules.values().map(|r| r.confidence));
    let (supp_mean, supp_std) = population_mean_std(table.rules.values().map(|r| r.support));
    if conf_std == 0.0 {
        return Err(Error::DegenerateNormalization {
            statistic: "confidence",
            rules: table.rules.len(),
        });
    }
    if supp_std == 0.0 {
        return Err(Error::DegenerateNormalization {
            statistic: "support",
            rules: table.rules.len(),
        });
    }
    for stats in table.rules.values_mut() {
        stats.z_confidence = (stats.confidence - conf_mean) / conf_std;
        stats.z_support = (stats.support - supp_mean) / supp_std;
    }
    table.normalized = true;
    Ok(table)
}

/// Conventional association-rule selection: among candidates with
/// `support >= tau`, the maximum-confidence rule; ties broken by higher
/// support, then lexicographic key order.
pub fn ar_select<'t>(
    table: &'t RuleTable,
    tau: f64,
    candidates: Option<&[RuleKey]>,
) -> Option<&'t RuleStats> {
    let mut best: Option<&RuleStats> = None;
    let consider = |stats: &RuleStats| stats.support >= tau;
    let improves = |stats: &RuleStats, best: &RuleStats| {
        stats.confidence > best.confidence
            || (stats.confidence == best.confidence && stats.support > best.support)
    };
    match candidates {
        // BTreeMap iteration is already in lexicographic key order, so a
        // strict improvement rule keeps the earliest key on full ties.
        None => {
            for stats in table.rules.values().filter(|s| consider(s)) {
                if best.is_none_or(|b| improves(stats, b)) {
                    best = Some(stats);
                }
            }
        }
        Some(keys) => {
            let mut keys: Vec<&RuleKey> = keys.iter().collect();
            keys.sort();
            keys.dedup();
            for key in keys {
                if let Some(stats) = table.rules.get(key).filter(|s| consider(s)) {
                    if best.is_none_or(|b| improves(stats, b)) {
                        best = Some(stats);
                    }
                }
            }
        }
    }
    best
}

/// Exact CSV column set for serialized rule tables.
pub const RULE_CSV_HEADER: &str =
    "members,count_total,count_recurrent,confidence,support,z_confidence,z_support,msar_score";

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serialize the table in key order, one metadata comment line first.
pub fn write_rule_table(table: &RuleTable, out: &mut impl Write) -> Result<()> {
    writeln!(
        out,
        "# table n={} total_rows={} min_count={} normalized={}",
        table.n, table.total_rows, table.min_count, table.normalized
    )?;
    writeln!(out, "{RULE_CSV_HEADER}")?;
    for stats in table.rules.values() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            stats.key,
            stats.count_total,
            stats.count_recurrent,
            format_real(stats.confidence),
            format_real(stats.support),
            format_real(stats.z_confidence),
            format_real(stats.z_support),
            stats.msar_score.map(format_real).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Read a table previously produced by [`write_rule_table`]. Comment lines
/// other than the `# table` metadata line are ignored.
pub fn read_rule_table(source: impl Read) -> Result<RuleTable> {
    let mut text = String::new();
    let mut reader = std::io::BufReader::new(source);
    reader.read_to_string(&mut text)?;

    let meta_line = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find(|l| l.starts_with("# table "))
        .ok_or_else(|| Error::Parse {
            row: 0,
            message: "missing `# table ...` metadata line".to_string(),
        })?;
    let mut n = None;
    let mut total_rows = None;
    let mut min_count = None;
    let mut normalized = false;
    for item in meta_line.trim_start_matches("# table ").split_whitespace() {
        let (name, value) = item.split_once('=').ok_or_else(|| Error::Parse {
            row: 0,
            message: format!("bad metadata item `{item}`"),
        })?;
        match name {
            "n" => n = value.parse().ok(),
            "total_rows" => total_rows = value.parse().ok(),
            "min_count" => min_count = value.parse().ok(),
            "normalized" => normalized = value == "true",
            _ => {}
        }
    }
    let (n, total_rows, min_count) = match (n, total_rows, min_count) {
        (Some(n), Some(t), Some(m)) => (n, t, m),
        _ => {
            return Err(Error::Parse {
                row: 0,
                message: "incomplete table metadata".to_string(),
            })
        }
    };

    let mut csv_reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = csv_reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != RULE_CSV_HEADER {
        return Err(Error::Parse {
            row: 0,
            message: format!(
                "unexpected rule table header `{}`",
                headers.iter().join(",")
            ),
        });
    }

    let parse_real = |value: &str, row: usize, field: &str| -> Result<f64> {
        value.trim().parse().map_err(|_| Error::Parse {
            row,
            message: format!("bad {field} `{value}`"),
        })
    };

    let mut stats = Vec::new();
    for (idx, record) in csv_reader.records().enumerate() {
        let row = idx + 1;
        let record = record?;
        if record.len() != 8 {
            return Err(Error::Parse {
                row,
                message: format!("expected 8 fields, found {}", record.len()),
            });
        }
        let msar_score = if record[7].trim().is_empty() {
            None
        } else {
            Some(parse_real(&record[7], row, "msar_score")?)
        };
        stats.push(RuleStats {
            key: RuleKey::parse(&record[0])?,
            count_total: record[1].trim().parse().map_err(|_| Error::Parse {
                row,
                message: format!("bad count_total `{}`", &record[1]),
            })?,
            count_recurrent: record[2].trim().parse().map_err(|_| Error::Parse {
                row,
                message: format!("bad count_recurrent `{}`", &record[2]),
            })?,
            confidence: parse_real(&record[3], row, "confidence")?,
            support: parse_real(&record[4], row, "support")?,
            z_confidence: parse_real(&record[5], row, "z_confidence")?,
            z_support: parse_real(&record[6], row, "z_support")?,
            msar_score,
        });
    }
    RuleTable::from_stats(n, total_rows, min_count, stats, normalized)
}
