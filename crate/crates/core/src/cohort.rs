//! Recurrent-patient criteria.
//!
//! A patient is recurrent at a given as-of time when at least one of three
//! criteria holds: (i) a readmission within the 30-day window, measured from
//! a discharge to a strictly later admission on one combined ED + inpatient
//! timeline; (ii) more than `inpatient_threshold` non-elective inpatient
//! visits within a year; (iii) more than `ed_threshold` ED visits within a
//! year. Thresholds are strict greater-than comparisons and all windows are
//! configurable.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{PatientHistory, VisitClass};

/// Thresholds and windows for the three criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortConfig {
    /// Days from discharge to the next admission that count as a readmission
    /// (inclusive boundary).
    pub readmit_window_days: i64,
    /// Lookback window for visit counting.
    pub visit_window_days: i64,
    /// Flag when the non-elective inpatient count strictly exceeds this.
    pub inpatient_threshold: u32,
    /// Flag when the ED count strictly exceeds this.
    pub ed_threshold: u32,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            readmit_window_days: 30,
            visit_window_days: 365,
            inpatient_threshold: 4,
            ed_threshold: 4,
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        if self.readmit_window_days < 1
            || self.visit_window_days < 1
            || self.inpatient_threshold < 1
            || self.ed_threshold < 1
        {
            return Err(Error::Config(
                "cohort thresholds and windows must all be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Per-criterion outcomes plus the combined label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrenceFlags {
    pub readmit_30d: bool,
    pub inpatient_frequent: bool,
    pub ed_frequent: bool,
    pub is_recurrent: bool,
}

/// Criterion (i): true iff some visit admits within `readmit_window_days`
/// (inclusive, in calendar days) after a strictly earlier visit's discharge,
/// considering only visits with `admit_time <= as_of`.
pub fn flag_thirty_day_readmission(
    history: &PatientHistory,
    as_of: DateTime<Utc>,
    config: &CohortConfig,
) -> bool {
    let visits: Vec<_> = history
        .visits()
        .iter()
        .filter(|v| v.admit_time <= as_of)
        .collect();
    for (i, earlier) in visits.iter().enumerate() {
        for later in &visits[i + 1..] {
            if later.admit_time <= earlier.admit_time {
                continue;
            }
            let gap_days =
                (later.admit_time.date_naive() - earlier.discharge_time.date_naive()).num_days();
            if (0..=config.readmit_window_days).contains(&gap_days) {
                return true;
            }
        }
    }
    false
}

/// Count visits of `class_filter` with admit time in `(as_of - window_days, as_of]`,
/// optionally skipping elective ones.
pub fn count_window_visits(
    history: &PatientHistory,
    class_filter: VisitClass,
    exclude_elective: bool,
    as_of: DateTime<Utc>,
    window_days: i64,
) -> usize {
    let window_start = as_of - chrono::Duration::days(window_days);
    history
        .visits()
        .iter()
        .filter(|v| v.visit_class == class_filter)
        .filter(|v| v.admit_time > window_start && v.admit_time <= as_of)
        .filter(|v| !(exclude_elective && v.elective))
        .count()
}

/// Evaluate all three criteria at `as_of`.
///
/// Elective exclusion applies only to the inpatient criterion; ED counting
/// ignores the elective flag.
pub fn identify_recurrent(
    history: &PatientHistory,
    as_of: DateTime<Utc>,
    config: &CohortConfig,
) -> RecurrenceFlags {
    let readmit_30d = flag_thirty_day_readmission(history, as_of, config);
    let inpatient_count = count_window_visits(
        history,
        VisitClass::Inpatient,
        true,
        as_of,
        config.visit_window_days,
    );
    let ed_count = count_window_visits(
        history,
        VisitClass::Ed,
        false,
        as_of,
        config.visit_window_days,
    );
    let inpatient_frequent = inpatient_count > config.inpatient_threshold as usize;
    let ed_frequent = ed_count > config.ed_threshold as usize;
    RecurrenceFlags {
        readmit_30d,
        inpatient_frequent,
        ed_frequent,
        is_recurrent: readmit_30d || inpatient_frequent || ed_frequent,
    }
}
