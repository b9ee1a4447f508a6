//! Recurrent-patient identification and minimum-similarity association rules
//! (MSAR) over visit-level health records.
//!
//! The pipeline has two halves. The cohort half turns raw encounters into a
//! per-patient recurrence label using three utilization criteria (30-day
//! readmission, frequent non-elective inpatient visits, frequent ED visits).
//! The rules half maps each patient's recent diagnosis codes to comorbidity
//! categories, mines fixed-size category combinations with their confidence
//! (recurrence likelihood given the combination) and support (prevalence),
//! and learns a convex weighting of the two z-normalized statistics by
//! minimizing the squared similarity of neighboring rules over a graph in
//! which two rules are adjacent when they differ in exactly one comorbidity.
//! The learned weights give every rule an MSAR score that balances the
//! confidence-support trade-off; per-patient explanations rank the rules a
//! patient matches.

pub mod cohort;
pub mod comorbidity;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod msar;
pub mod rules;

pub use error::{Error, Result};
