//! Evaluation machinery: rank-biased overlap of ranked comorbidity lists,
//! seeded cross-validation of weight stability, top-rule comorbidity
//! frequency aggregation, and cohort summary statistics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::Hash;

use rayon::prelude::*;
use serde::Serialize;

use crate::cohort::{identify_recurrent, CohortConfig};
use crate::comorbidity::CategoryId;
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::msar::{build_similarity_graph, score_rules, solve_weights, WeightSolution};
use crate::rules::{enumerate_rules, z_normalize, RuleTable, TrainingRow};

/// Truncated, normalized rank-biased overlap of two duplicate-free ranked
/// lists.
///
/// The raw sum runs to `d_max = max(|a|, |b|)` with the shorter list treated
/// as exhausted beyond its length:
/// `sum_d p^(d-1) * |prefix_d(a) & prefix_d(b)| / d`. It is divided by the
/// same sum under perfect overlap (`min(d, |a|, |b|)` agreements at depth
/// `d`), so identical lists score exactly 1.
pub fn rbo<T: Eq + Hash>(list_a: &[T], list_b: &[T], p: f64) -> Result<f64> {
    if list_a.is_empty() || list_b.is_empty() {
        return Err(Error::EmptyInput(
            "rbo requires non-empty lists".to_string(),
        ));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Config(format!(
            "rbo persistence p must be in (0, 1), got {p}"
        )));
    }
    let distinct_a: HashSet<&T> = list_a.iter().collect();
    let distinct_b: HashSet<&T> = list_b.iter().collect();
    if distinct_a.len() != list_a.len() || distinct_b.len() != list_b.len() {
        return Err(Error::Config(
            "rbo lists must be duplicate-free".to_string(),
        ));
    }

    let depth = list_a.len().max(list_b.len());
    let shorter = list_a.len().min(list_b.len());
    let mut seen_a: HashSet<&T> = HashSet::new();
    let mut seen_b: HashSet<&T> = HashSet::new();
    let mut overlap = 0usize;
    let mut weight = 1.0f64;
    let mut raw = 0.0f64;
    let mut norm = 0.0f64;
    for d in 1..=depth {
        if let Some(x) = list_a.get(d - 1) {
            if seen_b.contains(x) {
                overlap += 1;
            }
            seen_a.insert(x);
        }
        if let Some(y) = list_b.get(d - 1) {
            if seen_a.contains(y) {
                overlap += 1;
            }
            seen_b.insert(y);
        }
        raw += weight * overlap as f64 / d as f64;
        norm += weight * d.min(shorter) as f64 / d as f64;
        weight *= p;
    }
    Ok(raw / norm)
}

/// Count, for each category, the share of top-scoring rules that contain it.
///
/// The `ceil(top_fraction * |rules|)` best rules are selected by score, ties
/// at the cut decided by lexicographic key order. Every category appearing
/// anywhere in the table is reported; those absent from the selection get 0.
pub fn comorbidity_frequency(
    scored: &RuleTable,
    top_fraction: f64,
) -> Result<BTreeMap<CategoryId, f64>> {
    if scored.is_empty() {
        return Err(Error::EmptyInput(
            "frequency of an empty rule table".to_string(),
        ));
    }
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "top_fraction must be in (0, 1], got {top_fraction}"
        )));
    }
    let mut ranked: Vec<(&crate::rules::RuleStats, f64)> = scored
        .rules()
        .map(|r| {
            r.msar_score
                .map(|s| (r, s))
                .ok_or_else(|| Error::Config("frequency requires a scored table".to_string()))
        })
        .collect::<Result<_>>()?;
    ranked.sort_by(|l, r| r.1.total_cmp(&l.1).then(l.0.key.cmp(&r.0.key)));

    let selected = (top_fraction * scored.len() as f64).ceil() as usize;
    let selected = selected.clamp(1, scored.len());

    let mut frequencies: BTreeMap<CategoryId, f64> =
        scored.categories().into_iter().map(|c| (c, 0.0)).collect();
    for (stats, _) in &ranked[..selected] {
        for member in stats.key.members() {
            *frequencies.get_mut(member).expect("member is in the table") += 1.0 / selected as f64;
        }
    }
    Ok(frequencies)
}

/// Rank categories by their top-rule frequency, breaking ties by the best
/// MSAR score among the rules containing the category, then by id.
pub fn ranked_comorbidities(
    scored: &RuleTable,
    frequencies: &BTreeMap<CategoryId, f64>,
) -> Vec<CategoryId> {
    let mut best_score: HashMap<&CategoryId, f64> = HashMap::new();
    for stats in scored.rules() {
        if let Some(score) = stats.msar_score {
            for member in stats.key.members() {
                best_score
                    .entry(member)
                    .and_modify(|s| *s = s.max(score))
                    .or_insert(score);
            }
        }
    }
    let mut ranked: Vec<&CategoryId> = frequencies.keys().collect();
    ranked.sort_by(|l, r| {
        let fl = frequencies[*l];
        let fr = frequencies[*r];
        fr.total_cmp(&fl)
            .then_with(|| {
                let sl = best_score.get(l).copied().unwrap_or(f64::NEG_INFINITY);
                let sr = best_score.get(r).copied().unwrap_or(f64::NEG_INFINITY);
                sr.total_cmp(&sl)
            })
            .then_with(|| l.cmp(r))
    });
    ranked.into_iter().cloned().collect()
}

/// Cross-validation settings. Each fold is an independent random subsample
/// of the training rows (not a partition), so any training fraction works.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub sample_fraction: f64,
    pub seed: u64,
    /// Tuple size mined inside each fold.
    pub n: usize,
    pub min_count: u64,
    /// Share of top-scoring rules used for the ranked comorbidity list.
    pub top_fraction: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            sample_fraction: 0.8,
            seed: 0,
            n: crate::rules::DEFAULT_TUPLE_SIZE,
            min_count: crate::rules::DEFAULT_MIN_COUNT,
            top_fraction: 0.259,
        }
    }
}

/// One successful fold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold_index: usize,
    pub weights: WeightSolution,
    /// Categories by aggregated MSAR presence, descending.
    pub ranked_comorbidities: Vec<CategoryId>,
    /// Share of the fold's top-scoring rules containing each category.
    pub frequencies: BTreeMap<CategoryId, f64>,
}

/// A fold that could not complete (e.g. degenerate normalization).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldFailure {
    pub fold_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub failures: Vec<FoldFailure>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Subsampling key: a stable FNV-1a hash of the patient id mixed with the
/// seed and fold index, so fold membership never depends on row order.
fn sample_key(seed: u64, fold: u64, patient_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in patient_id.as_bytes() {
        h = (h ^ u64::from(*byte)).wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(h ^ splitmix64(seed ^ fold.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn fold_sample<'r>(rows: &'r [TrainingRow], cfg: &CvConfig, fold: usize) -> Vec<&'r TrainingRow> {
    let mut keyed: Vec<(u64, &TrainingRow)> = rows
        .iter()
        .map(|row| (sample_key(cfg.seed, fold as u64, &row.patient_id), row))
        .collect();
    keyed.sort_by(|l, r| {
        l.0.cmp(&r.0)
            .then_with(|| l.1.patient_id.cmp(&r.1.patient_id))
    });
    let take = ((cfg.sample_fraction * rows.len() as f64).round() as usize).clamp(1, rows.len());
    keyed.into_iter().take(take).map(|(_, row)| row).collect()
}

fn run_fold(rows: &[TrainingRow], cfg: &CvConfig, fold: usize) -> Result<FoldResult> {
    let sample = fold_sample(rows, cfg, fold);
    let owned: Vec<TrainingRow> = sample.into_iter().cloned().collect();
    let table = z_normalize(enumerate_rules(&owned, cfg.n, cfg.min_count)?)?;
    let graph = build_similarity_graph(&table)?;
    let weights = solve_weights(&graph)?;
    let scored = score_rules(table, &weights)?;
    let frequencies = comorbidity_frequency(&scored, cfg.top_fraction)?;
    Ok(FoldResult {
        fold_index: fold,
        weights,
        ranked_comorbidities: ranked_comorbidities(&scored, &frequencies),
        frequencies,
    })
}

/// Run `folds` independent seeded subsamples through the full mining and
/// weight-learning pipeline. Failed folds are reported, not fatal.
pub fn cross_validate(rows: &[TrainingRow], cfg: &CvConfig) -> Result<CvReport> {
    if rows.len() < 100 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 100 rows, got {}",
            rows.len()
        )));
    }
    if !(cfg.sample_fraction > 0.0 && cfg.sample_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "sample_fraction must be in (0, 1], got {}",
            cfg.sample_fraction
        )));
    }
    if cfg.folds < 1 {
        return Err(Error::Config("folds must be >= 1".to_string()));
    }

    let outcomes: Vec<std::result::Result<FoldResult, FoldFailure>> = (0..cfg.folds)
        .into_par_iter()
        .map(|fold| {
            run_fold(rows, cfg, fold).map_err(|e| FoldFailure {
                fold_index: fold,
                error: e.to_string(),
            })
        })
        .collect();

    let mut report = CvReport {
        folds: Vec::new(),
        failures: Vec::new(),
    };
    for outcome in outcomes {
        match outcome {
            Ok(fold) => report.folds.push(fold),
            Err(failure) => report.failures.push(failure),
        }
    }
    Ok(report)
}

/// Population-level rates of the three criteria, evaluated per patient at
/// their final admit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CohortSummary {
    pub total_patients: usize,
    pub recurrent_fraction: f64,
    pub readmit_30d_rate: f64,
    /// ED-flagged patients as a share of all recurrent patients.
    pub ed_recurrent_fraction_of_recurrent: f64,
    pub inpatient_recurrent_rate: f64,
    pub ed_recurrent_rate: f64,
}

pub fn summarize_cohort(dataset: &Dataset, config: &CohortConfig) -> Result<CohortSummary> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput(
            "cannot summarize an empty dataset".to_string(),
        ));
    }
    let flags: Vec<_> = dataset
        .patients()
        .par_iter()
        .map(|p| identify_recurrent(p, p.last_admit(), config))
        .collect();

    let total = flags.len();
    let recurrent = flags.iter().filter(|f| f.is_recurrent).count();
    let readmit = flags.iter().filter(|f| f.readmit_30d).count();
    let inpatient = flags.iter().filter(|f| f.inpatient_frequent).count();
    let ed = flags.iter().filter(|f| f.ed_frequent).count();

    Ok(CohortSummary {
        total_patients: total,
        recurrent_fraction: recurrent as f64 / total as f64,
        readmit_30d_rate: readmit as f64 / total as f64,
        ed_recurrent_fraction_of_recurrent: if recurrent == 0 {
            0.0
        } else {
            ed as f64 / recurrent as f64
        },
        inpatient_recurrent_rate: inpatient as f64 / total as f64,
        ed_recurrent_rate: ed as f64 / total as f64,
    })
}
