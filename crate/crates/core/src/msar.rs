//! Minimum-similarity association rules: the similar-rule graph, the
//! two-variable quadratic program that learns the confidence/support
//! weighting, rule scoring, and per-patient explanation.
//!
//! Two rules of size `n` are similar when they share exactly `n - 1`
//! members. Each such pair is an edge carrying the differences of the
//! z-normalized statistics, oriented so the confidence delta is
//! non-negative. With `a_e = delta_max - delta_c(e)` and
//! `b_e = delta_max - delta_s(e)`, the weights minimize
//! `sum_e (w_c * a_e + w_s * b_e)^2` subject to `w_c + w_s = 1`,
//! `w_c, w_s >= 0`. Substituting `w_s = 1 - w_c` reduces this to a single
//! clamped quadratic; an exhaustive grid evaluation of the same objective
//! serves as the independent check.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comorbidity::{CategoryId, ComorbiditySet};
use crate::error::{Error, Result};
use crate::rules::{RuleKey, RuleTable};
use itertools::Itertools;

/// One similar-rule pair. `a` is the higher-confidence side, so `delta_c` is
/// never negative; `delta_s` keeps its sign.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityEdge {
    pub a: RuleKey,
    pub b: RuleKey,
    pub delta_c: f64,
    pub delta_s: f64,
}

/// Rules as vertices, similar pairs as edges.
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    vertices: Vec<RuleKey>,
    edges: Vec<SimilarityEdge>,
    delta_max: Option<f64>,
}

impl SimilarityGraph {
    /// Assemble a graph from explicit edges, computing `delta_max` from them.
    /// Vertices are the union of edge endpoints.
    pub fn from_edges(edges: Vec<SimilarityEdge>) -> SimilarityGraph {
        let mut vertices: Vec<RuleKey> = edges
            .iter()
            .flat_map(|e| [e.a.clone(), e.b.clone()])
            .collect();
        vertices.sort();
        vertices.dedup();
        let delta_max = compute_delta_max(&edges);
        SimilarityGraph {
            vertices,
            edges,
            delta_max,
        }
    }

    pub fn vertices(&self) -> &[RuleKey] {
        &self.vertices
    }

    pub fn edges(&self) -> &[SimilarityEdge] {
        &self.edges
    }

    /// `max(max_e delta_c, max_e delta_s)`; `None` when the graph has no edges.
    pub fn delta_max(&self) -> Option<f64> {
        self.delta_max
    }
}

fn compute_delta_max(edges: &[SimilarityEdge]) -> Option<f64> {
    edges
        .iter()
        .map(|e| e.delta_c.max(e.delta_s))
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |m| m.max(v)))
        })
}

/// Build the similar-rule graph of a z-normalized table: one edge per
/// unordered rule pair sharing exactly `n - 1` members.
///
/// Pairs are discovered by bucketing rules on their `(n-1)`-subsets; a
/// qualifying pair shares exactly one such subset, so no edge is emitted
/// twice. Buckets are processed in parallel and the edge list is sorted, so
/// the result is independent of thread count.
pub fn build_similarity_graph(table: &RuleTable) -> Result<SimilarityGraph> {
    if !table.is_normalized() {
        return Err(Error::Config(
            "similarity graph requires a z-normalized table".to_string(),
        ));
    }
    let vertices: Vec<RuleKey> = table.keys().cloned().collect();
    if vertices.len() < 2 {
        return Ok(SimilarityGraph {
            vertices,
            edges: Vec::new(),
            delta_max: None,
        });
    }

    let mut buckets: HashMap<Vec<CategoryId>, Vec<&RuleKey>> = HashMap::new();
    for key in table.keys() {
        for dropped in 0..key.len() {
            let shared: Vec<CategoryId> = key
                .members()
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != dropped)
                .map(|(_, c)| c.clone())
                .collect();
            buckets.entry(shared).or_default().push(key);
        }
    }

    let bucket_list: Vec<Vec<&RuleKey>> = buckets.into_values().collect();
    let mut edges: Vec<SimilarityEdge> = bucket_list
        .par_iter()
        .flat_map_iter(|bucket| {
            bucket.iter().tuple_combinations().map(|(x, y)| {
                let sx = table.get(x).expect("bucket keys come from the table");
                let sy = table.get(y).expect("bucket keys come from the table");
                // Orient so the higher z-confidence rule is `a`; break ties
                // by higher z-support, then lexicographic key order.
                let x_first = match sx
                    .z_confidence
                    .total_cmp(&sy.z_confidence)
                    .then(sx.z_support.total_cmp(&sy.z_support))
                {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Less => false,
                    std::cmp::Ordering::Equal => sx.key < sy.key,
                };
                let (a, b) = if x_first { (sx, sy) } else { (sy, sx) };
                SimilarityEdge {
                    a: a.key.clone(),
                    b: b.key.clone(),
                    delta_c: a.z_confidence - b.z_confidence,
                    delta_s: a.z_support - b.z_support,
                }
            })
        })
        .collect();
    edges.sort_by(|l, r| (&l.a, &l.b).cmp(&(&r.a, &r.b)));

    let delta_max = compute_delta_max(&edges);
    Ok(SimilarityGraph {
        vertices,
        edges,
        delta_max,
    })
}

/// Optimal convex weights for the confidence/support combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSolution {
    pub w_c: f64,
    pub w_s: f64,
    /// Objective value at the solution.
    pub objective: f64,
    /// True when the objective is constant in the weights; the solution is
    /// then fixed at (0.5, 0.5).
    pub degenerate: bool,
}

fn edge_coefficients(graph: &SimilarityGraph) -> Result<(Vec<f64>, Vec<f64>)> {
    let delta_max = graph.delta_max().ok_or(Error::NoEdges)?;
    Ok(graph
        .edges()
        .iter()
        .map(|e| (delta_max - e.delta_c, delta_max - e.delta_s))
        .unzip())
}

/// Objective evaluated literally, edge by edge.
fn objective_at(avec: &[f64], bvec: &[f64], w_c: f64) -> f64 {
    let w_s = 1.0 - w_c;
    // Four independent accumulators keep the loop out of a single add chain.
    let mut acc = [0.0f64; 4];
    let mut i = 0;
    while i + 4 <= avec.len() {
        for lane in 0..4 {
            let sim = w_c * avec[i + lane] + w_s * bvec[i + lane];
            acc[lane] += sim * sim;
        }
        i += 4;
    }
    let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    while i < avec.len() {
        let sim = w_c * avec[i] + w_s * bvec[i];
        total += sim * sim;
        i += 1;
    }
    total
}

/// Closed-form minimizer of the reduced one-variable quadratic.
///
/// With `d_e = a_e - b_e`, the unconstrained stationary point is
/// `w_c = -sum(b_e * d_e) / sum(d_e^2)`, clamped to `[0, 1]`. A vanishing
/// quadratic term means the objective is flat in the weights; the solution is
/// then (0.5, 0.5) with `degenerate` set.
pub fn solve_weights(graph: &SimilarityGraph) -> Result<WeightSolution> {
    let (avec, bvec) = edge_coefficients(graph)?;
    let mut quad = 0.0f64; // sum d^2
    let mut cross = 0.0f64; // sum b*d
    for (a, b) in avec.iter().zip(&bvec) {
        let d = a - b;
        quad += d * d;
        cross += b * d;
    }
    if quad == 0.0 {
        let w_c = 0.5;
        return Ok(WeightSolution {
            w_c,
            w_s: 0.5,
            objective: objective_at(&avec, &bvec, w_c),
            degenerate: true,
        });
    }
    let w_c = (-cross / quad).clamp(0.0, 1.0);
    Ok(WeightSolution {
        w_c,
        w_s: 1.0 - w_c,
        objective: objective_at(&avec, &bvec, w_c),
        degenerate: false,
    })
}

/// Exhaustive verification oracle: evaluate the objective at
/// `w_c in {0, step, 2*step, ..., 1}` and return the minimizing grid point,
/// keeping the lowest `w_c` on ties. Objective values within 1e-12 relative
/// of each other count as tied, so a mathematically flat objective is not
/// split by summation roundoff.
pub fn grid_search_weights(graph: &SimilarityGraph, step: f64) -> Result<WeightSolution> {
    if !(step > 0.0 && step <= 0.01) {
        return Err(Error::Config(format!(
            "grid step must be in (0, 0.01], got {step}"
        )));
    }
    let (avec, bvec) = edge_coefficients(graph)?;

    const TIE_TOL: f64 = 1e-12;
    let mut best_w = 0.0f64;
    let mut best_obj = objective_at(&avec, &bvec, 0.0);
    let mut worst_obj = best_obj;
    let mut k = 1u64;
    loop {
        let raw = k as f64 * step;
        let (w, last) = if raw >= 1.0 - step * 0.5 {
            (1.0, true)
        } else {
            (raw, false)
        };
        let obj = objective_at(&avec, &bvec, w);
        if obj < best_obj - TIE_TOL * best_obj.abs() {
            best_obj = obj;
            best_w = w;
        }
        if obj > worst_obj {
            worst_obj = obj;
        }
        if last {
            break;
        }
        k += 1;
    }

    let spread = worst_obj - best_obj;
    Ok(WeightSolution {
        w_c: best_w,
        w_s: 1.0 - best_w,
        objective: best_obj,
        degenerate: spread <= TIE_TOL * worst_obj.abs().max(best_obj.abs()),
    })
}

/// Attach `msar_score = w_c * z_confidence + w_s * z_support` to every rule.
pub fn score_rules(table: RuleTable, weights: &WeightSolution) -> Result<RuleTable> {
    if !table.is_normalized() {
        return Err(Error::Config(
            "scoring requires a z-normalized table".to_string(),
        ));
    }
    let stats = table
        .rules()
        .map(|r| {
            let mut r = r.clone();
            r.msar_score = Some(weights.w_c * r.z_confidence + weights.w_s * r.z_support);
            r
        })
        .collect();
    RuleTable::from_stats(
        table.n(),
        table.total_rows(),
        table.min_count(),
        stats,
        true,
    )
}

/// Outcome of explaining one patient.
#[derive(Debug, Clone, PartialEq)]
pub enum Explanation {
    Ranked {
        /// Top `k` matching rules, best first.
        rules: Vec<(RuleKey, f64)>,
        /// Members of the top-ranked rule.
        top_comorbidities: Vec<CategoryId>,
    },
    /// No mined rule is contained in the patient's comorbidity set.
    NoRule,
}

/// Rank the rules contained in a patient's comorbidity set by MSAR score
/// (ties: higher confidence, then lexicographic key) and report the top `k`
/// plus the winning rule's members.
pub fn explain_patient(
    patient_set: &ComorbiditySet,
    scored: &RuleTable,
    k: usize,
) -> Result<Explanation> {
    if patient_set.len() < scored.n() {
        return Ok(Explanation::NoRule);
    }
    let members: Vec<&CategoryId> = patient_set.iter().collect();
    let mut candidates = Vec::new();
    for combo in members.iter().combinations(scored.n()) {
        let key = RuleKey::new(combo.into_iter().map(|c| (*c).clone()))
            .expect("set members are distinct");
        if let Some(stats) = scored.get(&key) {
            let score = stats
                .msar_score
                .ok_or_else(|| Error::Config("explain requires a scored table".to_string()))?;
            candidates.push((key, score, stats.confidence));
        }
    }
    if candidates.is_empty() {
        return Ok(Explanation::NoRule);
    }
    candidates.sort_by(|l, r| {
        r.1.total_cmp(&l.1)
            .then(r.2.total_cmp(&l.2))
            .then(l.0.cmp(&r.0))
    });
    let top_comorbidities = candidates[0].0.members().to_vec();
    let rules = candidates
        .into_iter()
        .take(k.max(1))
        .map(|(key, score, _)| (key, score))
        .collect();
    Ok(Explanation::Ranked {
        rules,
        top_comorbidities,
    })
}
