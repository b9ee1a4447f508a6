//! Stage runner: executes the requested pipeline stages in dependency order,
//! passing artifacts in memory and falling back to the files a previous
//! invocation left in the output directory. Every output file starts with a
//! provenance header (config hash, seed, tool version) and reruns with the
//! same configuration produce byte-identical bytes.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};

use msar_core::cohort::identify_recurrent;
use msar_core::comorbidity::{
    collect_comorbidities, load_mapping, CategoryId, ComorbiditySet, MappingTable,
    DEFAULT_LOOKBACK_DAYS, DEFAULT_MAX_VISITS,
};
use msar_core::eval::{
    comorbidity_frequency, cross_validate, ranked_comorbidities, rbo, summarize_cohort, CvReport,
};
use msar_core::ingest::{
    generate_synthetic, parse_visits, write_visits, Dataset, InputFormat, Provenance,
};
use msar_core::msar::{
    build_similarity_graph, explain_patient, score_rules, solve_weights, Explanation,
    WeightSolution,
};
use msar_core::rules::{
    build_training_rows, enumerate_rules, format_real, read_rule_table, write_rule_table,
    AsOfPolicy, RuleTable, TrainingRow,
};

use crate::config::PipelineConfig;

/// A problem with how the tool was invoked (missing files, bad flags);
/// reported with exit code 2 instead of 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

/// Pipeline stages in canonical execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Generate,
    Identify,
    Summarize,
    Mine,
    Weights,
    Score,
    Explain,
    Evaluate,
}

/// What the explain stage should explain.
#[derive(Debug, Clone, Default)]
pub struct ExplainTarget {
    pub patient_id: Option<String>,
    pub comorbidities: Option<String>,
    pub top: usize,
}

pub struct Runner {
    config: PipelineConfig,
    mapping: MappingTable,
    provenance: String,
    dataset: Option<Dataset>,
    rows: Option<Vec<TrainingRow>>,
    table: Option<RuleTable>,
    weights: Option<WeightSolution>,
    scored: Option<RuleTable>,
}

impl Runner {
    pub fn new(config: PipelineConfig) -> Result<Runner> {
        let mapping = match &config.mapping {
            Some(path) => {
                let file = fs::File::open(path).map_err(|e| {
                    usage(format!("cannot open mapping file {}: {e}", path.display()))
                })?;
                load_mapping(file)
                    .with_context(|| format!("invalid mapping file {}", path.display()))?
            }
            None => MappingTable::bundled(),
        };
        let provenance = format!(
            "# provenance config={} seed={} tool_version={}",
            config.hash(),
            config.seed,
            env!("CARGO_PKG_VERSION")
        );
        Ok(Runner {
            config,
            mapping,
            provenance,
            dataset: None,
            rows: None,
            table: None,
            weights: None,
            scored: None,
        })
    }

    /// Run the requested stages in dependency order.
    pub fn run(&mut self, stages: &[Stage], explain: Option<&ExplainTarget>) -> Result<()> {
        let mut ordered: Vec<Stage> = stages.to_vec();
        ordered.sort();
        ordered.dedup();
        fs::create_dir_all(&self.config.out_dir).with_context(|| {
            format!(
                "cannot create output directory {}",
                self.config.out_dir.display()
            )
        })?;
        for stage in ordered {
            match stage {
                Stage::Generate => self.run_generate()?,
                Stage::Identify => self.run_identify()?,
                Stage::Summarize => self.run_summarize()?,
                Stage::Mine => self.run_mine()?,
                Stage::Weights => self.run_weights()?,
                Stage::Score => self.run_score()?,
                Stage::Explain => {
                    let target = explain
                        .ok_or_else(|| usage("explain needs --patient-id or --comorbidities"))?;
                    self.run_explain(target)?
                }
                Stage::Evaluate => self.run_evaluate()?,
            }
        }
        Ok(())
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    fn write_file(&self, name: &str, body: &[u8]) -> Result<PathBuf> {
        let path = self.out_path(name);
        let mut buf = Vec::with_capacity(self.provenance.len() + 1 + body.len());
        writeln!(buf, "{}", self.provenance)?;
        buf.extend_from_slice(body);
        fs::write(&path, buf).with_context(|| format!("cannot write {}", path.display()))?;
        eprintln!("wrote {}", path.display());
        Ok(path)
    }

    fn ensure_dataset(&mut self) -> Result<&Dataset> {
        if self.dataset.is_none() {
            let dataset =
                match &self.config.visits {
                    Some(path) => {
                        let file = fs::File::open(path).map_err(|e| {
                            usage(format!("cannot open visits file {}: {e}", path.display()))
                        })?;
                        let outcome = parse_visits(file, self.config.visits_format)
                            .with_context(|| format!("cannot parse {}", path.display()))?;
                        for warning in &outcome.warnings {
                            eprintln!("warning: {warning}");
                        }
                        outcome.dataset.with_provenance(Provenance::Parsed {
                            format: self.config.visits_format,
                            source: Some(path.display().to_string()),
                        })
                    }
                    None => match self.config.synthetic_config()? {
                        Some(synth) => generate_synthetic(&synth)?,
                        None => return Err(usage(
                            "no visit data: set `visits` or a [synthetic] section in the config",
                        )),
                    },
                };
            self.dataset = Some(dataset);
        }
        Ok(self.dataset.as_ref().expect("just filled"))
    }

    fn ensure_rows(&mut self) -> Result<&[TrainingRow]> {
        if self.rows.is_none() {
            let cohort = self.config.cohort;
            self.ensure_dataset()?;
            let dataset = self.dataset.as_ref().expect("ensured");
            let rows = build_training_rows(dataset, &cohort, &self.mapping, AsOfPolicy::LastVisit);
            self.rows = Some(rows);
        }
        Ok(self.rows.as_ref().expect("just filled"))
    }

    fn ensure_table(&mut self) -> Result<&RuleTable> {
        if self.table.is_none() {
            let path = self.out_path("rules.csv");
            if !path.exists() {
                return Err(usage(format!(
                    "{} not found: run `mine` first (or in the same invocation)",
                    path.display()
                )));
            }
            let file = fs::File::open(&path)?;
            self.table = Some(
                read_rule_table(file).with_context(|| format!("cannot read {}", path.display()))?,
            );
        }
        Ok(self.table.as_ref().expect("just filled"))
    }

    fn ensure_weights(&mut self) -> Result<WeightSolution> {
        if let Some(w) = self.weights {
            return Ok(w);
        }
        let path = self.out_path("weights.json");
        if !path.exists() {
            return Err(usage(format!(
                "{} not found: run `weights` first (or in the same invocation)",
                path.display()
            )));
        }
        let text = fs::read_to_string(&path)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse {}", path.display()))?;
        let field = |name: &str| -> Result<f64> {
            value
                .get(name)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| anyhow!("{} is missing `{name}`", path.display()))
        };
        let weights = WeightSolution {
            w_c: field("w_c")?,
            w_s: field("w_s")?,
            objective: field("objective")?,
            degenerate: value
                .get("degenerate")
                .and_then(|v| v.as_bool())
                .unwrap_or(false),
        };
        self.weights = Some(weights);
        Ok(weights)
    }

    fn ensure_scored(&mut self) -> Result<&RuleTable> {
        if self.scored.is_none() {
            let path = self.out_path("rules_scored.csv");
            if !path.exists() {
                return Err(usage(format!(
                    "{} not found: run `score` first (or in the same invocation)",
                    path.display()
                )));
            }
            let file = fs::File::open(&path)?;
            self.scored = Some(
                read_rule_table(file).with_context(|| format!("cannot read {}", path.display()))?,
            );
        }
        Ok(self.scored.as_ref().expect("just filled"))
    }

    fn run_generate(&mut self) -> Result<()> {
        let synth = self
            .config
            .synthetic_config()?
            .ok_or_else(|| usage("generate needs a [synthetic] section in the config"))?;
        let dataset = generate_synthetic(&synth)?;
        let mut body = Vec::new();
        write_visits(&dataset, InputFormat::Csv, &mut body)?;
        self.write_file("visits.csv", &body)?;
        // Downstream stages in this invocation reuse the generated data
        // unless an explicit visits file is configured.
        if self.config.visits.is_none() {
            self.dataset = Some(dataset);
        }
        Ok(())
    }

    fn run_identify(&mut self) -> Result<()> {
        let cohort = self.config.cohort;
        let dataset = self.ensure_dataset()?;
        let mut body = Vec::new();
        writeln!(
            body,
            "patient_id,readmit_30d,inpatient_frequent,ed_frequent,is_recurrent"
        )?;
        for patient in dataset.patients() {
            let flags = identify_recurrent(patient, patient.last_admit(), &cohort);
            writeln!(
                body,
                "{},{},{},{},{}",
                patient.patient_id(),
                flags.readmit_30d,
                flags.inpatient_frequent,
                flags.ed_frequent,
                flags.is_recurrent
            )?;
        }
        self.write_file("flags.csv", &body)?;
        Ok(())
    }

    fn run_summarize(&mut self) -> Result<()> {
        let cohort = self.config.cohort;
        let dataset = self.ensure_dataset()?;
        let summary = summarize_cohort(dataset, &cohort)?;
        let mut body = Vec::new();
        writeln!(
            body,
            "total_patients,recurrent_fraction,readmit_30d_rate,ed_recurrent_fraction_of_recurrent,inpatient_recurrent_rate,ed_recurrent_rate"
        )?;
        writeln!(
            body,
            "{},{},{},{},{},{}",
            summary.total_patients,
            format_real(summary.recurrent_fraction),
            format_real(summary.readmit_30d_rate),
            format_real(summary.ed_recurrent_fraction_of_recurrent),
            format_real(summary.inpatient_recurrent_rate),
            format_real(summary.ed_recurrent_rate)
        )?;
        self.write_file("cohort_summary.csv", &body)?;
        Ok(())
    }

    fn run_mine(&mut self) -> Result<()> {
        let n = self.config.n;
        let min_count = self.config.min_count;
        self.ensure_rows()?;
        let rows = self.rows.as_ref().expect("ensured");

        let table = msar_core::rules::z_normalize(enumerate_rules(rows, n, min_count)?)?;
        let mut body = Vec::new();
        write_rule_table(&table, &mut body)?;
        self.write_file("rules.csv", &body)?;

        // Plot data: per-category confidence/support, and quartiles by size.
        let singles = enumerate_rules(rows, 1, min_count)?;
        let mut body = Vec::new();
        writeln!(body, "category,confidence,support")?;
        for stats in singles.rules() {
            writeln!(
                body,
                "{},{},{}",
                stats.key,
                format_real(stats.confidence),
                format_real(stats.support)
            )?;
        }
        self.write_file("confidence_support_scatter.csv", &body)?;

        let mut body = Vec::new();
        writeln!(
            body,
            "n,confidence_q1,confidence_median,confidence_q3,support_q1,support_median,support_q3"
        )?;
        for size in 1..=3usize {
            let t = enumerate_rules(rows, size, min_count)?;
            if t.is_empty() {
                continue;
            }
            let conf = quartiles(t.rules().map(|r| r.confidence).collect());
            let supp = quartiles(t.rules().map(|r| r.support).collect());
            writeln!(
                body,
                "{size},{},{},{},{},{},{}",
                format_real(conf.0),
                format_real(conf.1),
                format_real(conf.2),
                format_real(supp.0),
                format_real(supp.1),
                format_real(supp.2)
            )?;
        }
        self.write_file("tuple_size_ranges.csv", &body)?;

        self.table = Some(table);
        Ok(())
    }

    fn run_weights(&mut self) -> Result<()> {
        self.ensure_table()?;
        let table = self.table.as_ref().expect("ensured");
        let graph = build_similarity_graph(table)?;
        let solution = solve_weights(&graph)?;
        let delta_max = graph.delta_max().unwrap_or(f64::NAN);

        let json = serde_json::json!({
            "w_c": solution.w_c,
            "w_s": solution.w_s,
            "delta_max": delta_max,
            "objective": solution.objective,
            "degenerate": solution.degenerate,
            "edges": graph.edges().len(),
            "provenance": self.provenance_json(),
        });
        let path = self.out_path("weights.json");
        fs::write(&path, format!("{}\n", serde_json::to_string_pretty(&json)?))
            .with_context(|| format!("cannot write {}", path.display()))?;
        eprintln!("wrote {}", path.display());

        self.weights = Some(solution);
        Ok(())
    }

    fn run_score(&mut self) -> Result<()> {
        let weights = self.ensure_weights()?;
        self.ensure_table()?;
        let table = self.table.take().expect("ensured");
        let scored = score_rules(table.clone(), &weights)?;
        self.table = Some(table);

        let mut body = Vec::new();
        write_rule_table(&scored, &mut body)?;
        self.write_file("rules_scored.csv", &body)?;

        let frequencies = comorbidity_frequency(&scored, self.config.top_fraction)?;
        let ranked = ranked_comorbidities(&scored, &frequencies);
        let mut body = Vec::new();
        writeln!(body, "category,frequency")?;
        for category in &ranked {
            writeln!(body, "{category},{}", format_real(frequencies[category]))?;
        }
        self.write_file("top_rule_frequencies.csv", &body)?;

        self.scored = Some(scored);
        Ok(())
    }

    fn run_explain(&mut self, target: &ExplainTarget) -> Result<()> {
        let patient_set: ComorbiditySet = match (&target.patient_id, &target.comorbidities) {
            (Some(_), Some(_)) => {
                return Err(usage(
                    "--patient-id and --comorbidities are mutually exclusive",
                ))
            }
            (None, None) => return Err(usage("explain needs --patient-id or --comorbidities")),
            (Some(id), None) => {
                self.ensure_dataset()?;
                let dataset = self.dataset.as_ref().expect("ensured");
                let history = dataset
                    .get(id)
                    .ok_or_else(|| usage(format!("patient `{id}` not found in the dataset")))?;
                collect_comorbidities(
                    history,
                    history.last_admit(),
                    &self.mapping,
                    DEFAULT_LOOKBACK_DAYS,
                    DEFAULT_MAX_VISITS,
                )
            }
            (None, Some(list)) => {
                let mut set = ComorbiditySet::new();
                for token in list.split(';').filter(|t| !t.trim().is_empty()) {
                    let id = CategoryId::new(token.trim().to_ascii_uppercase());
                    if !self.mapping.has_category(&id) {
                        return Err(usage(format!("unknown comorbidity category `{id}`")));
                    }
                    set.insert(id);
                }
                set
            }
        };

        self.ensure_scored()?;
        let scored = self.scored.as_ref().expect("ensured");
        let explanation = explain_patient(&patient_set, scored, target.top)?;

        let mut lines: Vec<String> = vec![serde_json::json!({
            "provenance": self.provenance_json(),
        })
        .to_string()];
        match &explanation {
            Explanation::NoRule => {
                lines.push(serde_json::json!({ "status": "NO_RULE" }).to_string());
            }
            Explanation::Ranked {
                rules,
                top_comorbidities,
            } => {
                lines.push(
                    serde_json::json!({
                        "status": "OK",
                        "top_comorbidities": top_comorbidities
                            .iter()
                            .map(|c| c.as_str())
                            .collect::<Vec<_>>(),
                    })
                    .to_string(),
                );
                for (rank, (key, score)) in rules.iter().enumerate() {
                    lines.push(
                        serde_json::json!({
                            "rank": rank + 1,
                            "members": key.members().iter().map(|c| c.as_str()).collect::<Vec<_>>(),
                            "msar_score": score,
                        })
                        .to_string(),
                    );
                }
            }
        }
        let path = self.out_path("explain.jsonl");
        fs::write(&path, format!("{}\n", lines.join("\n")))
            .with_context(|| format!("cannot write {}", path.display()))?;
        for line in lines.iter().skip(1) {
            println!("{line}");
        }
        eprintln!("wrote {}", path.display());
        Ok(())
    }

    fn run_evaluate(&mut self) -> Result<()> {
        let cv_config = self.config.cv_config();
        let rbo_p = self.config.rbo_p;
        self.ensure_rows()?;
        let rows = self.rows.as_ref().expect("ensured");
        let report = cross_validate(rows, &cv_config)?;
        for failure in &report.failures {
            eprintln!(
                "warning: fold {} failed: {}",
                failure.fold_index, failure.error
            );
        }

        self.write_fold_lines(&report)?;
        self.write_cv_weights(&report)?;
        self.write_rbo_matrix(&report, rbo_p)?;
        self.write_cv_frequencies(&report)?;
        Ok(())
    }

    fn write_fold_lines(&self, report: &CvReport) -> Result<()> {
        let mut lines: Vec<String> = vec![serde_json::json!({
            "provenance": self.provenance_json(),
        })
        .to_string()];
        for fold in &report.folds {
            lines.push(serde_json::to_string(fold)?);
        }
        for failure in &report.failures {
            lines.push(serde_json::to_string(failure)?);
        }
        let path = self.out_path("cv_folds.jsonl");
        fs::write(&path, format!("{}\n", lines.join("\n")))?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }

    fn write_cv_weights(&self, report: &CvReport) -> Result<()> {
        let mut body = Vec::new();
        writeln!(body, "fold,w_c,w_s,objective")?;
        for fold in &report.folds {
            writeln!(
                body,
                "{},{},{},{}",
                fold.fold_index,
                format_real(fold.weights.w_c),
                format_real(fold.weights.w_s),
                format_real(fold.weights.objective)
            )?;
        }
        self.write_file("cv_weights.csv", &body)?;
        Ok(())
    }

    fn write_rbo_matrix(&self, report: &CvReport, p: f64) -> Result<()> {
        let folds = &report.folds;
        let mut body = Vec::new();
        let header: Vec<String> = folds.iter().map(|f| f.fold_index.to_string()).collect();
        writeln!(body, "fold,{}", header.join(","))?;
        for a in folds {
            let mut cells = vec![a.fold_index.to_string()];
            for b in folds {
                let value = if a.fold_index == b.fold_index {
                    1.0
                } else {
                    rbo(&a.ranked_comorbidities, &b.ranked_comorbidities, p)?
                };
                cells.push(format_real(value));
            }
            writeln!(body, "{}", cells.join(","))?;
        }
        self.write_file("rbo_matrix.csv", &body)?;
        Ok(())
    }

    fn write_cv_frequencies(&self, report: &CvReport) -> Result<()> {
        let mut categories: Vec<&CategoryId> = report
            .folds
            .iter()
            .flat_map(|f| f.frequencies.keys())
            .collect();
        categories.sort();
        categories.dedup();

        let mut body = Vec::new();
        writeln!(
            body,
            "category,mean_frequency,std_frequency,nonzero_folds,folds"
        )?;
        let fold_count = report.folds.len();
        let mut stats: Vec<(f64, &CategoryId, f64, usize)> = Vec::new();
        for category in categories {
            let values: Vec<f64> = report
                .folds
                .iter()
                .map(|f| f.frequencies.get(category).copied().unwrap_or(0.0))
                .collect();
            let mean = values.iter().sum::<f64>() / fold_count.max(1) as f64;
            let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / fold_count.max(1) as f64;
            let nonzero = values.iter().filter(|v| **v > 0.0).count();
            stats.push((mean, category, variance.sqrt(), nonzero));
        }
        stats.sort_by(|l, r| r.0.total_cmp(&l.0).then_with(|| l.1.cmp(r.1)));
        for (mean, category, std, nonzero) in stats {
            writeln!(
                body,
                "{category},{},{},{nonzero},{fold_count}",
                format_real(mean),
                format_real(std)
            )?;
        }
        self.write_file("cv_frequencies.csv", &body)?;
        Ok(())
    }

    fn provenance_json(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config.hash(),
            "seed": self.config.seed,
            "tool_version": env!("CARGO_PKG_VERSION"),
        })
    }
}

fn quartiles(mut values: Vec<f64>) -> (f64, f64, f64) {
    values.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (values.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        values[lo] * (1.0 - frac) + values[hi] * frac
    };
    (at(0.25), at(0.5), at(0.75))
}
