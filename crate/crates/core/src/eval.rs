//! End-to-end pipeline, gold-standard scoring and run reports.

use crate::baselines::{exactcover_explain, greedy_explain, threshold_explain, Method};
use crate::canonical::{canonicalize, check_comparable, effective_relation, AttributeMatch, CanonicalRelation, MatchRelation, Side};
use crate::error::{read_json, Error, Result};
use crate::matching::{calibrate_mapping, CalibrationConfig, MatchRecord, TupleMapping};
use crate::milp::{solve_instance, MilpOptions};
use crate::partition::{solve_partitioned, PartitionConfig};
use crate::probability::{is_complete, log_probability, ExplanationReport, ExplanationSet, Instance, Priors};
use crate::relational::{extract_provenance, load_csv, query_scalar, Database, ProvenanceRelation, QuerySpec, Schema};
use crate::solver::SolverConfig;
use crate::summarize::{summarize, Pattern, DEFAULT_MAX_EXCEPTION_RATE};
use crate::synthgen::{GoldStandard, SynthBundle};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFiles {
    pub schema: PathBuf,
    pub csv: PathBuf,
}

/// Knobs shared by every run, independent of where the inputs come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    pub priors: Priors,
    pub method: Method,
    /// `None` solves the whole instance at once.
    pub partition: Option<PartitionConfig>,
    pub solver: SolverConfig,
    pub milp: MilpOptions,
    pub calibration: CalibrationConfig,
    pub max_exception_rate: f64,
    pub include_io: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            priors: Priors::default(),
            method: Method::Milp,
            partition: Some(PartitionConfig::default()),
            solver: SolverConfig::default(),
            milp: MilpOptions::default(),
            calibration: CalibrationConfig::default(),
            max_exception_rate: DEFAULT_MAX_EXCEPTION_RATE,
            include_io: false,
        }
    }
}

/// A run bundle. Relative paths are resolved against the bundle's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub datasets: Vec<DatasetFiles>,
    pub queries: [PathBuf; 2],
    pub attribute_matches: PathBuf,
    #[serde(default)]
    pub mapping: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub gold: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub options: RunOptions,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let mut cfg: RunConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut self.datasets {
            fix(&mut d.schema);
            fix(&mut d.csv);
        }
        self.queries.iter_mut().for_each(fix);
        fix(&mut self.attribute_matches);
        for p in [&mut self.mapping, &mut self.labels, &mut self.gold, &mut self.output].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.options.priors.validate()?;
        let mut files: Vec<&PathBuf> = self.datasets.iter().flat_map(|d| [&d.schema, &d.csv]).collect();
        files.extend(self.queries.iter());
        files.push(&self.attribute_matches);
        files.extend([&self.mapping, &self.labels, &self.gold].into_iter().flatten());
        for f in files {
            if !f.is_file() {
                return Err(Error::io(
                    f.display().to_string(),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                ));
            }
        }
        Ok(())
    }

    pub fn load_inputs(&self) -> Result<Inputs> {
        let mut db = Database::new();
        for d in &self.datasets {
            let schema = Schema::load(&d.schema)?;
            let rel = load_csv(&d.csv, &schema)?;
            db.insert(rel.name.clone(), rel);
        }
        let labels: Option<Vec<(String, String)>> = self.labels.as_deref().map(read_json).transpose()?;
        Ok(Inputs {
            db,
            queries: [QuerySpec::load(&self.queries[0])?, QuerySpec::load(&self.queries[1])?],
            attribute_matches: AttributeMatch::load_all(&self.attribute_matches)?,
            mapping: self.mapping.as_deref().map(read_json).transpose()?,
            labels,
            gold: self.gold.as_deref().map(GoldStandard::load).transpose()?,
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes a synthetic pair as a run bundle in `dir` and returns the
/// bundle file's path.
pub fn write_bundle(b: &SynthBundle, dir: &Path, options: &RunOptions) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut datasets = Vec::new();
    for (stem, rel) in [("d1", &b.d1), ("d2", &b.d2)] {
        let schema = Schema {
            name: rel.name.clone(),
            attributes: rel.schema.clone(),
        };
        write_json(&dir.join(format!("{stem}.schema.json")), &schema)?;
        rel.write_csv(&dir.join(format!("{stem}.csv")))?;
        datasets.push(DatasetFiles {
            schema: format!("{stem}.schema.json").into(),
            csv: format!("{stem}.csv").into(),
        });
    }
    write_json(&dir.join("q1.json"), &b.q1)?;
    write_json(&dir.join("q2.json"), &b.q2)?;
    write_json(&dir.join("attribute_matches.json"), &[&b.attribute_match])?;
    write_json(&dir.join("gold.json"), &b.gold)?;
    let cfg = RunConfig {
        datasets,
        queries: ["q1.json".into(), "q2.json".into()],
        attribute_matches: "attribute_matches.json".into(),
        mapping: None,
        labels: None,
        gold: Some("gold.json".into()),
        output: None,
        options: options.clone(),
    };
    let path = dir.join("bundle.json");
    write_json(&path, &cfg)?;
    Ok(path)
}

/// Everything a run reads, already in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Inputs {
    pub db: Database,
    pub queries: [QuerySpec; 2],
    pub attribute_matches: Vec<AttributeMatch>,
    pub mapping: Option<Vec<MatchRecord>>,
    pub labels: Option<Vec<(String, String)>>,
    pub gold: Option<GoldStandard>,
}

impl Inputs {
    /// Gold true matches double as calibration labels.
    pub fn from_synthetic(b: &SynthBundle) -> Inputs {
        let mut db = Database::new();
        db.insert(b.d1.name.clone(), b.d1.clone());
        db.insert(b.d2.name.clone(), b.d2.clone());
        Inputs {
            db,
            queries: [b.q1.clone(), b.q2.clone()],
            attribute_matches: vec![b.attribute_match.clone()],
            mapping: None,
            labels: None,
            gold: Some(b.gold.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl Prf {
    /// From counts: true derived items, derived items, gold items found, gold items.
    pub fn from_counts(true_derived: usize, derived: usize, found: usize, gold: usize) -> Prf {
        let precision = if derived == 0 {
            if gold == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            true_derived as f64 / derived as f64
        };
        let recall = if gold == 0 { 1.0 } else { found as f64 / gold as f64 };
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub explanation: Prf,
    pub evidence: Prf,
}

fn norm(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Scores a report against the gold standard. A removed tuple is right when
/// its key was dropped from the other dataset; a value change is right when
/// its key was corrupted and it moves the impact by the corruption's size,
/// on either side.
pub fn score(r: &ExplanationReport, gold: &GoldStandard) -> Metrics {
    let dropped: HashSet<(Side, String)> = gold.dropped.iter().map(|d| (d.side, norm(&d.key))).collect();
    let corrupted: Vec<(String, f64)> = gold
        .corrupted
        .iter()
        .map(|c| (norm(&c.key), (c.original - c.corrupted).abs() as f64))
        .collect();
    let mut found_drop: HashSet<(Side, String)> = HashSet::new();
    let mut found_corr: HashSet<String> = HashSet::new();
    let mut hits = 0;
    for t in &r.delta {
        let k = (t.side.other(), norm(&t.row_id));
        if dropped.contains(&k) {
            hits += 1;
            found_drop.insert(k);
        }
    }
    for c in &r.value_changes {
        let key = norm(&c.row_id);
        let size = (c.new - c.old).abs();
        if corrupted.iter().any(|(k, d)| *k == key && (d - size).abs() <= 1e-9 * (1.0 + d)) {
            hits += 1;
            found_corr.insert(key);
        }
    }
    let explanation = Prf::from_counts(
        hits,
        r.delta.len() + r.value_changes.len(),
        found_drop.len() + found_corr.len(),
        gold.dropped.len() + gold.corrupted.len(),
    );

    let truth: HashSet<(String, String)> = gold.true_matches.iter().map(|(a, b)| (norm(a), norm(b))).collect();
    let derived: HashSet<(String, String)> = r.evidence.iter().map(|m| (norm(&m.left), norm(&m.right))).collect();
    let ev_hits = derived.intersection(&truth).count();
    let evidence = Prf::from_counts(ev_hits, derived.len(), ev_hits, truth.len());
    Metrics { explanation, evidence }
}

/// Wall-clock milliseconds per stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub io_ms: Option<f64>,
    pub query_ms: f64,
    pub provenance_ms: f64,
    pub canonicalize_ms: f64,
    pub mapping_ms: f64,
    pub solve_ms: f64,
    pub summarize_ms: f64,
    pub score_ms: f64,
    pub total_ms: f64,
}

impl Timings {
    pub fn stage_sum(&self) -> f64 {
        self.io_ms.unwrap_or(0.0)
            + self.query_ms
            + self.provenance_ms
            + self.canonicalize_ms
            + self.mapping_ms
            + self.solve_ms
            + self.summarize_ms
            + self.score_ms
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub q1: f64,
    pub q2: f64,
    pub relation: MatchRelation,
    pub left_tuples: usize,
    pub right_tuples: usize,
    pub candidate_matches: usize,
    pub explanation: ExplanationReport,
    /// Log-probability of the explanation set; absent when it is zero.
    pub objective: Option<f64>,
    pub complete: bool,
    pub blocks: Option<usize>,
    pub summary: Vec<Pattern>,
    pub metrics: Option<Metrics>,
    pub timings: Timings,
}

impl EvalReport {
    /// The report without its timing fields, for determinism checks.
    pub fn untimed(&self) -> EvalReport {
        EvalReport {
            timings: Timings::default(),
            ..self.clone()
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let num = |v: f64| if v.fract() == 0.0 { format!("{v:.0}") } else { format!("{v}") };
        out.push_str(&format!("Q1 = {}, Q2 = {}\n", num(self.q1), num(self.q2)));
        out.push_str(&format!(
            "method {}, relation {}, {} + {} canonical tuples, {} candidate matches\n",
            self.method,
            self.relation.symbol(),
            self.left_tuples,
            self.right_tuples,
            self.candidate_matches
        ));
        let e = &self.explanation;
        out.push_str(&format!("removed tuples ({}):\n", e.delta.len()));
        for t in &e.delta {
            out.push_str(&format!("  {} {} (impact {})\n", side_name(t.side), t.row_id, num(t.impact)));
        }
        out.push_str(&format!("value changes ({}):\n", e.value_changes.len()));
        for c in &e.value_changes {
            out.push_str(&format!("  {} {}: {} -> {}\n", side_name(c.side), c.row_id, num(c.old), num(c.new)));
        }
        out.push_str(&format!("evidence ({}):\n", e.evidence.len()));
        for m in &e.evidence {
            out.push_str(&format!("  {} ~ {} (p = {})\n", m.left, m.right, m.p));
        }
        if !self.summary.is_empty() {
            out.push_str("summary:\n");
            for p in &self.summary {
                out.push_str(&format!("  {p}\n"));
            }
        }
        match self.objective {
            Some(o) => out.push_str(&format!("log-probability {o:.6}")),
            None => out.push_str("log-probability -inf"),
        }
        out.push_str(if self.complete { ", complete\n" } else { ", incomplete\n" });
        if let Some(m) = &self.metrics {
            out.push_str(&format!(
                "explanations P {:.4} R {:.4} F {:.4}; evidence P {:.4} R {:.4} F {:.4}\n",
                m.explanation.precision,
                m.explanation.recall,
                m.explanation.f,
                m.evidence.precision,
                m.evidence.recall,
                m.evidence.f
            ));
        }
        out.push_str(&format!("total {:.1} ms (solve {:.1} ms)\n", self.timings.total_ms, self.timings.solve_ms));
        out
    }
}

fn side_name(s: Side) -> &'static str {
    match s {
        Side::Left => "left",
        Side::Right => "right",
    }
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    *slot = t.elapsed().as_secs_f64() * 1e3;
    out
}

/// Output of the explanation stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Explained {
    pub explanation: ExplanationSet,
    pub blocks: Option<usize>,
}

/// Runs the selected method on one instance.
pub fn explain(inst: &Instance, opts: &RunOptions) -> Result<Explained> {
    let pr = &opts.priors;
    let (explanation, blocks) = match opts.method {
        Method::Milp => match &opts.partition {
            Some(pc) => {
                let r = solve_partitioned(inst, pr, pc, &opts.milp, &opts.solver)?;
                (r.solved.explanation, Some(r.blocks))
            }
            None => (solve_instance(inst, pr, &opts.milp, &opts.solver)?.explanation, None),
        },
        Method::Greedy => (greedy_explain(inst, pr).explanation, None),
        Method::Threshold(t) => (threshold_explain(inst, t, pr).explanation, None),
        Method::ExactCover => (exactcover_explain(inst, pr, &opts.solver)?.explanation, None),
    };
    Ok(Explained { explanation, blocks })
}

/// Intermediate products of the first two stages, kept for callers that
/// want to inspect them.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub q: [f64; 2],
    pub provenance: [ProvenanceRelation; 2],
    pub canonical: [CanonicalRelation; 2],
    pub instance: Instance,
}

fn prepare(inputs: &Inputs, opts: &RunOptions, t: &mut Timings) -> Result<Prepared> {
    if !check_comparable(&inputs.attribute_matches) {
        return Err(Error::Incomparable);
    }
    let [qa, qb] = &inputs.queries;
    let q = timed(&mut t.query_ms, || -> Result<[f64; 2]> {
        Ok([query_scalar(qa, &inputs.db)?, query_scalar(qb, &inputs.db)?])
    })
    .map_err(|e| e.in_stage("query"))?;
    let provenance = timed(&mut t.provenance_ms, || -> Result<[ProvenanceRelation; 2]> {
        Ok([extract_provenance(qa, &inputs.db)?, extract_provenance(qb, &inputs.db)?])
    })
    .map_err(|e| e.in_stage("provenance"))?;
    let m = &inputs.attribute_matches;
    let canonical = timed(&mut t.canonicalize_ms, || -> Result<[CanonicalRelation; 2]> {
        Ok([canonicalize(&provenance[0], m, Side::Left)?, canonicalize(&provenance[1], m, Side::Right)?])
    })
    .map_err(|e| e.in_stage("canonicalize"))?;
    let [t1, t2] = &canonical;
    let mapping = timed(&mut t.mapping_ms, || -> Result<TupleMapping> {
        if let Some(records) = &inputs.mapping {
            return TupleMapping::from_records(records, t1, t2);
        }
        let labels: &[(String, String)] = match (&inputs.labels, &inputs.gold) {
            (Some(l), _) => l,
            (None, Some(g)) => &g.true_matches,
            (None, None) => &[],
        };
        calibrate_mapping(t1, t2, m, labels, &opts.calibration)
    })
    .map_err(|e| e.in_stage("mapping"))?;
    let phi = effective_relation(m, [qa.kind(), qb.kind()]);
    let instance = Instance::from_canonical(t1, t2, &mapping, phi);
    Ok(Prepared {
        q,
        provenance,
        canonical,
        instance,
    })
}

/// Stages 1 to 3 on in-memory inputs.
pub fn run_inputs(inputs: &Inputs, opts: &RunOptions) -> Result<EvalReport> {
    opts.priors.validate()?;
    let started = Instant::now();
    let mut t = Timings::default();
    let prep = prepare(inputs, opts, &mut t)?;
    let inst = &prep.instance;
    let ex = timed(&mut t.solve_ms, || explain(inst, opts)).map_err(|e| e.in_stage("explain"))?;
    let e = &ex.explanation;
    let [t1, t2] = &prep.canonical;
    let [p1, p2] = &prep.provenance;
    let summary = timed(&mut t.summarize_ms, || summarize(e, [t1, t2], [p1, p2], opts.max_exception_rate))
        .map_err(|e| e.in_stage("summarize"))?;
    let explanation = ExplanationReport::new(e, inst, t1, t2);
    let metrics = timed(&mut t.score_ms, || inputs.gold.as_ref().map(|g| score(&explanation, g)));
    let objective = log_probability(inst, e, &opts.priors);
    t.total_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(EvalReport {
        method: opts.method.to_string(),
        q1: prep.q[0],
        q2: prep.q[1],
        relation: inst.phi,
        left_tuples: inst.left.len(),
        right_tuples: inst.right.len(),
        candidate_matches: inst.matches.len(),
        complete: is_complete(inst, e),
        explanation,
        objective: objective.is_finite().then_some(objective),
        blocks: ex.blocks,
        summary,
        metrics,
        timings: t,
    })
}

/// Loads a bundle and runs the pipeline on it.
pub fn run_pipeline(cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let started = Instant::now();
    let inputs = cfg.load_inputs().map_err(|e| e.in_stage("load"))?;
    let io_ms = started.elapsed().as_secs_f64() * 1e3;
    let mut report = run_inputs(&inputs, &cfg.options)?;
    if cfg.options.include_io {
        report.timings.io_ms = Some(io_ms);
        report.timings.total_ms += io_ms;
    }
    Ok(report)
}

/// Runs the prepared stages only, for callers that time the solve alone.
pub fn prepare_inputs(inputs: &Inputs, opts: &RunOptions) -> Result<Prepared> {
    prepare(inputs, opts, &mut Timings::default())
}
