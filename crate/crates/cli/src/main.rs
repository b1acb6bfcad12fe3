use clap::{Args, Parser, Subcommand, ValueEnum};
use discrepancy::baselines::Method;
use discrepancy::error::Error;
use discrepancy::eval::{prepare_inputs, run_inputs, run_pipeline, write_bundle, Inputs, RunConfig, RunOptions};
use discrepancy::milp::{build_milp, decode_solution};
use discrepancy::partition::PartitionConfig;
use discrepancy::probability::{is_complete, log_probability, ExplanationReport, Priors};
use discrepancy::solver::{export_model, import_solution, ModelFormat, SolverError};
use discrepancy::synthgen::{generate, SynthConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

#[derive(Parser)]
#[command(name = "discrepancy", version, about = "Explains why two queries over different datasets disagree")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the explanation pipeline on a bundle.
    Explain(ExplainArgs),
    /// Generate a synthetic dataset pair with a gold standard.
    Synthgen(SynthArgs),
    /// Run a grid of synthetic experiments and print CSV rows.
    Bench(BenchArgs),
}

#[derive(Args, Clone, Default)]
struct Tuning {
    /// milp, greedy, threshold:<θ> or exactcover.
    #[arg(long)]
    method: Option<String>,
    /// Prior that a tuple is not a provenance error.
    #[arg(long)]
    alpha: Option<f64>,
    /// Prior that a kept tuple's impact is right.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    theta_low: Option<f64>,
    #[arg(long)]
    theta_high: Option<f64>,
    #[arg(long)]
    reward: Option<f64>,
    /// Solve the whole instance at once.
    #[arg(long)]
    no_partition: bool,
    /// Seconds before branch-and-bound stops with its incumbent.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    node_limit: Option<u64>,
    /// Allow kept tuples that take part in no evidence match.
    #[arg(long)]
    no_coverage: bool,
    #[arg(long)]
    no_pair_cuts: bool,
    /// Similarity buckets used for calibration.
    #[arg(long)]
    buckets: Option<usize>,
    /// Pairs at or below this similarity are not candidates.
    #[arg(long)]
    candidate_floor: Option<f64>,
    /// Use raw similarity as probability when no labels are available.
    #[arg(long)]
    raw_similarity: bool,
    #[arg(long)]
    max_exception_rate: Option<f64>,
}

impl Tuning {
    fn apply(&self, o: &mut RunOptions) -> Result<(), Error> {
        if let Some(m) = &self.method {
            o.method = m.parse()?;
        }
        o.priors = Priors::new(self.alpha.unwrap_or(o.priors.alpha), self.beta.unwrap_or(o.priors.beta))?;
        let touches_partition = self.batch_size.is_some()
            || self.theta_low.is_some()
            || self.theta_high.is_some()
            || self.reward.is_some();
        if self.no_partition {
            o.partition = None;
        } else if touches_partition {
            let mut p = o.partition.unwrap_or_default();
            p.batch_size = self.batch_size.unwrap_or(p.batch_size);
            p.theta_low = self.theta_low.unwrap_or(p.theta_low);
            p.theta_high = self.theta_high.unwrap_or(p.theta_high);
            p.reward = self.reward.unwrap_or(p.reward);
            p.validate()?;
            o.partition = Some(p);
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Invalid(format!("time limit {t} must be a positive number of seconds")));
            }
            o.solver.time_limit = Some(Duration::from_secs_f64(t));
        }
        if self.node_limit.is_some() {
            o.solver.node_limit = self.node_limit;
        }
        if self.no_coverage {
            o.milp.coverage = false;
        }
        if self.no_pair_cuts {
            o.milp.pair_cuts = false;
        }
        if let Some(k) = self.buckets {
            o.calibration.bucket_count = k;
        }
        if let Some(f) = self.candidate_floor {
            o.calibration.floor = f;
        }
        if self.raw_similarity {
            o.calibration.raw_fallback = true;
        }
        if let Some(r) = self.max_exception_rate {
            o.max_exception_rate = r;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Default, PartialEq, ValueEnum)]
enum SolverMode {
    /// Solve with the bundled branch-and-bound.
    #[default]
    Builtin,
    /// Write the model for an external solver, or read its solution back.
    Export,
}

#[derive(Args)]
struct ExplainArgs {
    /// Run bundle (JSON).
    bundle: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
    /// Count file loading in the reported time.
    #[arg(long)]
    include_io: bool,
    /// Also write the JSON report here.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SolverMode::Builtin)]
    solver: SolverMode,
    /// Model file for --solver export (.lp or .mps).
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Solution file (`name value` lines) to decode for --solver export.
    #[arg(long)]
    solution: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Fraction of tuples dropped, and again of survivors corrupted.
    #[arg(long, default_value_t = 0.2)]
    d: f64,
    /// Vocabulary size.
    #[arg(long, default_value_t = 1000)]
    v: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.2")]
    d: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    v: Vec<usize>,
    /// Seeds 0..seeds per grid point.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// noopt, batch-<k>, milp, greedy, threshold:<θ>, exactcover.
    #[arg(long, value_delimiter = ',', default_value = "noopt,batch-100,batch-1000,greedy,threshold:0.9,exactcover")]
    methods: Vec<String>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Incomparable => 2,
        Error::Solver(SolverError::Infeasible) => 3,
        Error::Io { .. } | Error::Load { .. } | Error::Json { .. } | Error::Solver(SolverError::Io(_)) => 4,
        _ => 1,
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn explain(args: &ExplainArgs) -> Result<(), Error> {
    let mut cfg = RunConfig::load(&args.bundle)?;
    args.tuning.apply(&mut cfg.options)?;
    cfg.options.include_io |= args.include_io;
    if args.solver == SolverMode::Export {
        return export(args, &cfg);
    }
    let report = run_pipeline(&cfg)?;
    let json = serde_json::to_string_pretty(&report).expect("reports serialize");
    if let Some(out) = args.output.as_ref().or(cfg.output.as_ref()) {
        write_file(out, &(json.clone() + "\n"))?;
    }
    if args.json {
        println!("{json}");
    } else {
        print!("{}", report.render());
    }
    Ok(())
}

/// Writes the whole-instance model, or decodes an external solution of it.
fn export(args: &ExplainArgs, cfg: &RunConfig) -> Result<(), Error> {
    cfg.validate()?;
    let inputs = cfg.load_inputs()?;
    let prep = prepare_inputs(&inputs, &cfg.options)?;
    let inst = &prep.instance;
    let mm = build_milp(inst, &cfg.options.priors, &cfg.options.milp)?;
    match (&args.solution, &args.model_out) {
        (Some(sol), _) => {
            let a = import_solution(&mm.model, sol)?;
            let e = decode_solution(&mm, inst, &a.values);
            let [t1, t2] = &prep.canonical;
            let report = ExplanationReport::new(&e, inst, t1, t2);
            let objective = log_probability(inst, &e, &cfg.options.priors);
            if args.json {
                println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
            } else {
                println!(
                    "{} removed, {} changed, {} evidence matches; log-probability {objective:.6}{}",
                    report.delta.len(),
                    report.value_changes.len(),
                    report.evidence.len(),
                    if is_complete(inst, &e) { ", complete" } else { ", incomplete" }
                );
            }
            Ok(())
        }
        (None, Some(out)) => {
            let format = ModelFormat::from_path(out)
                .ok_or_else(|| Error::Invalid(format!("{}: model file must end in .lp or .mps", out.display())))?;
            export_model(&mm.model, format, out)?;
            println!(
                "wrote {} ({} variables, {} rows)",
                out.display(),
                mm.model.num_vars(),
                mm.model.num_constraints()
            );
            Ok(())
        }
        (None, None) => Err(Error::Invalid("--solver export needs --model-out or --solution".into())),
    }
}

fn synthgen(args: &SynthArgs) -> Result<(), Error> {
    let b = generate(&SynthConfig::new(args.n, args.d, args.v, args.seed))?;
    let path = write_bundle(&b, &args.out, &RunOptions::default())?;
    println!(
        "wrote {} ({} + {} rows, {} dropped, {} corrupted)",
        path.display(),
        b.d1.rows.len(),
        b.d2.rows.len(),
        b.gold.dropped.len(),
        b.gold.corrupted.len()
    );
    Ok(())
}

fn bench_options(label: &str, base: &RunOptions) -> Result<RunOptions, Error> {
    let mut o = base.clone();
    let l = label.trim().to_ascii_lowercase();
    if l == "noopt" {
        o.method = Method::Milp;
        o.partition = None;
    } else if let Some(k) = l.strip_prefix("batch-") {
        let k: usize = k.parse().map_err(|_| Error::Invalid(format!("bad batch size in {label:?}")))?;
        let p = PartitionConfig {
            batch_size: k,
            ..base.partition.unwrap_or_default()
        };
        p.validate()?;
        o.method = Method::Milp;
        o.partition = Some(p);
    } else {
        o.method = l.parse()?;
    }
    Ok(o)
}

fn bench(args: &BenchArgs) -> Result<(), Error> {
    let mut base = RunOptions::default();
    args.tuning.apply(&mut base)?;
    let methods: Vec<(String, RunOptions)> = args
        .methods
        .iter()
        .map(|m| Ok((m.clone(), bench_options(m, &base)?)))
        .collect::<Result<_, Error>>()?;
    let sink: Box<dyn std::io::Write> = match &args.out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Error::io(p.display().to_string(), e))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| Error::io("bench output", e.into());
    w.write_record(["method", "n", "d", "v", "seed", "expF", "evF", "solve_ms"]).map_err(io)?;
    for &n in &args.n {
        for &d in &args.d {
            for &v in &args.v {
                for seed in 0..args.seeds {
                    let inputs = Inputs::from_synthetic(&generate(&SynthConfig::new(n, d, v, seed))?);
                    for (label, opts) in &methods {
                        let r = run_inputs(&inputs, opts)?;
                        let m = r.metrics.unwrap_or_default();
                        w.write_record([
                            label.clone(),
                            n.to_string(),
                            d.to_string(),
                            v.to_string(),
                            seed.to_string(),
                            format!("{:.6}", m.explanation.f),
                            format!("{:.6}", m.evidence.f),
                            format!("{:.3}", r.timings.solve_ms),
                        ])
                        .map_err(io)?;
                        w.flush().map_err(|e| Error::io("bench output", e))?;
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Explain(a) => explain(a),
        Command::Synthgen(a) => synthgen(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
