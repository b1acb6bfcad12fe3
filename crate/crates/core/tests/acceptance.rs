//! One pass/fail line per acceptance criterion. Runs without the test
//! harness so the lines always reach the output.

use discrepancy::baselines::{greedy_explain, Method};
use discrepancy::canonical::{MatchRelation, Side};
use discrepancy::error::Error;
use discrepancy::eval::{explain, prepare_inputs, run_inputs, run_pipeline, EvalReport, Inputs, RunConfig, RunOptions};
use discrepancy::matching::TupleMatch;
use discrepancy::milp::{solve_instance, MilpOptions};
use discrepancy::partition::{graph_partition, pre_partition, solve_partitioned, BipartiteGraph, PartitionConfig};
use discrepancy::probability::{
    brute_force_optimal, impact_equality_holds, is_valid_mapping, log_probability, Instance, Priors,
};
use discrepancy::relational::{evaluate_query, load_csv, Database, QuerySpec, Schema, Value};
use discrepancy::solver::{SolveStatus, SolverConfig, SolverError};
use discrepancy::synthgen::{generate, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

const ORACLE_TOL: f64 = 1e-6;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const FIG2_BUDGET: Duration = Duration::from_secs(1);
const MIN_F: f64 = 0.99;
const MIN_SPEEDUP: f64 = 5.0;
const MAX_GROWTH: f64 = 15.0;
const NOOPT_CAP: Duration = Duration::from_secs(600);
const PREPARTITION_BUDGET: Duration = Duration::from_secs(1);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/running_example")
}

fn random_instance(rng: &mut ChaCha8Rng, max_side: usize, max_matches: usize, density: f64) -> Instance {
    let n1 = rng.gen_range(0..=max_side);
    let n2 = rng.gen_range(0..=max_side);
    let left = (0..n1).map(|_| rng.gen_range(-1..=5) as f64).collect();
    let right = (0..n2).map(|_| rng.gen_range(-1..=5) as f64).collect();
    let mut matches = Vec::new();
    'outer: for i in 0..n1 {
        for j in 0..n2 {
            if rng.gen_bool(density) {
                if matches.len() == max_matches {
                    break 'outer;
                }
                matches.push(TupleMatch {
                    left: i,
                    right: j,
                    p: rng.gen_range(1..=20) as f64 / 20.0,
                });
            }
        }
    }
    let phi = [MatchRelation::Equiv, MatchRelation::LessGeneral, MatchRelation::MoreGeneral][rng.gen_range(0..3)];
    Instance::new(left, right, matches, phi)
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut db = Database::new();
    for d in ["d1", "d2", "d3", "d4"] {
        let schema = Schema::load(&fixtures().join(format!("{d}.schema.json"))).unwrap();
        let rel = load_csv(&fixtures().join(format!("{d}.csv")), &schema).unwrap();
        db.insert(rel.name.clone(), rel);
    }
    let mut problems = Vec::new();
    for (q, want) in [("q1", 7), ("q2", 6), ("q3", 5), ("q4", 4)] {
        let spec = QuerySpec::load(&fixtures().join(format!("{q}.json"))).unwrap();
        let got = evaluate_query(&spec, &db).unwrap();
        if got.rows != vec![vec![Value::Integer(want)]] {
            problems.push(format!("{q} returned {:?}", got.rows));
        }
    }
    let run = |b: &str| run_pipeline(&RunConfig::load(&fixtures().join(b)).unwrap());
    let one_change = |r: &EvalReport, left: &str, right: &str| {
        let c = &r.explanation.value_changes;
        c.len() == 1
            && match c[0].side {
                Side::Left => c[0].row_id == left && c[0].old == 2.0 && c[0].new == 1.0,
                Side::Right => c[0].row_id == right && c[0].old == 1.0 && c[0].new == 2.0,
            }
    };
    match run("bundle_q1_q2.json") {
        Ok(r) => {
            if !(r.explanation.delta.is_empty() && one_change(&r, "cs", "cse") && r.explanation.evidence.len() == 6) {
                problems.push(format!("Q1/Q2 explanation {:?}", r.explanation));
            }
        }
        Err(e) => problems.push(format!("Q1/Q2 failed: {e}")),
    }
    match run("bundle_q1_q3.json") {
        Ok(r) => {
            let d = &r.explanation.delta;
            let design = d.len() == 1 && d[0].side == Side::Left && d[0].row_id == "design";
            if !(design && one_change(&r, "cs", "computer science") && r.explanation.evidence.len() == 5) {
                problems.push(format!("Q1/Q3 explanation {:?}", r.explanation));
            }
        }
        Err(e) => problems.push(format!("Q1/Q3 failed: {e}")),
    }
    match run("bundle_q1_q4.json") {
        Err(e) if matches!(e.root(), Error::Incomparable) => {}
        other => problems.push(format!("Q1/Q4 not incomparable: {:?}", other.map(|r| r.q2))),
    }
    let elapsed = started.elapsed();
    if elapsed >= FIG2_BUDGET {
        problems.push(format!("took {elapsed:?}"));
    }
    if problems.is_empty() {
        outcome(true, format!("7/6/5/4, CS/CSE value change, Design + CS change, Q4 incomparable, {elapsed:.2?}"))
    } else {
        outcome(false, problems.join("; "))
    }
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pr = Priors::default();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..200 {
        let inst = random_instance(&mut rng, 6, 20, 0.5);
        let s = solve_instance(&inst, &pr, &MilpOptions::default(), &SolverConfig::default()).unwrap();
        let o = brute_force_optimal(&inst, &pr, true).unwrap();
        let (a, b) = (s.objective, log_probability(&inst, &o, &pr));
        let gap = if a == b { 0.0 } else { (a - b).abs() };
        worst = worst.max(gap);
        if !(gap <= ORACLE_TOL) {
            failures += 1;
        }
    }
    let elapsed = started.elapsed();
    outcome(
        failures == 0 && elapsed < ORACLE_BUDGET,
        format!("200 instances, {failures} mismatches, largest gap {worst:.2e}, {elapsed:.1?}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pr = Priors::default();
    let mut bad = 0;
    let mut partitioned_blocks = 0;
    for _ in 0..1000 {
        let inst = random_instance(&mut rng, 12, 40, 0.12);
        let n = inst.num_tuples();
        let plain = solve_instance(&inst, &pr, &MilpOptions::default(), &SolverConfig::default()).unwrap();
        // a batch no smaller than the largest merged super-vertex
        let mut cfg = PartitionConfig::with_batch(rng.gen_range(2..=8));
        let coarse = pre_partition(&BipartiteGraph::from_instance(&inst), &cfg);
        let biggest = coarse.members.iter().map(|m| m.len()).max().unwrap_or(0);
        cfg.batch_size = cfg.batch_size.max(biggest);
        let part = solve_partitioned(&inst, &pr, &cfg, &MilpOptions::default(), &SolverConfig::default()).unwrap();
        if n > cfg.batch_size {
            partitioned_blocks += part.blocks;
        }
        for e in [&plain.explanation, &part.solved.explanation] {
            if !(is_valid_mapping(&inst, &e.evidence) && impact_equality_holds(&inst, e)) {
                bad += 1;
            }
        }
    }
    outcome(
        bad == 0,
        format!("1000 instances solved whole and partitioned ({partitioned_blocks} blocks), {bad} violations"),
    )
}

struct SynthRuns {
    reports: Vec<[(String, EvalReport); 5]>,
    batch1000_ms_at_1k: f64,
}

fn synthetic_runs() -> SynthRuns {
    let mut reports = Vec::new();
    for seed in 0..5 {
        let b = generate(&SynthConfig::new(1000, 0.2, 1000, seed)).unwrap();
        let inputs = Inputs::from_synthetic(&b);
        let run = |method: Method, partition: Option<PartitionConfig>| {
            let opts = RunOptions {
                method,
                partition,
                ..Default::default()
            };
            run_inputs(&inputs, &opts).unwrap()
        };
        reports.push([
            ("NoOpt".to_string(), run(Method::Milp, None)),
            ("Batch-100".to_string(), run(Method::Milp, Some(PartitionConfig::with_batch(100)))),
            ("Batch-1000".to_string(), run(Method::Milp, Some(PartitionConfig::with_batch(1000)))),
            ("Greedy".to_string(), run(Method::Greedy, None)),
            ("Threshold".to_string(), run(Method::Threshold(0.9), None)),
        ]);
    }
    let batch1000_ms_at_1k = reports.iter().map(|r| r[2].1.timings.solve_ms).sum::<f64>() / reports.len() as f64;
    SynthRuns {
        reports,
        batch1000_ms_at_1k,
    }
}

fn criterion_4(runs: &SynthRuns) -> Outcome {
    let mut lowest = [f64::INFINITY; 6];
    for seed in &runs.reports {
        for (k, (_, r)) in seed[..3].iter().enumerate() {
            let m = r.metrics.unwrap();
            lowest[2 * k] = lowest[2 * k].min(m.explanation.f);
            lowest[2 * k + 1] = lowest[2 * k + 1].min(m.evidence.f);
        }
    }
    let pass = lowest.iter().all(|&f| f >= MIN_F);
    outcome(
        pass,
        format!(
            "min F over 5 seeds (explanation/evidence): NoOpt {:.4}/{:.4}, Batch-100 {:.4}/{:.4}, Batch-1000 {:.4}/{:.4}",
            lowest[0], lowest[1], lowest[2], lowest[3], lowest[4], lowest[5]
        ),
    )
}

fn criterion_5(runs: &SynthRuns) -> Outcome {
    let b = generate(&SynthConfig::new(10_000, 0.2, 1000, 0)).unwrap();
    let inputs = Inputs::from_synthetic(&b);
    let opts = RunOptions::default();
    let prep = prepare_inputs(&inputs, &opts).unwrap();
    let inst = &prep.instance;
    let time = |opts: &RunOptions| {
        let t = Instant::now();
        let r = explain(inst, opts);
        (r, t.elapsed().as_secs_f64() * 1e3)
    };
    let batched = RunOptions {
        partition: Some(PartitionConfig::with_batch(1000)),
        ..Default::default()
    };
    let (rb, b_ms) = time(&batched);
    if let Err(e) = rb {
        return outcome(false, format!("Batch-1000 failed at n = 10000: {e}"));
    }
    let noopt = RunOptions {
        partition: None,
        solver: SolverConfig {
            time_limit: Some(NOOPT_CAP),
            ..Default::default()
        },
        ..Default::default()
    };
    let t = Instant::now();
    let noopt_result = solve_instance(inst, &noopt.priors, &noopt.milp, &noopt.solver);
    let n_ms = t.elapsed().as_secs_f64() * 1e3;
    let timed_out = match &noopt_result {
        Err(Error::Solver(SolverError::NoIncumbent)) => true,
        Ok(s) => s.status == SolveStatus::BoundLimit,
        Err(e) => return outcome(false, format!("NoOpt failed: {e}")),
    };
    let speedup = n_ms / b_ms;
    let growth = b_ms / runs.batch1000_ms_at_1k;
    let pass = (timed_out || speedup >= MIN_SPEEDUP) && growth <= MAX_GROWTH;
    let noopt_desc = if timed_out {
        format!("NoOpt hit the {}s cap", NOOPT_CAP.as_secs())
    } else {
        format!("NoOpt {:.1}s", n_ms / 1e3)
    };
    outcome(
        pass,
        format!(
            "n = 10000: Batch-1000 {:.1}s, {noopt_desc}, speedup {speedup:.1}x; Batch-1000 growth 1k to 10k {growth:.1}x",
            b_ms / 1e3
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pr = Priors::default();
    let mut differ = 0;
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 15, 60, 0.15);
        let cfg = PartitionConfig::with_batch(inst.num_tuples().max(2));
        let whole = solve_instance(&inst, &pr, &MilpOptions::default(), &SolverConfig::default()).unwrap();
        let part = solve_partitioned(&inst, &pr, &cfg, &MilpOptions::default(), &SolverConfig::default()).unwrap();
        if whole.objective.to_bits() != part.solved.objective.to_bits() {
            differ += 1;
        }
    }
    outcome(differ == 0, format!("50 instances, {differ} objectives differ"))
}

fn criterion_7(runs: &SynthRuns) -> Outcome {
    let mut problems = Vec::new();
    for (seed, r) in runs.reports.iter().enumerate() {
        let m = |k: usize| r[k].1.metrics.unwrap().explanation;
        let (milp, greedy, thr) = (m(0), m(3), m(4));
        if milp.f < greedy.f {
            problems.push(format!("seed {seed}: MILP F {:.4} < Greedy F {:.4}", milp.f, greedy.f));
        }
        if greedy.recall < thr.recall {
            problems.push(format!("seed {seed}: Greedy recall {:.4} < Threshold recall {:.4}", greedy.recall, thr.recall));
        }
    }
    let tm = |left, right, p| TupleMatch { left, right, p };
    let gadget = Instance::new(
        vec![1.0, 1.0],
        vec![1.0, 1.0],
        vec![tm(0, 0, 0.8), tm(1, 1, 0.8), tm(0, 1, 0.9), tm(1, 0, 0.5)],
        MatchRelation::Equiv,
    );
    let pr = Priors::default();
    let g = greedy_explain(&gadget, &pr).explanation;
    let m = solve_instance(&gadget, &pr, &MilpOptions::default(), &SolverConfig::default())
        .unwrap()
        .explanation;
    if !g.evidence.contains(&2) || g.evidence.contains(&0) {
        problems.push(format!("gadget: Greedy evidence {:?}", g.evidence));
    }
    if m.evidence != vec![0, 1] {
        problems.push(format!("gadget: MILP evidence {:?}", m.evidence));
    }
    let f = |k: usize| {
        runs.reports
            .iter()
            .map(|r| r[k].1.metrics.unwrap().explanation.f)
            .sum::<f64>()
            / runs.reports.len() as f64
    };
    let detail = format!(
        "mean explanation F: MILP {:.4}, Greedy {:.4}, Threshold {:.4}; gadget Greedy takes (A,B'), MILP takes (A,A'),(B,B')",
        f(0),
        f(3),
        f(4)
    );
    if problems.is_empty() {
        outcome(true, detail)
    } else {
        outcome(false, problems.join("; "))
    }
}

fn check_prepartition(g: &BipartiteGraph, cfg: &PartitionConfig) -> Result<String, String> {
    let t = Instant::now();
    let coarse = pre_partition(g, cfg);
    let elapsed = t.elapsed();
    if elapsed >= PREPARTITION_BUDGET {
        return Err(format!("pre_partition took {elapsed:?}"));
    }
    // super-vertices must be exactly the components of the strong edges
    let n = g.num_vertices();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(l, r, p) in &g.edges {
        if p >= cfg.theta_high {
            let (a, b) = (find(&mut parent, l), find(&mut parent, r));
            parent[a] = b;
        }
    }
    for members in &coarse.members {
        let root = find(&mut parent, members[0]);
        if members.iter().any(|&v| find(&mut parent, v) != root) {
            return Err("a super-vertex joins tuples not linked by strong matches".into());
        }
    }
    let roots: std::collections::HashSet<usize> = (0..n).map(|v| find(&mut parent, v)).collect();
    if roots.len() != coarse.members.len() {
        return Err("strong component split across super-vertices".into());
    }
    let part = graph_partition(&coarse, cfg.blocks_for(n), cfg.batch_size).map_err(|e| e.to_string())?;
    let covered: usize = part.blocks.iter().map(|b| b.len()).sum();
    if part.max_block() > cfg.batch_size || covered != n {
        return Err(format!("largest block {} of {}, {covered} of {n} covered", part.max_block(), cfg.batch_size));
    }
    Ok(format!(
        "{n} vertices to {} super-vertices in {elapsed:.2?}, {} blocks, largest {}",
        coarse.members.len(),
        part.blocks.len(),
        part.max_block()
    ))
}

fn criterion_8() -> Outcome {
    let cfg = PartitionConfig::with_batch(1000);
    let b = generate(&SynthConfig::new(5_556, 0.2, 1000, 8)).unwrap();
    let prep = prepare_inputs(&Inputs::from_synthetic(&b), &RunOptions::default()).unwrap();
    let synthetic = BipartiteGraph::from_instance(&prep.instance);
    // mixed probabilities so that some edges fall on each side of θ_h
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let matches: Vec<TupleMatch> = (0..15_000)
        .map(|_| TupleMatch {
            left: rng.gen_range(0..5000),
            right: rng.gen_range(0..5000),
            p: rng.gen_range(0.01..=1.0),
        })
        .collect();
    let random = BipartiteGraph::from_instance(&Instance::new(vec![1.0; 5000], vec![1.0; 5000], matches, MatchRelation::Equiv));
    match (check_prepartition(&synthetic, &cfg), check_prepartition(&random, &cfg)) {
        (Ok(a), Ok(b)) => outcome(true, format!("synthetic: {a}; random: {b}")),
        (Err(e), _) => outcome(false, format!("synthetic: {e}")),
        (_, Err(e)) => outcome(false, format!("random: {e}")),
    }
}

fn main() {
    // `cargo test -- --list` and filters come through as arguments
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |k: usize, o: Outcome| {
        println!("criterion {k}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((k, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    let runs = synthetic_runs();
    report(4, criterion_4(&runs));
    report(5, criterion_5(&runs));
    report(6, criterion_6());
    report(7, criterion_7(&runs));
    report(8, criterion_8());
    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(k, _)| *k).collect();
    if failed.is_empty() {
        println!("acceptance: all 8 criteria pass");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
