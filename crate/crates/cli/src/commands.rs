use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use privdude::format::InstanceFile;
use privdude::problems::{generate as generate_instance, GenParams, Instance, ProblemKind};
use privdude::rng::{derive_seed, Purpose};
use privdude::solver::SolveConfig;

use crate::error::CliError;
use crate::outcome::{output_audit, reference_opt, solve as solve_once, Algo, ReportFile, Timings};

pub const CSV_HEADER: &str = "epsilon,seed,objective,opt,gap,violation,rp_bound,satisfied_frac";

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn load(path: &Path) -> Result<(InstanceFile, Instance), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file = InstanceFile::from_json(&text)?;
    let instance = file.instance()?;
    Ok((file, instance))
}

pub fn generate(
    kind: ProblemKind,
    n: usize,
    k: usize,
    d: usize,
    m: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let params = GenParams::new(n, k).with_d(d).with_m(m);
    let instance = generate_instance(kind, params, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let file = InstanceFile::from_instance(&instance, Some(seed));
    write(out, &file.to_json())?;
    let meta = serde_json::to_string_pretty(&file.metadata).expect("metadata serializes");
    println!("{meta}");
    Ok(())
}

fn config(epsilon: f64, delta: f64, beta: f64, seed: u64, t_override: Option<u64>, no_noise: bool) -> SolveConfig {
    let mut c = SolveConfig::new(epsilon, delta, beta, seed);
    if no_noise {
        c = c.without_noise();
    }
    if let Some(t) = t_override {
        c = c.with_iterations(t);
    }
    c
}

pub struct SolveRequest<'a> {
    pub in_path: &'a Path,
    pub algo: Algo,
    pub epsilon: f64,
    pub delta: f64,
    pub beta: f64,
    pub alpha: Option<f64>,
    pub seed: u64,
    pub t_override: Option<u64>,
    pub no_noise: bool,
    pub out_path: &'a Path,
    pub timings: bool,
}

pub fn solve(req: &SolveRequest) -> Result<(), CliError> {
    let (file, instance) = load(req.in_path)?;
    let program = file.program()?;
    let config = config(req.epsilon, req.delta, req.beta, req.seed, req.t_override, req.no_noise);
    let start = Instant::now();
    let outcome = solve_once(&program, req.algo, &config, req.alpha)?;
    let wall = start.elapsed().as_secs_f64();
    let opt = reference_opt(&instance, &program)?;
    let mut report = ReportFile::build(&program, req.algo, &outcome, opt)?;
    if req.timings {
        report.timings = Some(Timings { wall_seconds: wall });
    }
    write(req.out_path, &report.to_json())?;
    let out = &report.audit.output;
    println!(
        "objective {} violation {} rp {} audit {}",
        out.objective,
        out.violation,
        report.regret.rp,
        if report.audit.solver.all_ok() { "pass" } else { "fail" }
    );
    eprintln!("solved in {wall:.3}s");
    Ok(())
}

/// Parse a comma-separated list of positive, finite budgets.
pub fn parse_epsilons(raw: &str) -> Result<Vec<f64>, CliError> {
    let parsed: Result<Vec<f64>, _> = raw.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match parsed {
        Ok(v) if !v.is_empty() && v.iter().all(|e| e.is_finite() && *e > 0.0) => Ok(v),
        _ => {
            Err(CliError::Usage(format!("--epsilons must be a comma-separated list of positive numbers, got {raw:?}")))
        }
    }
}

pub struct SweepRequest<'a> {
    pub in_path: &'a Path,
    pub algo: Algo,
    pub epsilons: Vec<f64>,
    pub trials: u64,
    pub delta: f64,
    pub beta: f64,
    pub alpha: Option<f64>,
    pub seed: u64,
    pub t_override: Option<u64>,
    pub no_noise: bool,
    pub out_csv: &'a Path,
}

pub fn sweep(req: &SweepRequest) -> Result<(), CliError> {
    let (file, instance) = load(req.in_path)?;
    let program = file.program()?;
    let opt = reference_opt(&instance, &program)?;
    let cells: Vec<(f64, u64)> = req.epsilons.iter().flat_map(|&e| (0..req.trials).map(move |t| (e, t))).collect();
    let rows: Vec<Result<String, CliError>> = cells
        .par_iter()
        .map(|&(epsilon, trial)| {
            let seed = derive_seed(req.seed, Purpose::Trial, &[trial]);
            let config = config(epsilon, req.delta, req.beta, seed, req.t_override, req.no_noise);
            let outcome = solve_once(&program, req.algo, &config, req.alpha)?;
            let out = output_audit(&program, outcome.points())?;
            let satisfied = outcome.satisfied_fraction(&program, req.alpha)?;
            Ok(format!(
                "{epsilon},{seed},{},{},{},{},{},{satisfied}",
                out.objective,
                opt.value,
                opt.value - out.objective,
                out.violation,
                outcome.solver_report().regret.rp,
            ))
        })
        .collect();
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in rows {
        let _ = writeln!(csv, "{}", row?);
    }
    write(req.out_csv, &csv)
}
