use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use tisp::io::{read_matrix_file, read_vector_file, write_matrix, write_vector};
use tisp::par::with_jobs;
use tisp::penalty::Augmentation;
use tisp::problem::Problem;
use tisp::simulate::{
    default_signal, fit_step_bound, gen_problem, run_decay_experiment, run_rate_experiment,
    write_results_csv, DecayResult, Ensemble, ExperimentSpec, NoiseKind, RateSpec,
};
use tisp::solver::{
    solve, LambdaSchedule, Rho, SolverConfig, Start, Termination, DEFAULT_MAX_ITER,
    DEFAULT_RHO_EPSILON, DEFAULT_TOL,
};
use tisp::suites::{run_suite, Suite};
use tisp::thresholding::ThresholdRule;

/// Iterative thresholding for sparse linear regression.
#[derive(Parser)]
#[command(name = "tisp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem read from CSV files.
    Solve(SolveArgs),
    /// Generate a synthetic instance as CSV files.
    Simulate(SimulateArgs),
    /// Run a decay experiment from a JSON config.
    Decay(ExperimentArgs),
    /// Run a rate experiment from a JSON config.
    Rate(ExperimentArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Design matrix, headerless CSV, one row per observation.
    #[arg(long)]
    design: PathBuf,
    /// Response vector, one value per line.
    #[arg(long)]
    response: PathBuf,
    /// Rule spec such as `soft(lambda=1)` or `mcp(lambda=0.5,gamma=3)`.
    #[arg(long)]
    rule: String,
    /// `auto`, `auto:<epsilon>` or a fixed value.
    #[arg(long, default_value = "auto")]
    rho: String,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// `constant:<v>`, `geometric:<start>,<factor>[,<floor>]` or
    /// `explicit:<v1>,<v2>,...`. Defaults to the rule's own threshold.
    #[arg(long)]
    lambda_schedule: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Record every k-th iterate in the trace.
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    #[arg(long, value_enum, default_value_t = AugmentationArg::None)]
    augmentation: AugmentationArg,
    /// Starting point in original coordinates; zero if absent.
    #[arg(long)]
    start: Option<PathBuf>,
    /// Write the iterate trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// True coefficients, enabling the error columns of the trace.
    #[arg(long)]
    beta_star: Option<PathBuf>,
    /// Write the estimate here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AugmentationArg {
    None,
    CappedL1,
    L0,
    L0L2,
}

impl From<AugmentationArg> for Augmentation {
    fn from(a: AugmentationArg) -> Self {
        match a {
            AugmentationArg::None => Augmentation::None,
            AugmentationArg::CappedL1 => Augmentation::CappedL1,
            AugmentationArg::L0 => Augmentation::L0,
            AugmentationArg::L0L2 => Augmentation::L0L2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EnsembleArg {
    GaussianIid,
    GaussianAr1,
    Orthonormal,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Gaussian,
    RademacherScaled,
    UniformBounded,
}

impl From<NoiseArg> for NoiseKind {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Gaussian => NoiseKind::Gaussian,
            NoiseArg::RademacherScaled => NoiseKind::RademacherScaled,
            NoiseArg::UniformBounded => NoiseKind::UniformBounded,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = EnsembleArg::GaussianIid)]
    ensemble: EnsembleArg,
    /// Column correlation of the AR(1) ensemble.
    #[arg(long, default_value_t = 0.5)]
    corr: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    j_star: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, value_enum, default_value_t = NoiseArg::Gaussian)]
    noise: NoiseArg,
    /// Smallest nonzero |β*_j|; defaults to 5·√(log(e·p))·max(σ, 1).
    #[arg(long)]
    magnitude: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving X.csv, y.csv and beta_star.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving results.csv and summary.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// axioms, penalty, descent, theorem1, lemma5, lemma7, regularity or all.
    #[arg(long)]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Simulate(a) => cmd_simulate(a).map(|_| 0),
        Command::Decay(a) => cmd_decay(a).map(|_| 0),
        Command::Rate(a) => cmd_rate(a).map(|_| 0),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn parse_rho(text: &str) -> Result<Rho> {
    let text = text.trim();
    if text == "auto" {
        return Ok(Rho::Auto {
            epsilon: DEFAULT_RHO_EPSILON,
        });
    }
    if let Some(eps) = text.strip_prefix("auto:") {
        let epsilon: f64 = eps.parse().with_context(|| format!("--rho: bad epsilon `{eps}`"))?;
        return Ok(Rho::Auto { epsilon });
    }
    let v: f64 = text
        .parse()
        .with_context(|| format!("--rho: expected `auto`, `auto:<eps>` or a number, got `{text}`"))?;
    Ok(Rho::Fixed(v))
}

fn parse_numbers(list: &str, what: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("{what}: `{}` is not a number", v.trim()))
        })
        .collect()
}

fn parse_schedule(text: &str, rule: &ThresholdRule) -> Result<LambdaSchedule> {
    let (kind, body) = text.split_once(':').unwrap_or((text, ""));
    let what = "--lambda-schedule";
    let schedule = match kind.trim() {
        "constant" if body.is_empty() => LambdaSchedule::Constant(rule.effective_threshold()),
        "constant" => match parse_numbers(body, what)?[..] {
            [v] => LambdaSchedule::Constant(v),
            _ => bail!("{what}: constant takes a single value"),
        },
        "geometric" => {
            let v = parse_numbers(body, what)?;
            let floor = match v.len() {
                2 => rule.effective_threshold(),
                3 => v[2],
                _ => bail!("{what}: geometric takes <start>,<factor>[,<floor>]"),
            };
            LambdaSchedule::Geometric {
                start: v[0],
                factor: v[1],
                floor,
            }
        }
        "explicit" => LambdaSchedule::Explicit(parse_numbers(body, what)?),
        other => bail!("{what}: unknown schedule `{other}`; expected constant, geometric or explicit"),
    };
    Ok(schedule)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn cmd_solve(a: SolveArgs) -> Result<u8> {
    let x = read_matrix_file(&a.design)?;
    let y = read_vector_file(&a.response)?;
    let mut problem = Problem::new(x, y)?;
    if let Some(path) = &a.beta_star {
        problem = problem.with_truth(read_vector_file(path)?, None)?;
    }
    let rule: ThresholdRule = a.rule.parse()?;
    let schedule = match &a.lambda_schedule {
        Some(text) => parse_schedule(text, &rule)?,
        None => LambdaSchedule::Constant(rule.effective_threshold()),
    };
    let start = match &a.start {
        Some(path) => Start::Given(read_vector_file(path)?),
        None => Start::Zero,
    };
    let config = SolverConfig {
        rho: parse_rho(&a.rho)?,
        alpha: a.alpha,
        schedule,
        tol: a.tol,
        max_iter: a.max_iter,
        record_every: a.record_every,
        augmentation: a.augmentation.into(),
        start,
        ..SolverConfig::new(rule)
    };
    let out = solve(&problem, &config)?;

    match &a.out {
        Some(path) => write_vector(create(path)?, &out.beta)?,
        None => write_vector(io::stdout().lock(), &out.beta)?,
    }
    if let Some(path) = &a.trace {
        out.trace.write_csv(create(path)?)?;
    }
    if !out.trace.flagged.is_empty() {
        eprintln!(
            "warning: {} iterate(s) landed within rounding distance of a jump of the rule",
            out.trace.flagged.len()
        );
    }
    match out.termination {
        Termination::Converged => {
            eprintln!(
                "converged at iterate {} (rho = {}, objective = {})",
                out.iterations, out.rho, out.objective
            );
            Ok(0)
        }
        Termination::MaxIter => {
            eprintln!(
                "stopped after {} iterations without converging; returning the best iterate (objective = {})",
                a.max_iter, out.objective
            );
            Ok(2)
        }
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let ensemble = match a.ensemble {
        EnsembleArg::GaussianIid => Ensemble::GaussianIid,
        EnsembleArg::GaussianAr1 => Ensemble::GaussianAr1 { rho_corr: a.corr },
        EnsembleArg::Orthonormal => Ensemble::Orthonormal,
    };
    let magnitude = a.magnitude.unwrap_or_else(|| default_signal(a.sigma, a.p));
    let problem = gen_problem(
        &ensemble,
        a.n,
        a.p,
        a.j_star,
        magnitude,
        a.sigma,
        a.noise.into(),
        a.seed,
    )?;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    write_matrix(create(&a.out.join("X.csv"))?, problem.x())?;
    write_vector(create(&a.out.join("y.csv"))?, problem.y())?;
    let beta = problem.beta_star().expect("generated with truth");
    write_vector(create(&a.out.join("beta_star.csv"))?, beta)?;
    eprintln!("wrote X.csv, y.csv and beta_star.csv to {}", a.out.display());
    Ok(())
}

fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Count, min, median and max; `null` when empty.
fn distribution(values: &[f64]) -> Value {
    if values.is_empty() {
        return Value::Null;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    let median = if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    };
    json!({
        "count": v.len(),
        "min": v[0],
        "median": median,
        "max": v[v.len() - 1],
    })
}

fn write_outputs(dir: &Path, results: &[DecayResult], summary: &Value) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_results_csv(create(&dir.join("results.csv"))?, results)?;
    let text = serde_json::to_string_pretty(summary)?;
    let mut w = create(&dir.join("summary.json"))?;
    writeln!(w, "{text}")?;
    w.flush()?;
    writeln!(io::stdout().lock(), "{text}")?;
    Ok(())
}

fn decay_summary(spec: &ExperimentSpec, results: &[DecayResult]) -> Value {
    let kappas: Vec<f64> = results.iter().filter_map(|r| r.kappa_hat).collect();
    let ratios: Vec<f64> = results.iter().filter_map(|r| r.plateau_ratio).collect();
    let mut per_rule = Vec::new();
    let mut names: Vec<&str> = Vec::new();
    for r in results {
        if !names.contains(&r.rule.as_str()) {
            names.push(&r.rule);
        }
    }
    for name in names {
        let runs: Vec<&DecayResult> = results.iter().filter(|r| r.rule == name).collect();
        let k: Vec<f64> = runs.iter().filter_map(|r| r.kappa_hat).collect();
        let q: Vec<f64> = runs.iter().filter_map(|r| r.plateau_ratio).collect();
        per_rule.push(json!({
            "rule": name,
            "runs": runs.len(),
            "converged": runs.iter().filter(|r| r.converged).count(),
            "kappa_hat": distribution(&k),
            "plateau_ratio": distribution(&q),
        }));
    }
    let bound = fit_step_bound(results).map(|b| {
        json!({"kappa": b.kappa, "k_prime": b.k_prime, "runs": b.runs, "steps": b.steps})
    });
    json!({
        "experiment": "decay",
        "rows": results.len(),
        "lambda": spec.lambda(),
        "converged": results.iter().filter(|r| r.converged).count(),
        "kappa_hat": distribution(&kappas),
        "plateau_ratio": distribution(&ratios),
        "step_bound": bound,
        "rules": per_rule,
    })
}

fn cmd_decay(a: ExperimentArgs) -> Result<()> {
    let spec = ExperimentSpec::from_json(&read_config(&a.config)?)
        .with_context(|| format!("{}", a.config.display()))?;
    let results = with_jobs(a.jobs, || run_decay_experiment(&spec))??;
    write_outputs(&a.out, &results, &decay_summary(&spec, &results))
}

fn cmd_rate(a: ExperimentArgs) -> Result<()> {
    let spec = RateSpec::from_json(&read_config(&a.config)?)
        .with_context(|| format!("{}", a.config.display()))?;
    let report = with_jobs(a.jobs, || run_rate_experiment(&spec))??;
    let points: Vec<Value> = report
        .points
        .iter()
        .map(|q| {
            json!({
                "p": q.p,
                "J_star": q.j_star,
                "n": q.n,
                "median_pred_err": q.median_pred_err,
                "reference": q.reference,
            })
        })
        .collect();
    let summary = json!({
        "experiment": "rate",
        "rows": report.replications.len(),
        "slope": report.slope,
        "intercept": report.intercept,
        "r2": report.r2,
        "converged": report.replications.iter().filter(|r| r.converged).count(),
        "points": points,
    });
    write_outputs(&a.out, &report.replications, &summary)
}

fn cmd_verify(a: VerifyArgs) -> Result<u8> {
    let suites = Suite::parse_list(&a.suite)?;
    let mut failed = 0;
    let mut stdout = io::stdout().lock();
    for suite in suites {
        for check in run_suite(suite, a.seed)? {
            let status = if check.passed { "PASS" } else { "FAIL" };
            failed += !check.passed as usize;
            writeln!(
                stdout,
                "{status} {suite} {} worst_slack={:e} samples={}",
                check.name, check.worst_slack, check.samples
            )?;
            if let Some(finding) = &check.finding {
                writeln!(stdout, "FINDING {suite} {}: {finding}", check.name)?;
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} check(s) failed");
        Ok(1)
    } else {
        Ok(0)
    }
}
