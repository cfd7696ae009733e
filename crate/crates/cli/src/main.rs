mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mzlab::estimate::EstimateBudget;
use mzlab::tensorspace::Exponent;
use serde_json::Value;

use crate::config::{read_json, RunConfig};
use crate::output::{write_csv, write_report, Cache, CsvRow, Report};

/// Numerical lab for Marcinkiewicz-Zygmund constants of multilinear operators.
///
/// Exit status: 0 on success, 1 when a check fails, 2 on invalid input.
#[derive(Parser, Debug)]
#[command(name = "mzlab", version)]
struct Cli {
    #[command(flatten)]
    io: IoArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct IoArgs {
    /// Write the JSON report here (plus a `.meta.json` sidecar with timings).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write the result table as CSV (estimate and probe witnesses).
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Print the JSON report on stdout instead of a summary.
    #[arg(long, global = true)]
    json: bool,
    /// Cache directory; overrides MZLAB_CACHE_DIR.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Skip the result cache.
    #[arg(long, global = true)]
    no_cache: bool,
}

#[derive(Args, Debug, Clone, Default)]
struct BudgetArgs {
    /// Ascent sweeps per optimisation.
    #[arg(long)]
    iterations: Option<usize>,
    /// Random restarts.
    #[arg(long)]
    restarts: Option<usize>,
    /// Coefficient perturbation rounds (estimate only).
    #[arg(long)]
    perturbations: Option<usize>,
    /// Random candidate tensors (estimate only).
    #[arg(long)]
    random_candidates: Option<usize>,
}

impl BudgetArgs {
    fn merge(&self, base: Option<EstimateBudget>) -> Option<EstimateBudget> {
        let given = self.iterations.is_some()
            || self.restarts.is_some()
            || self.perturbations.is_some()
            || self.random_candidates.is_some();
        if !given {
            return base;
        }
        let b = base.unwrap_or_default();
        Some(EstimateBudget {
            iterations: self.iterations.unwrap_or(b.iterations),
            restarts: self.restarts.unwrap_or(b.restarts),
            perturbations: self.perturbations.unwrap_or(b.perturbations),
            random_candidates: self.random_candidates.unwrap_or(b.random_candidates),
        })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify k_{q,p}(r): status, closed-form value and where it comes from.
    Classify {
        /// Input exponents, comma separated (`inf` allowed).
        #[arg(long, value_delimiter = ',', required = true)]
        q: Vec<Exponent>,
        #[arg(long)]
        p: Exponent,
        #[arg(long)]
        r: Exponent,
    },
    /// Absolute moment c_{r,s} of the standard symmetric r-stable law.
    Moment {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        s: f64,
        /// `quadrature` or `monte-carlo`.
        #[arg(long, default_value = "quadrature")]
        method: String,
        /// Monte Carlo sample count.
        #[arg(long)]
        samples: Option<usize>,
        /// Absolute quadrature tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Norm (or norm bracket) of an operator stored as JSON.
    Norm {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        q: Vec<Exponent>,
        #[arg(long)]
        p: Exponent,
        /// `auto` (exact when possible) or `bracket`.
        #[arg(long, default_value = "auto")]
        mode: String,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Certified lower bounds on k^{(n)}_{q,p}(r).
    Estimate {
        /// JSON run configuration; flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<Exponent>>,
        #[arg(long)]
        p: Option<Exponent>,
        #[arg(long)]
        r: Option<Exponent>,
        /// Family sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        /// Coefficient shape `out,d1,...,dm`.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build a named witness: littlewood, ksz, hadamard-probe or ksz-probe.
    Witness {
        #[arg(long)]
        kind: String,
        /// Size, or comma separated sizes for probes.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<Exponent>>,
        #[arg(long)]
        p: Option<Exponent>,
        #[arg(long)]
        r: Option<Exponent>,
        /// Random sign tensors tried per size (ksz kinds).
        #[arg(long)]
        attempts: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the witness operator to this file.
        #[arg(long)]
        operator_out: Option<PathBuf>,
    },
    /// Run a verification suite: classifier, positivity, weak, monotonicity,
    /// interpolation, duality or all.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarise every report in a directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn base(command: &str) -> RunConfig {
    RunConfig { command: command.into(), ..RunConfig::default() }
}

/// Builds the run configuration; `report` and `witness --operator-out`
/// carry extra arguments that do not affect the report.
fn build_config(cmd: &Command) -> Result<RunConfig> {
    Ok(match cmd {
        Command::Classify { q, p, r } => {
            RunConfig { q: Some(q.clone()), p: Some(*p), r: Some(*r), ..base("classify") }
        }
        Command::Moment { r, s, method, samples, tol, seed } => RunConfig {
            r: Some(Exponent::quasi(*r)?),
            s: Some(*s),
            method: Some(method.clone()),
            samples: *samples,
            tol: *tol,
            seed: *seed,
            ..base("moment")
        },
        Command::Norm { file, q, p, mode, budget, seed } => {
            let operator: Value = read_json(file)?;
            RunConfig {
                q: Some(q.clone()),
                p: Some(*p),
                mode: Some(mode.clone()),
                budget: budget.merge(None),
                seed: *seed,
                operator: Some(operator),
                ..base("norm")
            }
        }
        Command::Estimate { config, q, p, r, n, dims, budget, seed } => {
            let mut cfg: RunConfig = match config {
                Some(path) => read_json(path)?,
                None => RunConfig::default(),
            };
            cfg.command = "estimate".into();
            cfg.q = q.clone().or(cfg.q);
            cfg.p = p.or(cfg.p);
            cfg.r = r.or(cfg.r);
            cfg.n = n.clone().or(cfg.n);
            cfg.dims = dims.clone().or(cfg.dims);
            cfg.budget = budget.merge(cfg.budget).or(Some(EstimateBudget::default()));
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg
        }
        Command::Witness { kind, n, m, q, p, r, attempts, seed, .. } => RunConfig {
            kind: Some(kind.clone()),
            n: Some(n.clone()),
            m: *m,
            q: q.clone(),
            p: *p,
            r: *r,
            attempts: *attempts,
            seed: *seed,
            ..base("witness")
        },
        Command::Verify { suite, trials, seed } => RunConfig {
            suite: Some(suite.clone()),
            trials: Some(*trials),
            seed: *seed,
            ..base("verify")
        },
        Command::Report { .. } => base("report"),
    })
}

fn execute(cmd: &Command, cfg: &RunConfig) -> Result<commands::Outcome> {
    match cmd {
        Command::Classify { .. } => commands::classify(cfg),
        Command::Moment { .. } => commands::moment_cmd(cfg),
        Command::Norm { .. } => commands::norm(cfg),
        Command::Estimate { .. } => commands::estimate(cfg),
        Command::Witness { .. } => commands::witness(cfg),
        Command::Verify { .. } => commands::verify(cfg),
        Command::Report { dir } => commands::report(cfg, dir),
    }
}

fn fmt_opt(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Short human-readable summary of a report.
fn summarize(rep: &Report) -> String {
    let r = &rep.result;
    let mut lines = vec![];
    match rep.command.as_str() {
        "classify" => {
            lines.push(format!("status: {}", fmt_opt(&r["status"])));
            lines.push(format!("value: {} (± {})", fmt_opt(&r["value"]), fmt_opt(&r["error_bar"])));
            lines.push(format!("closed form: {}", fmt_opt(&r["closed_form"])));
            lines.push(format!("provenance: {}", fmt_opt(&r["provenance"])));
        }
        "moment" => {
            lines.push(format!("c({}, {}) = {} ± {}", r["r"], r["s"], r["value"], r["error_estimate"]));
        }
        "norm" => {
            let b = &r["bracket"];
            lines.push(format!("norm in [{}, {}] via {} (exact: {})", b["lower"], b["upper"], fmt_opt(&b["method"]), r["exact"]));
        }
        "estimate" => {
            lines.push(format!("classification: {} {}", fmt_opt(&r["classification"]["status"]), fmt_opt(&r["classification"]["value"])));
            for e in r["estimates"].as_array().into_iter().flatten() {
                lines.push(format!("n = {}: lower {} from {} (digest {})", e["n"], e["lower"], fmt_opt(&e["candidate"]), fmt_opt(&e["witness_digest"])));
            }
        }
        "witness" => match &r["probe"] {
            Value::Null => {
                let b = &r["norm"];
                lines.push(format!("{} n = {}: norm in [{}, {}] (exact: {})", fmt_opt(&r["kind"]), r["n"], b["lower"], b["upper"], r["exact"]));
            }
            probe => {
                for row in probe["rows"].as_array().into_iter().flatten() {
                    lines.push(format!("n = {}: ratio {}", row["n"], row["ratio"]));
                }
                lines.push(format!("fitted exponent {}", probe["fitted_exponent"]));
            }
        },
        "verify" => {
            for s in r["suites"].as_array().into_iter().flatten() {
                let verdict = if s["pass"].as_bool() == Some(true) { "PASS" } else { "FAIL" };
                lines.push(format!("{verdict} {} (min margin {})", fmt_opt(&s["suite"]), s["min_margin"]));
            }
        }
        "report" => {
            lines.push(format!(
                "{} reports, {} triples, {} checks",
                r["reports"].as_array().map_or(0, Vec::len),
                r["triples"].as_array().map_or(0, Vec::len),
                r["checks"].as_array().map_or(0, Vec::len)
            ));
        }
        _ => {}
    }
    lines.push(format!("overall: {}", if rep.pass { "pass" } else { "FAIL" }));
    lines.join("\n")
}

fn run(cli: Cli) -> Result<bool> {
    let started = Instant::now();
    let cfg = build_config(&cli.command)?;
    let cache = match (&cli.command, cli.io.no_cache) {
        (Command::Report { .. }, _) | (_, true) => None,
        _ => Cache::resolve(cli.io.cache_dir.as_deref()),
    };
    let key = Cache::key(&cfg)?;
    let cached = cache.as_ref().and_then(|c| c.get(&key));
    let cache_hit = cached.is_some();
    let json = match cached {
        Some(text) => text,
        None => {
            let outcome = execute(&cli.command, &cfg)?;
            let json = Report::new(&cfg, outcome.pass, outcome.result).to_json()?;
            if let Some(c) = &cache {
                // a read-only cache directory should not fail the run
                if let Err(e) = c.put(&key, &json) {
                    eprintln!("warning: cache write failed: {e:#}");
                }
            }
            json
        }
    };
    let report: Report = serde_json::from_str(&json).context("decoding report")?;

    if let Some(path) = &cli.io.out {
        write_report(path, &json, started.elapsed().as_millis(), cache_hit)?;
    }
    if let Some(path) = &cli.io.csv {
        let rows: Vec<CsvRow> = match &report.result["table"] {
            Value::Null => anyhow::bail!("`{}` has no table to write as CSV", report.command),
            t => serde_json::from_value(t.clone())?,
        };
        write_csv(path, &rows)?;
    }
    if let Command::Witness { operator_out: Some(path), .. } = &cli.command {
        let op = &report.result["operator"];
        anyhow::ensure!(!op.is_null(), "this witness kind has no single operator");
        output::write_atomic(path, (serde_json::to_string_pretty(op)? + "\n").as_bytes())?;
    }
    if cli.io.json {
        print!("{json}");
    } else {
        println!("{}", summarize(&report));
    }
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
