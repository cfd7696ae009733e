//! One function per subcommand: config in, `(pass, result)` out.

use std::path::Path;

use anyhow::{bail, Context, Result};
use mzlab::classify::{moment, multilinear_k, KClassification, MOMENT_TOL};
use mzlab::estimate::estimate_kn;
use mzlab::multiop::MultilinearOperator;
use mzlab::normsolver::{operator_norm, Budget, NormMode};
use mzlab::stablelaw::{stable_moment, MomentMethod, StableLaw};
use mzlab::suites::{run_suite, Suite};
use mzlab::tensorspace::Exponent;
use mzlab::witnesses::{divergence_probe, ksz_witness, littlewood_witness, ProbeKind};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{parse_json, RunConfig};
use crate::output::{sha256_hex, CsvRow, Report};

/// Slack allowed between a certified lower bound and a known closed form.
pub const SOUNDNESS_TOL: f64 = 1e-6;

pub struct Outcome {
    pub pass: bool,
    pub result: Value,
}

fn ok(result: Value) -> Outcome {
    Outcome { pass: true, result }
}

fn triple_json(q: &[Exponent], p: Exponent, r: Exponent) -> Value {
    json!({ "q": q, "p": p, "r": r })
}

/// Value of a known closed form with a propagated quadrature error bar.
fn classification_json(k: &KClassification) -> Result<Value> {
    let value = k.numeric()?;
    let error_bar = match (&k.value, value) {
        (Some(form), Some(v)) if !form.is_one() => {
            let mut rel = 0.0;
            for m in &form.0 {
                rel += MOMENT_TOL / moment(m.r, m.num)? + MOMENT_TOL / moment(m.r, m.den)?;
            }
            Some(v * rel)
        }
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(json!({
        "status": k.status,
        "value": value,
        "closed_form": k.value.as_ref().map(|f| f.to_string()),
        "error_bar": error_bar,
        "provenance": k.provenance,
    }))
}

pub fn classify(cfg: &RunConfig) -> Result<Outcome> {
    let q = RunConfig::require(&cfg.q, "q")?;
    let p = RunConfig::require(&cfg.p, "p")?;
    let r = RunConfig::require(&cfg.r, "r")?;
    let k = multilinear_k(&q, p, r)?;
    let mut result = classification_json(&k)?;
    result["triple"] = triple_json(&q, p, r);
    Ok(ok(result))
}

pub fn moment_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let r = RunConfig::require(&cfg.r, "r")?.value();
    let s = RunConfig::require(&cfg.s, "s")?;
    let method = match cfg.method.as_deref().unwrap_or("quadrature") {
        "quadrature" => MomentMethod::Quadrature,
        "monte-carlo" | "monte_carlo" => MomentMethod::MonteCarlo { samples: cfg.samples.unwrap_or(100_000) },
        other => bail!("unknown moment method `{other}` (expected quadrature or monte-carlo)"),
    };
    let mv = stable_moment(StableLaw::new(r)?, s, method, cfg.tol.unwrap_or(1e-10), cfg.seed)?;
    Ok(ok(serde_json::to_value(mv)?))
}

fn ascent_budget(cfg: &RunConfig) -> Budget {
    let b = cfg.budget.unwrap_or_default();
    Budget { iterations: b.iterations, restarts: b.restarts }
}

pub fn norm(cfg: &RunConfig) -> Result<Outcome> {
    let raw = RunConfig::require(&cfg.operator, "operator")?;
    let t: MultilinearOperator = parse_json(&raw.to_string(), "operator")?;
    let q = RunConfig::require(&cfg.q, "q")?;
    let p = RunConfig::require(&cfg.p, "p")?;
    let mode = match cfg.mode.as_deref().unwrap_or("auto") {
        "auto" => NormMode::Auto,
        "bracket" => NormMode::Bracket,
        other => bail!("unknown norm mode `{other}` (expected auto or bracket)"),
    };
    let bracket = operator_norm(&t, &q, p, mode, ascent_budget(cfg), cfg.seed)?;
    Ok(ok(json!({ "shape": t.shape(), "exact": bracket.is_exact(), "bracket": bracket })))
}

#[derive(Serialize)]
struct EstimateRow {
    n: usize,
    lower: f64,
    lhs: f64,
    rhs_product: f64,
    norm_lower: f64,
    norm_upper: f64,
    candidate: String,
    candidates: Value,
    converged: bool,
    witness_digest: String,
    seed: u64,
    witness: Value,
}

pub fn estimate(cfg: &RunConfig) -> Result<Outcome> {
    let q = RunConfig::require(&cfg.q, "q")?;
    let p = RunConfig::require(&cfg.p, "p")?;
    let r = RunConfig::require(&cfg.r, "r")?;
    let ns = RunConfig::require(&cfg.n, "n")?;
    let dims = match &cfg.dims {
        Some(d) => d.clone(),
        None => std::iter::once(2).chain(q.iter().map(|_| 2)).collect(),
    };
    let budget = cfg.budget.unwrap_or_default();
    let k = multilinear_k(&q, p, r)?;
    let known = k.numeric()?;
    let mut rows = vec![];
    let mut table = vec![];
    let mut sound = true;
    for &n in &ns {
        let est = estimate_kn(&q, p, r, n, &dims, budget, cfg.seed)?;
        let witness = json!({ "operator": est.operator, "families": est.families });
        let witness_digest = sha256_hex(serde_json::to_string(&witness)?.as_bytes());
        if let Some(v) = known {
            sound &= est.lower <= v + SOUNDNESS_TOL;
        }
        table.push(CsvRow {
            n,
            lower_bound: est.lower,
            norm_upper: est.bracket.upper,
            lhs: est.lhs,
            rhs_product: est.rhs_product,
            seed: cfg.seed,
        });
        rows.push(EstimateRow {
            n,
            lower: est.lower,
            lhs: est.lhs,
            rhs_product: est.rhs_product,
            norm_lower: est.bracket.lower,
            norm_upper: est.bracket.upper,
            candidate: est.candidate.clone(),
            candidates: serde_json::to_value(&est.candidates)?,
            converged: est.converged,
            witness_digest,
            seed: cfg.seed,
            witness,
        });
    }
    Ok(Outcome {
        pass: sound,
        result: json!({
            "triple": triple_json(&q, p, r),
            "dims": dims,
            "classification": classification_json(&k)?,
            "sound": sound,
            "estimates": rows,
            "table": table,
        }),
    })
}

pub fn witness(cfg: &RunConfig) -> Result<Outcome> {
    let kind = RunConfig::require(&cfg.kind, "kind")?;
    let ns = RunConfig::require(&cfg.n, "n")?;
    let m = cfg.m.unwrap_or(2);
    let attempts = cfg.attempts.unwrap_or(20);
    match kind.as_str() {
        "littlewood" => {
            let [n] = ns[..] else { bail!("littlewood takes a single n") };
            let t = littlewood_witness(n)?;
            let q = [Exponent::Infinite; 2];
            let bracket = operator_norm(&t, &q, Exponent::Infinite, NormMode::Auto, ascent_budget(cfg), cfg.seed)?;
            Ok(ok(json!({ "kind": kind, "n": n, "exact": bracket.is_exact(), "norm": bracket, "operator": t })))
        }
        "ksz" => {
            let [n] = ns[..] else { bail!("ksz takes a single n") };
            let q = cfg.q.clone().unwrap_or_else(|| vec![Exponent::TWO; m]);
            let p = cfg.p.unwrap_or(Exponent::Infinite);
            let w = ksz_witness(m, n, &q, p, cfg.seed, attempts)?;
            Ok(ok(json!({
                "kind": kind, "n": n, "m": m, "attempt": w.attempt,
                "exact": w.bracket.is_exact(), "norm": w.bracket, "operator": w.operator,
            })))
        }
        "hadamard-probe" | "ksz-probe" => {
            let (probe, default_q) = if kind == "hadamard-probe" {
                (ProbeKind::Hadamard, vec![Exponent::Infinite; m])
            } else {
                (ProbeKind::Ksz { attempts }, vec![Exponent::TWO; m])
            };
            let q = cfg.q.clone().unwrap_or(default_q);
            let r = RunConfig::require(&cfg.r, "r")?;
            let rep = divergence_probe(probe, m, &ns, &q, r, cfg.seed)?;
            let table: Vec<CsvRow> = rep
                .rows
                .iter()
                .map(|row| CsvRow {
                    n: row.n,
                    lower_bound: row.ratio,
                    norm_upper: row.norm_upper,
                    lhs: row.lhs,
                    rhs_product: row.rhs_product,
                    seed: row.seed,
                })
                .collect();
            Ok(ok(json!({ "kind": kind, "q": q, "r": r, "probe": rep, "table": table })))
        }
        other => bail!("unknown witness kind `{other}` (littlewood, ksz, hadamard-probe, ksz-probe)"),
    }
}

pub fn verify(cfg: &RunConfig) -> Result<Outcome> {
    let name = cfg.suite.as_deref().unwrap_or("all");
    let suites: Vec<Suite> = if name == "all" { Suite::ALL.to_vec() } else { vec![name.parse()?] };
    let trials = cfg.trials.unwrap_or(1000);
    let mut reports = vec![];
    for s in suites {
        reports.push(run_suite(s, trials, cfg.seed)?);
    }
    let pass = reports.iter().all(|r| r.pass);
    let min_margin = reports.iter().map(|r| r.min_margin).fold(f64::INFINITY, f64::min);
    Ok(Outcome { pass, result: json!({ "min_margin": min_margin, "suites": reports }) })
}

/// Index of the summary entry for triple `t`, created from `class` if new.
fn triple_slot(triples: &mut Vec<(String, Value)>, t: &Value, class: &Value) -> usize {
    let key = serde_json::to_string(t).unwrap_or_default();
    if let Some(i) = triples.iter().position(|(k, _)| *k == key) {
        return i;
    }
    let mut v = json!({ "triple": t, "estimates": [] });
    for f in ["status", "value", "provenance"] {
        v[f] = class[f].clone();
    }
    triples.push((key, v));
    triples.len() - 1
}

/// Aggregates every report in `dir` (sidecars excluded), in file-name order.
pub fn report(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            name.ends_with(".json") && !name.ends_with(".meta.json") && !name.starts_with('.')
        })
        .collect();
    files.sort();
    let mut listing = vec![];
    let mut triples: Vec<(String, Value)> = vec![];
    let mut checks = vec![];
    let mut pass = true;
    for path in files {
        let text = std::fs::read_to_string(&path)?;
        let Ok(rep) = serde_json::from_str::<Report>(&text) else { continue };
        if rep.command == cfg.command {
            continue;
        }
        let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        listing.push(json!({ "file": file, "command": rep.command, "pass": rep.pass }));
        pass &= rep.pass;
        match rep.command.as_str() {
            "classify" => {
                triple_slot(&mut triples, &rep.result["triple"], &rep.result);
            }
            "estimate" => {
                let i = triple_slot(&mut triples, &rep.result["triple"], &rep.result["classification"]);
                if let Some(ests) = rep.result["estimates"].as_array() {
                    for e in ests {
                        let summary = json!({ "n": e["n"], "lower": e["lower"], "witness_digest": e["witness_digest"], "seed": e["seed"] });
                        triples[i].1["estimates"].as_array_mut().expect("array").push(summary);
                    }
                }
            }
            "verify" => {
                for s in rep.result["suites"].as_array().into_iter().flatten() {
                    for c in s["checks"].as_array().into_iter().flatten() {
                        checks.push(json!({ "suite": s["suite"], "name": c["name"], "pass": c["pass"], "margin": c["margin"] }));
                    }
                }
            }
            _ => {}
        }
    }
    let triples: Vec<Value> = triples.into_iter().map(|(_, v)| v).collect();
    Ok(Outcome { pass, result: json!({ "reports": listing, "triples": triples, "checks": checks }) })
}
