use serde::Serialize;
use serde_json::{json, Value};
use whitney_core::corpus::{self, CorpusFunction, SmoothnessTag};
use whitney_core::differences::{
    difference_field, modulus_mean_multi, modulus_sup_nested, total_modulus_mean_multi, total_modulus_sup_nested,
    MeanNormalization, ModulusRequest, TotalModulus,
};
use whitney_core::domain::{lp_quasinorm, sample_on_grid};
use whitney_core::polyapprox::{
    best_approx, best_constant, piecewise_constant_approx, taylor_polynomial, taylor_remainder_bound, DerivativeBundle,
    TensorPolynomial,
};
use whitney_core::verifier::{run_suite, Suite, SuiteReport, TolerancePolicy, VerifySettings};
use whitney_core::{AxisBox, Exponent, GridSpec, MultiIndex, StepVector};

use crate::config::{Resolved, RunConfig};
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

pub const COMPUTE_OPS: [&str; 5] = ["modulus-sup", "modulus-mean", "total-omega", "total-w", "difference"];
pub const APPROX_OPS: [&str; 4] = ["best", "taylor", "constant", "piecewise"];

/// Common wrapper of every report file.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub config: &'a Resolved,
    pub policy: &'a TolerancePolicy,
    #[serde(flatten)]
    pub body: T,
}

impl<'a, T: Serialize> Envelope<'a, T> {
    pub fn new(config: &'a Resolved, policy: &'a TolerancePolicy, body: T) -> Self {
        Envelope {
            schema_version: SCHEMA_VERSION,
            tool: "whitney",
            version: env!("CARGO_PKG_VERSION"),
            config,
            policy,
            body,
        }
    }
}

/// Inputs of a single computation after broadcasting to the function's dimension.
struct Problem {
    f: CorpusFunction,
    domain: AxisBox,
    grid: GridSpec,
    r: MultiIndex,
    p: Exponent,
    t: StepVector,
    h_samples: usize,
    seed: u64,
}

fn broadcast<T: Clone>(name: &str, v: &[T], d: usize) -> CliResult<Vec<T>> {
    match v.len() {
        1 => Ok(vec![v[0].clone(); d]),
        n if n == d => Ok(v.to_vec()),
        n => Err(CliError::Usage(format!("{name} has {n} entries, expected 1 or {d}"))),
    }
}

pub fn find_function(name: Option<&str>) -> CliResult<CorpusFunction> {
    let name = name.ok_or_else(|| CliError::Usage("missing --fn NAME".into()))?;
    corpus::find(name).ok_or_else(|| CliError::Usage(format!("unknown corpus function '{name}'; see `whitney corpus`")))
}

fn problem(cfg: &Resolved) -> CliResult<Problem> {
    let f = find_function(cfg.function.as_deref())?;
    let d = f.dim;
    let domain = match &cfg.bounds {
        Some(b) => AxisBox::from_pairs(b)?,
        None => AxisBox::unit(d),
    };
    if domain.dim() != d {
        return Err(CliError::Usage(format!("box has {} axes but {} is {d}-dimensional", domain.dim(), f.name)));
    }
    let grid = GridSpec::new(broadcast("grid", &cfg.grid, d)?)?;
    let r = MultiIndex(broadcast("r", cfg.r.as_deref().unwrap_or(&[1]), d)?);
    let t = match &cfg.t {
        Some(t) => StepVector(broadcast("t", t, d)?),
        None => domain.size(),
    };
    Ok(Problem {
        f,
        domain,
        grid,
        r,
        p: cfg.p.unwrap_or(Exponent::Finite(2.0)),
        t,
        h_samples: cfg.h_samples,
        seed: cfg.seed,
    })
}

fn request(pb: &Problem) -> CliResult<ModulusRequest> {
    Ok(ModulusRequest::new(
        pb.r.clone(),
        pb.t.clone(),
        pb.p,
        pb.domain.clone(),
        pb.h_samples,
        pb.grid.clone(),
    )?)
}

fn terms_json(t: &TotalModulus) -> Value {
    Value::Array(
        t.terms
            .iter()
            .map(|(e, v)| json!({ "subset": e.to_string(), "value": v }))
            .collect(),
    )
}

fn inputs_json(pb: &Problem) -> Value {
    json!({
        "function": pb.f.name,
        "r": pb.r,
        "p": pb.p,
        "t": pb.t,
        "domain": pb.domain,
        "grid": pb.grid.points(),
        "h_samples": pb.h_samples,
    })
}

pub fn compute(cfg: &Resolved) -> CliResult<Value> {
    let op = cfg
        .operation
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("compute needs an operation: {}", COMPUTE_OPS.join(", "))))?;
    let pb = problem(cfg)?;
    let f = |x: &[f64]| pb.f.eval(x);
    let ps = [pb.p];
    let result = match op {
        "modulus-sup" => {
            let est = modulus_sup_nested(&request(&pb)?, &f, &ps)?[0];
            json!({ "value": est.fine, "coarse_value": est.coarse, "h_gap": est.gap() })
        }
        "modulus-mean" => {
            let v = modulus_mean_multi(&request(&pb)?, &f, &ps, MeanNormalization::Average)?[0];
            json!({ "value": v, "normalization": MeanNormalization::Average })
        }
        "total-omega" => {
            let est = total_modulus_sup_nested(&request(&pb)?, &f, &ps)?.remove(0);
            json!({
                "terms": terms_json(&est.fine),
                "total": est.fine.total,
                "coarse_total": est.coarse.total,
                "h_gap": est.gap(),
            })
        }
        "total-w" => {
            let tm = total_modulus_mean_multi(&request(&pb)?, &f, &ps, MeanNormalization::Average)?.remove(0);
            json!({ "terms": terms_json(&tm), "total": tm.total, "normalization": MeanNormalization::Average })
        }
        "difference" => match difference_field(&f, &pb.r, &pb.t, &pb.domain, &pb.grid)? {
            Some(field) => json!({
                "h": pb.t,
                "shrunken_domain": field.domain(),
                "points": field.spec().points(),
                "max_abs": field.max_abs(),
                "norm": lp_quasinorm(&field, pb.p),
            }),
            None => json!({ "h": pb.t, "empty": true, "max_abs": 0.0, "norm": 0.0 }),
        },
        other => {
            return Err(CliError::Usage(format!(
                "unknown compute operation '{other}'; expected one of {}",
                COMPUTE_OPS.join(", ")
            )))
        }
    };
    Ok(json!({ "operation": op, "inputs": inputs_json(&pb), "result": result }))
}

fn monomial_coefficients(poly: &TensorPolynomial) -> Value {
    let mono = poly.to_monomial();
    Value::Array(
        mono.degrees
            .below()
            .iter()
            .zip(&mono.coeffs)
            .map(|(s, c)| json!({ "power": s, "value": c }))
            .collect(),
    )
}

pub fn approx(cfg: &Resolved) -> CliResult<Value> {
    let op = cfg
        .operation
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("approx needs an operation: {}", APPROX_OPS.join(", "))))?;
    let pb = problem(cfg)?;
    let f = |x: &[f64]| pb.f.eval(x);
    let g = sample_on_grid(&f, &pb.domain, &pb.grid)?;
    let result = match op {
        "best" => {
            let fit = best_approx(&g, &pb.r, pb.p, pb.seed)?;
            json!({
                "coefficients": monomial_coefficients(&fit.polynomial),
                "error": fit.error,
                "converged": fit.diagnostics.converged,
                "diagnostics": fit.diagnostics,
            })
        }
        "taylor" => {
            let oracle = pb
                .f
                .derivative_oracle()
                .ok_or_else(|| CliError::Usage(format!("{} has no derivatives available", pb.f.name)))?;
            let base = pb.domain.lower().to_vec();
            let bundle = DerivativeBundle::from_oracle(pb.r.clone(), base.clone(), oracle)?;
            let poly = taylor_polynomial(&bundle, &pb.r)?;
            let diff = g.zip_with(&poly.sample(&pb.domain, &pb.grid)?, |a, b| a - b)?;
            let bound = match pb.p {
                Exponent::Finite(v) if v < 1.0 => Value::Null,
                p => json!(taylor_remainder_bound(&bundle, &pb.r, p, &pb.domain, &pb.grid)?),
            };
            json!({
                "base": base,
                "coefficients": monomial_coefficients(&poly),
                "remainder": lp_quasinorm(&diff, pb.p),
                "remainder_bound": bound,
            })
        }
        "constant" => {
            let fit = best_constant(&g, pb.p);
            json!({ "beta": fit.beta, "point": fit.point, "error": fit.error, "scan_minimum": fit.scan_minimum })
        }
        "piecewise" => {
            let parts = broadcast("parts", cfg.parts.as_deref().unwrap_or(&[2]), pb.f.dim)?;
            let (pc, err) = piecewise_constant_approx(&g, &parts, pb.p)?;
            json!({ "parts": pc.parts, "betas": pc.betas, "cell_errors": pc.cell_errors, "error": err })
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown approx operation '{other}'; expected one of {}",
                APPROX_OPS.join(", ")
            )))
        }
    };
    Ok(json!({ "operation": op, "inputs": inputs_json(&pb), "result": result }))
}

pub fn verify_settings(cfg: &Resolved, file: &RunConfig) -> CliResult<VerifySettings> {
    let defaults = VerifySettings::default();
    let mut functions = Vec::new();
    if let Some(name) = &cfg.function {
        functions.push(find_function(Some(name))?.name);
    } else if let Some(tag) = &cfg.tag {
        let tag: SmoothnessTag = tag.parse().map_err(|e: String| CliError::Usage(e))?;
        functions = corpus::with_tag(tag).into_iter().map(|f| f.name).collect();
        if functions.is_empty() {
            return Err(CliError::Usage("no corpus entry carries that tag".into()));
        }
    }
    let exponents = match (cfg.p, &cfg.verify.exponents) {
        (Some(p), _) => vec![p],
        (None, Some(ps)) if !ps.is_empty() => ps.clone(),
        _ => defaults.exponents.clone(),
    };
    Ok(VerifySettings {
        grid: cfg.grid[0],
        h_samples: cfg.h_samples,
        seed: cfg.seed,
        jobs: cfg.jobs,
        exponents,
        marchaud_grid: cfg.verify.marchaud_grid.unwrap_or(defaults.marchaud_grid),
        marchaud_h_samples: cfg.verify.marchaud_h_samples.unwrap_or(defaults.marchaud_h_samples),
        functions,
        policy: file.tolerance.clone(),
    })
}

pub fn verify(cfg: &Resolved, settings: &VerifySettings) -> SuiteReport {
    run_suite(cfg.suite.unwrap_or(Suite::All), settings)
}

#[derive(Serialize)]
pub struct CorpusEntry {
    pub name: String,
    pub dim: usize,
    pub tag: SmoothnessTag,
    pub derivatives: bool,
    pub description: String,
}

/// Entries carrying `tag`; an unrecognized tag selects nothing.
pub fn corpus_listing(tag: Option<&str>) -> Vec<CorpusEntry> {
    let wanted: Option<Option<SmoothnessTag>> = tag.map(|t| t.parse().ok());
    corpus::shipped()
        .into_iter()
        .filter(|f| match wanted {
            None => true,
            Some(Some(t)) => f.tag == t,
            Some(None) => false,
        })
        .map(|f| CorpusEntry {
            derivatives: f.has_derivatives(),
            name: f.name,
            dim: f.dim,
            tag: f.tag,
            description: f.description,
        })
        .collect()
}
