//! Numerical checks of the Whitney, Marchaud, equivalence, subdivision, Taylor
//! and constant-approximation inequalities on the shipped corpus.
//!
//! Checks come in two kinds. Hard checks have an explicit constant and pass or
//! fail. Empirical checks record `left / right` as an estimate of an unknown
//! constant and test its stability under refinement.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, CorpusFunction};
use crate::differences::{
    lower_whitney_constant, modulus_mean_multi, sup_nodes, modulus_sup_nested, refinement_gap, total_modulus_mean_multi,
    total_modulus_sup_nested, MeanNormalization, ModulusRequest, TotalModulus, TotalSupEstimate,
};
use crate::domain::{
    lp_power, lp_quasinorm, nonempty_axis_subsets, sample_on_grid, AxisBox, AxisSubset, Exponent, GridFunction,
    GridSpec, MultiIndex, StepVector,
};
use crate::error::{Error, Result};
use crate::identities::{annihilation_residual, halving_identity, reproduction_residual, unit_decomposition};
use crate::polyapprox::{best_approx, best_constant, taylor_polynomial, taylor_remainder_bound, DerivativeBundle, TensorPolynomial};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Hard,
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    /// Both sides below the vacuity threshold; no evidence either way.
    Vacuous,
    Fail,
    /// Right side vanishes while the left does not.
    Violation,
    /// Empirical constant moved more than allowed under refinement.
    Unstable,
    NotApplicable,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Vacuous => "vacuous",
            Status::Fail => "fail",
            Status::Violation => "violation",
            Status::Unstable => "unstable",
            Status::NotApplicable => "not-applicable",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tolerances applied uniformly by every check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TolerancePolicy {
    /// Both sides below `vacuous_rel * max|f|` make a check vacuous.
    pub vacuous_rel: f64,
    /// Relative slack for comparing quadratures on different sample grids.
    pub quadrature_rel: f64,
    /// Slack in `W_r <= Ω_r`.
    pub mean_vs_sup_rel: f64,
    /// Slack in the constant-approximation bound.
    pub constant_bound_rel: f64,
    /// Allowed relative change of the Whitney and Ω/W ratios under one grid doubling.
    pub stability_rel: f64,
    /// Allowed factor between consecutive Taylor or Marchaud constants.
    pub stability_factor: f64,
    /// Scale moduli on the right side by `1 + g`, `g` the coarse-to-fine step-grid gap.
    pub inflate_by_h_gap: bool,
    /// Exactness threshold for the floating-point identity checks.
    pub identity_rel: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy {
            vacuous_rel: 1e-9,
            quadrature_rel: 1e-2,
            mean_vs_sup_rel: 1e-3,
            constant_bound_rel: 5e-2,
            stability_rel: 0.10,
            stability_factor: 4.0,
            inflate_by_h_gap: true,
            identity_rel: 1e-9,
        }
    }
}

impl TolerancePolicy {
    fn gap_factor(&self, gap: f64) -> f64 {
        if self.inflate_by_h_gap {
            1.0 + gap
        } else {
            1.0
        }
    }
}

/// Parameters of one check; unused fields are omitted from reports.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<MultiIndex>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<MultiIndex>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Exponent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<AxisBox>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_samples: Option<usize>,
    /// 1-based axis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parts: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_cells: Option<usize>,
}

impl ReportParams {
    fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(r) = &self.r {
            parts.push(format!("r={r}"));
        }
        if let Some(k) = &self.k {
            parts.push(format!("k={k}"));
        }
        if let Some(i) = self.axis {
            parts.push(format!("axis={i}"));
        }
        if let Some(e) = &self.subset {
            parts.push(format!("e={e}"));
        }
        if let Some(p) = self.p {
            parts.push(format!("p={p}"));
        }
        if let Some(t) = &self.t {
            let ts: Vec<String> = t.iter().map(|v| format!("{v}")).collect();
            parts.push(format!("t=({})", ts.join(",")));
        }
        if let Some(d) = &self.domain {
            let ds: Vec<String> = d.size().0.iter().map(|v| format!("{v}")).collect();
            parts.push(format!("delta=({})", ds.join(",")));
        }
        parts.join(";")
    }
}

/// One refinement level of an empirical constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub label: String,
    pub left: f64,
    pub right: f64,
    pub constant: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub id: String,
    pub check: String,
    pub function: String,
    pub kind: CheckKind,
    pub params: ReportParams,
    pub left: f64,
    /// Right side without any unknown constant.
    pub right: f64,
    /// Explicit constant multiplying `right` in a hard check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_constant: Option<f64>,
    /// Tolerance factor applied to the right side of a hard check.
    pub inflation: f64,
    /// `left / right`; absent when vacuous or when `right` vanishes.
    pub empirical_constant: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub refinement: Vec<RefinementLevel>,
    pub status: Status,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub note: String,
}

impl InequalityReport {
    fn blank(check: &str, function: &str, kind: CheckKind, params: ReportParams) -> Self {
        let label = params.label();
        let id = if label.is_empty() {
            format!("{check}/{function}")
        } else {
            format!("{check}/{function}/{label}")
        };
        InequalityReport {
            id,
            check: check.to_string(),
            function: function.to_string(),
            kind,
            params,
            left: 0.0,
            right: 0.0,
            bound_constant: None,
            inflation: 1.0,
            empirical_constant: None,
            refinement: Vec::new(),
            status: Status::NotApplicable,
            note: String::new(),
        }
    }

    /// `left <= constant * right * inflation`, vacuous below `threshold`.
    #[allow(clippy::too_many_arguments)]
    pub fn hard(
        check: &str,
        function: &str,
        params: ReportParams,
        left: f64,
        right: f64,
        constant: f64,
        inflation: f64,
        threshold: f64,
    ) -> Self {
        let mut rep = Self::blank(check, function, CheckKind::Hard, params);
        rep.left = left;
        rep.right = right;
        rep.bound_constant = Some(constant);
        rep.inflation = inflation;
        rep.empirical_constant = ratio(left, right, threshold);
        rep.status = if !(left.is_finite() && right.is_finite()) {
            Status::Fail
        } else if left <= threshold && constant * right <= threshold {
            Status::Vacuous
        } else if constant * right <= threshold {
            Status::Violation
        } else if left <= constant * right * inflation {
            Status::Pass
        } else {
            Status::Fail
        };
        rep
    }

    /// Records `left / right` as an empirical constant.
    pub fn empirical(check: &str, function: &str, params: ReportParams, left: f64, right: f64, threshold: f64) -> Self {
        let mut rep = Self::blank(check, function, CheckKind::Empirical, params);
        rep.left = left;
        rep.right = right;
        rep.empirical_constant = ratio(left, right, threshold);
        rep.status = empirical_status(left, right, threshold);
        rep
    }

    fn not_applicable(check: &str, function: &str, kind: CheckKind, params: ReportParams, note: &str) -> Self {
        let mut rep = Self::blank(check, function, kind, params);
        rep.note = note.to_string();
        rep
    }

    fn failed(check: &str, function: &str, kind: CheckKind, params: ReportParams, err: &Error) -> Self {
        let mut rep = Self::blank(check, function, kind, params);
        rep.status = Status::Fail;
        rep.note = err.to_string();
        rep
    }

    /// Marks the report unstable if consecutive level constants differ by more than `max_rel`.
    fn require_relative_stability(&mut self, max_rel: f64) {
        if self.status != Status::Pass {
            return;
        }
        for w in self.refinement.windows(2) {
            if let (Some(a), Some(b)) = (w[0].constant, w[1].constant) {
                if (b - a).abs() > max_rel * a.abs() {
                    self.status = Status::Unstable;
                    self.note = format!("constant moved from {a} to {b} ({} -> {})", w[0].label, w[1].label);
                }
            }
        }
    }

    /// Marks the report unstable if consecutive level constants differ by more than a factor.
    fn require_factor_stability(&mut self, factor: f64) {
        if self.status != Status::Pass {
            return;
        }
        for w in self.refinement.windows(2) {
            if let (Some(a), Some(b)) = (w[0].constant, w[1].constant) {
                if a > 0.0 && b > 0.0 && (b / a > factor || a / b > factor) {
                    self.status = Status::Unstable;
                    self.note = format!("constant moved from {a} to {b} ({} -> {})", w[0].label, w[1].label);
                }
            }
        }
    }

    pub fn is_hard_failure(&self) -> bool {
        self.kind == CheckKind::Hard && matches!(self.status, Status::Fail | Status::Violation)
    }
}

fn ratio(left: f64, right: f64, threshold: f64) -> Option<f64> {
    if right > threshold && left.is_finite() && right.is_finite() {
        Some(left / right)
    } else {
        None
    }
}

fn empirical_status(left: f64, right: f64, threshold: f64) -> Status {
    if !(left.is_finite() && right.is_finite()) {
        Status::Fail
    } else if left <= threshold && right <= threshold {
        Status::Vacuous
    } else if right <= threshold {
        Status::Violation
    } else {
        Status::Pass
    }
}

fn level(label: String, left: f64, right: f64, threshold: f64) -> RefinementLevel {
    RefinementLevel {
        label,
        left,
        right,
        constant: ratio(left, right, threshold),
    }
}

/// Resolution and solver settings shared by all suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifySettings {
    /// Sample points per axis on the full box.
    pub grid: usize,
    pub h_samples: usize,
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
    pub exponents: Vec<Exponent>,
    /// Coarser resolution for the many moduli inside the Marchaud integral (d >= 2).
    pub marchaud_grid: usize,
    pub marchaud_h_samples: usize,
    /// Restrict to these corpus entries; all when empty.
    pub functions: Vec<String>,
    pub policy: TolerancePolicy,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            grid: 64,
            h_samples: 17,
            seed: 0,
            jobs: 1,
            exponents: default_exponents(),
            marchaud_grid: 32,
            marchaud_h_samples: 9,
            functions: Vec::new(),
            policy: TolerancePolicy::default(),
        }
    }
}

pub fn default_exponents() -> Vec<Exponent> {
    vec![
        Exponent::Finite(0.5),
        Exponent::Finite(1.0),
        Exponent::Finite(2.0),
        Exponent::Infinity,
    ]
}

fn grid_of(d: usize, n: usize) -> GridSpec {
    GridSpec::uniform(d, n)
}

fn sample(f: &CorpusFunction, q: &AxisBox, n: usize) -> Result<GridFunction> {
    sample_on_grid(&|x: &[f64]| f.eval(x), q, &grid_of(f.dim, n))
}

fn threshold(policy: &TolerancePolicy, g: &GridFunction) -> f64 {
    policy.vacuous_rel * g.max_abs().max(f64::MIN_POSITIVE)
}

/// Memoized moduli of one function for a fixed list of exponents.
struct ModuliCache<'a> {
    f: &'a CorpusFunction,
    ps: Vec<Exponent>,
    sup: HashMap<String, Vec<TotalSupEstimate>>,
    mean: HashMap<String, Vec<TotalModulus>>,
}

impl<'a> ModuliCache<'a> {
    fn new(f: &'a CorpusFunction, ps: &[Exponent]) -> Self {
        ModuliCache {
            f,
            ps: ps.to_vec(),
            sup: HashMap::new(),
            mean: HashMap::new(),
        }
    }

    fn key(req: &ModulusRequest) -> String {
        format!("{:?}|{:?}|{:?}|{:?}|{}", req.order, req.t, req.domain, req.grid, req.h_samples)
    }

    fn index(&self, p: Exponent) -> usize {
        self.ps.iter().position(|q| *q == p).expect("exponent belongs to the cached set")
    }

    fn total_sup(&mut self, req: &ModulusRequest, p: Exponent) -> Result<TotalSupEstimate> {
        let key = Self::key(req);
        if !self.sup.contains_key(&key) {
            let f = self.f;
            let v = total_modulus_sup_nested(req, &|x: &[f64]| f.eval(x), &self.ps)?;
            self.sup.insert(key.clone(), v);
        }
        Ok(self.sup[&key][self.index(p)].clone())
    }

    fn total_mean(&mut self, req: &ModulusRequest, p: Exponent) -> Result<TotalModulus> {
        let key = Self::key(req);
        if !self.mean.contains_key(&key) {
            let f = self.f;
            let v = total_modulus_mean_multi(req, &|x: &[f64]| f.eval(x), &self.ps, MeanNormalization::Average)?;
            self.mean.insert(key.clone(), v);
        }
        Ok(self.mean[&key][self.index(p)].clone())
    }
}

fn modulus_request(order: &MultiIndex, t: StepVector, q: &AxisBox, n: usize, hs: usize) -> Result<ModulusRequest> {
    ModulusRequest::new(
        order.clone(),
        t,
        Exponent::Finite(1.0),
        q.clone(),
        hs,
        grid_of(q.dim(), n),
    )
}

/// Whether the sup step grid has a step `h` with `r_i |h_i| < δ_i` on every active axis.
///
/// Without one every shrunken box is empty and the sup modulus is identically zero.
pub fn step_grid_admissible(r: &MultiIndex, t: &StepVector, q: &AxisBox, h_samples: usize) -> bool {
    let delta = q.size();
    (0..q.dim()).filter(|&i| r.0[i] > 0).all(|i| {
        sup_nodes(t.0[i], h_samples)
            .iter()
            .any(|h| r.0[i] as f64 * h.abs() < delta.0[i] * (1.0 - 1e-12))
    })
}

fn inadmissible(check: &str, function: &str, kind: CheckKind, params: ReportParams) -> InequalityReport {
    InequalityReport::not_applicable(
        check,
        function,
        kind,
        params,
        "no step on the sup grid fits inside the box; raise h_samples",
    )
}

/// Lower Whitney bound (hard) and the ratio `E_r / Ω_r` (empirical) for each exponent.
pub fn whitney_reports(
    f: &CorpusFunction,
    r: &MultiIndex,
    q: &AxisBox,
    s: &VerifySettings,
) -> Result<Vec<InequalityReport>> {
    let mut cache = ModuliCache::new(f, &s.exponents);
    whitney_with(&mut cache, r, q, s)
}

fn whitney_with(cache: &mut ModuliCache, r: &MultiIndex, q: &AxisBox, s: &VerifySettings) -> Result<Vec<InequalityReport>> {
    let f = cache.f;
    let pol = &s.policy;
    let levels = [s.grid, 2 * s.grid];
    let mut out = Vec::new();
    let mut samples = Vec::new();
    for &n in &levels {
        samples.push(sample(f, q, n)?);
    }
    let thr = threshold(pol, &samples[0]);
    for &p in &s.exponents {
        let params = ReportParams {
            r: Some(r.clone()),
            p: Some(p),
            t: Some(q.size().0),
            domain: Some(q.clone()),
            grid: Some(vec![s.grid; q.dim()]),
            h_samples: Some(s.h_samples),
            ..Default::default()
        };
        if !step_grid_admissible(r, &q.size(), q, s.h_samples) {
            out.push(inadmissible("whitney-lower", &f.name, CheckKind::Hard, params.clone()));
            out.push(inadmissible("whitney-upper-ratio", &f.name, CheckKind::Empirical, params));
            continue;
        }
        let mut es = Vec::new();
        let mut omegas = Vec::new();
        for (li, &n) in levels.iter().enumerate() {
            es.push(best_approx(&samples[li], r, p, s.seed)?);
            omegas.push(cache.total_sup(&modulus_request(r, q.size(), q, n, s.h_samples)?, p)?);
        }
        let e0 = es[0].error;
        let omega0 = omegas[0].fine.total;

        // Ω_r(f - φ*) = Ω_r(f) <= C' ||f - φ*|| = C' E_r
        let mut a = InequalityReport::hard(
            "whitney-lower",
            &f.name,
            params.clone(),
            omega0,
            e0,
            lower_whitney_constant(r, p),
            1.0 + pol.quadrature_rel,
            thr,
        );
        if !es[0].diagnostics.converged {
            a.note = "best-approximation solver did not converge; value is an upper bound".into();
        }
        out.push(a);

        let mut b = InequalityReport::empirical("whitney-upper-ratio", &f.name, params, e0, omega0, thr);
        b.refinement = levels
            .iter()
            .enumerate()
            .map(|(li, n)| level(format!("n={n}"), es[li].error, omegas[li].fine.total, thr))
            .collect();
        b.note = format!(
            "solver={:?} starts={} spread={:.3e}",
            es[0].diagnostics.solver, es[0].diagnostics.starts, es[0].diagnostics.spread
        );
        b.require_relative_stability(pol.stability_rel);
        out.push(b);
    }
    Ok(out)
}

/// Cells of the geometric grid on `[a, b]`: ratio at most `max_ratio`, at least `min_cells` cells.
pub fn geometric_cells(a: f64, b: f64, max_ratio: f64, min_cells: usize) -> Vec<(f64, f64)> {
    let needed = ((b / a).ln() / max_ratio.ln()).ceil() as usize;
    let cells = needed.max(min_cells);
    let q = (b / a).powf(1.0 / cells as f64);
    (0..cells)
        .map(|j| {
            let lo = a * q.powi(j as i32);
            let hi = if j + 1 == cells { b } else { a * q.powi(j as i32 + 1) };
            (lo, hi)
        })
        .collect()
}

/// Composite midpoint rule on a list of cells.
pub fn midpoint_on_cells(cells: &[(f64, f64)], mut g: impl FnMut(f64) -> f64) -> f64 {
    cells.iter().map(|&(lo, hi)| g(0.5 * (lo + hi)) * (hi - lo)).sum()
}

const MARCHAUD_RATIO: f64 = 1.189_207_115_002_721; // 2^{1/4}
const MARCHAUD_MIN_CELLS: usize = 24;

/// Marchaud inequality: `ω_k(f, t)` against the integral of `ω_r` over `[t_i, δ_i]`.
///
/// `k` agrees with `r` off axis `axis` and `1 <= k_i < r_i`. For `p >= 1` the
/// bracket is `t_i^{k_i} [∫ ω_r(u) u^{-k_i-1} du + ||f|| δ_i^{-k_i}]`; for `p < 1`
/// it is the `p`-th root of `t_i^{p k_i} [∫ ω_r^p(u) u^{-k_i p-1} du + ||f||^p δ_i^{-p k_i}]`.
/// The constant is recorded for the u-grid and its doubling.
#[allow(clippy::too_many_arguments)]
pub fn marchaud_reports(
    f: &CorpusFunction,
    k: &MultiIndex,
    r: &MultiIndex,
    axis: usize,
    t: &StepVector,
    q: &AxisBox,
    n: usize,
    hs: usize,
    s: &VerifySettings,
) -> Result<Vec<InequalityReport>> {
    let d = q.dim();
    if k.dim() != d || r.dim() != d || t.dim() != d || axis >= d {
        return Err(Error::DimensionMismatch { expected: d, got: k.dim() });
    }
    for j in 0..d {
        let ok = if j == axis {
            k.0[j] >= 1 && k.0[j] < r.0[j]
        } else {
            k.0[j] == r.0[j]
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= k_i < r_i on axis {} and k_j = r_j elsewhere, got k = {k}, r = {r}",
                axis + 1
            )));
        }
    }
    let delta = q.size().0[axis];
    let ti = t.0[axis];
    if !(ti > 0.0 && ti < delta) {
        return Err(Error::InvalidParameter(format!("need 0 < t_i < δ_i, got t_i = {ti}")));
    }
    let func = |x: &[f64]| f.eval(x);
    let pol = &s.policy;
    let g = sample(f, q, n)?;
    let thr = threshold(pol, &g);
    let ps = &s.exponents;
    let left = modulus_sup_nested(&modulus_request(k, t.clone(), q, n, hs)?, &func, ps)?;

    let base = geometric_cells(ti, delta, MARCHAUD_RATIO, MARCHAUD_MIN_CELLS);
    let fine = geometric_cells(ti, delta, MARCHAUD_RATIO.sqrt(), 2 * base.len());
    let mut brackets: Vec<Vec<f64>> = Vec::new();
    let mut max_gap = vec![0.0f64; ps.len()];
    let ki = k.0[axis] as f64;
    for cells in [&base, &fine] {
        let mut omega_at: Vec<Vec<f64>> = Vec::with_capacity(cells.len());
        for &(lo, hi) in cells.iter() {
            let u = 0.5 * (lo + hi);
            let est = modulus_sup_nested(&modulus_request(r, t.with(axis, u), q, n, hs)?, &func, ps)?;
            for (m, e) in max_gap.iter_mut().zip(&est) {
                *m = m.max(e.gap());
            }
            omega_at.push(est.iter().map(|e| e.fine).collect());
        }
        let mut per_p = Vec::with_capacity(ps.len());
        for (pi, &p) in ps.iter().enumerate() {
            let norm = lp_quasinorm(&g, p);
            let mut idx = 0;
            let value = match p {
                Exponent::Finite(pv) if pv < 1.0 => {
                    let integral = midpoint_on_cells(cells, |u| {
                        let v = omega_at[idx][pi].powf(pv) / u.powf(ki * pv + 1.0);
                        idx += 1;
                        v
                    });
                    (ti.powf(pv * ki) * (integral + norm.powf(pv) / delta.powf(pv * ki))).powf(1.0 / pv)
                }
                _ => {
                    let integral = midpoint_on_cells(cells, |u| {
                        let v = omega_at[idx][pi] / u.powf(ki + 1.0);
                        idx += 1;
                        v
                    });
                    ti.powf(ki) * (integral + norm / delta.powf(ki))
                }
            };
            per_p.push(value);
        }
        brackets.push(per_p);
    }
    let mut out = Vec::new();
    for (pi, &p) in ps.iter().enumerate() {
        let params = ReportParams {
            r: Some(r.clone()),
            k: Some(k.clone()),
            p: Some(p),
            t: Some(t.0.clone()),
            domain: Some(q.clone()),
            grid: Some(vec![n; d]),
            h_samples: Some(hs),
            axis: Some(axis + 1),
            u_cells: Some(base.len()),
            ..Default::default()
        };
        let right = brackets[0][pi] * pol.gap_factor(max_gap[pi]);
        let mut rep = InequalityReport::empirical("marchaud", &f.name, params, left[pi].fine, right, thr);
        rep.refinement = vec![
            level(format!("u_cells={}", base.len()), left[pi].fine, brackets[0][pi], thr),
            level(format!("u_cells={}", fine.len()), left[pi].fine, brackets[1][pi], thr),
        ];
        rep.require_factor_stability(pol.stability_factor);
        out.push(rep);
    }
    Ok(out)
}

/// `W_r <= Ω_r` (hard) and `Ω_r / W_r` (empirical) for each exponent.
pub fn equivalence_reports(
    f: &CorpusFunction,
    r: &MultiIndex,
    t: &StepVector,
    q: &AxisBox,
    s: &VerifySettings,
) -> Result<Vec<InequalityReport>> {
    let mut cache = ModuliCache::new(f, &s.exponents);
    equivalence_with(&mut cache, r, t, q, s, true)
}

fn equivalence_with(
    cache: &mut ModuliCache,
    r: &MultiIndex,
    t: &StepVector,
    q: &AxisBox,
    s: &VerifySettings,
    refine: bool,
) -> Result<Vec<InequalityReport>> {
    let f = cache.f;
    let pol = &s.policy;
    let g = sample(f, q, s.grid)?;
    let thr = threshold(pol, &g);
    let levels: Vec<usize> = if refine { vec![s.grid, 2 * s.grid] } else { vec![s.grid] };
    let mut out = Vec::new();
    for &p in &s.exponents.clone() {
        let params = ReportParams {
            r: Some(r.clone()),
            p: Some(p),
            t: Some(t.0.clone()),
            domain: Some(q.clone()),
            grid: Some(vec![s.grid; q.dim()]),
            h_samples: Some(s.h_samples),
            ..Default::default()
        };
        if !step_grid_admissible(r, t, q, s.h_samples) {
            out.push(inadmissible("mean-below-sup", &f.name, CheckKind::Hard, params.clone()));
            out.push(inadmissible("sup-over-mean-ratio", &f.name, CheckKind::Empirical, params));
            continue;
        }
        let mut omegas = Vec::new();
        let mut ws = Vec::new();
        for &n in &levels {
            let req = modulus_request(r, t.clone(), q, n, s.h_samples)?;
            omegas.push(cache.total_sup(&req, p)?);
            ws.push(cache.total_mean(&req, p)?.total);
        }
        let omega = &omegas[0];
        let inflation = (1.0 + pol.mean_vs_sup_rel) * pol.gap_factor(omega.gap());
        out.push(InequalityReport::hard(
            "mean-below-sup",
            &f.name,
            params.clone(),
            ws[0],
            omega.fine.total,
            1.0,
            inflation,
            thr,
        ));
        let mut b = InequalityReport::empirical("sup-over-mean-ratio", &f.name, params, omega.fine.total, ws[0], thr);
        b.refinement = levels
            .iter()
            .enumerate()
            .map(|(li, n)| level(format!("n={n}"), omegas[li].fine.total, ws[li], thr))
            .collect();
        b.require_relative_stability(pol.stability_rel);
        out.push(b);
    }
    Ok(out)
}

/// Subdivision: `Σ_j w_{r(e)}(f,t)^p_{I_j} <= w_{r(e)}(f,t)^p_I` per subset `e` (hard),
/// plus `Σ_j W_r^p_{I_j} / W_r^p_I` (empirical).
pub fn superadditivity_reports(
    f: &CorpusFunction,
    r: &MultiIndex,
    t: &StepVector,
    q: &AxisBox,
    m: usize,
    s: &VerifySettings,
) -> Result<Vec<InequalityReport>> {
    if m < 2 {
        return Err(Error::InvalidParameter("need at least 2 parts per axis".into()));
    }
    if t.0.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidParameter("superadditivity needs t_i > 0".into()));
    }
    let d = q.dim();
    let pol = &s.policy;
    let func = |x: &[f64]| f.eval(x);
    let g = sample(f, q, s.grid)?;
    let thr = threshold(pol, &g);
    let ps: Vec<Exponent> = s.exponents.iter().copied().filter(|p| !p.is_infinite()).collect();
    let parts = vec![m; d];
    let children = q.subdivide(&parts);
    let parent_grid = grid_of(d, s.grid);

    let mut parent_terms: Vec<Vec<f64>> = Vec::new();
    let mut child_terms: Vec<Vec<f64>> = Vec::new();
    let subsets = nonempty_axis_subsets(d);
    for e in &subsets {
        let order = r.restrict(e);
        let req = ModulusRequest::new(order.clone(), t.clone(), Exponent::Finite(1.0), q.clone(), s.h_samples, parent_grid.clone())?;
        parent_terms.push(modulus_mean_multi(&req, &func, &ps, MeanNormalization::Average)?);
        let mut sums = vec![0.0; ps.len()];
        for c in &children {
            let creq = req.with_domain(c.clone(), parent_grid.density_on(q, c));
            let w = modulus_mean_multi(&creq, &func, &ps, MeanNormalization::Average)?;
            for (k, &p) in ps.iter().enumerate() {
                sums[k] += w[k].powf(p.value());
            }
        }
        child_terms.push(sums);
    }

    let mut out = Vec::new();
    for (k, &p) in ps.iter().enumerate() {
        let pv = p.value();
        let thr_p = thr.powf(pv);
        for (ei, e) in subsets.iter().enumerate() {
            let params = ReportParams {
                r: Some(r.clone()),
                p: Some(p),
                t: Some(t.0.clone()),
                domain: Some(q.clone()),
                grid: Some(vec![s.grid; d]),
                h_samples: Some(s.h_samples),
                subset: Some(e.to_string()),
                parts: Some(parts.clone()),
                ..Default::default()
            };
            out.push(InequalityReport::hard(
                "subdivision-term",
                &f.name,
                params,
                child_terms[ei][k],
                parent_terms[ei][k].powf(pv),
                1.0,
                1.0 + pol.quadrature_rel,
                thr_p,
            ));
        }
        let params = ReportParams {
            r: Some(r.clone()),
            p: Some(p),
            t: Some(t.0.clone()),
            domain: Some(q.clone()),
            grid: Some(vec![s.grid; d]),
            h_samples: Some(s.h_samples),
            parts: Some(parts.clone()),
            ..Default::default()
        };
        // Σ_j W^p_{I_j} needs the per-child totals, not the per-subset sums
        let mut left = 0.0;
        for c in &children {
            let mut total = 0.0;
            for e in &subsets {
                let req = ModulusRequest::new(r.restrict(e), t.clone(), p, c.clone(), s.h_samples, parent_grid.density_on(q, c))?;
                total += modulus_mean_multi(&req, &func, &[p], MeanNormalization::Average)?[0];
            }
            left += total.powf(pv);
        }
        let right: f64 = parent_terms.iter().map(|v| v[k]).sum::<f64>().powf(pv);
        out.push(InequalityReport::empirical("subdivision-total", &f.name, params, left, right, thr_p));
    }
    Ok(out)
}

/// Taylor remainder along the ladder `Q_δ = a + [0, δ]^d`, expanded at the corner `a`.
pub fn taylor_reports(
    f: &CorpusFunction,
    r: &MultiIndex,
    corner: &[f64],
    deltas: &[f64],
    s: &VerifySettings,
) -> Result<Vec<InequalityReport>> {
    let d = f.dim;
    let pol = &s.policy;
    let mut out = Vec::new();
    let Some(oracle) = f.derivative_oracle() else {
        for &p in &s.exponents {
            let params = ReportParams {
                r: Some(r.clone()),
                p: Some(p),
                ..Default::default()
            };
            out.push(InequalityReport::not_applicable(
                "taylor",
                &f.name,
                CheckKind::Empirical,
                params,
                "no mixed derivatives available",
            ));
        }
        return Ok(out);
    };
    let bundle = DerivativeBundle::from_oracle(r.clone(), corner.to_vec(), oracle)?;
    let poly: TensorPolynomial = taylor_polynomial(&bundle, r)?;
    for &p in &s.exponents {
        if let Exponent::Finite(pv) = p {
            if pv < 1.0 {
                let params = ReportParams {
                    r: Some(r.clone()),
                    p: Some(p),
                    ..Default::default()
                };
                out.push(InequalityReport::not_applicable(
                    "taylor",
                    &f.name,
                    CheckKind::Empirical,
                    params,
                    "remainder bound is stated for p >= 1",
                ));
                continue;
            }
        }
        let mut levels = Vec::new();
        let mut reports = Vec::new();
        for &delta in deltas {
            let q = AxisBox::new(corner.to_vec(), corner.iter().map(|a| a + delta).collect())?;
            let grid = grid_of(d, s.grid);
            let fs = sample(f, &q, s.grid)?;
            let diff = fs.zip_with(&poly.sample(&q, &grid)?, |a, b| a - b)?;
            let left = lp_quasinorm(&diff, p);
            let right = taylor_remainder_bound(&bundle, r, p, &q, &grid)?;
            let thr = threshold(pol, &fs);
            let params = ReportParams {
                r: Some(r.clone()),
                p: Some(p),
                domain: Some(q.clone()),
                grid: Some(vec![s.grid; d]),
                ..Default::default()
            };
            let rep = InequalityReport::empirical("taylor", &f.name, params, left, right, thr);
            levels.push(level(format!("delta={delta}"), left, right, thr));
            reports.push(rep);
        }
        for (i, mut rep) in reports.into_iter().enumerate() {
            rep.refinement = levels[..=i].to_vec();
            rep.require_factor_stability(pol.stability_factor);
            out.push(rep);
        }
    }
    Ok(out)
}

/// Constant approximation on a 2-d box: `∫_Q |f - β|^p <= 2 [ω_(1,0)(f,δ)^p + ω_(0,1)(f,δ)^p]`.
///
/// Hard for `p <= 1`; for `p > 1` only the ratio is recorded. For `p = inf` the
/// right side is `ω_(1,0) + ω_(0,1)`.
pub fn constant_bound_reports(f: &CorpusFunction, q: &AxisBox, s: &VerifySettings) -> Result<Vec<InequalityReport>> {
    if q.dim() != 2 {
        return Err(Error::InvalidParameter("the constant-approximation bound is checked for d = 2".into()));
    }
    let pol = &s.policy;
    let func = |x: &[f64]| f.eval(x);
    let g = sample(f, q, s.grid)?;
    let thr = threshold(pol, &g);
    let ps = &s.exponents;
    if !step_grid_admissible(&MultiIndex(vec![1, 1]), &q.size(), q, s.h_samples) {
        return Ok(ps
            .iter()
            .map(|&p| {
                let params = ReportParams {
                    p: Some(p),
                    domain: Some(q.clone()),
                    h_samples: Some(s.h_samples),
                    ..Default::default()
                };
                inadmissible("constant-bound", &f.name, CheckKind::Hard, params)
            })
            .collect());
    }
    let w1 = modulus_sup_nested(&modulus_request(&MultiIndex(vec![1, 0]), q.size(), q, s.grid, s.h_samples)?, &func, ps)?;
    let w2 = modulus_sup_nested(&modulus_request(&MultiIndex(vec![0, 1]), q.size(), q, s.grid, s.h_samples)?, &func, ps)?;
    let mut out = Vec::new();
    for (k, &p) in ps.iter().enumerate() {
        let fit = best_constant(&g, p);
        let residual = g.map(|v| v - fit.beta);
        let gap = w1[k].gap().max(w2[k].gap());
        let params = ReportParams {
            p: Some(p),
            domain: Some(q.clone()),
            grid: Some(vec![s.grid; 2]),
            h_samples: Some(s.h_samples),
            t: Some(q.size().0),
            ..Default::default()
        };
        let rep = match p {
            Exponent::Finite(pv) => {
                let left = lp_power(&residual, p);
                let right = 2.0 * (w1[k].fine.powf(pv) + w2[k].fine.powf(pv));
                let thr_p = thr.powf(pv);
                if pv <= 1.0 {
                    let inflation = (1.0 + pol.constant_bound_rel) * pol.gap_factor(gap).powf(pv);
                    InequalityReport::hard("constant-bound", &f.name, params, left, right, 1.0, inflation, thr_p)
                } else {
                    InequalityReport::empirical("constant-bound", &f.name, params, left, right, thr_p)
                }
            }
            Exponent::Infinity => {
                let left = residual.max_abs();
                let right = w1[k].fine + w2[k].fine;
                InequalityReport::empirical("constant-bound", &f.name, params, left, right, thr)
            }
        };
        let mut rep = rep;
        rep.note = format!("beta={} at {:?}; left is the unnormalized integral over Q", fit.beta, fit.point);
        out.push(rep);
    }
    Ok(out)
}

/// Exact and floating-point checks of the polynomial identities.
pub fn identity_reports(s: &VerifySettings) -> Vec<InequalityReport> {
    let mut out = Vec::new();
    let exact = |check: &str, label: String, res: Result<()>| {
        let mut rep = InequalityReport::blank(check, &label, CheckKind::Hard, ReportParams::default());
        match res {
            Ok(()) => rep.status = Status::Pass,
            Err(e) => {
                rep.status = Status::Fail;
                rep.left = 1.0;
                rep.note = e.to_string();
            }
        }
        rep.note = if rep.note.is_empty() { "exact rational equality".into() } else { rep.note };
        rep
    };
    for d in 1..=3usize {
        for r in MultiIndex::range_inclusive(&MultiIndex::uniform(d, 1), &MultiIndex::uniform(d, 4)) {
            let res = unit_decomposition(&r).and_then(|u| u.verify());
            out.push(exact("unit-decomposition", format!("r={r}"), res));
        }
    }
    for k in 1..=10 {
        let res = halving_identity(k).and_then(|p| {
            if p.degree_in(0) == Some(k - 1) {
                Ok(())
            } else {
                Err(Error::IdentityFailure(format!("quotient has degree {:?}", p.degree_in(0))))
            }
        });
        out.push(exact("halving-identity", format!("k={k}"), res));
    }
    out.extend(annihilation_reports(s));
    out.extend(reproduction_reports(s));
    out
}

fn annihilation_reports(s: &VerifySettings) -> Vec<InequalityReport> {
    let cases = [MultiIndex(vec![3]), MultiIndex(vec![2, 3]), MultiIndex(vec![2, 2, 2])];
    let steps = [-0.1, -0.05, 0.05, 0.1, 0.15];
    let mut out = Vec::new();
    for r in cases {
        let d = r.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ (0xA11 + d as u64));
        let q = AxisBox::unit(d);
        let grid = grid_of(d, 8);
        let mut worst: f64 = 0.0;
        let mut error = None;
        for _ in 0..50 {
            let coeffs = (0..r.count_below()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let phi = TensorPolynomial::monomial(r.clone(), coeffs).expect("shape matches");
            let scale = phi.sample(&q, &grid).map(|g| g.max_abs()).unwrap_or(1.0).max(f64::MIN_POSITIVE);
            for e in nonempty_axis_subsets(d) {
                for &h in &steps {
                    let hv = StepVector((0..d).map(|i| h * (1.0 + 0.25 * i as f64)).collect());
                    match annihilation_residual(&phi, &e, &hv, &q, &grid) {
                        Ok(v) => worst = worst.max(v / scale),
                        Err(err) => error = Some(err),
                    }
                }
            }
        }
        let params = ReportParams {
            r: Some(r.clone()),
            grid: Some(vec![8; d]),
            ..Default::default()
        };
        let mut rep = InequalityReport::blank("annihilation", "random-members", CheckKind::Hard, params);
        rep.left = worst;
        rep.right = s.policy.identity_rel;
        rep.bound_constant = Some(1.0);
        rep.status = if error.is_none() && worst <= s.policy.identity_rel { Status::Pass } else { Status::Fail };
        rep.note = match error {
            Some(e) => e.to_string(),
            None => "max |Δ φ| / max |φ| over 50 seeded polynomials, all subsets, 5 steps".into(),
        };
        out.push(rep);
    }
    out
}

fn reproduction_reports(s: &VerifySettings) -> Vec<InequalityReport> {
    let mut out = Vec::new();
    let orders: [(usize, Vec<MultiIndex>); 2] = [
        (1, vec![MultiIndex(vec![1]), MultiIndex(vec![2]), MultiIndex(vec![3])]),
        (2, vec![MultiIndex(vec![1, 1]), MultiIndex(vec![2, 2]), MultiIndex(vec![2, 3])]),
    ];
    for (d, rs) in orders {
        let q = AxisBox::unit(d);
        let grid = grid_of(d, 12);
        let steps: Vec<StepVector> = [0.03, -0.07, 0.11]
            .iter()
            .map(|&h| StepVector((0..d).map(|i| h * (1.0 - 0.3 * i as f64)).collect()))
            .collect();
        for f in corpus::of_dim(d) {
            if !s.functions.is_empty() && !s.functions.contains(&f.name) {
                continue;
            }
            let scale = sample(&f, &q, 12).map(|g| g.max_abs()).unwrap_or(1.0).max(f64::MIN_POSITIVE);
            for r in &rs {
                let params = ReportParams {
                    r: Some(r.clone()),
                    grid: Some(vec![12; d]),
                    ..Default::default()
                };
                let member = f.is_member(r);
                let check = if member { "reproduction" } else { "reproduction-consistency" };
                let rep = match reproduction_residual(&|x: &[f64]| f.eval(x), r, &q, &steps, &grid) {
                    Ok(res) => {
                        let left = if member { res.residual.max(res.consistency) } else { res.consistency };
                        let mut rep = InequalityReport::blank(check, &f.name, CheckKind::Hard, params);
                        rep.left = left / scale;
                        rep.right = s.policy.identity_rel;
                        rep.bound_constant = Some(1.0);
                        rep.status = if rep.left <= rep.right { Status::Pass } else { Status::Fail };
                        rep.note = format!("relative to max|f|; {} samples, {} skipped", res.evaluated, res.skipped);
                        rep
                    }
                    Err(e) => InequalityReport::failed(check, &f.name, CheckKind::Hard, params, &e),
                };
                out.push(rep);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Whitney,
    Marchaud,
    Equivalence,
    Superadditivity,
    Taylor,
    ConstantLemma,
    Identities,
    All,
}

impl Suite {
    pub const EACH: [Suite; 7] = [
        Suite::Identities,
        Suite::Whitney,
        Suite::Equivalence,
        Suite::Superadditivity,
        Suite::ConstantLemma,
        Suite::Marchaud,
        Suite::Taylor,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Whitney => "whitney",
            Suite::Marchaud => "marchaud",
            Suite::Equivalence => "equivalence",
            Suite::Superadditivity => "superadditivity",
            Suite::Taylor => "taylor",
            Suite::ConstantLemma => "constant-lemma",
            Suite::Identities => "identities",
            Suite::All => "all",
        }
    }

    fn expand(self) -> Vec<Suite> {
        match self {
            Suite::All => Suite::EACH.to_vec(),
            other => vec![other],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Suite::EACH
            .iter()
            .chain(std::iter::once(&Suite::All))
            .find(|x| x.as_str() == s.trim().to_lowercase())
            .copied()
            .ok_or_else(|| {
                format!("unknown suite '{s}'; expected one of whitney, marchaud, equivalence, superadditivity, taylor, constant-lemma, identities, all")
            })
    }
}

/// Per-status counts of a suite run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub pass: usize,
    pub vacuous: usize,
    pub fail: usize,
    pub violation: usize,
    pub unstable: usize,
    pub not_applicable: usize,
    pub hard_failures: usize,
}

impl Summary {
    pub fn of(reports: &[InequalityReport]) -> Self {
        let mut s = Summary {
            total: reports.len(),
            ..Default::default()
        };
        for r in reports {
            match r.status {
                Status::Pass => s.pass += 1,
                Status::Vacuous => s.vacuous += 1,
                Status::Fail => s.fail += 1,
                Status::Violation => s.violation += 1,
                Status::Unstable => s.unstable += 1,
                Status::NotApplicable => s.not_applicable += 1,
            }
            if r.is_hard_failure() {
                s.hard_failures += 1;
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub summary: Summary,
    pub passed: bool,
    pub reports: Vec<InequalityReport>,
}

/// Orders checked for a function of dimension `d`.
fn orders_for(d: usize) -> Vec<MultiIndex> {
    match d {
        1 => vec![MultiIndex(vec![1]), MultiIndex(vec![2])],
        _ => vec![MultiIndex::uniform(d, 1), MultiIndex::uniform(d, 2)],
    }
}

fn selected(s: &VerifySettings) -> Vec<CorpusFunction> {
    corpus::shipped()
        .into_iter()
        .filter(|f| s.functions.is_empty() || s.functions.contains(&f.name))
        .collect()
}

fn collect<T>(res: Result<Vec<InequalityReport>>, fallback: T) -> Vec<InequalityReport>
where
    T: FnOnce(&Error) -> InequalityReport,
{
    match res {
        Ok(v) => v,
        Err(e) => vec![fallback(&e)],
    }
}

/// All checks of `suites` for one corpus function, tagged with the suite position.
fn function_unit(f: &CorpusFunction, suites: &[Suite], s: &VerifySettings) -> Vec<(usize, InequalityReport)> {
    let d = f.dim;
    let q = AxisBox::unit(d);
    let delta = q.size();
    let mut cache = ModuliCache::new(f, &s.exponents);
    let mut out = Vec::new();
    for (si, suite) in suites.iter().enumerate() {
        let fail = |check: &str, r: Option<&MultiIndex>| {
            let check = check.to_string();
            let name = f.name.clone();
            let params = ReportParams {
                r: r.cloned(),
                ..Default::default()
            };
            move |e: &Error| InequalityReport::failed(&check, &name, CheckKind::Hard, params.clone(), e)
        };
        let reports: Vec<InequalityReport> = match suite {
            Suite::Whitney => orders_for(d)
                .iter()
                .flat_map(|r| collect(whitney_with(&mut cache, r, &q, s), fail("whitney", Some(r))))
                .collect(),
            Suite::Equivalence => {
                let mut v = Vec::new();
                for r in orders_for(d) {
                    v.extend(collect(equivalence_with(&mut cache, &r, &delta, &q, s, true), fail("equivalence", Some(&r))));
                    v.extend(collect(
                        equivalence_with(&mut cache, &r, &delta.scale(0.25), &q, s, false),
                        fail("equivalence", Some(&r)),
                    ));
                }
                v
            }
            Suite::Superadditivity => orders_for(d)
                .iter()
                .flat_map(|r| {
                    collect(superadditivity_reports(f, r, &delta.scale(0.125), &q, 2, s), fail("subdivision", Some(r)))
                })
                .collect(),
            Suite::ConstantLemma => {
                if d == 2 {
                    collect(constant_bound_reports(f, &q, s), fail("constant-bound", None))
                } else {
                    Vec::new()
                }
            }
            Suite::Marchaud => {
                let t = delta.scale(1.0 / 16.0);
                let (n, hs) = if d == 1 { (s.grid, s.h_samples) } else { (s.marchaud_grid, s.marchaud_h_samples) };
                let r = MultiIndex::uniform(d, 2);
                let mut v = Vec::new();
                for axis in 0..d {
                    let mut k = r.clone();
                    k.0[axis] = 1;
                    v.extend(collect(marchaud_reports(f, &k, &r, axis, &t, &q, n, hs, s), fail("marchaud", Some(&r))));
                }
                v
            }
            Suite::Taylor => {
                let corner = vec![0.0; d];
                let orders = if d == 1 { vec![MultiIndex(vec![2])] } else { orders_for(d) };
                orders
                    .iter()
                    .flat_map(|r| collect(taylor_reports(f, r, &corner, &[0.5, 0.25, 0.125], s), fail("taylor", Some(r))))
                    .collect()
            }
            Suite::Identities | Suite::All => Vec::new(),
        };
        out.extend(reports.into_iter().map(|r| (si, r)));
    }
    out
}

/// Runs a suite over the selected corpus. Output order depends only on the inputs.
pub fn run_suite(suite: Suite, s: &VerifySettings) -> SuiteReport {
    let suites = suite.expand();
    let functions = selected(s);
    let mut tagged: Vec<(usize, usize, InequalityReport)> = Vec::new();
    if let Some(pos) = suites.iter().position(|x| *x == Suite::Identities) {
        tagged.extend(identity_reports(s).into_iter().map(|r| (pos, 0, r)));
    }
    let per_function = run_units(&functions, s.jobs, |f| function_unit(f, &suites, s));
    for (fi, reports) in per_function.into_iter().enumerate() {
        tagged.extend(reports.into_iter().map(|(si, r)| (si, fi, r)));
    }
    // stable: keeps per-function check order within (suite, function)
    tagged.sort_by_key(|(si, fi, _)| (*si, *fi));
    let reports: Vec<InequalityReport> = tagged.into_iter().map(|(_, _, r)| r).collect();
    let summary = Summary::of(&reports);
    SuiteReport {
        suite,
        passed: summary.hard_failures == 0,
        summary,
        reports,
    }
}

/// Maps `work` over `items` on up to `jobs` threads, preserving order.
fn run_units<T, R, F>(items: &[T], jobs: usize, work: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&work).collect();
    }
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let work = &work;
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(work).collect::<Vec<R>>()))
            .collect();
        let mut i = 0;
        for h in handles {
            for r in h.join().expect("worker thread panicked") {
                slots[i] = Some(r);
                i += 1;
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// Per-function upper Whitney ratios `E_r / Ω_r` and their maximum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub r: MultiIndex,
    pub p: Exponent,
    pub ratios: Vec<FunctionRatio>,
    /// Maximum over non-vacuous entries; absent when all are vacuous.
    pub max_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionRatio {
    pub function: String,
    pub ratio: Option<f64>,
    /// Relative change of the ratio under one grid doubling.
    pub refinement_delta: Option<f64>,
    pub status: Status,
}

/// Runs the Whitney checks over `functions` and aggregates the ratios for `(r, p)`.
pub fn estimate_constants(
    functions: &[CorpusFunction],
    r: &MultiIndex,
    p: Exponent,
    s: &VerifySettings,
) -> Result<ConstantEstimate> {
    if functions.is_empty() {
        return Err(Error::InvalidParameter("empty corpus".into()));
    }
    let settings = VerifySettings {
        exponents: vec![p],
        ..s.clone()
    };
    let results = run_units(functions, s.jobs, |f| whitney_reports(f, r, &AxisBox::unit(f.dim), &settings));
    let mut ratios = Vec::new();
    for (f, res) in functions.iter().zip(results) {
        let reports = res?;
        let b = reports
            .into_iter()
            .find(|x| x.check == "whitney-upper-ratio")
            .expect("whitney produces a ratio report");
        let delta = match (b.refinement.first().and_then(|l| l.constant), b.refinement.last().and_then(|l| l.constant)) {
            (Some(a), Some(c)) if a != 0.0 => Some(refinement_gap(c.max(a), c.min(a))),
            _ => None,
        };
        ratios.push(FunctionRatio {
            function: f.name.clone(),
            ratio: b.empirical_constant,
            refinement_delta: delta,
            status: b.status,
        });
    }
    let max_ratio = ratios.iter().filter_map(|x| x.ratio).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    Ok(ConstantEstimate {
        r: r.clone(),
        p,
        ratios,
        max_ratio,
    })
}

/// Subset-labelled view of the terms of a total modulus.
pub fn labelled_terms(t: &TotalModulus) -> Vec<(String, f64)> {
    t.terms.iter().map(|(e, v): &(AxisSubset, f64)| (e.to_string(), *v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn settings() -> VerifySettings {
        VerifySettings {
            grid: 32,
            h_samples: 9,
            ..Default::default()
        }
    }

    fn p(v: f64) -> Exponent {
        Exponent::finite(v).unwrap()
    }

    #[test]
    fn hard_report_statuses() {
        let params = ReportParams::default();
        assert_eq!(InequalityReport::hard("c", "f", params.clone(), 1.0, 1.0, 2.0, 1.0, 1e-9).status, Status::Pass);
        assert_eq!(InequalityReport::hard("c", "f", params.clone(), 3.0, 1.0, 2.0, 1.01, 1e-9).status, Status::Fail);
        assert_eq!(InequalityReport::hard("c", "f", params.clone(), 0.0, 0.0, 2.0, 1.0, 1e-9).status, Status::Vacuous);
        assert_eq!(InequalityReport::hard("c", "f", params, 1.0, 0.0, 2.0, 1.0, 1e-9).status, Status::Violation);
    }

    #[test]
    fn empirical_report_statuses() {
        let r = InequalityReport::empirical("c", "f", ReportParams::default(), 0.0, 0.0, 1e-9);
        assert_eq!((r.status, r.empirical_constant), (Status::Vacuous, None));
        let r = InequalityReport::empirical("c", "f", ReportParams::default(), 1.0, 4.0, 1e-9);
        assert_eq!((r.status, r.empirical_constant), (Status::Pass, Some(0.25)));
    }

    #[test]
    fn members_are_vacuous_in_whitney() {
        let f = corpus::find("bilinear_2d").unwrap();
        for rep in whitney_reports(&f, &MultiIndex(vec![2, 2]), &AxisBox::unit(2), &settings()).unwrap() {
            assert_eq!(rep.status, Status::Vacuous, "{}", rep.id);
        }
    }

    #[test]
    fn whitney_square_against_constants() {
        // E_1(x^2)_2 = ||x^2 - 1/3||_2 = 2 / (3 sqrt 5)
        let f = corpus::find("x2_1d").unwrap();
        let s = VerifySettings {
            grid: 256,
            exponents: vec![p(2.0)],
            ..settings()
        };
        let reps = whitney_reports(&f, &MultiIndex(vec![1]), &AxisBox::unit(1), &s).unwrap();
        let b = reps.iter().find(|r| r.check == "whitney-upper-ratio").unwrap();
        assert_relative_eq!(b.left, 2.0 / (3.0 * 5f64.sqrt()), epsilon = 1e-4);
        assert!(b.empirical_constant.unwrap().is_finite());
        assert_eq!(reps[0].status, Status::Pass);
    }

    #[test]
    fn coarse_step_grid_is_not_applicable() {
        // with 5 nodes on [-1, 1] every step has 2|h| >= 1
        let f = corpus::find("x2_1d").unwrap();
        let s = VerifySettings {
            grid: 16,
            h_samples: 5,
            ..Default::default()
        };
        let q = AxisBox::unit(1);
        assert!(!step_grid_admissible(&MultiIndex(vec![2]), &q.size(), &q, 5));
        assert!(step_grid_admissible(&MultiIndex(vec![2]), &q.size(), &q, 9));
        let reps = whitney_reports(&f, &MultiIndex(vec![2]), &q, &s).unwrap();
        assert!(reps.iter().all(|r| r.status == Status::NotApplicable));
    }

    #[test]
    fn geometric_cells_cover_interval() {
        let cells = geometric_cells(1.0 / 16.0, 1.0, MARCHAUD_RATIO, 24);
        assert_eq!(cells.len(), 24);
        assert_relative_eq!(cells[0].0, 1.0 / 16.0);
        assert_eq!(cells.last().unwrap().1, 1.0);
        for w in cells.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        let cells = geometric_cells(1e-3, 1.0, MARCHAUD_RATIO, 24);
        assert!(cells.iter().all(|(a, b)| b / a <= MARCHAUD_RATIO * (1.0 + 1e-12)));
    }

    #[test]
    fn geometric_midpoint_matches_fine_trapezoid() {
        // ∫_{1/16}^1 u^{-1.5} du against an independent fine trapezoid sum
        let g = |u: f64| u.powf(-1.5);
        let approx = midpoint_on_cells(&geometric_cells(1.0 / 16.0, 1.0, MARCHAUD_RATIO, 24), g);
        let n = 200_000;
        let (a, b) = (1.0 / 16.0, 1.0);
        let hstep = (b - a) / n as f64;
        let trap: f64 = (0..n).map(|i| 0.5 * (g(a + i as f64 * hstep) + g(a + (i + 1) as f64 * hstep)) * hstep).sum();
        assert_relative_eq!(approx, trap, max_relative = 2e-2);
    }

    #[test]
    fn marchaud_kink_is_stable() {
        let f = corpus::find("abs_1d").unwrap();
        let s = VerifySettings {
            exponents: vec![p(2.0)],
            ..settings()
        };
        let t = StepVector(vec![1.0 / 16.0]);
        let reps = marchaud_reports(&f, &MultiIndex(vec![1]), &MultiIndex(vec![2]), 0, &t, &AxisBox::unit(1), 64, 17, &s).unwrap();
        let rep = &reps[0];
        let c0 = rep.refinement[0].constant.unwrap();
        let c1 = rep.refinement[1].constant.unwrap();
        assert!(c0.is_finite() && (c1 / c0 - 1.0).abs() <= 0.15, "{c0} vs {c1}");
    }

    #[test]
    fn marchaud_parameter_checks() {
        let f = corpus::find("abs_1d").unwrap();
        let t = StepVector(vec![0.1]);
        let s = settings();
        assert!(marchaud_reports(&f, &MultiIndex(vec![2]), &MultiIndex(vec![2]), 0, &t, &AxisBox::unit(1), 16, 9, &s).is_err());
        assert!(marchaud_reports(&f, &MultiIndex(vec![1]), &MultiIndex(vec![2]), 0, &StepVector(vec![1.0]), &AxisBox::unit(1), 16, 9, &s).is_err());
    }

    #[test]
    fn marchaud_zero_function_is_vacuous() {
        let zero = CorpusFunction {
            name: "zero".into(),
            dim: 1,
            tag: corpus::SmoothnessTag::MemberOfP,
            description: "0".into(),
            terms: vec![corpus::Term {
                coef: 0.0,
                factors: vec![corpus::Factor::Poly(vec![1.0])],
            }],
        };
        let reps = marchaud_reports(&zero, &MultiIndex(vec![1]), &MultiIndex(vec![2]), 0, &StepVector(vec![0.1]), &AxisBox::unit(1), 16, 9, &settings()).unwrap();
        assert!(reps.iter().all(|r| r.status == Status::Vacuous));
    }

    #[test]
    fn mean_below_sup_on_small_corpus() {
        let s = VerifySettings {
            exponents: vec![p(1.0)],
            ..settings()
        };
        for f in corpus::of_dim(2).into_iter().take(10) {
            let reps = equivalence_reports(&f, &MultiIndex(vec![1, 1]), &StepVector(vec![1.0, 1.0]), &AxisBox::unit(2), &s).unwrap();
            let hard = &reps[0];
            assert!(matches!(hard.status, Status::Pass | Status::Vacuous), "{}: {:?}", hard.id, hard.status);
            assert!(hard.left <= hard.right * (1.0 + 1e-3) || hard.status == Status::Vacuous);
        }
    }

    #[test]
    fn subdivision_identity_function() {
        let f = corpus::find("x_1d").unwrap();
        let s = VerifySettings {
            exponents: vec![p(1.0)],
            grid: 64,
            h_samples: 16,
            ..settings()
        };
        let reps = superadditivity_reports(&f, &MultiIndex(vec![1]), &StepVector(vec![0.125]), &AxisBox::unit(1), 2, &s).unwrap();
        let term = &reps[0];
        assert_eq!(term.status, Status::Pass);
        // oracle: w_1(x, t)_1 on a box of length L is (1/2t) ∫ |h| (L - |h|) dh = t/2 (L - 2t/3)
        let t = 0.125;
        let w = |len: f64| t / 2.0 * (len - 2.0 * t / 3.0);
        assert_relative_eq!(term.right, w(1.0), max_relative = 1e-2);
        assert_relative_eq!(term.left, 2.0 * w(0.5), max_relative = 1e-2);
    }

    #[test]
    fn taylor_exp_ladder() {
        let f = corpus::find("exp_1d").unwrap();
        let s = VerifySettings {
            exponents: vec![Exponent::Infinity],
            grid: 256,
            ..settings()
        };
        let reps = taylor_reports(&f, &MultiIndex(vec![2]), &[0.0], &[0.5, 0.25, 0.125], &s).unwrap();
        for r in &reps {
            let c = r.empirical_constant.unwrap();
            assert!((0.1..=1.0).contains(&c), "{}: {c}", r.id);
            assert_eq!(r.status, Status::Pass);
        }
    }

    #[test]
    fn taylor_not_applicable_without_derivatives() {
        let f = corpus::find("holder_half_2d").unwrap();
        let reps = taylor_reports(&f, &MultiIndex(vec![1, 1]), &[0.0, 0.0], &[0.5], &settings()).unwrap();
        assert!(reps.iter().all(|r| r.status == Status::NotApplicable));
    }

    #[test]
    fn constant_bound_identity_example() {
        // f = x: left = 1/4, right = 2 (ω_(1,0)(x, 1)_1 + 0) = 2 · 1/4
        let f = corpus::find("x_2d").unwrap();
        let s = VerifySettings {
            grid: 64,
            h_samples: 17,
            exponents: vec![p(1.0)],
            ..Default::default()
        };
        let rep = &constant_bound_reports(&f, &AxisBox::unit(2), &s).unwrap()[0];
        assert_relative_eq!(rep.left, 0.25, epsilon = 1e-3);
        assert_relative_eq!(rep.right, 0.5, epsilon = 1e-2);
        assert_eq!(rep.status, Status::Pass);
    }

    #[test]
    fn constant_bound_holder_product() {
        let f = CorpusFunction {
            name: "abs_product".into(),
            dim: 2,
            tag: corpus::SmoothnessTag::HolderSingular,
            description: "|x - 1/2| |y - 1/2|".into(),
            terms: vec![corpus::Term {
                coef: 1.0,
                factors: vec![
                    corpus::Factor::AbsPow { center: 0.5, alpha: 1.0 },
                    corpus::Factor::AbsPow { center: 0.5, alpha: 1.0 },
                ],
            }],
        };
        let s = VerifySettings {
            exponents: vec![p(0.5)],
            ..settings()
        };
        let rep = &constant_bound_reports(&f, &AxisBox::unit(2), &s).unwrap()[0];
        assert_eq!(rep.status, Status::Pass);
    }

    #[test]
    fn identity_suite_passes() {
        let reps = identity_reports(&VerifySettings::default());
        assert_eq!(reps.iter().filter(|r| r.check == "unit-decomposition").count(), 4 + 16 + 64);
        assert!(reps.iter().all(|r| r.status == Status::Pass), "{:?}", reps.iter().find(|r| r.status != Status::Pass));
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::EACH.iter().chain([Suite::All].iter()) {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), *s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let s = VerifySettings {
            functions: vec!["x_1d".into(), "sin_1d".into(), "abs_1d".into()],
            exponents: vec![p(1.0)],
            ..settings()
        };
        let one = run_suite(Suite::Whitney, &s);
        let three = run_suite(Suite::Whitney, &VerifySettings { jobs: 3, ..s });
        assert_eq!(one, three);
    }
}
