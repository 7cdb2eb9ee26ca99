//! Mixed differences and the four moduli of smoothness.
//!
//! `ω_r` (sup over steps) and `w_r` (mean over steps) are computed on
//! finite step grids; their totals `Ω_r` and `W_r` sum over all nonempty
//! axis subsets `e` with order `r(e)`.
//!
//! The sup is scanned on the symmetric grid `linspace(-t_i, t_i, h_samples)`
//! per active axis, so it is an under-estimate of the true supremum. The mean
//! integrates over `U(t)` with the composite midpoint rule using `h_samples`
//! cells per active axis.

use serde::{Deserialize, Serialize};

use crate::domain::{
    for_each_midpoint, lp_power, nonempty_axis_subsets, AxisBox, AxisSubset, Exponent, Func,
    GridFunction, GridSpec, MultiIndex, StepVector,
};
use crate::error::{Error, Result};

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for j in 0..k {
        acc = acc * (n - j) as f64 / (j + 1) as f64;
    }
    acc.round()
}

/// Tensor-product stencil of `Δ_h^r`: multipliers `j` with signed binomial weights.
#[derive(Clone, Debug)]
pub struct DifferenceStencil {
    dim: usize,
    multipliers: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DifferenceStencil {
    pub fn new(order: &MultiIndex) -> Self {
        let terms = MultiIndex::range_inclusive(&MultiIndex::uniform(order.dim(), 0), order);
        let mut multipliers = Vec::with_capacity(terms.len());
        let mut weights = Vec::with_capacity(terms.len());
        for j in terms {
            let mut w = 1.0;
            for (i, &ji) in j.0.iter().enumerate() {
                let ri = order.0[i];
                let sign = if (ri - ji).is_multiple_of(2) { 1.0 } else { -1.0 };
                w *= sign * binomial(ri, ji);
            }
            multipliers.push(j.0.iter().map(|&v| v as f64).collect());
            weights.push(w);
        }
        DifferenceStencil {
            dim: order.dim(),
            multipliers,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Points `x + j h` touched by the stencil.
    pub fn points(&self, x: &[f64], h: &[f64]) -> Vec<Vec<f64>> {
        self.multipliers
            .iter()
            .map(|j| (0..self.dim).map(|i| x[i] + j[i] * h[i]).collect())
            .collect()
    }

    #[inline]
    pub(crate) fn apply(&self, f: &Func, x: &[f64], h: &[f64], scratch: &mut [f64]) -> f64 {
        let mut acc = 0.0;
        for (j, w) in self.multipliers.iter().zip(&self.weights) {
            for i in 0..self.dim {
                scratch[i] = x[i] + j[i] * h[i];
            }
            acc += w * f(scratch);
        }
        acc
    }
}

/// `Δ_h^r(f, x)` for a function defined on all of `R^d`.
pub fn mixed_difference(f: &Func, order: &MultiIndex, h: &StepVector, x: &[f64]) -> f64 {
    let stencil = DifferenceStencil::new(order);
    let mut scratch = vec![0.0; order.dim()];
    stencil.apply(f, x, h.as_slice(), &mut scratch)
}

/// `Δ_h^r(f, x)` for `f` defined on `domain`; fails if a stencil point leaves it.
pub fn mixed_difference_on(
    f: &Func,
    order: &MultiIndex,
    h: &StepVector,
    x: &[f64],
    domain: &AxisBox,
) -> Result<f64> {
    check_dims(domain.dim(), &[order.dim(), h.dim(), x.len()])?;
    let stencil = DifferenceStencil::new(order);
    if let Some(bad) = stencil
        .points(x, h.as_slice())
        .into_iter()
        .find(|pt| !domain.contains(pt))
    {
        return Err(Error::OutsideDomain(bad));
    }
    let mut scratch = vec![0.0; order.dim()];
    Ok(stencil.apply(f, x, h.as_slice(), &mut scratch))
}

fn check_dims(d: usize, others: &[usize]) -> Result<()> {
    for &o in others {
        if o != d {
            return Err(Error::DimensionMismatch { expected: d, got: o });
        }
    }
    Ok(())
}

/// Samples `Δ_h^r f` on a fresh midpoint grid over `Q_{rh}`.
///
/// `density` is the resolution on the full box; the shrunken box gets
/// `max(1, ceil(n_i |Q_rh|_i / δ_i))` points per axis. Returns `None` when
/// `Q_{rh}` is empty.
pub fn difference_field(
    f: &Func,
    order: &MultiIndex,
    h: &StepVector,
    domain: &AxisBox,
    density: &GridSpec,
) -> Result<Option<GridFunction>> {
    check_dims(domain.dim(), &[order.dim(), h.dim(), density.dim()])?;
    let stencil = DifferenceStencil::new(order);
    Ok(field_with(&stencil, f, order, h.as_slice(), domain, density))
}

fn field_with(
    stencil: &DifferenceStencil,
    f: &Func,
    order: &MultiIndex,
    h: &[f64],
    domain: &AxisBox,
    density: &GridSpec,
) -> Option<GridFunction> {
    let shift = StepVector(order.0.iter().zip(h).map(|(&r, &hi)| r as f64 * hi).collect());
    let shrunk = domain.shrink(&shift)?;
    let spec = density.density_on(domain, &shrunk);
    let mut values = Vec::with_capacity(spec.total());
    let mut scratch = vec![0.0; domain.dim()];
    for_each_midpoint(&shrunk, &spec, |_, x| {
        values.push(stencil.apply(f, x, h, &mut scratch));
    });
    // non-finite samples propagate into the norms, where the verifier flags them
    Some(GridFunction::from_parts(shrunk, spec, values))
}

/// Inputs of a modulus of smoothness computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusRequest {
    pub order: MultiIndex,
    pub t: StepVector,
    pub p: Exponent,
    pub domain: AxisBox,
    pub h_samples: usize,
    pub grid: GridSpec,
}

impl ModulusRequest {
    pub fn new(
        order: MultiIndex,
        t: StepVector,
        p: Exponent,
        domain: AxisBox,
        h_samples: usize,
        grid: GridSpec,
    ) -> Result<Self> {
        let req = ModulusRequest {
            order,
            t,
            p,
            domain,
            h_samples,
            grid,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.domain.dim();
        check_dims(d, &[self.order.dim(), self.t.dim(), self.grid.dim()])?;
        if let Some(t) = self.t.0.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::InvalidParameter(format!("step bound t must be >= 0, got {t}")));
        }
        if self.h_samples < 2 {
            return Err(Error::InvalidParameter(format!(
                "h_samples must be at least 2, got {}",
                self.h_samples
            )));
        }
        Ok(())
    }

    pub fn with_order(&self, order: MultiIndex) -> Self {
        ModulusRequest { order, ..self.clone() }
    }

    pub fn with_t(&self, t: StepVector) -> Self {
        ModulusRequest { t, ..self.clone() }
    }

    pub fn with_p(&self, p: Exponent) -> Self {
        ModulusRequest { p, ..self.clone() }
    }

    pub fn with_h_samples(&self, h_samples: usize) -> Self {
        ModulusRequest {
            h_samples,
            ..self.clone()
        }
    }

    pub fn with_domain(&self, domain: AxisBox, grid: GridSpec) -> Self {
        ModulusRequest {
            domain,
            grid,
            ..self.clone()
        }
    }

    fn active_axes(&self) -> Vec<usize> {
        (0..self.order.dim()).filter(|&i| self.order.0[i] > 0).collect()
    }
}

/// Normalization of the outer `h`-integral in the mean modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanNormalization {
    /// Divide by `|U(t)| = Π 2 t_i`: a true average over the step box.
    #[default]
    Average,
    /// Divide by `Π t_i` over the active axes, which is `2^{d'}` times the average.
    AsPrinted,
}

/// Tensor grid of steps; inactive axes carry a single zero step.
/// The flag is set when every coordinate lies on the coarse sub-grid.
fn step_grid(axes: &[Vec<(f64, bool)>]) -> Vec<(Vec<f64>, bool)> {
    let lo = MultiIndex(vec![0; axes.len()]);
    let hi = MultiIndex(axes.iter().map(|a| a.len() - 1).collect());
    MultiIndex::range_inclusive(&lo, &hi)
        .into_iter()
        .map(|idx| {
            let h = idx.0.iter().enumerate().map(|(i, &k)| axes[i][k].0).collect();
            let coarse = idx.0.iter().enumerate().all(|(i, &k)| axes[i][k].1);
            (h, coarse)
        })
        .collect()
}

/// Symmetric sup-scan nodes `linspace(-t, t, n)` without the zero step.
pub fn sup_nodes(t: f64, n: usize) -> Vec<f64> {
    sup_nodes_flagged(t, n).into_iter().map(|(h, _)| h).collect()
}

fn sup_nodes_flagged(t: f64, n: usize) -> Vec<(f64, bool)> {
    if t == 0.0 {
        return Vec::new();
    }
    let last = (n - 1) as f64;
    (0..n)
        .map(|k| (t * (2.0 * k as f64 - last) / last, k % 2 == 0))
        .filter(|(h, _)| h.abs() > 1e-14 * t)
        .collect()
}

/// Midpoints of `n` uniform cells over `[-t, t]`.
pub fn mean_nodes(t: f64, n: usize) -> Vec<f64> {
    let w = 2.0 * t / n as f64;
    (0..n).map(|k| -t + (k as f64 + 0.5) * w).collect()
}

/// Largest nested sub-grid of `linspace(-t, t, n)`: `(n + 1) / 2` points for odd `n`.
pub fn coarse_h_samples(n: usize) -> usize {
    n.div_ceil(2).max(2)
}

/// Sup modulus on the step grid and on its nested coarse sub-grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupEstimate {
    pub fine: f64,
    pub coarse: f64,
}

impl SupEstimate {
    /// Relative growth from the coarse to the fine step grid.
    pub fn gap(&self) -> f64 {
        refinement_gap(self.fine, self.coarse)
    }
}

/// `ω_r(f, t)_{p,Q}` for each exponent in `ps`, with the coarse-grid value; `req.p` is not used.
///
/// For odd `h_samples` the coarse grid keeps every other node and shares the sweep;
/// otherwise it is a separate sweep with `coarse_h_samples` nodes.
pub fn modulus_sup_nested(req: &ModulusRequest, f: &Func, ps: &[Exponent]) -> Result<Vec<SupEstimate>> {
    sup_sweep(req, f, ps, true)
}

fn sup_sweep(req: &ModulusRequest, f: &Func, ps: &[Exponent], with_coarse: bool) -> Result<Vec<SupEstimate>> {
    req.validate()?;
    let active = req.active_axes();
    let zero = SupEstimate { fine: 0.0, coarse: 0.0 };
    let mut best = vec![zero; ps.len()];
    if active.is_empty() {
        // Δ^0 is the identity, so the modulus is the norm of f
        let g = field_with(
            &DifferenceStencil::new(&req.order),
            f,
            &req.order,
            &vec![0.0; req.domain.dim()],
            &req.domain,
            &req.grid,
        );
        for (b, &p) in best.iter_mut().zip(ps) {
            let v = g.as_ref().map_or(0.0, |g| crate::domain::lp_quasinorm(g, p));
            *b = SupEstimate { fine: v, coarse: v };
        }
        return Ok(best);
    }
    let nested = req.h_samples % 2 == 1;
    let mut axes = vec![vec![(0.0, true)]; req.domain.dim()];
    for &i in &active {
        let nodes = sup_nodes_flagged(req.t.0[i], req.h_samples);
        if nodes.is_empty() {
            return Ok(best);
        }
        axes[i] = nodes;
    }
    let stencil = DifferenceStencil::new(&req.order);
    for (h, coarse) in step_grid(&axes) {
        if let Some(field) = field_with(&stencil, f, &req.order, &h, &req.domain, &req.grid) {
            for (b, &p) in best.iter_mut().zip(ps) {
                let v = crate::domain::lp_quasinorm(&field, p);
                if v > b.fine || v.is_nan() {
                    b.fine = v;
                }
                if nested && coarse && (v > b.coarse || v.is_nan()) {
                    b.coarse = v;
                }
            }
        }
    }
    if with_coarse && !nested {
        let coarse = sup_sweep(&req.with_h_samples(coarse_h_samples(req.h_samples)), f, ps, false)?;
        for (b, c) in best.iter_mut().zip(coarse) {
            b.coarse = c.fine;
        }
    }
    Ok(best)
}

/// `ω_r(f, t)_{p,Q}` for each exponent in `ps`; `req.p` is not used.
pub fn modulus_sup_multi(req: &ModulusRequest, f: &Func, ps: &[Exponent]) -> Result<Vec<f64>> {
    Ok(sup_sweep(req, f, ps, false)?.into_iter().map(|e| e.fine).collect())
}

/// `ω_r(f, t)_{p,Q}`: max over the step grid of `||Δ_h^r f||_{p, Q_rh}`.
pub fn modulus_sup(req: &ModulusRequest, f: &Func) -> Result<f64> {
    Ok(modulus_sup_multi(req, f, &[req.p])?[0])
}

/// `w_r(f, t)_{p,Q}` for each exponent in `ps`; infinite exponents use the sup.
pub fn modulus_mean_multi(
    req: &ModulusRequest,
    f: &Func,
    ps: &[Exponent],
    normalization: MeanNormalization,
) -> Result<Vec<f64>> {
    req.validate()?;
    let active = req.active_axes();
    for &i in &active {
        if req.t.0[i] == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "mean modulus needs t_{} > 0 on an active axis",
                i + 1
            )));
        }
    }
    let finite: Vec<f64> = ps
        .iter()
        .filter_map(|p| match p {
            Exponent::Finite(v) => Some(*v),
            Exponent::Infinity => None,
        })
        .collect();
    let sup = if ps.iter().any(|p| p.is_infinite()) {
        Some(modulus_sup_multi(req, f, &[Exponent::Infinity])?[0])
    } else {
        None
    };

    let mut axes = vec![vec![(0.0, true)]; req.domain.dim()];
    let mut cell = 1.0;
    let mut norm = 1.0;
    for &i in &active {
        let t = req.t.0[i];
        axes[i] = mean_nodes(t, req.h_samples).into_iter().map(|h| (h, true)).collect();
        cell *= 2.0 * t / req.h_samples as f64;
        norm *= match normalization {
            MeanNormalization::Average => 2.0 * t,
            MeanNormalization::AsPrinted => t,
        };
    }
    let stencil = DifferenceStencil::new(&req.order);
    let mut sums = vec![crate::domain::CompensatedSum::default(); finite.len()];
    for (h, _) in step_grid(&axes) {
        if active.iter().any(|&i| h[i] == 0.0) {
            continue;
        }
        if let Some(field) = field_with(&stencil, f, &req.order, &h, &req.domain, &req.grid) {
            for (s, &p) in sums.iter_mut().zip(&finite) {
                s.add(lp_power(&field, Exponent::Finite(p)));
            }
        }
    }
    if active.is_empty() {
        // no step integral at all: w_0 is the norm of f itself
        let g = field_with(&stencil, f, &req.order, &vec![0.0; req.domain.dim()], &req.domain, &req.grid);
        for (s, &p) in sums.iter_mut().zip(&finite) {
            *s = Default::default();
            s.add(g.as_ref().map_or(0.0, |g| lp_power(g, Exponent::Finite(p))));
        }
    }
    let mut finite_iter = sums.iter().zip(&finite);
    Ok(ps
        .iter()
        .map(|p| match p {
            Exponent::Infinity => sup.unwrap_or(0.0),
            Exponent::Finite(_) => {
                let (s, &pv) = finite_iter.next().expect("one sum per finite exponent");
                (s.value() * cell / norm).max(0.0).powf(1.0 / pv)
            }
        })
        .collect())
}

/// `w_r(f, t)_{p,Q}` averaged over `U(t)`.
pub fn modulus_mean(req: &ModulusRequest, f: &Func) -> Result<f64> {
    Ok(modulus_mean_multi(req, f, &[req.p], MeanNormalization::Average)?[0])
}

/// `w_r(f, t)_{p,Q}` with an explicit normalization of the step integral.
pub fn modulus_mean_with(req: &ModulusRequest, f: &Func, normalization: MeanNormalization) -> Result<f64> {
    Ok(modulus_mean_multi(req, f, &[req.p], normalization)?[0])
}

/// A total modulus with its per-subset terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TotalModulus {
    pub terms: Vec<(AxisSubset, f64)>,
    pub total: f64,
}

impl TotalModulus {
    fn from_terms(terms: Vec<(AxisSubset, f64)>) -> Self {
        let total = terms.iter().map(|(_, v)| v).sum();
        TotalModulus { terms, total }
    }

    pub fn term(&self, e: &AxisSubset) -> Option<f64> {
        self.terms.iter().find(|(s, _)| s == e).map(|(_, v)| *v)
    }
}

fn require_natural(order: &MultiIndex) -> Result<()> {
    if order.0.contains(&0) {
        return Err(Error::InvalidParameter(format!(
            "total modulus needs every r_i >= 1, got {order}"
        )));
    }
    Ok(())
}

fn totals(
    req: &ModulusRequest,
    ps: &[Exponent],
    mut term: impl FnMut(&ModulusRequest) -> Result<Vec<f64>>,
) -> Result<Vec<TotalModulus>> {
    require_natural(&req.order)?;
    let mut per_p: Vec<Vec<(AxisSubset, f64)>> = vec![Vec::new(); ps.len()];
    for e in nonempty_axis_subsets(req.domain.dim()) {
        let values = term(&req.with_order(req.order.restrict(&e)))?;
        for (slot, v) in per_p.iter_mut().zip(values) {
            slot.push((e.clone(), v));
        }
    }
    Ok(per_p.into_iter().map(TotalModulus::from_terms).collect())
}

/// `Ω_r(f, t)` for each exponent in `ps`.
pub fn total_modulus_sup_multi(req: &ModulusRequest, f: &Func, ps: &[Exponent]) -> Result<Vec<TotalModulus>> {
    totals(req, ps, |sub| modulus_sup_multi(sub, f, ps))
}

/// `Ω_r(f, t)_{p,Q} = Σ_{e ≠ ∅} ω_{r(e)}(f, t)_{p,Q}`.
pub fn total_modulus_sup(req: &ModulusRequest, f: &Func) -> Result<TotalModulus> {
    Ok(total_modulus_sup_multi(req, f, &[req.p])?.remove(0))
}

/// `Ω_r` on the step grid and on its nested coarse sub-grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TotalSupEstimate {
    pub fine: TotalModulus,
    pub coarse: TotalModulus,
}

impl TotalSupEstimate {
    /// Relative growth of the total from the coarse to the fine step grid.
    pub fn gap(&self) -> f64 {
        refinement_gap(self.fine.total, self.coarse.total)
    }
}

/// `Ω_r(f, t)` for each exponent in `ps`, with coarse-grid totals.
pub fn total_modulus_sup_nested(req: &ModulusRequest, f: &Func, ps: &[Exponent]) -> Result<Vec<TotalSupEstimate>> {
    require_natural(&req.order)?;
    let mut fine: Vec<Vec<(AxisSubset, f64)>> = vec![Vec::new(); ps.len()];
    let mut coarse = fine.clone();
    for e in nonempty_axis_subsets(req.domain.dim()) {
        let values = modulus_sup_nested(&req.with_order(req.order.restrict(&e)), f, ps)?;
        for (k, v) in values.into_iter().enumerate() {
            fine[k].push((e.clone(), v.fine));
            coarse[k].push((e.clone(), v.coarse));
        }
    }
    Ok(fine
        .into_iter()
        .zip(coarse)
        .map(|(a, b)| TotalSupEstimate {
            fine: TotalModulus::from_terms(a),
            coarse: TotalModulus::from_terms(b),
        })
        .collect())
}

/// `W_r(f, t)` for each exponent in `ps`.
pub fn total_modulus_mean_multi(
    req: &ModulusRequest,
    f: &Func,
    ps: &[Exponent],
    normalization: MeanNormalization,
) -> Result<Vec<TotalModulus>> {
    totals(req, ps, |sub| modulus_mean_multi(sub, f, ps, normalization))
}

/// `W_r(f, t)_{p,Q} = Σ_{e ≠ ∅} w_{r(e)}(f, t)_{p,Q}`.
pub fn total_modulus_mean(req: &ModulusRequest, f: &Func) -> Result<TotalModulus> {
    Ok(total_modulus_mean_multi(req, f, &[req.p], MeanNormalization::Average)?.remove(0))
}

/// Explicit constant `C'` with `Ω_r(f, δ) <= C' ||f - φ||_p` for every `φ` in `P_r`.
///
/// Per subset, `ω_{r(e)}(f - φ) <= K_e ||f - φ||` with `K_e = Π_{i∈e} 2^{r_i}` for
/// `p >= 1` and `K_e = (Π_{i∈e} Σ_j C(r_i, j)^p)^{1/p}` for `p < 1`.
pub fn lower_whitney_constant(order: &MultiIndex, p: Exponent) -> f64 {
    nonempty_axis_subsets(order.dim())
        .iter()
        .map(|e| match p {
            Exponent::Finite(pv) if pv < 1.0 => e
                .members()
                .iter()
                .map(|&i| {
                    (0..=order.0[i])
                        .map(|j| binomial(order.0[i], j).powf(pv))
                        .sum::<f64>()
                })
                .product::<f64>()
                .powf(1.0 / pv),
            _ => e.members().iter().map(|&i| 2f64.powi(order.0[i] as i32)).product(),
        })
        .sum()
}

/// Relative amount by which a sup estimate grew from the coarse to the fine step grid.
pub fn refinement_gap(fine: f64, coarse: f64) -> f64 {
    if fine > 0.0 && fine.is_finite() && coarse.is_finite() {
        ((fine - coarse) / fine).max(0.0)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{lp_quasinorm, sample_on_grid};
    use approx::assert_relative_eq;

    fn p(v: f64) -> Exponent {
        Exponent::finite(v).unwrap()
    }

    fn req1(order: usize, t: f64, pe: Exponent, n: usize, hs: usize) -> ModulusRequest {
        ModulusRequest::new(
            MultiIndex(vec![order]),
            StepVector(vec![t]),
            pe,
            AxisBox::unit(1),
            hs,
            GridSpec::uniform(1, n),
        )
        .unwrap()
    }

    #[test]
    fn constants_are_annihilated() {
        let f = |_: &[f64]| 4.2;
        for h in [0.1, -0.3, 1.0] {
            assert_eq!(mixed_difference(&f, &MultiIndex(vec![1]), &StepVector(vec![h]), &[0.4]), 0.0);
        }
    }

    #[test]
    fn second_difference_of_square() {
        // oracle: (x+2h)^2 - 2(x+h)^2 + x^2 = 2h^2
        let f = |x: &[f64]| x[0] * x[0];
        for (x, h) in [(0.0, 0.1), (0.3, 0.25), (-1.0, 0.7)] {
            let v = mixed_difference(&f, &MultiIndex(vec![2]), &StepVector(vec![h]), &[x]);
            assert_relative_eq!(v, 2.0 * h * h, epsilon = 1e-14);
        }
    }

    #[test]
    fn mixed_first_difference_of_product() {
        // oracle: (x+h1)(y+h2) - (x+h1)y - x(y+h2) + xy = h1 h2
        let f = |x: &[f64]| x[0] * x[1];
        for (pt, h) in [([0.2, 0.7], [0.1, 0.3]), ([1.0, -2.0], [-0.5, 0.25])] {
            let v = mixed_difference(&f, &MultiIndex(vec![1, 1]), &StepVector(h.to_vec()), &pt);
            assert_relative_eq!(v, h[0] * h[1], epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_order_is_identity() {
        let f = |x: &[f64]| x[0].exp() + x[1];
        let v = mixed_difference(&f, &MultiIndex(vec![0, 0]), &StepVector(vec![0.3, 0.4]), &[0.1, 0.2]);
        assert_eq!(v, f(&[0.1, 0.2]));
    }

    #[test]
    fn difference_outside_domain_rejected() {
        let f = |x: &[f64]| x[0];
        let err = mixed_difference_on(&f, &MultiIndex(vec![2]), &StepVector(vec![0.4]), &[0.5], &AxisBox::unit(1))
            .unwrap_err();
        assert!(matches!(err, Error::OutsideDomain(_)));
        assert!(mixed_difference_on(&f, &MultiIndex(vec![2]), &StepVector(vec![0.2]), &[0.5], &AxisBox::unit(1)).is_ok());
    }

    #[test]
    fn difference_field_of_identity_is_constant() {
        let f = |x: &[f64]| x[0];
        let g = difference_field(&f, &MultiIndex(vec![1]), &StepVector(vec![0.25]), &AxisBox::unit(1), &GridSpec::uniform(1, 16))
            .unwrap()
            .unwrap();
        assert_relative_eq!(g.domain().upper()[0], 0.75);
        assert_eq!(g.spec().points(), &[12]);
        assert!(g.values().iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn difference_field_empty_when_step_too_long() {
        let f = |x: &[f64]| x[0];
        let g = difference_field(&f, &MultiIndex(vec![2]), &StepVector(vec![0.6]), &AxisBox::unit(1), &GridSpec::uniform(1, 8)).unwrap();
        assert!(g.is_none());
    }

    #[test]
    fn difference_field_vanishes_on_polynomials() {
        let f = |x: &[f64]| 1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[1] + x[0] * x[1] * x[1];
        let r = MultiIndex(vec![2, 3]);
        for e in nonempty_axis_subsets(2) {
            let g = difference_field(&f, &r.restrict(&e), &StepVector(vec![0.1, -0.2]), &AxisBox::unit(2), &GridSpec::uniform(2, 10))
                .unwrap()
                .unwrap();
            assert!(g.max_abs() <= 1e-12, "e = {e}: {}", g.max_abs());
        }
    }

    #[test]
    fn sup_modulus_of_identity() {
        let f = |x: &[f64]| x[0];
        let v = modulus_sup(&req1(1, 0.3, Exponent::Infinity, 64, 17), &f).unwrap();
        assert!((v - 0.3).abs() <= 2.0 / 17.0, "{v}");
        assert_relative_eq!(v, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn sup_modulus_of_square() {
        // oracle: max over x in [0,1-h], h in [0,t] of 2xh + h^2 = 2t - t^2
        let f = |x: &[f64]| x[0] * x[0];
        let v = modulus_sup(&req1(1, 0.25, Exponent::Infinity, 256, 17), &f).unwrap();
        assert_relative_eq!(v, 0.4375, epsilon = 5e-3);
    }

    #[test]
    fn sup_modulus_annihilates_polynomials() {
        let f = |x: &[f64]| 3.0 - x[0] + 0.5 * x[0] * x[0];
        let v = modulus_sup(&req1(3, 0.2, p(1.0), 32, 9), &f).unwrap();
        assert!(v <= 1e-12);
    }

    /// Independent exhaustive scan: every step that is a whole number of cells.
    fn brute_force_sup(f: &dyn Fn(f64) -> f64, r: usize, pe: f64, n: usize) -> f64 {
        let mut best: f64 = 0.0;
        for k in -(n as i64)..=(n as i64) {
            if k == 0 {
                continue;
            }
            let h = k as f64 / n as f64;
            let len = 1.0 - r as f64 * h.abs();
            if len <= 1e-12 {
                continue;
            }
            let m = ((n as f64 * len) - 1e-9).ceil() as usize;
            let a = if h < 0.0 { -(r as f64) * h } else { 0.0 };
            let w = len / m as f64;
            let mut acc: f64 = 0.0;
            for c in 0..m {
                let x = a + (c as f64 + 0.5) * w;
                let mut d = 0.0;
                for j in 0..=r {
                    let sign = if (r - j).is_multiple_of(2) { 1.0 } else { -1.0 };
                    d += sign * binomial(r, j) * f(x + j as f64 * h);
                }
                acc += d.abs().powf(pe) * w;
            }
            best = best.max(acc.powf(1.0 / pe));
        }
        best
    }

    #[test]
    fn sup_matches_exhaustive_scan_on_cell_steps() {
        let fs: [(&str, fn(f64) -> f64); 3] = [
            ("sin", |x| (7.0 * x).sin()),
            ("abs", |x| (x - 0.37).abs().sqrt()),
            ("cubic", |x| x * x * x - x),
        ];
        for (name, g) in fs {
            let f = move |x: &[f64]| g(x[0]);
            for r in [1, 2] {
                for pe in [0.5, 1.0, 2.0] {
                    let v = modulus_sup(&req1(r, 1.0, p(pe), 8, 17), &f).unwrap();
                    let oracle = brute_force_sup(&g, r, pe, 8);
                    assert!((v - oracle).abs() <= 1e-12 * (1.0 + oracle), "{name} r={r} p={pe}: {v} vs {oracle}");
                }
            }
        }
    }

    #[test]
    fn sup_nondecreasing_on_nested_ladder() {
        let f = |x: &[f64]| (5.0 * x[0]).sin() + (x[0] - 0.6).abs();
        let mut prev = 0.0;
        for (t, hs) in [(0.125, 5), (0.25, 9), (0.5, 17)] {
            let v = modulus_sup(&req1(2, t, p(1.0), 64, hs), &f).unwrap();
            assert!(v >= prev - 1e-12, "t = {t}: {v} < {prev}");
            prev = v;
        }
    }

    #[test]
    fn sup_invariant_under_reflection() {
        let f = |x: &[f64]| (3.0 * x[0]).exp() * (x[0] - 0.2).abs();
        let g = |x: &[f64]| f(&[1.0 - x[0]]);
        for pe in [p(0.5), p(2.0), Exponent::Infinity] {
            let a = modulus_sup(&req1(2, 0.3, pe, 64, 13), &f).unwrap();
            let b = modulus_sup(&req1(2, 0.3, pe, 64, 13), &g).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
    }

    #[test]
    fn sup_is_a_seminorm_modulo_polynomials() {
        let f = |x: &[f64]| (2.0 * x[0]).sin() * (x[1] + 0.3).sqrt();
        let phi = |x: &[f64]| 1.5 - 2.0 * x[0] + 0.7 * x[1] - 4.0 * x[0] * x[1];
        let fp = |x: &[f64]| f(x) + phi(x);
        let r = MultiIndex(vec![2, 2]);
        for e in nonempty_axis_subsets(2) {
            let req = ModulusRequest::new(r.restrict(&e), StepVector(vec![0.3, 0.2]), p(1.0), AxisBox::unit(2), 9, GridSpec::uniform(2, 24)).unwrap();
            let a = modulus_sup(&req, &f).unwrap();
            let b = modulus_sup(&req, &fp).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn mean_of_zero_and_polynomials() {
        let zero = |_: &[f64]| 0.0;
        assert_eq!(modulus_mean(&req1(1, 0.2, p(1.0), 16, 8), &zero).unwrap(), 0.0);
        let lin = |x: &[f64]| 2.0 - x[0];
        assert!(modulus_mean(&req1(2, 0.2, p(1.0), 16, 8), &lin).unwrap() <= 1e-12);
    }

    #[test]
    fn mean_rejects_zero_t_on_active_axis() {
        let f = |x: &[f64]| x[0];
        assert!(modulus_mean(&req1(1, 0.0, p(1.0), 16, 8), &f).is_err());
    }

    #[test]
    fn mean_matches_brute_force_double_integral() {
        // independent double Riemann sum at 4x resolution in both x and h
        let f = |x: &[f64]| x[0];
        let t = 0.25;
        let v = modulus_mean(&req1(1, t, p(2.0), 64, 32), &f).unwrap();
        let (nh, nx) = (128, 256);
        let mut acc = 0.0;
        for k in 0..nh {
            let h = -t + (k as f64 + 0.5) * 2.0 * t / nh as f64;
            let len = 1.0 - h.abs();
            for c in 0..nx {
                let x = (if h < 0.0 { -h } else { 0.0 }) + (c as f64 + 0.5) * len / nx as f64;
                let d = (x + h) - x;
                acc += d * d * (len / nx as f64) * (2.0 * t / nh as f64);
            }
        }
        let oracle = (acc / (2.0 * t)).sqrt();
        assert_relative_eq!(v, oracle, max_relative = 1e-2);
    }

    #[test]
    fn as_printed_normalization_scales_by_two_per_active_axis() {
        let f = |x: &[f64]| (x[0] * 3.0).sin() * x[1];
        let req = ModulusRequest::new(MultiIndex(vec![1, 1]), StepVector(vec![0.2, 0.3]), p(1.5), AxisBox::unit(2), 6, GridSpec::uniform(2, 16)).unwrap();
        let avg = modulus_mean_with(&req, &f, MeanNormalization::Average).unwrap();
        let printed = modulus_mean_with(&req, &f, MeanNormalization::AsPrinted).unwrap();
        assert_relative_eq!(printed, avg * 4f64.powf(1.0 / 1.5), max_relative = 1e-12);
    }

    #[test]
    fn mean_at_infinity_is_the_sup() {
        let f = |x: &[f64]| (4.0 * x[0]).cos();
        let r = req1(1, 0.3, Exponent::Infinity, 32, 9);
        assert_eq!(modulus_mean(&r, &f).unwrap(), modulus_sup(&r, &f).unwrap());
    }

    #[test]
    fn mean_below_sup_on_assorted_functions() {
        let fs: Vec<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>> = vec![
            Box::new(|x| x[0] * x[1]),
            Box::new(|x| (x[0] + x[1]).exp()),
            Box::new(|x| (6.0 * x[0]).sin() * (4.0 * x[1]).cos()),
            Box::new(|x| (x[0] - 0.4).abs().sqrt() * (x[1] - 0.6).abs()),
            Box::new(|x| (x[0] - 0.5).abs() + (x[1] - 0.5).abs()),
        ];
        for f in &fs {
            for pe in [0.5, 1.0, 2.0] {
                let req = ModulusRequest::new(MultiIndex(vec![1, 1]), StepVector(vec![0.25, 0.25]), p(pe), AxisBox::unit(2), 9, GridSpec::uniform(2, 24)).unwrap();
                let w = total_modulus_mean(&req, f.as_ref()).unwrap().total;
                let o = total_modulus_sup(&req, f.as_ref()).unwrap().total;
                assert!(w <= o * (1.0 + 1e-3), "p = {pe}: W = {w}, Ω = {o}");
            }
        }
    }

    #[test]
    fn total_modulus_terms_for_product() {
        // ω_(1,0) of xy at p = inf is max |h1 y| = t1 (y -> 1), similarly ω_(0,1); ω_(1,1) = t1 t2
        let f = |x: &[f64]| x[0] * x[1];
        let n = 512;
        let req = ModulusRequest::new(MultiIndex(vec![1, 1]), StepVector(vec![0.25, 0.5]), Exponent::Infinity, AxisBox::unit(2), 9, GridSpec::uniform(2, n)).unwrap();
        let tm = total_modulus_sup(&req, &f).unwrap();
        let edge = 1.0 - 0.5 / n as f64;
        assert_eq!(tm.terms.len(), 3);
        assert_relative_eq!(tm.term(&AxisSubset::new(vec![0])).unwrap(), 0.25 * edge, max_relative = 1e-12);
        assert_relative_eq!(tm.term(&AxisSubset::new(vec![1])).unwrap(), 0.5 * edge, max_relative = 1e-12);
        assert_relative_eq!(tm.term(&AxisSubset::new(vec![0, 1])).unwrap(), 0.125, max_relative = 1e-12);
        assert_relative_eq!(tm.total, tm.terms.iter().map(|(_, v)| v).sum::<f64>());
    }

    #[test]
    fn total_in_one_dimension_is_the_single_modulus() {
        let f = |x: &[f64]| (x[0] - 0.3).abs();
        let r = req1(2, 0.4, p(1.0), 32, 9);
        assert_eq!(total_modulus_sup(&r, &f).unwrap().total, modulus_sup(&r, &f).unwrap());
        assert_eq!(total_modulus_mean(&r, &f).unwrap().total, modulus_mean(&r, &f).unwrap());
    }

    #[test]
    fn totals_require_positive_orders() {
        let f = |x: &[f64]| x[0];
        let req = ModulusRequest::new(MultiIndex(vec![1, 0]), StepVector(vec![0.2, 0.2]), p(1.0), AxisBox::unit(2), 5, GridSpec::uniform(2, 8)).unwrap();
        assert!(total_modulus_sup(&req, &f).is_err());
    }

    #[test]
    fn multi_exponent_sweep_matches_single() {
        let f = |x: &[f64]| (3.0 * x[0]).sin() + x[1] * x[1];
        let req = ModulusRequest::new(MultiIndex(vec![1, 2]), StepVector(vec![0.3, 0.2]), p(1.0), AxisBox::unit(2), 7, GridSpec::uniform(2, 16)).unwrap();
        let ps = [p(0.5), p(1.0), Exponent::Infinity];
        let many = modulus_sup_multi(&req, &f, &ps).unwrap();
        let many_mean = modulus_mean_multi(&req, &f, &ps, MeanNormalization::Average).unwrap();
        for (i, pe) in ps.iter().enumerate() {
            assert_eq!(many[i], modulus_sup(&req.with_p(*pe), &f).unwrap());
            assert_eq!(many_mean[i], modulus_mean(&req.with_p(*pe), &f).unwrap());
        }
    }

    #[test]
    fn nested_coarse_grid_matches_separate_sweep() {
        let f = |x: &[f64]| (5.0 * x[0]).sin() * (x[1] - 0.3).abs().sqrt();
        let req = ModulusRequest::new(MultiIndex(vec![1, 2]), StepVector(vec![0.4, 0.3]), p(1.0), AxisBox::unit(2), 9, GridSpec::uniform(2, 16)).unwrap();
        let ps = [p(0.5), Exponent::Infinity];
        let nested = modulus_sup_nested(&req, &f, &ps).unwrap();
        let coarse = modulus_sup_multi(&req.with_h_samples(5), &f, &ps).unwrap();
        for k in 0..2 {
            assert_eq!(nested[k].coarse, coarse[k]);
            assert!(nested[k].fine >= nested[k].coarse);
        }
        let even = modulus_sup_nested(&req.with_h_samples(8), &f, &ps).unwrap();
        let even_coarse = modulus_sup_multi(&req.with_h_samples(4), &f, &ps).unwrap();
        assert_eq!(even[0].coarse, even_coarse[0]);
        let totals = total_modulus_sup_nested(&req.with_order(MultiIndex(vec![1, 1])), &f, &ps).unwrap();
        assert!(totals[0].gap() >= 0.0 && totals[0].fine.total >= totals[0].coarse.total);
    }

    #[test]
    fn lower_whitney_constant_examples() {
        assert_eq!(lower_whitney_constant(&MultiIndex(vec![1]), p(1.0)), 2.0);
        assert_relative_eq!(lower_whitney_constant(&MultiIndex(vec![1]), p(0.5)), 4.0, epsilon = 1e-12);
        assert_eq!(lower_whitney_constant(&MultiIndex(vec![1, 1]), p(1.0)), 8.0);
        assert_eq!(lower_whitney_constant(&MultiIndex(vec![2, 2]), Exponent::Infinity), 4.0 + 4.0 + 16.0);
    }

    #[test]
    fn lower_whitney_holds_for_random_shift() {
        let f = |x: &[f64]| (x[0] - 0.3).abs().sqrt();
        let phi = |x: &[f64]| 0.4 - 0.2 * x[0];
        let q = AxisBox::unit(1);
        let grid = GridSpec::uniform(1, 64);
        let diff = sample_on_grid(&|x: &[f64]| f(x) - phi(x), &q, &grid).unwrap();
        for pe in [p(0.5), p(1.0), p(2.0), Exponent::Infinity] {
            let req = ModulusRequest::new(MultiIndex(vec![2]), q.size(), pe, q.clone(), 17, grid.clone()).unwrap();
            let omega = total_modulus_sup(&req, &f).unwrap().total;
            let c = lower_whitney_constant(&req.order, pe);
            assert!(omega <= c * lp_quasinorm(&diff, pe) * 1.01, "p = {pe}");
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(5, 0), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
        assert_eq!(binomial(10, 3), 120.0);
    }
}
