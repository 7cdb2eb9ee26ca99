//! Tensor polynomial spaces `P_r`, discrete best approximation `E_r`, Taylor
//! polynomials and constant / piecewise-constant approximants.
//!
//! Fitting always happens in a per-axis basis orthonormalized on the sample
//! grid; coefficients can be converted to monomials afterwards.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::differences::binomial;
use crate::domain::{
    axis_midpoints, lp_quasinorm, nonempty_axis_subsets, power_sum, sample_on_grid, AxisBox,
    CompensatedSum, Exponent, GridFunction, GridSpec, MultiIndex,
};
use crate::error::{Error, Result};

/// One axis of a tensor basis: `φ_k(x) = Σ_j rows[k][j] u^j` with `u = (x - center) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBasis {
    pub center: f64,
    pub scale: f64,
    pub rows: Vec<Vec<f64>>,
}

impl AxisBasis {
    /// Plain monomials `x^k`, `k < degree`.
    pub fn monomial(degree: usize) -> Self {
        Self::shifted(0.0, 1.0, degree)
    }

    /// Monomials `((x - center) / scale)^k`.
    pub fn shifted(center: f64, scale: f64, degree: usize) -> Self {
        let rows = (0..degree)
            .map(|k| {
                let mut row = vec![0.0; degree];
                row[k] = 1.0;
                row
            })
            .collect();
        AxisBasis { center, scale, rows }
    }

    /// Basis orthonormal for the discrete product `w Σ_k g(x_k) h(x_k)`.
    ///
    /// Gram-Schmidt is applied twice to monomials in the centred variable.
    pub fn orthonormal(nodes: &[f64], weight: f64, degree: usize) -> Self {
        let lo = nodes.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let center = 0.5 * (lo + hi);
        let scale = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
        let us: Vec<f64> = nodes.iter().map(|x| (x - center) / scale).collect();
        let dot = |a: &[f64], b: &[f64]| weight * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut vals: Vec<Vec<f64>> = Vec::with_capacity(degree);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(degree);
        for k in 0..degree {
            let mut v: Vec<f64> = us.iter().map(|u| u.powi(k as i32)).collect();
            let mut c = vec![0.0; degree];
            c[k] = 1.0;
            for _ in 0..2 {
                for l in 0..k {
                    let proj = dot(&v, &vals[l]);
                    for (a, b) in v.iter_mut().zip(&vals[l]) {
                        *a -= proj * b;
                    }
                    for (a, b) in c.iter_mut().zip(&rows[l]) {
                        *a -= proj * b;
                    }
                }
            }
            let norm = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
            c.iter_mut().for_each(|a| *a /= norm);
            vals.push(v);
            rows.push(c);
        }
        AxisBasis { center, scale, rows }
    }

    pub fn degree(&self) -> usize {
        self.rows.len()
    }

    /// Values of all basis functions at `x`.
    pub fn eval_all(&self, x: f64) -> Vec<f64> {
        let u = (x - self.center) / self.scale;
        self.rows
            .iter()
            .map(|row| row.iter().rev().fold(0.0, |acc, c| acc * u + c))
            .collect()
    }

    /// `M[k][m]`: coefficient of `x^m` in `φ_k`.
    fn to_monomial_matrix(&self) -> DMatrix<f64> {
        let n = self.degree();
        let mut m = DMatrix::zeros(n, n);
        for (k, row) in self.rows.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                // ((x - c0)/s)^j = s^-j Σ_m C(j,m) x^m (-c0)^(j-m)
                let sj = self.scale.powi(-(j as i32));
                for mm in 0..=j {
                    m[(k, mm)] += c * sj * binomial(j, mm) * (-self.center).powi((j - mm) as i32);
                }
            }
        }
        m
    }
}

/// `φ(x) = Σ_{s < r} c_s Π_i φ_{i,s_i}(x_i)` over a chosen per-axis basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorPolynomial {
    pub degrees: MultiIndex,
    pub axes: Vec<AxisBasis>,
    /// Row-major over `s < degrees`, last axis fastest.
    pub coeffs: Vec<f64>,
}

impl TensorPolynomial {
    pub fn new(degrees: MultiIndex, axes: Vec<AxisBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if axes.len() != degrees.dim() {
            return Err(Error::DimensionMismatch {
                expected: degrees.dim(),
                got: axes.len(),
            });
        }
        if axes.iter().zip(&degrees.0).any(|(a, &r)| a.degree() != r) || coeffs.len() != degrees.count_below() {
            return Err(Error::InvalidParameter(format!(
                "coefficient tensor must have shape {degrees}"
            )));
        }
        Ok(TensorPolynomial { degrees, axes, coeffs })
    }

    pub fn zero(degrees: &MultiIndex) -> Self {
        TensorPolynomial {
            degrees: degrees.clone(),
            axes: degrees.0.iter().map(|&r| AxisBasis::monomial(r)).collect(),
            coeffs: vec![0.0; degrees.count_below()],
        }
    }

    /// Monomial coefficients `c_s` of `Σ c_s x^s`.
    pub fn monomial(degrees: MultiIndex, coeffs: Vec<f64>) -> Result<Self> {
        let axes = degrees.0.iter().map(|&r| AxisBasis::monomial(r)).collect();
        Self::new(degrees, axes, coeffs)
    }

    pub fn dim(&self) -> usize {
        self.degrees.dim()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let vals: Vec<Vec<f64>> = self.axes.iter().zip(x).map(|(a, &xi)| a.eval_all(xi)).collect();
        let mut acc = CompensatedSum::default();
        for (s, c) in self.degrees.below().iter().zip(&self.coeffs) {
            let mut term = *c;
            for (i, &si) in s.0.iter().enumerate() {
                term *= vals[i][si];
            }
            acc.add(term);
        }
        acc.value()
    }

    /// Same polynomial in the plain monomial basis.
    pub fn to_monomial(&self) -> TensorPolynomial {
        let mats: Vec<DMatrix<f64>> = self.axes.iter().map(|a| a.to_monomial_matrix()).collect();
        TensorPolynomial {
            degrees: self.degrees.clone(),
            axes: self.degrees.0.iter().map(|&r| AxisBasis::monomial(r)).collect(),
            coeffs: apply_axis_maps(&self.coeffs, &self.degrees.0, &mats),
        }
    }

    /// Same polynomial expressed in another basis with matching degrees.
    pub fn in_basis(&self, axes: Vec<AxisBasis>) -> Result<TensorPolynomial> {
        let mono = self.to_monomial();
        let mut inverses = Vec::with_capacity(axes.len());
        for a in &axes {
            let m = a.to_monomial_matrix();
            inverses.push(
                m.try_inverse()
                    .ok_or_else(|| Error::InvalidParameter("singular target basis".into()))?,
            );
        }
        let coeffs = apply_axis_maps(&mono.coeffs, &self.degrees.0, &inverses);
        TensorPolynomial::new(self.degrees.clone(), axes, coeffs)
    }

    /// Samples the polynomial on a grid.
    pub fn sample(&self, domain: &AxisBox, spec: &GridSpec) -> Result<GridFunction> {
        sample_on_grid(&|x: &[f64]| self.eval(x), domain, spec)
    }
}

/// `new[.., m, ..] = Σ_k old[.., k, ..] M_i[k][m]` along every axis `i`.
fn apply_axis_maps(coeffs: &[f64], dims: &[usize], mats: &[DMatrix<f64>]) -> Vec<f64> {
    let mut cur = coeffs.to_vec();
    let d = dims.len();
    for axis in 0..d {
        let inner: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let n = dims[axis];
        let mut next = vec![0.0; cur.len()];
        for o in 0..outer {
            for k in 0..n {
                for m in 0..n {
                    let w = mats[axis][(k, m)];
                    if w == 0.0 {
                        continue;
                    }
                    for q in 0..inner {
                        next[(o * n + m) * inner + q] += w * cur[(o * n + k) * inner + q];
                    }
                }
            }
        }
        cur = next;
    }
    cur
}

/// Tensor design matrix of a basis on the midpoint grid of `g`.
struct Design {
    degrees: MultiIndex,
    axes: Vec<AxisBasis>,
    matrix: DMatrix<f64>,
    cell: f64,
}

impl Design {
    fn new(g: &GridFunction, degrees: &MultiIndex) -> Result<Self> {
        let d = g.dim();
        if degrees.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: degrees.dim(),
            });
        }
        for i in 0..d {
            let required = 2 * degrees.0[i];
            if degrees.0[i] == 0 {
                return Err(Error::InvalidParameter("polynomial degrees must be >= 1".into()));
            }
            if g.spec().points()[i] < required {
                return Err(Error::Underdetermined {
                    axis: i + 1,
                    points: g.spec().points()[i],
                    required,
                });
            }
        }
        let widths = g.spec().cell_widths(g.domain());
        let mut axes = Vec::with_capacity(d);
        let mut tables = Vec::with_capacity(d);
        for i in 0..d {
            let nodes = axis_midpoints(g.domain(), g.spec(), i);
            let basis = AxisBasis::orthonormal(&nodes, widths[i], degrees.0[i]);
            tables.push(nodes.iter().map(|&x| basis.eval_all(x)).collect::<Vec<_>>());
            axes.push(basis);
        }
        let cols = degrees.below();
        let rows = MultiIndex::range_inclusive(
            &MultiIndex(vec![0; d]),
            &MultiIndex(g.spec().points().iter().map(|n| n - 1).collect()),
        );
        let mut matrix = DMatrix::zeros(rows.len(), cols.len());
        for (ri, idx) in rows.iter().enumerate() {
            for (ci, s) in cols.iter().enumerate() {
                let mut v = 1.0;
                for i in 0..d {
                    v *= tables[i][idx.0[i]][s.0[i]];
                }
                matrix[(ri, ci)] = v;
            }
        }
        Ok(Design {
            degrees: degrees.clone(),
            axes,
            matrix,
            cell: g.cell_volume(),
        })
    }

    fn residual(&self, f: &[f64], c: &DVector<f64>) -> Vec<f64> {
        let fit = &self.matrix * c;
        f.iter().zip(fit.iter()).map(|(a, b)| a - b).collect()
    }

    fn polynomial(&self, c: &DVector<f64>) -> TensorPolynomial {
        TensorPolynomial {
            degrees: self.degrees.clone(),
            axes: self.axes.clone(),
            coeffs: c.iter().cloned().collect(),
        }
    }

    fn projection(&self, f: &[f64]) -> DVector<f64> {
        let fv = DVector::from_column_slice(f);
        self.matrix.tr_mul(&fv) * self.cell
    }
}

/// Solves `min Σ w_k (f_k - (A c)_k)^2` by Householder QR of `sqrt(W) A`.
fn weighted_least_squares(a: &DMatrix<f64>, f: &[f64], w: &[f64]) -> Option<DVector<f64>> {
    let m = a.ncols();
    let mut aw = a.clone();
    let mut fw = DVector::from_column_slice(f);
    for k in 0..a.nrows() {
        let s = w[k].sqrt();
        aw.row_mut(k).scale_mut(s);
        fw[k] *= s;
    }
    let qr = aw.qr();
    qr.q_tr_mul(&mut fw);
    let r = qr.r();
    r.solve_upper_triangular(&fw.rows(0, m).into_owned())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Projection,
    Irls,
    Exchange,
    MultiStart,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub solver: SolverKind,
    pub iterations: usize,
    pub starts: usize,
    pub converged: bool,
    /// Final error of every start (one entry unless multi-start).
    pub start_errors: Vec<f64>,
    /// `max - min` of `start_errors`.
    pub spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestApproximation {
    pub polynomial: TensorPolynomial,
    /// `||f - φ*||_p` on the grid; an upper bound on the discrete optimum.
    pub error: f64,
    pub diagnostics: SolverDiagnostics,
}

const IRLS_TOL: f64 = 1e-10;
const IRLS_MAX_ITER: usize = 500;
const EXTRA_STARTS: usize = 8;
const SMOOTHING_STAGES: [f64; 7] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];
const STAGE_MAX_ITER: usize = 60;

/// `E_r(f)_p` on the sample grid of `g`, with the minimizing polynomial.
///
/// The p = 2 case is an exact orthogonal projection, `1 <= p < inf` uses IRLS,
/// `p = inf` a simplex exchange on the grid, and `p < 1` a seeded multi-start
/// descent on a smoothed objective.
pub fn best_approx(g: &GridFunction, degrees: &MultiIndex, p: Exponent, seed: u64) -> Result<BestApproximation> {
    let design = Design::new(g, degrees)?;
    let f = g.values();
    let c2 = design.projection(f);
    let error_of = |c: &DVector<f64>| -> f64 {
        let res = design.residual(f, c);
        match p {
            Exponent::Infinity => res.iter().fold(0.0, |m, v| m.max(v.abs())),
            Exponent::Finite(pv) => (power_sum(&res, pv) * design.cell).powf(1.0 / pv),
        }
    };
    let (c, diagnostics) = match p {
        Exponent::Finite(2.0) => {
            let e = error_of(&c2);
            (c2, single(SolverKind::Projection, 0, true, e))
        }
        Exponent::Finite(pv) if pv >= 1.0 => {
            let (c, iterations, converged) = irls(&design, f, pv, c2);
            let e = error_of(&c);
            (c, single(SolverKind::Irls, iterations, converged, e))
        }
        Exponent::Infinity => {
            let (c, iterations, converged) = match minimax(&design.matrix, f) {
                Some(out) => out,
                None => (c2, 0, false),
            };
            let e = error_of(&c);
            (c, single(SolverKind::Exchange, iterations, converged, e))
        }
        Exponent::Finite(pv) => multistart(&design, f, pv, c2, seed, &error_of),
    };
    let error = error_of(&c);
    Ok(BestApproximation {
        polynomial: design.polynomial(&c),
        error,
        diagnostics,
    })
}

fn single(solver: SolverKind, iterations: usize, converged: bool, error: f64) -> SolverDiagnostics {
    SolverDiagnostics {
        solver,
        iterations,
        starts: 1,
        converged,
        start_errors: vec![error],
        spread: 0.0,
    }
}

fn scale_of(f: &[f64]) -> f64 {
    let s = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

fn irls(design: &Design, f: &[f64], p: f64, start: DVector<f64>) -> (DVector<f64>, usize, bool) {
    let eps = 1e-9 * scale_of(f);
    let objective = |c: &DVector<f64>| power_sum(&design.residual(f, c), p);
    let mut c = start;
    let mut obj = objective(&c);
    for it in 1..=IRLS_MAX_ITER {
        if obj <= f64::MIN_POSITIVE {
            return (c, it - 1, true);
        }
        let res = design.residual(f, &c);
        let w: Vec<f64> = res.iter().map(|r| r.abs().max(eps).powf(p - 2.0)).collect();
        let Some(target) = weighted_least_squares(&design.matrix, f, &w) else {
            return (c, it, false);
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial = &c + (&target - &c) * step;
            let o = objective(&trial);
            if o <= obj {
                accepted = Some((trial, o));
                break;
            }
            step *= 0.5;
        }
        let Some((next, o)) = accepted else {
            // no descent direction left at this resolution
            return (c, it, true);
        };
        let change = (obj - o).abs() / obj.max(f64::MIN_POSITIVE);
        c = next;
        obj = o;
        if change < IRLS_TOL {
            return (c, it, true);
        }
    }
    (c, IRLS_MAX_ITER, false)
}

fn multistart(
    design: &Design,
    f: &[f64],
    p: f64,
    c2: DVector<f64>,
    seed: u64,
    error_of: &dyn Fn(&DVector<f64>) -> f64,
) -> (DVector<f64>, SolverDiagnostics) {
    let scale = scale_of(f);
    let res2 = design.residual(f, &c2);
    let amplitude = (power_sum(&res2, 2.0) * design.cell).sqrt().max(1e-12 * scale);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![c2.clone()];
    for _ in 0..EXTRA_STARTS {
        let delta = DVector::from_iterator(c2.len(), (0..c2.len()).map(|_| rng.random_range(-1.0..1.0)));
        starts.push(&c2 + delta * amplitude);
    }

    let true_obj = |c: &DVector<f64>| power_sum(&design.residual(f, c), p);
    let mut best = (c2.clone(), true_obj(&c2));
    let mut start_errors = Vec::with_capacity(starts.len());
    let mut iterations = 0;
    let mut converged = true;
    for start in starts {
        let mut c = start;
        let mut local_best = (c.clone(), true_obj(&c));
        for eps_rel in SMOOTHING_STAGES {
            let eps2 = (eps_rel * scale).powi(2);
            let smooth = |c: &DVector<f64>| {
                let mut acc = CompensatedSum::default();
                for r in design.residual(f, c) {
                    acc.add((r * r + eps2).powf(0.5 * p));
                }
                acc.value()
            };
            let mut obj = smooth(&c);
            let mut stage_done = false;
            for _ in 0..STAGE_MAX_ITER {
                iterations += 1;
                let res = design.residual(f, &c);
                let w: Vec<f64> = res.iter().map(|r| (r * r + eps2).powf(0.5 * p - 1.0)).collect();
                let Some(next) = weighted_least_squares(&design.matrix, f, &w) else {
                    break;
                };
                let o = smooth(&next);
                let t = true_obj(&next);
                if t < local_best.1 {
                    local_best = (next.clone(), t);
                }
                let change = (obj - o).abs() / obj.max(f64::MIN_POSITIVE);
                c = next;
                obj = o;
                if change < IRLS_TOL {
                    stage_done = true;
                    break;
                }
            }
            if !stage_done && eps_rel == SMOOTHING_STAGES[SMOOTHING_STAGES.len() - 1] {
                converged = false;
            }
        }
        start_errors.push(error_of(&local_best.0));
        if local_best.1 < best.1 {
            best = local_best;
        }
    }
    let lo = start_errors.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = start_errors.iter().cloned().fold(0.0, f64::max);
    let diagnostics = SolverDiagnostics {
        solver: SolverKind::MultiStart,
        iterations,
        starts: start_errors.len(),
        converged,
        start_errors,
        spread: hi - lo,
    };
    (best.0, diagnostics)
}

/// Discrete minimax fit `min_c max_k |f_k - (A c)_k|`.
///
/// Solves the dual linear program `max Σ f_k (λ_k - μ_k)` subject to
/// `Σ (λ_k - μ_k) A_k = 0`, `Σ (λ_k + μ_k) = 1`, `λ, μ >= 0` by a revised
/// simplex method; the basis is a reference set of `m + 1` grid points and
/// the optimal simplex multipliers are the coefficients and the deviation.
fn minimax(a: &DMatrix<f64>, f: &[f64]) -> Option<(DVector<f64>, usize, bool)> {
    let n = a.nrows();
    let m = a.ncols();
    let rows = m + 1;
    let real = 2 * n;
    let scale = scale_of(f);
    let tol = 1e-12 * scale;

    let column = |j: usize| -> DVector<f64> {
        let mut v = DVector::zeros(rows);
        if j < real {
            let (k, sign) = if j < n { (j, 1.0) } else { (j - n, -1.0) };
            for c in 0..m {
                v[c] = sign * a[(k, c)];
            }
            v[m] = 1.0;
        } else {
            v[j - real] = 1.0;
        }
        v
    };
    let mut b = DVector::zeros(rows);
    b[m] = 1.0;

    let mut basis: Vec<usize> = (real..real + rows).collect();
    let mut iterations = 0;
    let cap = 50 * rows + 4 * n;

    for phase in 0..2 {
        let cost = |j: usize| -> f64 {
            if phase == 0 {
                if j >= real {
                    -1.0
                } else {
                    0.0
                }
            } else if j < n {
                f[j]
            } else if j < real {
                -f[j - n]
            } else {
                0.0
            }
        };
        let mut degenerate_run = 0;
        loop {
            iterations += 1;
            if iterations > cap {
                let pi = simplex_multipliers(&basis, &column, &cost, rows)?;
                return Some((pi.rows(0, m).into_owned(), iterations, false));
            }
            let bmat = DMatrix::from_columns(&basis.iter().map(|&j| column(j)).collect::<Vec<_>>());
            let lu = bmat.clone().lu();
            let xb = lu.solve(&b)?;
            let cb = DVector::from_iterator(rows, basis.iter().map(|&j| cost(j)));
            let pi = bmat.transpose().lu().solve(&cb)?;

            // reduced costs: λ_k -> c - (s_k + π_z), μ_k -> c - (-s_k + π_z)
            let pic = pi.rows(0, m);
            let s = a * pic;
            let bland = degenerate_run > 2 * rows;
            let mut entering = None;
            let mut best_d = tol;
            for j in 0..real {
                let d = if j < n {
                    cost(j) - (s[j] + pi[m])
                } else {
                    cost(j) - (-s[j - n] + pi[m])
                };
                if d > best_d {
                    if basis.contains(&j) {
                        continue;
                    }
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best_d = d;
                }
            }
            let Some(j) = entering else { break };
            let u = lu.solve(&column(j))?;
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..rows {
                if u[i] > 1e-12 {
                    let theta = xb[i].max(0.0) / u[i];
                    match leave {
                        None => leave = Some((i, theta)),
                        Some((li, lt)) => {
                            if theta < lt - 1e-15 || (theta <= lt + 1e-15 && basis[i] < basis[li]) {
                                leave = Some((i, theta));
                            }
                        }
                    }
                }
            }
            let (i, theta) = leave?;
            degenerate_run = if theta <= 1e-15 { degenerate_run + 1 } else { 0 };
            basis[i] = j;
        }
        if phase == 0 {
            // drive zero-level artificials out of the basis
            for i in 0..rows {
                if basis[i] < real {
                    continue;
                }
                let bmat = DMatrix::from_columns(&basis.iter().map(|&j| column(j)).collect::<Vec<_>>());
                let inv = bmat.try_inverse()?;
                let row = inv.row(i).into_owned();
                if let Some(j) = (0..real)
                    .filter(|j| !basis.contains(j))
                    .find(|&j| (&row * column(j))[0].abs() > 1e-9)
                {
                    basis[i] = j;
                }
            }
        }
    }
    let cost2 = |j: usize| -> f64 {
        if j < n {
            f[j]
        } else if j < real {
            -f[j - n]
        } else {
            0.0
        }
    };
    let pi = simplex_multipliers(&basis, &column, &cost2, rows)?;
    Some((pi.rows(0, m).into_owned(), iterations, true))
}

fn simplex_multipliers(
    basis: &[usize],
    column: &dyn Fn(usize) -> DVector<f64>,
    cost: &dyn Fn(usize) -> f64,
    rows: usize,
) -> Option<DVector<f64>> {
    let bmat = DMatrix::from_columns(&basis.iter().map(|&j| column(j)).collect::<Vec<_>>());
    let cb = DVector::from_iterator(rows, basis.iter().map(|&j| cost(j)));
    bmat.transpose().lu().solve(&cb)
}

/// Mixed partial derivatives `∂^s f(x)`; `None` where unavailable.
pub type DerivativeOracle = Arc<dyn Fn(&[usize], &[f64]) -> Option<f64> + Send + Sync>;

/// Derivative data of `f` at a base point, plus callable mixed derivatives.
#[derive(Clone)]
pub struct DerivativeBundle {
    base: Vec<f64>,
    order: MultiIndex,
    values: BTreeMap<Vec<usize>, f64>,
    oracle: DerivativeOracle,
}

impl std::fmt::Debug for DerivativeBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DerivativeBundle")
            .field("base", &self.base)
            .field("order", &self.order)
            .field("values", &self.values)
            .finish()
    }
}

impl DerivativeBundle {
    /// Collects `∂^s f(x0)` for all `s < order` and checks that every `f^{(r(e))}` is available.
    pub fn from_oracle(order: MultiIndex, base: Vec<f64>, oracle: DerivativeOracle) -> Result<Self> {
        if order.dim() != base.len() {
            return Err(Error::DimensionMismatch {
                expected: base.len(),
                got: order.dim(),
            });
        }
        let mut values = BTreeMap::new();
        for s in order.below() {
            match oracle(&s.0, &base) {
                Some(v) if v.is_finite() => {
                    values.insert(s.0.clone(), v);
                }
                Some(v) => {
                    return Err(Error::NonFinite {
                        point: base.clone(),
                        value: v,
                    })
                }
                None => return Err(Error::MissingDerivative(s.0.clone())),
            }
        }
        for e in nonempty_axis_subsets(order.dim()) {
            let re = order.restrict(&e);
            if oracle(&re.0, &base).is_none() {
                return Err(Error::MissingDerivative(re.0));
            }
        }
        Ok(DerivativeBundle {
            base,
            order,
            values,
            oracle,
        })
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn order(&self) -> &MultiIndex {
        &self.order
    }

    pub fn value(&self, s: &MultiIndex) -> Option<f64> {
        self.values.get(&s.0).copied()
    }

    /// `∂^s f(x)`.
    pub fn derivative(&self, s: &MultiIndex, x: &[f64]) -> Option<f64> {
        (self.oracle)(&s.0, x)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `P_k(f, x0, x) = Σ_{s < k} f^{(s)}(x0) Π (x_i - x0_i)^{s_i} / s_i!`.
pub fn taylor_polynomial(bundle: &DerivativeBundle, k: &MultiIndex) -> Result<TensorPolynomial> {
    if k.dim() != bundle.base.len() {
        return Err(Error::DimensionMismatch {
            expected: bundle.base.len(),
            got: k.dim(),
        });
    }
    let mut coeffs = Vec::with_capacity(k.count_below());
    for s in k.below() {
        let v = bundle
            .value(&s)
            .ok_or_else(|| Error::MissingDerivative(s.0.clone()))?;
        coeffs.push(v / s.0.iter().map(|&si| factorial(si)).product::<f64>());
    }
    let axes = bundle
        .base
        .iter()
        .zip(&k.0)
        .map(|(&c, &r)| AxisBasis::shifted(c, 1.0, r))
        .collect();
    TensorPolynomial::new(k.clone(), axes, coeffs)
}

/// `Σ_{e ≠ ∅} Π_{i∈e} δ_i^{r_i} ||f^{(r(e))}||_{p,Q}`, without the constant.
pub fn taylor_remainder_bound(
    bundle: &DerivativeBundle,
    order: &MultiIndex,
    p: Exponent,
    domain: &AxisBox,
    grid: &GridSpec,
) -> Result<f64> {
    if let Exponent::Finite(pv) = p {
        if pv < 1.0 {
            return Err(Error::ExponentBelowOne(pv));
        }
    }
    let delta = domain.size();
    let mut total = 0.0;
    for e in nonempty_axis_subsets(domain.dim()) {
        let re = order.restrict(&e);
        if bundle.derivative(&re, &bundle.base).is_none() {
            return Err(Error::MissingDerivative(re.0));
        }
        let deriv = sample_on_grid(
            &|x: &[f64]| bundle.derivative(&re, x).unwrap_or(f64::NAN),
            domain,
            grid,
        )?;
        let weight: f64 = e.members().iter().map(|&i| delta.0[i].powi(order.0[i] as i32)).product();
        total += weight * lp_quasinorm(&deriv, p);
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantFit {
    pub beta: f64,
    /// Grid point `y*` whose value is used.
    pub point: Vec<f64>,
    /// `min_y ∫ |f(x) - f(y)|^p dx` over grid points `y`.
    pub scan_minimum: f64,
    /// `||f - β||_p`.
    pub error: f64,
}

/// Constant `β = f(y*)` with `y*` minimizing `g(y) = ∫ |f(x) - f(y)|^p dx` over grid points.
///
/// Ties go to the first grid point in row-major order.
pub fn best_constant(g: &GridFunction, p: Exponent) -> ConstantFit {
    let values = g.values();
    let cell = g.cell_volume();
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut best = (0usize, f64::INFINITY);
    for (k, &y) in values.iter().enumerate() {
        let gy = *cache.entry(y.to_bits()).or_insert_with(|| match p {
            Exponent::Finite(pv) => {
                let mut acc = CompensatedSum::default();
                for &x in values {
                    acc.add(Exponent::pow(pv, (x - y).abs()));
                }
                acc.value() * cell
            }
            Exponent::Infinity => values.iter().fold(0.0, |m, x| m.max((x - y).abs())),
        });
        if gy < best.1 {
            best = (k, gy);
        }
    }
    let beta = values[best.0];
    let mut point = None;
    crate::domain::for_each_midpoint(g.domain(), g.spec(), |flat, x| {
        if flat == best.0 {
            point = Some(x.to_vec());
        }
    });
    ConstantFit {
        beta,
        point: point.unwrap_or_default(),
        scan_minimum: best.1,
        error: lp_quasinorm(&g.map(|v| v - beta), p),
    }
}

/// One constant per cell of a uniform subdivision of the box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    pub domain: AxisBox,
    pub parts: Vec<usize>,
    /// Row-major over cells.
    pub betas: Vec<f64>,
    pub cell_errors: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut flat = 0;
        for i in 0..self.parts.len() {
            let lo = self.domain.lower()[i];
            let len = self.domain.upper()[i] - lo;
            let k = (((x[i] - lo) / len * self.parts[i] as f64).floor() as isize)
                .clamp(0, self.parts[i] as isize - 1) as usize;
            flat = flat * self.parts[i] + k;
        }
        self.betas[flat]
    }
}

/// `P_n(f)`: best constant on each of the `Π n_i` congruent cells.
///
/// The grid resolution must be a multiple of `n_i` on every axis. The total
/// error is `(Σ_cells err^p)^{1/p}` (the max for `p = inf`).
pub fn piecewise_constant_approx(
    g: &GridFunction,
    parts: &[usize],
    p: Exponent,
) -> Result<(PiecewiseConstant, f64)> {
    let d = g.dim();
    if parts.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: parts.len(),
        });
    }
    let points = g.spec().points();
    for i in 0..d {
        if parts[i] == 0 || !points[i].is_multiple_of(parts[i]) {
            return Err(Error::InvalidParameter(format!(
                "grid resolution {} on axis {} is not a multiple of {} cells",
                points[i],
                i + 1,
                parts[i]
            )));
        }
    }
    let len: Vec<usize> = (0..d).map(|i| points[i] / parts[i]).collect();
    let mut betas = Vec::new();
    let mut cell_errors = Vec::new();
    for cell in MultiIndex(parts.to_vec()).below() {
        let start: Vec<usize> = cell.0.iter().zip(&len).map(|(c, l)| c * l).collect();
        let block = g.block(&start, &len)?;
        let fit = best_constant(&block, p);
        betas.push(fit.beta);
        cell_errors.push(fit.error);
    }
    let total = match p {
        Exponent::Finite(pv) => {
            let mut acc = CompensatedSum::default();
            for e in &cell_errors {
                acc.add(e.powf(pv));
            }
            acc.value().powf(1.0 / pv)
        }
        Exponent::Infinity => cell_errors.iter().cloned().fold(0.0, f64::max),
    };
    Ok((
        PiecewiseConstant {
            domain: g.domain().clone(),
            parts: parts.to_vec(),
            betas,
            cell_errors,
        },
        total,
    ))
}
