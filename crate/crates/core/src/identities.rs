//! Exact rational polynomial identities behind the characterization of `P_r`
//! by vanishing mixed differences and behind the Marchaud inequality.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::differences::{difference_field, DifferenceStencil};
use crate::domain::{for_each_midpoint, AxisBox, AxisSubset, Func, GridSpec, MultiIndex, StepVector};
use crate::error::{Error, Result};
use crate::polyapprox::TensorPolynomial;

/// Polynomial in `d` variables with exact rational coefficients; zeros are never stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalMultiPoly {
    dim: usize,
    terms: BTreeMap<Vec<usize>, BigRational>,
}

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn sign(odd: bool) -> BigRational {
    if odd {
        rat(-1)
    } else {
        rat(1)
    }
}

impl RationalMultiPoly {
    pub fn zero(dim: usize) -> Self {
        RationalMultiPoly {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: BigRational) -> Self {
        Self::monomial(vec![0; dim], c)
    }

    pub fn one(dim: usize) -> Self {
        Self::constant(dim, rat(1))
    }

    /// `c x^k`.
    pub fn monomial(exponent: Vec<usize>, c: BigRational) -> Self {
        let mut p = Self::zero(exponent.len());
        p.add_term(exponent, c);
        p
    }

    /// The coordinate `x_axis`.
    pub fn variable(dim: usize, axis: usize) -> Self {
        let mut k = vec![0; dim];
        k[axis] = 1;
        Self::monomial(k, rat(1))
    }

    fn add_term(&mut self, exponent: Vec<usize>, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(exponent.clone()).or_insert_with(BigRational::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.remove(&exponent);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, exponent: &[usize]) -> BigRational {
        self.terms.get(exponent).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<usize>, &BigRational)> {
        self.terms.iter()
    }

    /// Highest power of `x_axis` present; `None` for the zero polynomial.
    pub fn degree_in(&self, axis: usize) -> Option<usize> {
        self.terms.keys().map(|k| k[axis]).max()
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        let mut out = Self::zero(self.dim);
        for (k, v) in &self.terms {
            out.add_term(k.clone(), v * c);
        }
        out
    }

    pub fn pow(&self, n: usize) -> Self {
        let mut out = Self::one(self.dim);
        for _ in 0..n {
            out = &out * self;
        }
        out
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(k, c)| {
                c.to_f64().unwrap_or(f64::NAN) * k.iter().zip(x).map(|(&e, &xi)| xi.powi(e as i32)).product::<f64>()
            })
            .sum()
    }

    /// Quotient and remainder of univariate polynomials.
    pub fn div_rem(&self, divisor: &RationalMultiPoly) -> Result<(RationalMultiPoly, RationalMultiPoly)> {
        if self.dim != 1 || divisor.dim != 1 {
            return Err(Error::InvalidParameter("division is implemented for one variable".into()));
        }
        let dd = divisor
            .degree_in(0)
            .ok_or_else(|| Error::InvalidParameter("division by the zero polynomial".into()))?;
        let lead = divisor.coeff(&[dd]);
        let mut quotient = Self::zero(1);
        let mut rem = self.clone();
        while let Some(rd) = rem.degree_in(0) {
            if rd < dd {
                break;
            }
            let c = rem.coeff(&[rd]) / &lead;
            let step = Self::monomial(vec![rd - dd], c);
            rem = &rem - &(&step * divisor);
            quotient = &quotient + &step;
        }
        Ok((quotient, rem))
    }
}

impl Add for &RationalMultiPoly {
    type Output = RationalMultiPoly;
    fn add(self, rhs: &RationalMultiPoly) -> RationalMultiPoly {
        let mut out = self.clone();
        for (k, v) in &rhs.terms {
            out.add_term(k.clone(), v.clone());
        }
        out
    }
}

impl Sub for &RationalMultiPoly {
    type Output = RationalMultiPoly;
    fn sub(self, rhs: &RationalMultiPoly) -> RationalMultiPoly {
        let mut out = self.clone();
        for (k, v) in &rhs.terms {
            out.add_term(k.clone(), -v.clone());
        }
        out
    }
}

impl Mul for &RationalMultiPoly {
    type Output = RationalMultiPoly;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: &RationalMultiPoly) -> RationalMultiPoly {
        let mut out = RationalMultiPoly::zero(self.dim);
        for (ka, va) in &self.terms {
            for (kb, vb) in &rhs.terms {
                let k = ka.iter().zip(kb).map(|(a, b)| a + b).collect();
                out.add_term(k, va * vb);
            }
        }
        out
    }
}

impl Neg for &RationalMultiPoly {
    type Output = RationalMultiPoly;
    fn neg(self) -> RationalMultiPoly {
        self.scale(&rat(-1))
    }
}

impl fmt::Display for RationalMultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(k, c)| {
                let vars: Vec<String> = k
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(i, &e)| if e == 1 { format!("x{}", i + 1) } else { format!("x{}^{}", i + 1, e) })
                    .collect();
                if vars.is_empty() {
                    c.to_string()
                } else {
                    format!("{}*{}", c, vars.join("*"))
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

fn check_subset(r: &MultiIndex, e: &AxisSubset) -> Result<()> {
    if e.is_empty() {
        return Err(Error::InvalidParameter("axis subset must be nonempty".into()));
    }
    for &i in e.members() {
        if i >= r.dim() {
            return Err(Error::InvalidParameter(format!("axis {} out of range", i + 1)));
        }
        if r.0[i] == 0 {
            return Err(Error::InvalidParameter(format!("r_{} must be >= 1", i + 1)));
        }
    }
    Ok(())
}

fn shifted_power(dim: usize, axis: usize, r: usize) -> RationalMultiPoly {
    // (x_axis - 1)^r
    (&RationalMultiPoly::variable(dim, axis) - &RationalMultiPoly::one(dim)).pow(r)
}

/// `P_e(x) = Π_{i∈e} (x_i - 1)^{r_i}`; the empty product is 1.
pub fn expand_pe(r: &MultiIndex, e: &AxisSubset) -> Result<RationalMultiPoly> {
    if !e.is_empty() {
        check_subset(r, e)?;
    }
    Ok(e.members()
        .iter()
        .fold(RationalMultiPoly::one(r.dim()), |acc, &i| &acc * &shifted_power(r.dim(), i, r.0[i])))
}

/// `A_e(x) = Π_{i∈e} [(x_i - 1)^{r_i} - (-1)^{r_i}]`; the empty product is 1.
pub fn expand_ae(r: &MultiIndex, e: &AxisSubset) -> Result<RationalMultiPoly> {
    if !e.is_empty() {
        check_subset(r, e)?;
    }
    let d = r.dim();
    Ok(e.members().iter().fold(RationalMultiPoly::one(d), |acc, &i| {
        let factor = &shifted_power(d, i, r.0[i]) - &RationalMultiPoly::constant(d, sign(r.0[i] % 2 == 1));
        &acc * &factor
    }))
}

/// `1 = Σ_{0<k≤r} a_k x^k + Σ_{e≠∅} b_e P_e(x)` with exact coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitDecomposition {
    pub order: MultiIndex,
    /// `a_k` for `1 <= k_i <= r_i`, row-major.
    pub a: Vec<(MultiIndex, BigRational)>,
    /// `b_e` for nonempty `e`, by cardinality then lexicographically.
    pub b: Vec<(AxisSubset, BigRational)>,
}

impl UnitDecomposition {
    /// `Σ a_k x^k + Σ b_e P_e`, which must equal 1.
    pub fn expand(&self) -> Result<RationalMultiPoly> {
        let d = self.order.dim();
        let mut total = RationalMultiPoly::zero(d);
        for (k, c) in &self.a {
            total = &total + &RationalMultiPoly::monomial(k.0.clone(), c.clone());
        }
        for (e, c) in &self.b {
            total = &total + &expand_pe(&self.order, e)?.scale(c);
        }
        Ok(total)
    }

    pub fn verify(&self) -> Result<()> {
        let total = self.expand()?;
        if total != RationalMultiPoly::one(self.order.dim()) {
            return Err(Error::IdentityFailure(format!(
                "unit decomposition for r = {} sums to {total}",
                self.order
            )));
        }
        Ok(())
    }

    pub fn a_f64(&self) -> Vec<(MultiIndex, f64)> {
        self.a.iter().map(|(k, c)| (k.clone(), c.to_f64().unwrap_or(f64::NAN))).collect()
    }

    pub fn b_f64(&self) -> Vec<(AxisSubset, f64)> {
        self.b.iter().map(|(e, c)| (e.clone(), c.to_f64().unwrap_or(f64::NAN))).collect()
    }

    pub fn summary(&self) -> UnitDecompositionSummary {
        UnitDecompositionSummary {
            order: self.order.clone(),
            a: self
                .a
                .iter()
                .map(|(k, c)| CoefficientEntry {
                    index: k.to_string(),
                    exact: c.to_string(),
                    value: c.to_f64().unwrap_or(f64::NAN),
                })
                .collect(),
            b: self
                .b
                .iter()
                .map(|(e, c)| CoefficientEntry {
                    index: e.to_string(),
                    exact: c.to_string(),
                    value: c.to_f64().unwrap_or(f64::NAN),
                })
                .collect(),
        }
    }
}

/// Serializable view of a unit decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitDecompositionSummary {
    pub order: MultiIndex,
    pub a: Vec<CoefficientEntry>,
    pub b: Vec<CoefficientEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    pub index: String,
    pub exact: String,
    pub value: f64,
}

/// Builds `(a_k, b_e)` by telescoping and verifies the identity exactly.
///
/// With `c_i = (-1)^{r_i}` and `A_i = P_i - c_i`,
/// `P_[d] = Π (A_i + c_i) = Σ_e Π_{i∉e} c_i A_e`, and every `A_e` with `e ≠ [d]`
/// expands back into `Σ_{u⊆e} (-1)^{|e\u|} Π_{i∈e\u} c_i P_u`. Collecting the
/// constants leaves `γ = -(-1)^d Π c_i`, and dividing by `γ` gives the
/// decomposition. `A_[d]` is divisible by `x_1 ⋯ x_d`, which yields the `a_k`.
pub fn unit_decomposition(r: &MultiIndex) -> Result<UnitDecomposition> {
    let d = r.dim();
    if d == 0 || r.0.contains(&0) {
        return Err(Error::InvalidParameter(format!("every r_i must be >= 1, got {r}")));
    }
    let c: Vec<BigRational> = r.0.iter().map(|&ri| sign(ri % 2 == 1)).collect();
    let prod_c = |axes: &[usize]| axes.iter().fold(rat(1), |acc, &i| acc * &c[i]);
    let full = AxisSubset::full(d);

    let mut b: BTreeMap<AxisSubset, BigRational> = BTreeMap::new();
    *b.entry(full.clone()).or_insert_with(BigRational::zero) += rat(1);
    let mut constant = BigRational::zero();
    for e in full.nonempty_subsets() {
        if e == full {
            continue;
        }
        let outside = prod_c(full.minus(&e).members());
        let mut subsets = vec![AxisSubset::empty()];
        subsets.extend(e.nonempty_subsets());
        for u in subsets {
            let rest = e.minus(&u);
            let coef = -(outside.clone() * sign(rest.len() % 2 == 1) * prod_c(rest.members()));
            if u.is_empty() {
                constant += coef;
            } else {
                *b.entry(u).or_insert_with(BigRational::zero) += coef;
            }
        }
    }
    // Π c - constant = P_[d] - A_[d] + Σ b_u P_u (the constant moved to the left)
    let gamma = prod_c(full.members()) - constant;
    if gamma.is_zero() {
        return Err(Error::IdentityFailure("normalizing constant vanished".into()));
    }
    let a_poly = expand_ae(r, &full)?.scale(&(-(rat(1) / &gamma)));

    let mut a = Vec::new();
    for k in MultiIndex::range_inclusive(&MultiIndex::uniform(d, 1), r) {
        let v = a_poly.coeff(&k.0);
        if !v.is_zero() {
            a.push((k, v));
        }
    }
    if a.len() != a_poly.len() {
        return Err(Error::IdentityFailure("A_[d] has a monomial outside 0 < k <= r".into()));
    }
    let mut b: Vec<(AxisSubset, BigRational)> = b
        .into_iter()
        .filter(|(_, v)| !v.is_zero())
        .map(|(e, v)| (e, v / &gamma))
        .collect();
    let order_of = full.nonempty_subsets();
    b.sort_by_key(|(e, _)| order_of.iter().position(|s| s == e));

    let decomposition = UnitDecomposition { order: r.clone(), a, b };
    decomposition.verify()?;
    Ok(decomposition)
}

/// Outcome of sampling the reproduction formula.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproductionReport {
    /// `max |f(x) - Σ a_k f(x + k h)|`.
    pub residual: f64,
    /// `max |f(x) - Σ a_k f(x + k h) - Σ b_e Δ_h^{r(e)} f(x)|`.
    pub consistency: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Samples `f(x) = Σ a_k f(x + k h) + Σ b_e Δ_h^{r(e)} f(x)` at grid midpoints of `Q`.
///
/// Pairs `(x, h)` whose stencil `x + k h`, `0 <= k <= r`, leaves `Q` are skipped.
pub fn reproduction_residual(
    f: &Func,
    r: &MultiIndex,
    domain: &AxisBox,
    steps: &[StepVector],
    grid: &GridSpec,
) -> Result<ReproductionReport> {
    let decomposition = unit_decomposition(r)?;
    let a = decomposition.a_f64();
    let stencils: Vec<(f64, DifferenceStencil)> = decomposition
        .b_f64()
        .into_iter()
        .map(|(e, v)| (v, DifferenceStencil::new(&r.restrict(&e))))
        .collect();
    let d = r.dim();
    let mut report = ReproductionReport {
        residual: 0.0,
        consistency: 0.0,
        evaluated: 0,
        skipped: 0,
    };
    let mut scratch = vec![0.0; d];
    let mut shifted = vec![0.0; d];
    for h in steps {
        if h.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: h.dim() });
        }
        let far: Vec<f64> = (0..d).map(|i| r.0[i] as f64 * h.0[i]).collect();
        for_each_midpoint(domain, grid, |_, x| {
            let end: Vec<f64> = x.iter().zip(&far).map(|(a, b)| a + b).collect();
            if !domain.contains(&end) {
                report.skipped += 1;
                return;
            }
            let fx = f(x);
            let mut sum = 0.0;
            for (k, coef) in &a {
                for i in 0..d {
                    shifted[i] = x[i] + k.0[i] as f64 * h.0[i];
                }
                sum += coef * f(&shifted);
            }
            let residual = fx - sum;
            let mut diffs = 0.0;
            for (coef, stencil) in &stencils {
                diffs += coef * stencil.apply(f, x, h.as_slice(), &mut scratch);
            }
            report.residual = report.residual.max(residual.abs());
            report.consistency = report.consistency.max((residual - diffs).abs());
            report.evaluated += 1;
        });
    }
    if report.evaluated == 0 {
        return Err(Error::AllSamplesSkipped);
    }
    Ok(report)
}

/// `max |Δ_h^{r(e)} φ(x)|` over grid midpoints of `Q_{r(e)h}`, with `r` the degrees of `φ`.
pub fn annihilation_residual(
    phi: &TensorPolynomial,
    e: &AxisSubset,
    h: &StepVector,
    domain: &AxisBox,
    grid: &GridSpec,
) -> Result<f64> {
    check_subset(&phi.degrees, e)?;
    let order = phi.degrees.restrict(e);
    let field = difference_field(&|x: &[f64]| phi.eval(x), &order, h, domain, grid)?;
    Ok(field.map_or(0.0, |g| g.max_abs()))
}

/// `P` with `(x-1)^k = 2^{-k} (x^2-1)^k + P(x) (x-1)^{k+1}`, checked exactly.
pub fn halving_identity(k: usize) -> Result<RationalMultiPoly> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let x = RationalMultiPoly::variable(1, 0);
    let one = RationalMultiPoly::one(1);
    let half_k = BigRational::new(BigInt::one(), BigInt::from(2).pow(k as u32));
    let numerator = &one - &(&x + &one).pow(k).scale(&half_k);
    let (p, rem) = numerator.div_rem(&(&x - &one))?;
    if !rem.is_zero() {
        return Err(Error::IdentityFailure(format!("division by x - 1 left remainder {rem}")));
    }
    let lhs = (&x - &one).pow(k);
    let rhs = &(&(&x * &x) - &one).pow(k).scale(&half_k) + &(&p * &(&x - &one).pow(k + 1));
    if lhs != rhs {
        return Err(Error::IdentityFailure(format!("halving identity fails for k = {k}")));
    }
    Ok(p)
}

/// Absolute value of the largest coefficient, as a float.
pub fn max_abs_coefficient(p: &RationalMultiPoly) -> f64 {
    p.terms()
        .map(|(_, c)| c.abs().to_f64().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max)
}
