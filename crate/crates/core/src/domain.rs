//! Boxes, multi-indices, axis subsets, uniform midpoint grids and L_p quasi-norms.
//!
//! Everything here is plain immutable data. Grid values are stored row-major
//! with axis 0 varying slowest, and every reduction over cells runs serially in
//! that order with compensated summation so results are bit-stable.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real-valued function of `d` real variables.
pub type Func<'a> = dyn Fn(&[f64]) -> f64 + Send + Sync + 'a;

/// Relative slack used when deciding that a shrunken interval has collapsed.
const DEGENERATE_REL: f64 = 1e-12;

/// Exponent `p` of an L_p quasi-norm, `0 < p <= inf`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn finite(p: f64) -> Result<Self> {
        if p.is_finite() && p > 0.0 {
            Ok(Exponent::Finite(p))
        } else if p == f64::INFINITY {
            Ok(Exponent::Infinity)
        } else {
            Err(Error::InvalidExponent(p.to_string()))
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Exponent::Infinity)
    }

    /// The exponent as a float, `f64::INFINITY` for the sup norm.
    pub fn value(&self) -> f64 {
        match *self {
            Exponent::Finite(p) => p,
            Exponent::Infinity => f64::INFINITY,
        }
    }

    /// `x^p` for finite `p`, with the common cases done without `powf`.
    #[inline]
    pub(crate) fn pow(p: f64, x: f64) -> f64 {
        if p == 1.0 {
            x
        } else if p == 2.0 {
            x * x
        } else if p == 0.5 {
            x.sqrt()
        } else {
            x.powf(p)
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Exponent::Infinity),
            _ => {
                let p = if let Some((num, den)) = s.split_once('/') {
                    let num: f64 = num.trim().parse().map_err(|_| Error::InvalidExponent(s.into()))?;
                    let den: f64 = den.trim().parse().map_err(|_| Error::InvalidExponent(s.into()))?;
                    num / den
                } else {
                    s.parse().map_err(|_| Error::InvalidExponent(s.into()))?
                };
                Exponent::finite(p)
            }
        }
    }
}

impl TryFrom<String> for Exponent {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Exponent> for String {
    fn from(p: Exponent) -> String {
        p.to_string()
    }
}

/// Componentwise vector of steps `h`, bounds `t` or sizes `δ(Q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepVector(pub Vec<f64>);

impl StepVector {
    pub fn new(entries: Vec<f64>) -> Self {
        StepVector(entries)
    }

    pub fn zeros(d: usize) -> Self {
        StepVector(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Componentwise product `yh = (y_1 h_1, ..., y_d h_d)`.
    pub fn hadamard(&self, other: &StepVector) -> StepVector {
        StepVector(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }

    pub fn scale(&self, c: f64) -> StepVector {
        StepVector(self.0.iter().map(|a| a * c).collect())
    }

    /// `self` with entry `axis` replaced by `value`.
    pub fn with(&self, axis: usize, value: f64) -> StepVector {
        let mut v = self.0.clone();
        v[axis] = value;
        StepVector(v)
    }
}

/// Multi-index in `Z_+^d`, used for orders `r`, `k` and exponents `s`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        MultiIndex(entries)
    }

    pub fn uniform(d: usize, value: usize) -> Self {
        MultiIndex(vec![value; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// `self <= other` componentwise.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `self < other` componentwise, i.e. strictly on every axis.
    pub fn lt(&self, other: &MultiIndex) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a < b)
    }

    /// `r(e)`: keeps entries on `e`, zeroes the rest.
    pub fn restrict(&self, e: &AxisSubset) -> MultiIndex {
        MultiIndex(
            self.0
                .iter()
                .enumerate()
                .map(|(i, &v)| if e.contains(i) { v } else { 0 })
                .collect(),
        )
    }

    /// Number of multi-indices `s` with `0 <= s < self`.
    pub fn count_below(&self) -> usize {
        self.0.iter().product()
    }

    /// All `s` with `0 <= s_i < self_i`, row-major (last axis fastest).
    pub fn below(&self) -> Vec<MultiIndex> {
        let lo = vec![0; self.dim()];
        let hi: Vec<usize> = self.0.iter().map(|&v| v.saturating_sub(1)).collect();
        if self.0.contains(&0) {
            return Vec::new();
        }
        box_range(&lo, &hi)
    }

    /// All `k` with `lo_i <= k_i <= hi_i`, row-major.
    pub fn range_inclusive(lo: &MultiIndex, hi: &MultiIndex) -> Vec<MultiIndex> {
        if lo.0.iter().zip(&hi.0).any(|(a, b)| a > b) {
            return Vec::new();
        }
        box_range(&lo.0, &hi.0)
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

fn box_range(lo: &[usize], hi: &[usize]) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut cur = lo.to_vec();
    loop {
        out.push(MultiIndex(cur.clone()));
        let mut axis = cur.len();
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            if cur[axis] < hi[axis] {
                cur[axis] += 1;
                break;
            }
            cur[axis] = lo[axis];
        }
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Subset `e` of the axes `{0, ..., d-1}`, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AxisSubset(Vec<usize>);

impl AxisSubset {
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        AxisSubset(members)
    }

    pub fn full(d: usize) -> Self {
        AxisSubset((0..d).collect())
    }

    pub fn empty() -> Self {
        AxisSubset(Vec::new())
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, axis: usize) -> bool {
        self.0.binary_search(&axis).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Members of `self` that are not in `other`.
    pub fn minus(&self, other: &AxisSubset) -> AxisSubset {
        AxisSubset(self.0.iter().copied().filter(|&i| !other.contains(i)).collect())
    }

    /// Nonempty subsets of `self`, by cardinality then lexicographically.
    pub fn nonempty_subsets(&self) -> Vec<AxisSubset> {
        let n = self.0.len();
        let mut subsets: Vec<AxisSubset> = (1u64..(1u64 << n))
            .map(|mask| {
                AxisSubset(
                    (0..n)
                        .filter(|&j| mask & (1 << j) != 0)
                        .map(|j| self.0[j])
                        .collect(),
                )
            })
            .collect();
        subsets.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
        subsets
    }
}

impl fmt::Display for AxisSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| (v + 1).to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// All `2^d - 1` nonempty subsets of `[d]`, by cardinality then lexicographically.
pub fn nonempty_axis_subsets(d: usize) -> Vec<AxisSubset> {
    AxisSubset::full(d).nonempty_subsets()
}

/// Axis-aligned box `[a_1,b_1] x ... x [a_d,b_d]` with `a_i < b_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl AxisBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidBox("dimension must be at least 1".into()));
        }
        for (i, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidBox(format!(
                    "axis {}: need finite lower < upper, got [{a}, {b}]",
                    i + 1
                )));
            }
        }
        Ok(AxisBox { lower, upper })
    }

    /// The unit cube `[0,1]^d`.
    pub fn unit(d: usize) -> Self {
        AxisBox {
            lower: vec![0.0; d],
            upper: vec![1.0; d],
        }
    }

    /// Box from interleaved bounds `a_1, b_1, a_2, b_2, ...`.
    pub fn from_pairs(bounds: &[f64]) -> Result<Self> {
        if !bounds.len().is_multiple_of(2) {
            return Err(Error::InvalidBox(format!(
                "expected pairs of bounds, got {} numbers",
                bounds.len()
            )));
        }
        let lower = bounds.iter().step_by(2).copied().collect();
        let upper = bounds.iter().skip(1).step_by(2).copied().collect();
        AxisBox::new(lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// `δ(Q) = (b_1 - a_1, ..., b_d - a_d)`.
    pub fn size(&self) -> StepVector {
        StepVector(self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).collect())
    }

    pub fn volume(&self) -> f64 {
        self.size().0.iter().product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(i, &v)| {
            let slack = DEGENERATE_REL * (self.upper[i] - self.lower[i]).max(1.0);
            v >= self.lower[i] - slack && v <= self.upper[i] + slack
        })
    }

    /// `Q_y = {x in Q : x + y in Q}`; `None` when an axis collapses.
    pub fn shrink(&self, y: &StepVector) -> Option<AxisBox> {
        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        for i in 0..self.dim() {
            let yi = y.0[i];
            if yi >= 0.0 {
                upper[i] -= yi;
            } else {
                lower[i] -= yi;
            }
            let len = self.upper[i] - self.lower[i];
            if upper[i] - lower[i] <= DEGENERATE_REL * len {
                return None;
            }
        }
        Some(AxisBox { lower, upper })
    }

    /// Splits every axis into `parts[i]` congruent pieces, row-major.
    pub fn subdivide(&self, parts: &[usize]) -> Vec<AxisBox> {
        let hi: Vec<usize> = parts.iter().map(|&m| m.max(1) - 1).collect();
        box_range(&vec![0; self.dim()], &hi)
            .into_iter()
            .map(|idx| {
                let mut lower = Vec::with_capacity(self.dim());
                let mut upper = Vec::with_capacity(self.dim());
                for (i, &j) in idx.0.iter().enumerate() {
                    let m = parts[i].max(1);
                    let w = (self.upper[i] - self.lower[i]) / m as f64;
                    lower.push(self.lower[i] + j as f64 * w);
                    upper.push(if j + 1 == m {
                        self.upper[i]
                    } else {
                        self.lower[i] + (j + 1) as f64 * w
                    });
                }
                AxisBox { lower, upper }
            })
            .collect()
    }
}

/// Number of midpoint cells per axis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    points: Vec<usize>,
}

impl GridSpec {
    pub fn new(points: Vec<usize>) -> Result<Self> {
        if points.is_empty() || points.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "grid needs a positive point count on every axis, got {points:?}"
            )));
        }
        Ok(GridSpec { points })
    }

    pub fn uniform(d: usize, n: usize) -> Self {
        GridSpec {
            points: vec![n.max(1); d],
        }
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn total(&self) -> usize {
        self.points.iter().product()
    }

    pub fn cell_widths(&self, domain: &AxisBox) -> Vec<f64> {
        domain
            .size()
            .0
            .iter()
            .zip(&self.points)
            .map(|(len, &n)| len / n as f64)
            .collect()
    }

    /// Same resolution density carried from `parent` over to a sub-box `child`:
    /// `max(1, ceil(n_i |child|_i / |parent|_i))` points per axis.
    pub fn density_on(&self, parent: &AxisBox, child: &AxisBox) -> GridSpec {
        let ps = parent.size();
        let cs = child.size();
        let points = self
            .points
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let raw = n as f64 * cs.0[i] / ps.0[i];
                ((raw - 1e-9).ceil() as usize).max(1)
            })
            .collect();
        GridSpec { points }
    }

    /// Doubles the resolution on every axis.
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            points: self.points.iter().map(|n| 2 * n).collect(),
        }
    }

    pub(crate) fn strides(&self) -> Vec<usize> {
        let d = self.points.len();
        let mut strides = vec![1; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.points[i + 1];
        }
        strides
    }
}

/// Midpoint coordinates of the cells along one axis.
pub fn axis_midpoints(domain: &AxisBox, spec: &GridSpec, axis: usize) -> Vec<f64> {
    let n = spec.points[axis];
    let a = domain.lower[axis];
    let w = (domain.upper[axis] - a) / n as f64;
    (0..n).map(|k| a + (k as f64 + 0.5) * w).collect()
}

/// Calls `visit(flat_index, point)` for every cell midpoint in row-major order.
pub fn for_each_midpoint(domain: &AxisBox, spec: &GridSpec, mut visit: impl FnMut(usize, &[f64])) {
    let d = domain.dim();
    let mids: Vec<Vec<f64>> = (0..d).map(|i| axis_midpoints(domain, spec, i)).collect();
    let mut idx = vec![0usize; d];
    let mut x: Vec<f64> = mids.iter().map(|m| m[0]).collect();
    let total = spec.total();
    for flat in 0..total {
        visit(flat, &x);
        let mut axis = d;
        while axis > 0 {
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < spec.points[axis] {
                x[axis] = mids[axis][idx[axis]];
                break;
            }
            idx[axis] = 0;
            x[axis] = mids[axis][0];
        }
    }
}

/// Function samples at the cell midpoints of a uniform tensor grid over a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    domain: AxisBox,
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(domain: AxisBox, spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if spec.dim() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: spec.dim(),
            });
        }
        if values.len() != spec.total() {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                spec.total(),
                values.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let mut point = None;
            for_each_midpoint(&domain, &spec, |flat, x| {
                if flat == i {
                    point = Some(x.to_vec());
                }
            });
            return Err(Error::NonFinite {
                point: point.unwrap_or_default(),
                value: *v,
            });
        }
        Ok(GridFunction { domain, spec, values })
    }

    /// Shape is the caller's responsibility; values may be non-finite.
    pub(crate) fn from_parts(domain: AxisBox, spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.total());
        GridFunction { domain, spec, values }
    }

    pub fn domain(&self) -> &AxisBox {
        &self.domain
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spec.cell_widths(&self.domain).iter().product()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Pointwise map into a new grid function on the same grid.
    pub fn map(&self, mut g: impl FnMut(f64) -> f64) -> GridFunction {
        GridFunction {
            domain: self.domain.clone(),
            spec: self.spec.clone(),
            values: self.values.iter().map(|&v| g(v)).collect(),
        }
    }

    /// Pointwise combination with another function on the same grid.
    pub fn zip_with(&self, other: &GridFunction, mut g: impl FnMut(f64, f64) -> f64) -> Result<GridFunction> {
        if self.spec != other.spec || self.domain != other.domain {
            return Err(Error::InvalidParameter("grid functions live on different grids".into()));
        }
        Ok(GridFunction {
            domain: self.domain.clone(),
            spec: self.spec.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| g(a, b)).collect(),
        })
    }

    /// The block of cells `[start_i, start_i + len_i)` as a grid function on its own sub-box.
    pub fn block(&self, start: &[usize], len: &[usize]) -> Result<GridFunction> {
        let d = self.dim();
        let widths = self.spec.cell_widths(&self.domain);
        let mut lower = Vec::with_capacity(d);
        let mut upper = Vec::with_capacity(d);
        for i in 0..d {
            if len[i] == 0 || start[i] + len[i] > self.spec.points[i] {
                return Err(Error::InvalidParameter(format!("block out of range on axis {}", i + 1)));
            }
            lower.push(self.domain.lower[i] + start[i] as f64 * widths[i]);
            upper.push(if start[i] + len[i] == self.spec.points[i] {
                self.domain.upper[i]
            } else {
                self.domain.lower[i] + (start[i] + len[i]) as f64 * widths[i]
            });
        }
        let spec = GridSpec::new(len.to_vec())?;
        let strides = self.spec.strides();
        let mut values = Vec::with_capacity(spec.total());
        for idx in MultiIndex::range_inclusive(
            &MultiIndex(vec![0; d]),
            &MultiIndex(len.iter().map(|l| l - 1).collect()),
        ) {
            let flat: usize = idx.0.iter().enumerate().map(|(i, &k)| (start[i] + k) * strides[i]).sum();
            values.push(self.values[flat]);
        }
        Ok(GridFunction {
            domain: AxisBox { lower, upper },
            spec,
            values,
        })
    }
}

/// Samples `f` at every cell midpoint, row-major by axis order.
pub fn sample_on_grid(f: &Func, domain: &AxisBox, spec: &GridSpec) -> Result<GridFunction> {
    if spec.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: spec.dim(),
        });
    }
    let mut values = Vec::with_capacity(spec.total());
    let mut bad = None;
    for_each_midpoint(domain, spec, |_, x| {
        let v = f(x);
        if !v.is_finite() && bad.is_none() {
            bad = Some((x.to_vec(), v));
        }
        values.push(v);
    });
    if let Some((point, value)) = bad {
        return Err(Error::NonFinite { point, value });
    }
    Ok(GridFunction {
        domain: domain.clone(),
        spec: spec.clone(),
        values,
    })
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `Σ |v|^p` over a slice, in order.
pub(crate) fn power_sum(values: &[f64], p: f64) -> f64 {
    let mut acc = CompensatedSum::default();
    for &v in values {
        acc.add(Exponent::pow(p, v.abs()));
    }
    acc.value()
}

/// `∫ |g|^p` by the composite midpoint rule; the sup of `|g|` for `p = inf`.
pub fn lp_power(g: &GridFunction, p: Exponent) -> f64 {
    match p {
        Exponent::Finite(p) => power_sum(&g.values, p) * g.cell_volume(),
        Exponent::Infinity => g.max_abs(),
    }
}

/// `||g||_p` by the composite midpoint rule.
pub fn lp_quasinorm(g: &GridFunction, p: Exponent) -> f64 {
    match p {
        Exponent::Finite(p) => lp_power(g, Exponent::Finite(p)).powf(1.0 / p),
        Exponent::Infinity => g.max_abs(),
    }
}

/// Quasi-norm of a possibly empty field; an empty domain has norm zero.
pub fn lp_quasinorm_or_zero(g: Option<&GridFunction>, p: Exponent) -> f64 {
    g.map_or(0.0, |g| lp_quasinorm(g, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p(v: f64) -> Exponent {
        Exponent::finite(v).unwrap()
    }

    #[test]
    fn box_size_examples() {
        assert_eq!(AxisBox::unit(2).size().0, vec![1.0, 1.0]);
        let q = AxisBox::new(vec![0.0, 0.0], vec![1.0, 0.5]).unwrap();
        assert_eq!(q.size().0, vec![1.0, 0.5]);
        let q = AxisBox::new(vec![-1.0], vec![1.0]).unwrap();
        assert_eq!(q.size().0, vec![2.0]);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(AxisBox::new(vec![1.0], vec![1.0]).is_err());
        assert!(AxisBox::new(vec![0.0, 2.0], vec![1.0, 1.0]).is_err());
        assert!(AxisBox::new(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(AxisBox::from_pairs(&[0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn shrink_domain_examples() {
        let q = AxisBox::unit(1);
        let s = q.shrink(&StepVector(vec![0.3])).unwrap();
        assert_relative_eq!(s.lower()[0], 0.0);
        assert_relative_eq!(s.upper()[0], 0.7);
        let s = q.shrink(&StepVector(vec![-0.3])).unwrap();
        assert_relative_eq!(s.lower()[0], 0.3);
        assert_relative_eq!(s.upper()[0], 1.0);
        assert!(q.shrink(&StepVector(vec![1.5])).is_none());
        assert!(q.shrink(&StepVector(vec![1.0])).is_none());
        assert_eq!(q.shrink(&StepVector(vec![0.0])).unwrap(), q);
    }

    #[test]
    fn exponent_parsing() {
        assert_eq!("inf".parse::<Exponent>().unwrap(), Exponent::Infinity);
        assert_eq!("1/2".parse::<Exponent>().unwrap(), Exponent::Finite(0.5));
        assert_eq!("2".parse::<Exponent>().unwrap(), Exponent::Finite(2.0));
        assert!("0".parse::<Exponent>().is_err());
        assert!("-1".parse::<Exponent>().is_err());
        assert!("abc".parse::<Exponent>().is_err());
        assert!(Exponent::finite(0.0).is_err());
    }

    #[test]
    fn constant_has_unit_norm_on_unit_cube() {
        let q = AxisBox::unit(2);
        let g = sample_on_grid(&|_: &[f64]| 1.0, &q, &GridSpec::uniform(2, 7)).unwrap();
        for pv in [0.3, 0.5, 1.0, 2.0, 5.0] {
            assert_relative_eq!(lp_quasinorm(&g, p(pv)), 1.0, epsilon = 1e-13);
        }
        assert_eq!(lp_quasinorm(&g, Exponent::Infinity), 1.0);
    }

    #[test]
    fn norm_of_identity_matches_closed_forms() {
        let q = AxisBox::unit(1);
        let g = sample_on_grid(&|x: &[f64]| x[0], &q, &GridSpec::uniform(1, 512)).unwrap();
        // ∫ x^2 = 1/3
        assert_relative_eq!(lp_quasinorm(&g, p(2.0)), (1.0f64 / 3.0).sqrt(), epsilon = 1e-5);
        // ∫ x^{1/2} = 2/3
        assert_relative_eq!(lp_quasinorm(&g, p(0.5)), 4.0 / 9.0, epsilon = 1e-4);
        assert_relative_eq!(lp_quasinorm(&g, Exponent::Infinity), 1.0 - 0.5 / 512.0);
    }

    #[test]
    fn midpoint_rule_is_second_order() {
        // ∫_0^1 e^{2x} dx = (e^2 - 1) / 2
        let q = AxisBox::unit(1);
        let err = |n: usize| {
            let g = sample_on_grid(
                &|x: &[f64]| x[0].exp(),
                &q,
                &GridSpec::uniform(1, n),
            )
            .unwrap();
            (lp_power(&g, p(2.0)) - (std::f64::consts::E.powi(2) - 1.0) / 2.0).abs()
        };
        for n in [16, 32, 64] {
            let ratio = err(n) / err(2 * n);
            assert!((2.0..=8.0).contains(&ratio), "n = {n}, ratio = {ratio}");
        }
    }

    #[test]
    fn sample_examples() {
        let q = AxisBox::unit(1);
        let g = sample_on_grid(&|x: &[f64]| x[0], &q, &GridSpec::uniform(1, 2)).unwrap();
        assert_eq!(g.values(), &[0.25, 0.75]);
        let g = sample_on_grid(&|x: &[f64]| x[0] + x[1], &AxisBox::unit(2), &GridSpec::uniform(2, 1)).unwrap();
        assert_eq!(g.values(), &[1.0]);
        let g = sample_on_grid(&|_: &[f64]| 3.0, &AxisBox::unit(3), &GridSpec::new(vec![2, 3, 4]).unwrap()).unwrap();
        assert!(g.values().iter().all(|&v| v == 3.0));
        assert_eq!(g.values().len(), 24);
    }

    #[test]
    fn row_major_axis_order() {
        let q = AxisBox::unit(2);
        let g = sample_on_grid(&|x: &[f64]| 10.0 * x[0] + x[1], &q, &GridSpec::new(vec![2, 3]).unwrap()).unwrap();
        let w = [0.25, 0.75];
        let v = [1.0 / 6.0, 0.5, 5.0 / 6.0];
        let expected: Vec<f64> = w.iter().flat_map(|a| v.iter().map(move |b| 10.0 * a + b)).collect();
        for (a, b) in g.values().iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn non_finite_samples_rejected() {
        let q = AxisBox::unit(1);
        let err = sample_on_grid(&|x: &[f64]| 1.0 / (x[0] - 0.25), &q, &GridSpec::uniform(1, 2)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn subsets_in_documented_order() {
        assert_eq!(nonempty_axis_subsets(1), vec![AxisSubset::new(vec![0])]);
        assert_eq!(
            nonempty_axis_subsets(2),
            vec![AxisSubset::new(vec![0]), AxisSubset::new(vec![1]), AxisSubset::new(vec![0, 1])]
        );
        let s3 = nonempty_axis_subsets(3);
        assert_eq!(s3.len(), 7);
        assert_eq!(s3[3], AxisSubset::new(vec![0, 1]));
        assert_eq!(s3[6], AxisSubset::full(3));
    }

    #[test]
    fn restrict_zeroes_outside_subset() {
        let r = MultiIndex(vec![2, 3, 4]);
        assert_eq!(r.restrict(&AxisSubset::new(vec![0, 2])).0, vec![2, 0, 4]);
        assert_eq!(r.restrict(&AxisSubset::empty()).0, vec![0, 0, 0]);
    }

    #[test]
    fn multi_index_order_and_ranges() {
        let a = MultiIndex(vec![1, 2]);
        let b = MultiIndex(vec![2, 2]);
        assert!(a.le(&b));
        assert!(!a.lt(&b));
        assert!(MultiIndex(vec![0, 1]).lt(&b));
        assert_eq!(b.below().len(), 4);
        assert_eq!(b.below()[1].0, vec![0, 1]);
        assert!(MultiIndex(vec![0, 3]).below().is_empty());
    }

    #[test]
    fn block_extracts_sub_grid() {
        let q = AxisBox::unit(2);
        let g = sample_on_grid(&|x: &[f64]| x[0] * x[1], &q, &GridSpec::uniform(2, 4)).unwrap();
        let b = g.block(&[2, 0], &[2, 2]).unwrap();
        assert_eq!(b.domain().lower(), &[0.5, 0.0]);
        assert_eq!(b.domain().upper(), &[1.0, 0.5]);
        let direct = sample_on_grid(&|x: &[f64]| x[0] * x[1], b.domain(), b.spec()).unwrap();
        for (a, c) in b.values().iter().zip(direct.values()) {
            assert_relative_eq!(*a, *c, epsilon = 1e-15);
        }
    }

    fn arb_grid() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (prop::collection::vec(-5.0f64..5.0, 16), prop::collection::vec(-5.0f64..5.0, 16))
    }

    proptest! {
        #[test]
        fn homogeneity(values in prop::collection::vec(-5.0f64..5.0, 12), c in -4.0f64..4.0, pv in 0.2f64..4.0) {
            let q = AxisBox::unit(2);
            let spec = GridSpec::new(vec![3, 4]).unwrap();
            let g = GridFunction::new(q, spec, values).unwrap();
            let scaled = g.map(|v| c * v);
            for e in [p(pv), Exponent::Infinity] {
                let lhs = lp_quasinorm(&scaled, e);
                let rhs = c.abs() * lp_quasinorm(&g, e);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
            }
        }

        #[test]
        fn pth_power_subadditive_below_one((a, b) in arb_grid(), pv in 0.1f64..1.0) {
            let q = AxisBox::unit(2);
            let spec = GridSpec::uniform(2, 4);
            let f = GridFunction::new(q.clone(), spec.clone(), a).unwrap();
            let g = GridFunction::new(q, spec, b).unwrap();
            let sum = f.zip_with(&g, |x, y| x + y).unwrap();
            let e = p(pv);
            prop_assert!(lp_power(&sum, e) <= lp_power(&f, e) + lp_power(&g, e) + 1e-12);
        }

        #[test]
        fn power_additive_over_aligned_partition(values in prop::collection::vec(-3.0f64..3.0, 36), pv in 0.2f64..3.0) {
            let q = AxisBox::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
            let g = GridFunction::new(q, GridSpec::uniform(2, 6), values).unwrap();
            let e = p(pv);
            let mut parts = 0.0;
            for (start, len) in [([0, 0], [2, 6]), ([2, 0], [4, 3]), ([2, 3], [4, 3])] {
                parts += lp_power(&g.block(&start, &len).unwrap(), e);
            }
            let whole = lp_power(&g, e);
            prop_assert!((parts - whole).abs() <= 1e-12 * (1.0 + whole));
        }

        #[test]
        fn shrink_is_monotone(y in prop::collection::vec(-1.0f64..1.0, 2), grow in prop::collection::vec(1.0f64..2.0, 2)) {
            let q = AxisBox::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
            let small = StepVector(y.clone());
            let big = StepVector(y.iter().zip(&grow).map(|(a, g)| a * g).collect());
            if let Some(inner) = q.shrink(&big) {
                let outer = q.shrink(&small).expect("larger shift nonempty implies smaller nonempty");
                for i in 0..2 {
                    prop_assert!(inner.lower()[i] >= outer.lower()[i] - 1e-15);
                    prop_assert!(inner.upper()[i] <= outer.upper()[i] + 1e-15);
                }
            }
        }
    }
}
