//! Shipped test functions with analytic derivative oracles.
//!
//! Every entry is a sum of products of univariate factors, so mixed partial
//! derivatives follow factor by factor.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::MultiIndex;
use crate::polyapprox::DerivativeOracle;

/// Seed of the random trigonometric entries; fixed so the corpus never changes.
pub const CORPUS_SEED: u64 = 0x5EED;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothnessTag {
    MemberOfP,
    Analytic,
    FinitelySmooth,
    HolderSingular,
}

impl SmoothnessTag {
    pub const ALL: [SmoothnessTag; 4] = [
        SmoothnessTag::MemberOfP,
        SmoothnessTag::Analytic,
        SmoothnessTag::FinitelySmooth,
        SmoothnessTag::HolderSingular,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SmoothnessTag::MemberOfP => "member-of-p",
            SmoothnessTag::Analytic => "analytic",
            SmoothnessTag::FinitelySmooth => "finitely-smooth",
            SmoothnessTag::HolderSingular => "holder-singular",
        }
    }
}

impl fmt::Display for SmoothnessTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SmoothnessTag {
    type Err = String;

    /// Case-insensitive; `_` and `-` are interchangeable and `ö` matches `o`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_lowercase()
            .replace('ö', "o")
            .replace('_', "-")
            .replace("𝒫", "p");
        let norm = norm.trim_end_matches("-r").to_string();
        SmoothnessTag::ALL
            .iter()
            .find(|t| t.as_str() == norm)
            .copied()
            .ok_or_else(|| format!("unknown smoothness tag '{s}'"))
    }
}

/// Univariate building block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Factor {
    /// `Σ c_j x^j`.
    Poly(Vec<f64>),
    /// `e^{a x}`.
    Exp(f64),
    /// `sin(w x + φ)`.
    Sin { freq: f64, phase: f64 },
    /// `|x - c|^α`; derivatives are not provided.
    AbsPow { center: f64, alpha: f64 },
    /// `(x - k)_+^2`, with weak derivatives.
    PlusQuad(f64),
}

impl Factor {
    fn one() -> Self {
        Factor::Poly(vec![1.0])
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivative(0, x).expect("order-zero values always exist")
    }

    /// `d^m/dx^m` at `x`, or `None` when this factor has no such derivative.
    pub fn derivative(&self, m: usize, x: f64) -> Option<f64> {
        match self {
            Factor::Poly(c) => {
                let mut acc = 0.0;
                for j in (m..c.len()).rev() {
                    let falling: f64 = (0..m).map(|i| (j - i) as f64).product();
                    acc = acc * x + c[j] * falling;
                }
                Some(acc)
            }
            Factor::Exp(a) => Some(a.powi(m as i32) * (a * x).exp()),
            Factor::Sin { freq, phase } => {
                Some(freq.powi(m as i32) * (freq * x + phase + m as f64 * FRAC_PI_2).sin())
            }
            Factor::AbsPow { center, alpha } => {
                if m == 0 {
                    Some((x - center).abs().powf(*alpha))
                } else {
                    None
                }
            }
            Factor::PlusQuad(k) => {
                let y = (x - k).max(0.0);
                Some(match m {
                    0 => y * y,
                    1 => 2.0 * y,
                    2
                        if x > *k => {
                            2.0
                        }
                    _ => 0.0,
                })
            }
        }
    }

    /// Number of coefficients of a polynomial factor; `None` otherwise.
    fn poly_degree_bound(&self) -> Option<usize> {
        match self {
            Factor::Poly(c) => Some(c.iter().rposition(|v| *v != 0.0).map_or(1, |j| j + 1)),
            _ => None,
        }
    }
}

/// `coef · Π_i factors[i](x_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub factors: Vec<Factor>,
}

/// Owned, thread-safe handle to a function of `d` variables.
pub type SharedFunc = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusFunction {
    pub name: String,
    pub dim: usize,
    pub tag: SmoothnessTag,
    pub description: String,
    pub terms: Vec<Term>,
}

impl CorpusFunction {
    fn new(name: &str, tag: SmoothnessTag, description: &str, terms: Vec<Term>) -> Self {
        let dim = terms[0].factors.len();
        CorpusFunction {
            name: name.to_string(),
            dim,
            tag,
            description: description.to_string(),
            terms,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * t.factors.iter().zip(x).map(|(f, &xi)| f.value(xi)).product::<f64>())
            .sum()
    }

    /// `∂^s f(x)`, or `None` if some factor lacks the derivative.
    pub fn derivative(&self, s: &[usize], x: &[f64]) -> Option<f64> {
        let mut acc = 0.0;
        for t in &self.terms {
            let mut v = t.coef;
            for ((f, &m), &xi) in t.factors.iter().zip(s).zip(x) {
                v *= f.derivative(m, xi)?;
            }
            acc += v;
        }
        Some(acc)
    }

    /// Whether every mixed partial derivative exists.
    pub fn has_derivatives(&self) -> bool {
        !self
            .terms
            .iter()
            .flat_map(|t| &t.factors)
            .any(|f| matches!(f, Factor::AbsPow { .. }))
    }

    pub fn derivative_oracle(&self) -> Option<DerivativeOracle> {
        if !self.has_derivatives() {
            return None;
        }
        let me = self.clone();
        Some(Arc::new(move |s: &[usize], x: &[f64]| me.derivative(s, x)))
    }

    /// Smallest `r` with `f ∈ P_r`, if `f` is a tensor polynomial.
    pub fn polynomial_degrees(&self) -> Option<MultiIndex> {
        let mut r = vec![1; self.dim];
        for t in &self.terms {
            for (i, f) in t.factors.iter().enumerate() {
                r[i] = r[i].max(f.poly_degree_bound()?);
            }
        }
        Some(MultiIndex(r))
    }

    /// Whether `f ∈ P_r`.
    pub fn is_member(&self, r: &MultiIndex) -> bool {
        self.polynomial_degrees().is_some_and(|deg| deg.le(r))
    }

    /// The function as a shareable closure.
    pub fn func(&self) -> SharedFunc {
        let me = self.clone();
        Arc::new(move |x: &[f64]| me.eval(x))
    }
}

fn term(coef: f64, factors: Vec<Factor>) -> Term {
    Term { coef, factors }
}

fn poly(c: &[f64]) -> Factor {
    Factor::Poly(c.to_vec())
}

fn sin(freq: f64, phase: f64) -> Factor {
    Factor::Sin { freq, phase }
}

fn abs_pow(center: f64, alpha: f64) -> Factor {
    Factor::AbsPow { center, alpha }
}

/// `Σ_{j,k <= 2} c_jk cos(2π j x + φ_jk) cos(2π k y + ψ_jk)` with seeded coefficients.
fn random_trig(name: &str, rng: &mut ChaCha8Rng) -> CorpusFunction {
    let mut terms = Vec::new();
    for j in 0..=2 {
        for k in 0..=2 {
            let c: f64 = rng.random_range(-1.0..1.0);
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let psi: f64 = rng.random_range(0.0..2.0 * PI);
            terms.push(term(
                c / (1.0 + (j + k) as f64),
                vec![
                    sin(2.0 * PI * j as f64, phi + FRAC_PI_2),
                    sin(2.0 * PI * k as f64, psi + FRAC_PI_2),
                ],
            ));
        }
    }
    CorpusFunction::new(
        name,
        SmoothnessTag::Analytic,
        "seeded random trigonometric polynomial of degree 2 per axis",
        terms,
    )
}

/// The shipped corpus, in a fixed order.
pub fn shipped() -> Vec<CorpusFunction> {
    use SmoothnessTag::*;
    let one = Factor::one;
    let (c1, c2) = (0.37, 0.61);
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED);
    let mut out = vec![
        CorpusFunction::new("const_1d", MemberOfP, "1.5", vec![term(1.5, vec![one()])]),
        CorpusFunction::new("x_1d", MemberOfP, "x", vec![term(1.0, vec![poly(&[0.0, 1.0])])]),
        CorpusFunction::new("x2_1d", MemberOfP, "x^2", vec![term(1.0, vec![poly(&[0.0, 0.0, 1.0])])]),
        CorpusFunction::new("exp_1d", Analytic, "e^x", vec![term(1.0, vec![Factor::Exp(1.0)])]),
        CorpusFunction::new("sin_1d", Analytic, "sin(2πx)", vec![term(1.0, vec![sin(2.0 * PI, 0.0)])]),
        CorpusFunction::new("abs_1d", HolderSingular, "|x - 1/2|", vec![term(1.0, vec![abs_pow(0.5, 1.0)])]),
        CorpusFunction::new(
            "sqrt_abs_1d",
            HolderSingular,
            "|x - 0.37|^(1/2)",
            vec![term(1.0, vec![abs_pow(c1, 0.5)])],
        ),
        CorpusFunction::new("const_2d", MemberOfP, "1.5", vec![term(1.5, vec![one(), one()])]),
        CorpusFunction::new("x_2d", MemberOfP, "x", vec![term(1.0, vec![poly(&[0.0, 1.0]), one()])]),
        CorpusFunction::new(
            "bilinear_2d",
            MemberOfP,
            "1 + 2x - y + 3xy",
            vec![
                term(1.0, vec![one(), one()]),
                term(2.0, vec![poly(&[0.0, 1.0]), one()]),
                term(-1.0, vec![one(), poly(&[0.0, 1.0])]),
                term(3.0, vec![poly(&[0.0, 1.0]), poly(&[0.0, 1.0])]),
            ],
        ),
        CorpusFunction::new(
            "biquadratic_2d",
            MemberOfP,
            "x^2 y^2 - x y^2 + x^2 / 2",
            vec![
                term(1.0, vec![poly(&[0.0, 0.0, 1.0]), poly(&[0.0, 0.0, 1.0])]),
                term(-1.0, vec![poly(&[0.0, 1.0]), poly(&[0.0, 0.0, 1.0])]),
                term(0.5, vec![poly(&[0.0, 0.0, 1.0]), one()]),
            ],
        ),
        CorpusFunction::new("exp_sum_2d", Analytic, "e^(x + y)", vec![term(1.0, vec![Factor::Exp(1.0), Factor::Exp(1.0)])]),
        CorpusFunction::new(
            "sin_prod_2d",
            Analytic,
            "sin(2πx) sin(2πy)",
            vec![term(1.0, vec![sin(2.0 * PI, 0.0), sin(2.0 * PI, 0.0)])],
        ),
        CorpusFunction::new(
            "exp_cos_2d",
            Analytic,
            "e^(2x) cos(3y)",
            vec![term(1.0, vec![Factor::Exp(2.0), sin(3.0, FRAC_PI_2)])],
        ),
        CorpusFunction::new(
            "holder_half_2d",
            HolderSingular,
            "|x - 0.37|^(1/2) |y - 0.61|^(1/2)",
            vec![term(1.0, vec![abs_pow(c1, 0.5), abs_pow(c2, 0.5)])],
        ),
        CorpusFunction::new(
            "holder_one_2d",
            HolderSingular,
            "|x - 0.37| |y - 0.61|",
            vec![term(1.0, vec![abs_pow(c1, 1.0), abs_pow(c2, 1.0)])],
        ),
        CorpusFunction::new(
            "holder_three_halves_2d",
            HolderSingular,
            "|x - 0.37|^(3/2) |y - 0.61|^(3/2)",
            vec![term(1.0, vec![abs_pow(c1, 1.5), abs_pow(c2, 1.5)])],
        ),
        CorpusFunction::new(
            "abs_sum_2d",
            FinitelySmooth,
            "|x - 1/2| + |y - 1/2|",
            vec![
                term(1.0, vec![abs_pow(0.5, 1.0), one()]),
                term(1.0, vec![one(), abs_pow(0.5, 1.0)]),
            ],
        ),
        CorpusFunction::new(
            "spline_prod_2d",
            FinitelySmooth,
            "(x - 0.4)_+^2 (y - 0.55)_+^2 + x y",
            vec![
                term(1.0, vec![Factor::PlusQuad(0.4), Factor::PlusQuad(0.55)]),
                term(1.0, vec![poly(&[0.0, 1.0]), poly(&[0.0, 1.0])]),
            ],
        ),
        CorpusFunction::new(
            "spline_sum_2d",
            FinitelySmooth,
            "(x - 0.3)_+^2 - 2 (x - 0.7)_+^2 + (y - 0.5)_+^2",
            vec![
                term(1.0, vec![Factor::PlusQuad(0.3), one()]),
                term(-2.0, vec![Factor::PlusQuad(0.7), one()]),
                term(1.0, vec![one(), Factor::PlusQuad(0.5)]),
            ],
        ),
    ];
    out.push(random_trig("trig_a_2d", &mut rng));
    out.push(random_trig("trig_b_2d", &mut rng));
    out
}

pub fn find(name: &str) -> Option<CorpusFunction> {
    shipped().into_iter().find(|f| f.name == name)
}

pub fn with_tag(tag: SmoothnessTag) -> Vec<CorpusFunction> {
    shipped().into_iter().filter(|f| f.tag == tag).collect()
}

pub fn of_dim(d: usize) -> Vec<CorpusFunction> {
    shipped().into_iter().filter(|f| f.dim == d).collect()
}
