//! Transforms of the limiting continuous-state branching process `ξ`.
//!
//! All multi-point transforms reduce to the Riccati integral equation
//! `H(y) = F(y) - b ∫_0^y H(v)^2 dv`, solved on a grid by the recursion
//!
//! ```text
//! H(k h) = F(k h) - F((k-1) h) + H((k-1) h) / (1 + b h H((k-1) h)),   H(0) = F(0),
//! ```
//!
//! which is exact when `F` is piecewise constant on the grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID: usize = 4096;

/// Exponent `λ / (1 + λ b u)` of `E(e^{-λ ξ(u)} | ξ(0) = 1)`.
pub fn csb_transform(lambda: f64, u: f64, b: f64) -> f64 {
    lambda / (1.0 + lambda * b * u)
}

/// `E ξ_γ(y) = y^γ` (with `ξ_0 = ξ`, whose mean is 1).
pub fn xi_gamma_mean(gamma: f64, y: f64) -> f64 {
    if gamma == 0.0 {
        1.0
    } else {
        y.powf(gamma)
    }
}

fn check_offsets(offsets: &[f64], columns: usize, weights: &[Vec<f64>]) -> Result<()> {
    if offsets.is_empty() {
        return Err(Error::Domain("at least one offset is required".into()));
    }
    if offsets.iter().any(|u| !(u.is_finite() && *u >= 0.0)) {
        return Err(Error::Domain("offsets must be finite and nonnegative".into()));
    }
    if offsets.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Domain("offsets must be strictly decreasing".into()));
    }
    if weights.len() != offsets.len() || weights.iter().any(|row| row.len() != columns) {
        return Err(Error::Domain("weight matrix shape does not match offsets".into()));
    }
    if weights.iter().flatten().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Domain("weights must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Rewrites evaluation times `u_i + y` so that the last offset is zero.
fn normalize(offsets: &[f64], y: f64) -> (Vec<f64>, f64) {
    let last = *offsets.last().unwrap();
    (offsets.iter().map(|u| u - last).collect(), y + last)
}

/// `G_p(ū + y, λ̄) = -ln E_1 exp(-Σ_i λ_i ξ(u_i + y))`.
///
/// Uses `G_k = (G_{k-1} + λ_k) / (1 + b y_k (G_{k-1} + λ_k))`, the reciprocal
/// form of the one-step relation, so a zero functional simply yields 0.
pub fn g_p(offsets: &[f64], weights: &[f64], y: f64, b: f64) -> Result<f64> {
    let w: Vec<Vec<f64>> = weights.iter().map(|&l| vec![l]).collect();
    check_offsets(offsets, 1, &w)?;
    if !(y.is_finite() && y >= 0.0) {
        return Err(Error::Domain(format!("evaluation shift {y} must be nonnegative")));
    }
    let (u, y) = normalize(offsets, y);
    let p = u.len();
    let mut g = 0.0;
    for k in 0..p {
        let gap = if k + 1 < p { u[k] - u[k + 1] } else { y };
        let x = g + weights[k];
        g = x / (1.0 + b * gap * x);
    }
    Ok(g)
}

/// A Riccati solution on a uniform grid `k h`, `k = 0..=steps`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiccatiGrid {
    pub step: f64,
    pub values: Vec<f64>,
}

impl RiccatiGrid {
    /// Resolution `1 / step`.
    pub fn resolution(&self) -> f64 {
        1.0 / self.step
    }

    /// Step-function value at `y` (grid point `⌊y / h⌋`).
    pub fn at(&self, y: f64) -> f64 {
        let k = ((y / self.step) + 1e-9).floor().max(0.0) as usize;
        self.values[k.min(self.values.len() - 1)]
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// Runs the recursion with step `h` for `steps` steps.
pub fn riccati_steps(forcing: impl Fn(f64) -> f64, b: f64, h: f64, steps: usize) -> RiccatiGrid {
    let mut values = Vec::with_capacity(steps + 1);
    let mut prev_f = forcing(0.0);
    let mut current = prev_f;
    values.push(current);
    for k in 1..=steps {
        let f = forcing(k as f64 * h);
        current = f - prev_f + current / (1.0 + b * h * current);
        prev_f = f;
        values.push(current);
    }
    RiccatiGrid { step: h, values }
}

/// Grid solution of `H(y) = F(y) - b ∫_0^y H^2` at resolution `n` on `[0, y_max]`.
pub fn riccati_grid(forcing: impl Fn(f64) -> f64, b: f64, n: usize, y_max: f64) -> RiccatiGrid {
    let n = n.max(1);
    let steps = (y_max * n as f64 - 1e-9).ceil().max(0.0) as usize;
    riccati_steps(forcing, b, 1.0 / n as f64, steps)
}

#[inline]
fn power_forcing(gamma: f64, x: f64) -> f64 {
    if gamma == 0.0 {
        1.0
    } else {
        x.max(0.0).powf(gamma)
    }
}

/// `H_{p,q}(ū + y, λ) = -ln E_1 exp(-Σ_i Σ_j λ_ij ξ_{γ_j}(u_i + y))`.
///
/// `weights[i][j]` pairs offset `i` with exponent `gammas[j]`. Solved by `p`
/// nested Riccati stages; stage `k` runs over `[0, u_k - u_{k+1}]` (or
/// `[0, y]` for `k = p`) with forcing `H_{k-1} + F°_k(v)`, where
///
/// ```text
/// F°_k(v) = Σ_j λ_kj F_j(v) + Σ_{i<k} Σ_j λ_ij (F_j(u_i - u_k + v) - F_j(u_i - u_k))
/// ```
///
/// and `F_j(x) = x^{γ_j}` (`F_j ≡ 1` for `γ_j = 0`). Each stage uses
/// `⌈length · n⌉` equal steps.
pub fn h_pq(
    offsets: &[f64],
    weights: &[Vec<f64>],
    gammas: &[f64],
    y: f64,
    b: f64,
    n: usize,
) -> Result<f64> {
    check_offsets(offsets, gammas.len(), weights)?;
    if gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::Domain("exponents must be nonnegative".into()));
    }
    if !(y.is_finite() && y >= 0.0) {
        return Err(Error::Domain(format!("evaluation shift {y} must be nonnegative")));
    }
    let (u, y) = normalize(offsets, y);
    let p = u.len();
    let mut h_prev = 0.0;
    for k in 0..p {
        let length = if k + 1 < p { u[k] - u[k + 1] } else { y };
        let base: Vec<(f64, &Vec<f64>)> = (0..k).map(|i| (u[i] - u[k], &weights[i])).collect();
        let forcing = |v: f64| {
            let own: f64 = weights[k]
                .iter()
                .zip(gammas)
                .map(|(l, &g)| l * power_forcing(g, v))
                .sum();
            let earlier: f64 = base
                .iter()
                .map(|(d, row)| {
                    row.iter()
                        .zip(gammas)
                        .map(|(l, &g)| l * (power_forcing(g, d + v) - power_forcing(g, *d)))
                        .sum::<f64>()
                })
                .sum();
            h_prev + own + earlier
        };
        let steps = (length * n as f64 - 1e-9).ceil().max(0.0) as usize;
        h_prev = if steps == 0 {
            forcing(0.0)
        } else {
            riccati_steps(forcing, b, length / steps as f64, steps).last()
        };
    }
    Ok(h_prev)
}

/// `H_p(ū + y, λ̄)` for `F(y) = y^γ`.
pub fn h_p(offsets: &[f64], weights: &[f64], gamma: f64, y: f64, b: f64, n: usize) -> Result<f64> {
    let w: Vec<Vec<f64>> = weights.iter().map(|&l| vec![l]).collect();
    h_pq(offsets, &w, &[gamma], y, b, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theorem {
    /// Finite mean score: `n^{-1} X(nu) → m_χ ξ(u/a)`.
    Nrt,
    /// Regularly varying mean score: `n^{-1-γ} ℓ^{-1} X(nu) → a^{γ-1} ξ_γ(u/a)`.
    Nrtg,
    /// Several scores jointly.
    Nrtm,
}

impl std::str::FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nrt" => Ok(Theorem::Nrt),
            "nrtg" => Ok(Theorem::Nrtg),
            "nrtm" => Ok(Theorem::Nrtm),
            _ => Err(Error::config("theorem", format!("unknown theorem `{s}`"))),
        }
    }
}

/// Parameters entering the limit exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitParams {
    pub b: f64,
    pub a: f64,
    #[serde(default)]
    pub m_chi: Option<f64>,
    /// One exponent per score column.
    #[serde(default)]
    pub gammas: Vec<f64>,
    /// Constant slowly varying factors per score column.
    #[serde(default)]
    pub ells: Vec<f64>,
}

impl LimitParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::config("params.a", "mean generation length must be positive"));
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(Error::config("params.b", "b must be nonnegative"));
        }
        if self.gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::config("params.gammas", "exponents must be nonnegative"));
        }
        Ok(())
    }
}

/// Continuous-time query: offsets `u_1 > ... > u_p` and a `p × q` weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitQuery {
    pub offsets: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
}

impl LimitQuery {
    pub fn single(offsets: Vec<f64>, weights: Vec<f64>) -> Self {
        LimitQuery {
            offsets,
            weights: weights.into_iter().map(|w| vec![w]).collect(),
        }
    }
}

/// `r_p(y)` for a theorem, parameters and query.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitExponent {
    theorem: Theorem,
    b: f64,
    offsets: Vec<f64>,
    weights: Vec<Vec<f64>>,
    gammas: Vec<f64>,
    /// `a`; evaluation times are `(u + y) / a`.
    time_scale: f64,
    grid: usize,
}

impl LimitExponent {
    pub fn with_grid(mut self, n: usize) -> Self {
        self.grid = n.max(1);
        self
    }

    pub fn theorem(&self) -> Theorem {
        self.theorem
    }

    pub fn eval(&self, y: f64) -> Result<f64> {
        let y = y / self.time_scale;
        match self.theorem {
            Theorem::Nrt => {
                let w: Vec<f64> = self.weights.iter().map(|r| r[0]).collect();
                g_p(&self.offsets, &w, y, self.b)
            }
            Theorem::Nrtg | Theorem::Nrtm => {
                h_pq(&self.offsets, &self.weights, &self.gammas, y, self.b, self.grid)
            }
        }
    }
}

/// Builds `r_p`; time arguments are divided by `a` internally.
///
/// - nrt: `G_p(a^{-1}(ū + y), m_χ λ̄)`
/// - nrtg: `H_p(a^{-1}(ū + y), a^{γ-1} λ̄)` with `F(y) = y^γ`
/// - nrtm: `H_{p,q}(a^{-1}(ū + y), a^{γ_1-1} λ̄_1, ..., a^{γ_q-1} λ̄_q)`
pub fn limit_exponent(theorem: Theorem, params: &LimitParams, query: &LimitQuery) -> Result<LimitExponent> {
    params.validate()?;
    let q = query.weights.first().map_or(0, Vec::len);
    check_offsets(&query.offsets, q, &query.weights).map_err(|e| Error::config("query", e.to_string()))?;
    let a = params.a;
    let offsets: Vec<f64> = query.offsets.iter().map(|u| u / a).collect();
    let (weights, gammas) = match theorem {
        Theorem::Nrt => {
            let m_chi = params
                .m_chi
                .filter(|m| m.is_finite())
                .ok_or_else(|| Error::config("params.m_chi", "nrt requires a finite m_chi"))?;
            if q != 1 {
                return Err(Error::config("query.weights", "nrt takes a single score column"));
            }
            (
                query.weights.iter().map(|r| vec![r[0] * m_chi]).collect(),
                vec![0.0],
            )
        }
        Theorem::Nrtg => {
            if q != 1 || params.gammas.len() != 1 {
                return Err(Error::config("params.gammas", "nrtg takes exactly one exponent"));
            }
            let g = params.gammas[0];
            (
                query.weights.iter().map(|r| vec![r[0] * a.powf(g - 1.0)]).collect(),
                params.gammas.clone(),
            )
        }
        Theorem::Nrtm => {
            if params.gammas.len() != q {
                return Err(Error::config(
                    "params.gammas",
                    format!("{} exponents for {q} score columns", params.gammas.len()),
                ));
            }
            (
                query
                    .weights
                    .iter()
                    .map(|r| {
                        r.iter()
                            .zip(&params.gammas)
                            .map(|(l, g)| l * a.powf(g - 1.0))
                            .collect()
                    })
                    .collect(),
                params.gammas.clone(),
            )
        }
    };
    Ok(LimitExponent {
        theorem,
        b: params.b,
        offsets,
        weights,
        gammas,
        time_scale: a,
        grid: DEFAULT_GRID,
    })
}
