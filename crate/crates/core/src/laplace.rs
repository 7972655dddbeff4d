//! Exact log-Laplace transforms of population-count fdd's.
//!
//! For a query `Σ_i λ_i X(t_i + t) / scale` the transform
//! `Λ(t) = -ln E_1 exp(-Σ_i λ_i X(t_i + t) / scale)` obeys the one-step
//! decomposition over the progenitor's life history
//!
//! ```text
//! e^{-Λ(t)} = Σ_h p_h e^{-ψ_h(t)} Π_{j=1}^{L_h} e^{-ν_h(j) Λ(t-j)},
//! ```
//!
//! with `ψ(t) = Σ_i λ_i χ(t_i + t) / scale` and `Λ(t) = 0` once every
//! `t_i + t < 0`. Filling `t` upward from `-max t_i` gives the exact grid.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::LifeLaw;
use crate::numeric::{compensated_sum, e1, e2};
use crate::renewal::RenewalTable;
use crate::score::{ScoreSpec, ShiftedScore, ShiftedTerm};

const LOG_DOMAIN_EXPONENT: f64 = 700.0;

/// A weighted multi-time query on one score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FddQuery {
    /// Strictly decreasing, nonnegative.
    pub time_points: Vec<i64>,
    pub weights: Vec<f64>,
    pub score: ScoreSpec,
    /// Weights are divided by this before evaluation.
    pub scale: f64,
}

impl FddQuery {
    pub fn new(time_points: Vec<i64>, weights: Vec<f64>, score: ScoreSpec, scale: f64) -> Result<Self> {
        let q = FddQuery {
            time_points,
            weights,
            score,
            scale,
        };
        q.validate()?;
        Ok(q)
    }

    /// Single time point at `0`.
    pub fn one_point(weight: f64, score: ScoreSpec, scale: f64) -> Self {
        FddQuery {
            time_points: vec![0],
            weights: vec![weight],
            score,
            scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_points.is_empty() {
            return Err(Error::InvalidQuery("query needs at least one time point".into()));
        }
        if self.time_points.len() != self.weights.len() {
            return Err(Error::InvalidQuery(format!(
                "{} time points but {} weights",
                self.time_points.len(),
                self.weights.len()
            )));
        }
        if self.time_points.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidQuery("time points must be strictly decreasing".into()));
        }
        if *self.time_points.last().unwrap() < 0 {
            return Err(Error::InvalidQuery("time points must be nonnegative".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidQuery("weights must be finite and nonnegative".into()));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidQuery(format!("scale {} must be positive", self.scale)));
        }
        Ok(())
    }

    fn terms(&self) -> impl Iterator<Item = ShiftedTerm> + '_ {
        self.time_points
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| ShiftedTerm {
                score: self.score.clone(),
                time: t,
                weight: w / self.scale,
            })
    }
}

/// The shifted score `ψ` of one or more queries evaluated jointly.
pub fn shifted_score(components: &[FddQuery]) -> Result<ShiftedScore> {
    for c in components {
        c.validate()?;
    }
    Ok(ShiftedScore::new(components.iter().flat_map(FddQuery::terms).collect()))
}

/// Exact `Λ(t)` for `t = t_min..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceGrid {
    t_min: i64,
    values: Vec<f64>,
    psi: ShiftedScore,
}

impl LaplaceGrid {
    pub fn t_min(&self) -> i64 {
        self.t_min
    }

    pub fn horizon(&self) -> i64 {
        self.t_min + self.values.len() as i64 - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn psi(&self) -> &ShiftedScore {
        &self.psi
    }

    /// `Λ(t)`; zero below `t_min`. Panics above the horizon.
    #[inline]
    pub fn at(&self, t: i64) -> f64 {
        if t < self.t_min {
            0.0
        } else {
            self.values[(t - self.t_min) as usize]
        }
    }

    /// Iterator of `(t, Λ(t))`.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(k, &v)| (self.t_min + k as i64, v))
    }
}

pub fn log_laplace(query: &FddQuery, law: &LifeLaw, horizon: i64) -> Result<LaplaceGrid> {
    log_laplace_joint(std::slice::from_ref(query), law, horizon)
}

/// Joint transform of several queries, possibly on different scores.
pub fn log_laplace_joint(components: &[FddQuery], law: &LifeLaw, horizon: i64) -> Result<LaplaceGrid> {
    if components.is_empty() {
        return Err(Error::InvalidQuery("no query components".into()));
    }
    for c in components {
        c.score.validate_for(law)?;
    }
    let psi = shifted_score(components)?;
    log_laplace_shifted(psi, law, horizon)
}

/// Runs the recursion for an arbitrary shifted score.
pub fn log_laplace_shifted(psi: ShiftedScore, law: &LifeLaw, horizon: i64) -> Result<LaplaceGrid> {
    if horizon < 0 {
        return Err(Error::InvalidQuery(format!("horizon {horizon} is negative")));
    }
    let t_min = -psi.max_shift();
    let len = (horizon - t_min + 1) as usize;
    let mut values = vec![0.0f64; len];
    let support = law.support();
    let mut exponents = vec![0.0f64; support.len()];

    for k in 0..len {
        let t = t_min + k as i64;
        let lookup = |s: i64| if s < t_min { 0.0 } else { values[(s - t_min) as usize] };
        for (i, (h, _)) in support.iter().enumerate() {
            let mut e = psi.value(i, h, t);
            for (j, &nu) in h.litters().iter().enumerate() {
                if nu != 0 {
                    e += nu as f64 * lookup(t - 1 - j as i64);
                }
            }
            exponents[i] = e;
        }
        values[k] = combine(support.iter().map(|(_, p)| *p), &exponents);
    }
    Ok(LaplaceGrid { t_min, values, psi })
}

/// `-ln Σ p_h e^{-E_h}`, switching to log-sum-exp for large exponents.
pub(crate) fn combine(probs: impl Iterator<Item = f64> + Clone, exponents: &[f64]) -> f64 {
    let max_e = exponents.iter().copied().fold(0.0, f64::max);
    if max_e <= LOG_DOMAIN_EXPONENT {
        let s = compensated_sum(probs.clone().zip(exponents).map(|(p, &e)| p * e1(e)));
        if s < 0.5 {
            return -(-s).ln_1p();
        }
    }
    let min_e = exponents.iter().copied().fold(f64::INFINITY, f64::min);
    let tail = compensated_sum(probs.zip(exponents).map(|(p, &e)| p * (-(e - min_e)).exp()));
    min_e - tail.ln()
}

/// `E_n e^{-functional}` for `n` independent progenitors: `e^{-nΛ(t)}`.
pub fn population_transform(grid: &LaplaceGrid, n: u64, t: i64) -> f64 {
    (-(n as f64) * grid.at(t)).exp()
}

/// `Ψ[f](t) = E Π_j e^{-ν(j) f(t-j)} - Σ_j e^{-f(t-j)} A(j)`.
///
/// Evaluated as `(1 - E N) + Σ_h p_h (e2(S_h) - Σ_j ν_h(j) e2(f(t-j)))` with
/// `S_h = Σ_j ν_h(j) f(t-j)`, which is algebraically identical and free of
/// cancellation when `f` is small.
pub fn psi_operator(f: impl Fn(i64) -> f64, law: &LifeLaw, t: i64) -> f64 {
    let max_age = law.max_age();
    let window: Vec<f64> = (1..=max_age as i64).map(|j| f(t - j)).collect();
    let mut mean_n = 0.0;
    let body = compensated_sum(law.support().iter().map(|(h, p)| {
        let mut s = 0.0;
        let mut lin = 0.0;
        for (j, &nu) in h.litters().iter().enumerate() {
            if nu != 0 {
                s += nu as f64 * window[j];
                lin += nu as f64 * e2(window[j]);
            }
        }
        mean_n += p * h.total_births() as f64;
        p * (e2(s) - lin)
    }));
    (1.0 - mean_n) + body
}

/// `D(s) = Σ_h p_h e1(ψ_h(s)) Π_j e^{-ν_h(j) Λ(s-j)}`.
fn d_term(grid: &LaplaceGrid, law: &LifeLaw, s: i64) -> f64 {
    compensated_sum(law.support().iter().enumerate().map(|(i, (h, p))| {
        let expo: f64 = h
            .litters()
            .iter()
            .enumerate()
            .map(|(j, &nu)| nu as f64 * grid.at(s - 1 - j as i64))
            .sum();
        p * e1(grid.psi.value(i, h, s)) * (-expo).exp()
    }))
}

/// Components of the branching renewal equation at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NreTerms {
    pub lambda: f64,
    /// `B(t) = e2(Λ(t)) + Σ_j e1(Λ(-j)) R_t(j) + (D*U)(t)`
    pub free_term: f64,
    /// `(Ψ[Λ]*U)(t)`
    pub nonlinear: f64,
}

impl NreTerms {
    /// `Λ(t) - B(t) + (Ψ[Λ]*U)(t)`
    pub fn residual(&self) -> f64 {
        self.lambda - self.free_term + self.nonlinear
    }
}

/// Branching-renewal-equation terms for `t = 0..=t_max`.
pub fn nre_terms(
    grid: &LaplaceGrid,
    law: &LifeLaw,
    renewal: &RenewalTable,
    t_max: i64,
) -> Result<Vec<NreTerms>> {
    if t_max < 0 || t_max > grid.horizon() || t_max as usize > renewal.horizon() {
        return Err(Error::Precondition(format!(
            "NRE check at t={t_max} beyond grid ({}) or renewal ({}) horizon",
            grid.horizon(),
            renewal.horizon()
        )));
    }
    let d: Vec<f64> = (0..=t_max).map(|s| d_term(grid, law, s)).collect();
    let psi: Vec<f64> = (0..=t_max)
        .map(|s| psi_operator(|x| grid.at(x), law, s))
        .collect();
    let u = renewal.values();
    let j_reach = (-grid.t_min()).max(0) as usize;
    (0..=t_max)
        .map(|t| {
            let tu = t as usize;
            let lambda = grid.at(t);
            let overshoot = if j_reach == 0 {
                0.0
            } else {
                let res = renewal.residual_distribution(tu, Some(j_reach))?;
                compensated_sum((1..=j_reach).map(|j| e1(grid.at(-(j as i64))) * res.r(j)))
            };
            let du = compensated_sum((0..=tu).map(|s| d[s] * u[tu - s]));
            let pu = compensated_sum((0..=tu).map(|s| psi[s] * u[tu - s]));
            Ok(NreTerms {
                lambda,
                free_term: e2(lambda) + overshoot + du,
                nonlinear: pu,
            })
        })
        .collect()
}

/// `Λ(t) - B(t) + (Ψ[Λ]*U)(t)`; vanishes for critical laws.
pub fn nre_residual(grid: &LaplaceGrid, law: &LifeLaw, renewal: &RenewalTable, t: i64) -> Result<f64> {
    Ok(nre_terms(grid, law, renewal, t)?[t as usize].residual())
}

/// Memoizes grids by a content hash of `(components, law, horizon)`.
#[derive(Debug, Default)]
pub struct GridCache {
    grids: Mutex<HashMap<u64, Arc<LaplaceGrid>>>,
}

impl GridCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn key(components: &[FddQuery], law: &LifeLaw, horizon: i64) -> u64 {
        let mut hasher = DefaultHasher::new();
        format!("{components:?}|{law:?}|{horizon}").hash(&mut hasher);
        hasher.finish()
    }

    pub fn get_or_compute(
        &self,
        components: &[FddQuery],
        law: &LifeLaw,
        horizon: i64,
    ) -> Result<Arc<LaplaceGrid>> {
        let key = Self::key(components, law, horizon);
        if let Some(g) = self.grids.lock().unwrap().get(&key) {
            return Ok(Arc::clone(g));
        }
        let grid = Arc::new(log_laplace_joint(components, law, horizon)?);
        self.grids
            .lock()
            .unwrap()
            .entry(key)
            .or_insert_with(|| Arc::clone(&grid));
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.grids.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gw_newborn_one_step() {
        let law = LifeLaw::gw_toy();
        let lambda = 0.8;
        let q = FddQuery::one_point(lambda, ScoreSpec::Newborn, 1.0);
        let g = log_laplace(&q, &law, 3).unwrap();
        assert_eq!(g.t_min(), 0);
        assert!((g.at(0) - lambda).abs() < 1e-15);
        let expected = -((1.0 + (-2.0 * lambda).exp()) / 2.0).ln();
        assert!((g.at(1) - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_give_zero_transform() {
        let law = LifeLaw::gwo_toy();
        let q = FddQuery::new(vec![4, 1], vec![0.0, 0.0], ScoreSpec::Alive, 1.0).unwrap();
        let g = log_laplace(&q, &law, 20).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn population_transform_independent_lines() {
        let law = LifeLaw::gw_toy();
        let g = log_laplace(&FddQuery::one_point(1.0, ScoreSpec::Newborn, 1.0), &law, 2).unwrap();
        let expected = ((1.0 + (-2.0f64).exp()) / 2.0).powi(2);
        assert!((population_transform(&g, 2, 1) - expected).abs() < 1e-15);
        assert_eq!(population_transform(&g, 1, 1), (-g.at(1)).exp());
        let zero = log_laplace(&FddQuery::one_point(0.0, ScoreSpec::Newborn, 1.0), &law, 2).unwrap();
        assert_eq!(population_transform(&zero, 50, 2), 1.0);
    }

    #[test]
    fn psi_operator_constant_matches_offspring_laplace() {
        for law in [LifeLaw::gw_toy(), LifeLaw::gwo_toy()] {
            for &z in &[0.0, 1e-4, 0.3, 1.0, 4.0] {
                let a = psi_operator(|_| z, &law, 7);
                let b = law.offspring_laplace(z);
                assert!((a - b).abs() < 1e-15, "z={z}: {a} vs {b}");
            }
        }
        let gw = LifeLaw::gw_toy();
        assert!((psi_operator(|_| 1.0, &gw, 0) - 0.199_788_6).abs() < 1e-6);
        assert_eq!(psi_operator(|_| 0.0, &gw, 3), 0.0);
    }

    #[test]
    fn log_domain_branch_handles_huge_exponents() {
        let law = LifeLaw::gw_toy();
        let q = FddQuery::one_point(2000.0, ScoreSpec::EverBorn, 1.0);
        let g = log_laplace(&q, &law, 5).unwrap();
        // Extinction is the only way to avoid the huge weight: Λ(t) ≈ -ln P(no births).
        assert!((g.at(0) - 2000.0).abs() < 1e-9);
        assert!(g.values().iter().all(|v| v.is_finite()));
        assert!((g.at(1) - (2000.0 + 2.0f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn invalid_queries_are_rejected() {
        assert!(FddQuery::new(vec![1, 2], vec![1.0, 1.0], ScoreSpec::Alive, 1.0).is_err());
        assert!(FddQuery::new(vec![1], vec![1.0, 1.0], ScoreSpec::Alive, 1.0).is_err());
        assert!(FddQuery::new(vec![1], vec![-1.0], ScoreSpec::Alive, 1.0).is_err());
        assert!(FddQuery::new(vec![1], vec![1.0], ScoreSpec::Alive, 0.0).is_err());
        assert!(FddQuery::new(vec![], vec![], ScoreSpec::Alive, 1.0).is_err());
    }

    #[test]
    fn cache_reuses_grids() {
        let cache = GridCache::new();
        let law = LifeLaw::gwo_toy();
        let q = [FddQuery::one_point(1.0, ScoreSpec::Alive, 10.0)];
        let a = cache.get_or_compute(&q, &law, 50).unwrap();
        let b = cache.get_or_compute(&q, &law, 50).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        cache.get_or_compute(&q, &law, 51).unwrap();
        assert_eq!(cache.len(), 2);
    }
}
