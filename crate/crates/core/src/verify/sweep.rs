//! Exact scaled transforms against limit exponents.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Check, ClosedForm, PlanLaw, PlanTheorem, SweepPlan};
use crate::error::{Error, Result};
use crate::laplace::{log_laplace_joint, FddQuery};
use crate::law::LifeLaw;
use crate::limits::{limit_exponent, LimitExponent, LimitParams, LimitQuery};
use crate::multitype::{moment_table, nested_transform, type1_score_means, MultitypeLaw, NestedQuery};
use crate::renewal::RenewalTable;
use crate::score::{score_profile, ScoreProfile, ScoreSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub y: f64,
    pub limit: f64,
    /// `n Λ_n(⌊ny⌋)` per entry of `n_values`.
    pub scaled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub n_values: Vec<u64>,
    /// `sup_y |n Λ_n(⌊ny⌋) - r_p(y)|` per `n`.
    pub sup_errors: Vec<f64>,
    pub max_limit: f64,
    pub final_relative_error: f64,
    pub monotone: bool,
    pub pass: bool,
    pub curves: Vec<CurvePoint>,
}

fn column_profile(score: &ScoreSpec, law: &LifeLaw) -> Result<ScoreProfile> {
    let horizon = score.time_support(law).unwrap_or(0).max(law.max_age()) + 1;
    score_profile(score, law, horizon)
}

/// Theorem ↔ score class consistency.
pub(crate) fn check_score_classes(theorem: PlanTheorem, law: &LifeLaw, scores: &[ScoreSpec]) -> std::result::Result<(), String> {
    let profiles = scores
        .iter()
        .map(|s| column_profile(s, law))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    match theorem {
        PlanTheorem::Nrt | PlanTheorem::Cor1 => {
            if profiles.len() != 1 || profiles[0].gamma != 0.0 || profiles[0].m_chi.is_none() {
                return Err("nrt needs one score with finite time support".into());
            }
            if theorem == PlanTheorem::Cor1 && scores[0] != ScoreSpec::Alive {
                return Err("cor1 is stated for the alive score".into());
            }
        }
        PlanTheorem::Nrtg | PlanTheorem::Cor2 => {
            if profiles.len() != 1 || profiles[0].gamma <= 0.0 {
                return Err("nrtg needs one score with a positive exponent".into());
            }
        }
        PlanTheorem::Nrtm | PlanTheorem::Cor3 => {
            if profiles.windows(2).any(|w| w[0].gamma > w[1].gamma) {
                return Err("nrtm columns must be sorted by nondecreasing exponent".into());
            }
            if profiles.iter().any(|p| p.gamma == 0.0 && p.m_chi.is_none()) {
                return Err("zero-exponent columns need finite time support".into());
            }
        }
        PlanTheorem::Deco => return Err("deco plans take a multitype law".into()),
    }
    Ok(())
}

/// Everything a sweep needs besides `n`.
struct Setup {
    law: PlanLaw,
    limit: LimitExponent,
    /// Exponent and constant per column, for the DP scales.
    columns: Vec<(f64, f64)>,
    params: LimitParams,
}

fn setup(plan: &SweepPlan) -> Result<Setup> {
    let law = plan.resolve()?;
    let theorem = plan.theorem.limit_theorem();
    let (params, columns, query) = match &law {
        PlanLaw::Single { law: life, scores } => {
            let moments = life.moments();
            let profiles = scores
                .iter()
                .map(|s| column_profile(s, life))
                .collect::<Result<Vec<_>>>()?;
            let params = LimitParams {
                b: moments.b,
                a: moments.a,
                m_chi: profiles[0].m_chi,
                gammas: profiles.iter().map(|p| p.gamma).collect(),
                ells: profiles.iter().map(|p| p.ell).collect(),
            };
            let columns = profiles.iter().map(|p| (p.gamma, p.ell)).collect();
            (params, columns, plan.query.clone())
        }
        PlanLaw::Multi(mt) => {
            let (params, query) = deco_limit(mt, &plan.query);
            let columns = (0..mt.q()).map(|j| (j as f64, 1.0)).collect();
            (params, columns, query)
        }
    };
    let limit = limit_exponent(theorem, &params, &query)?;
    Ok(Setup {
        law,
        limit,
        columns,
        params,
    })
}

/// Limit parameters of the multitype theorem: columns `γ_j = j - 1`, weights `λ_{ij} α_{j-1}`.
fn deco_limit(law: &MultitypeLaw, query: &LimitQuery) -> (LimitParams, LimitQuery) {
    let mut alpha = vec![1.0];
    alpha.extend(law.alpha());
    let params = LimitParams {
        b: law.b(),
        a: 1.0,
        m_chi: Some(1.0),
        gammas: (0..law.q()).map(|j| j as f64).collect(),
        ells: alpha.clone(),
    };
    let scaled = LimitQuery {
        offsets: query.offsets.clone(),
        weights: query
            .weights
            .iter()
            .map(|row| row.iter().zip(&alpha).map(|(w, a)| w * a).collect())
            .collect(),
    };
    (params, scaled)
}

fn lattice(n: u64, x: f64) -> i64 {
    (n as f64 * x + 1e-9).floor() as i64
}

fn lattice_times(plan: &SweepPlan, n: u64) -> Result<Vec<i64>> {
    let times: Vec<i64> = plan.query.offsets.iter().map(|&u| lattice(n, u)).collect();
    if times.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Plan(format!(
            "{}: offsets collapse on the lattice at n = {n}",
            plan.id
        )));
    }
    Ok(times)
}

/// `n Λ_n(⌊ny⌋)` on the y grid.
fn scaled_exact(plan: &SweepPlan, setup: &Setup, n: u64, ys: &[f64]) -> Result<Vec<f64>> {
    let times = lattice_times(plan, n)?;
    let horizon = lattice(n, plan.y_grid.end);
    let nf = n as f64;
    match &setup.law {
        PlanLaw::Single { law, scores } => {
            let nrt = plan.theorem.limit_theorem() == crate::limits::Theorem::Nrt;
            let components = scores
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    let (gamma, ell) = setup.columns[j];
                    let scale = if nrt { nf } else { nf.powf(1.0 + gamma) * ell };
                    FddQuery::new(
                        times.clone(),
                        plan.query.weights.iter().map(|r| r[j]).collect(),
                        s.clone(),
                        scale,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let grid = log_laplace_joint(&components, law, horizon)?;
            Ok(ys.iter().map(|&y| nf * grid.at(lattice(n, y))).collect())
        }
        PlanLaw::Multi(mt) => {
            let query = NestedQuery::with_population_scales(times, plan.query.weights.clone(), n);
            let grid = nested_transform(mt, &query, horizon)?;
            Ok(ys.iter().map(|&y| nf * grid.at(1, lattice(n, y))).collect())
        }
    }
}

/// Sweep over `n_values` and compare with the limit exponent.
pub fn convergence_sweep(plan: &SweepPlan) -> Result<SweepReport> {
    sweep_with_checks(plan).map(|(s, _)| s)
}

pub(crate) fn sweep_with_checks(plan: &SweepPlan) -> Result<(SweepReport, Vec<Check>)> {
    let setup = setup(plan)?;
    let ys = plan.y_grid.points();
    let limits: Vec<f64> = ys.par_iter().map(|&y| setup.limit.eval(y)).collect::<Result<_>>()?;
    let exact: Vec<Vec<f64>> = plan
        .n_values
        .par_iter()
        .map(|&n| scaled_exact(plan, &setup, n, &ys))
        .collect::<Result<_>>()?;

    let sup_errors: Vec<f64> = exact
        .iter()
        .map(|row| {
            row.iter()
                .zip(&limits)
                .map(|(e, r)| (e - r).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let max_limit = limits.iter().copied().fold(0.0, f64::max);
    let last = *sup_errors.last().unwrap();
    let final_relative_error = if last == 0.0 { 0.0 } else { last / max_limit };
    let slack = 1.0 + plan.tolerances.monotone_slack;
    let monotone = sup_errors.windows(2).all(|w| w[1] <= w[0] * slack);
    let pass = monotone && final_relative_error < plan.tolerances.final_rel_err;
    let curves = ys
        .iter()
        .enumerate()
        .map(|(k, &y)| CurvePoint {
            y,
            limit: limits[k],
            scaled: exact.iter().map(|row| row[k]).collect(),
        })
        .collect();

    let mut checks = Vec::new();
    if let Some(form) = plan.closed_form {
        let f = closed_form(plan, &setup, form)?;
        let last_row = exact.last().unwrap();
        let worst = ys
            .iter()
            .zip(last_row)
            .map(|(&y, e)| (e - f(y)).abs())
            .fold(0.0, f64::max);
        let peak = ys.iter().map(|&y| f(y)).fold(0.0, f64::max);
        checks.push(Check::absolute(
            format!("closed form vs exact at n={}", plan.n_values.last().unwrap()),
            if worst == 0.0 { 0.0 } else { worst / peak },
            0.0,
            plan.tolerances.final_rel_err,
        ));
    }
    if let PlanLaw::Multi(mt) = &setup.law {
        checks.extend(deco_mean_checks(plan, mt, *plan.n_values.last().unwrap(), &ys)?);
    }
    Ok((
        SweepReport {
            n_values: plan.n_values.clone(),
            sup_errors,
            max_limit,
            final_relative_error,
            monotone,
            pass,
            curves,
        },
        checks,
    ))
}

fn closed_form(plan: &SweepPlan, setup: &Setup, form: ClosedForm) -> Result<impl Fn(f64) -> f64> {
    if plan.query.offsets != [0.0] || plan.query.weights[0].len() != 1 {
        return Err(Error::Plan(format!(
            "{}: closed forms need a one-point query at u = 0",
            plan.id
        )));
    }
    let lambda = plan.query.weights[0][0];
    let LimitParams { a, b, m_chi, .. } = setup.params.clone();
    let gamma = setup.columns[0].0;
    match form {
        ClosedForm::Csb => {
            let c = m_chi.ok_or_else(|| Error::Plan(format!("{}: csb form needs m_chi", plan.id)))? * lambda;
            Ok(Box::new(move |y: f64| c / (1.0 + c * b * y / a)) as Box<dyn Fn(f64) -> f64>)
        }
        ClosedForm::LinearRiccati => {
            if gamma != 1.0 {
                return Err(Error::Plan(format!("{}: linear Riccati form needs γ = 1", plan.id)));
            }
            let c = lambda;
            Ok(Box::new(move |y: f64| {
                if c == 0.0 {
                    0.0
                } else {
                    (c / b).sqrt() * ((c * b).sqrt() * y / a).tanh()
                }
            }) as Box<dyn Fn(f64) -> f64>)
        }
    }
}

/// Spot values of `r_p` and closed forms against `r_p` on the grid.
pub(crate) fn limit_checks(plan: &SweepPlan) -> Result<Vec<Check>> {
    let setup = setup(plan)?;
    let mut checks = Vec::new();
    for spot in &plan.spot_checks {
        checks.push(Check::absolute(
            format!("r_p({})", spot.y),
            setup.limit.eval(spot.y)?,
            spot.expected,
            spot.tolerance,
        ));
    }
    if let Some(form) = plan.closed_form {
        let f = closed_form(plan, &setup, form)?;
        let worst = plan
            .y_grid
            .points()
            .iter()
            .map(|&y| Ok((setup.limit.eval(y)? - f(y)).abs()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        checks.push(Check::absolute("closed form vs limit exponent", worst, 0.0, 1e-3));
    }
    Ok(checks)
}

/// `n^{-j} E_n Z^j_{⌊ny⌋}` against `α_{j-1} y^{j-1}`, relative sup error over the grid.
fn deco_mean_checks(plan: &SweepPlan, law: &MultitypeLaw, n: u64, ys: &[f64]) -> Result<Vec<Check>> {
    let horizon = lattice(n, plan.y_grid.end) as usize;
    let renewal = RenewalTable::from_moments(&law.type1_law()?.moments(), horizon)?;
    let alpha = law.alpha();
    let mut checks = Vec::new();
    for j in 2..=law.q() {
        let m = type1_score_means(law, j, horizon)?;
        let worst = ys
            .iter()
            .map(|&y| {
                let t = lattice(n, y) as usize;
                let mean: f64 = (0..=t).map(|s| renewal.values()[t - s] * m[s]).sum();
                let scaled = mean * n as f64 / (n as f64).powi(j as i32);
                let target = alpha[j - 2] * y.powi(j as i32 - 1);
                (scaled - target).abs() / target
            })
            .fold(0.0, f64::max);
        checks.push(Check::absolute(
            format!("mean of Z^{j} at n={n}"),
            worst,
            0.0,
            plan.tolerances.final_rel_err,
        ));
    }
    let table = moment_table(law, horizon);
    let linear = (1..law.q())
        .flat_map(|i| (1..=horizon).map(move |t| (i, t)))
        .map(|(i, t)| {
            let exact = t as f64 * law.mean(i, i + 1);
            (table.get(i, i + 1, t) - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    checks.push(Check::absolute("M_{i,i+1}(t) = t m_{i,i+1}", linear, 0.0, 1e-12));
    Ok(checks)
}
