//! Simulator estimates against exact transforms.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{plan_seed, PlanLaw, Probe, SweepPlan};
use crate::error::{Error, Result};
use crate::laplace::{log_laplace_joint, FddQuery};
use crate::law::LifeLaw;
use crate::multitype::{map_multitype_replicates, nested_transform, MultitypeLaw, NestedQuery};
use crate::score::ScoreSpec;
use crate::sim::{map_replicates, transform_sample, SimConfig, SimMode, TransformEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub estimate: f64,
    pub std_error: f64,
    pub exact: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub aggregate: f64,
    pub individual: f64,
    pub combined_std_error: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n: u64,
    pub replicates: usize,
    pub z_limit: f64,
    pub probes: Vec<ProbeReport>,
    pub fraction_within: f64,
    pub max_abs_z: f64,
    #[serde(default)]
    pub modes: Vec<ModeReport>,
    pub pass: bool,
}

/// Two-sided normal quantile for a family-wise 3-sigma level over `probes` tests.
pub fn bonferroni_threshold(probes: usize) -> f64 {
    let normal = Normal::standard();
    let alpha = 2.0 * normal.cdf(-3.0);
    normal.inverse_cdf(1.0 - alpha / (2.0 * probes.max(1) as f64))
}

fn z_score(estimate: f64, exact: f64, se: f64) -> f64 {
    let diff = estimate - exact;
    if diff == 0.0 {
        0.0
    } else {
        diff / se
    }
}

/// Sample columns `samples[probe][replicate]`.
fn transpose(rows: Vec<Vec<f64>>, probes: usize) -> Vec<Vec<f64>> {
    let mut cols = vec![Vec::with_capacity(rows.len()); probes];
    for row in rows {
        for (col, v) in cols.iter_mut().zip(row) {
            col.push(v);
        }
    }
    cols
}

fn single_exact(law: &LifeLaw, scores: &[ScoreSpec], probe: &Probe, n: u64) -> Result<f64> {
    let components = probe
        .terms
        .iter()
        .map(|t| FddQuery::new(vec![t.time as i64], vec![t.weight], scores[t.score].clone(), probe.scale))
        .collect::<Result<Vec<_>>>()?;
    let grid = log_laplace_joint(&components, law, 0)?;
    Ok((-(n as f64) * grid.at(0)).exp())
}

fn single_samples(config: &SimConfig, probes: &[Probe]) -> Result<Vec<Vec<f64>>> {
    let rows = map_replicates(config, |traj| {
        probes
            .iter()
            .map(|p| transform_sample(&traj, &p.terms, p.scale))
            .collect::<Vec<_>>()
    })?;
    Ok(transpose(rows, probes.len()))
}

fn multi_exact(law: &MultitypeLaw, probe: &Probe, n: u64) -> Result<f64> {
    let mut times: Vec<usize> = probe.terms.iter().map(|t| t.time).collect();
    times.sort_unstable_by(|a, b| b.cmp(a));
    times.dedup();
    let mut weights = vec![vec![0.0; law.q()]; times.len()];
    for t in &probe.terms {
        let row = times.iter().position(|&s| s == t.time).unwrap();
        weights[row][t.score] += t.weight;
    }
    let query = NestedQuery::with_population_scales(times.iter().map(|&t| t as i64).collect(), weights, n);
    let grid = nested_transform(law, &query, 0)?;
    Ok((-(n as f64) * grid.at(1, 0)).exp())
}

fn multi_samples(law: &MultitypeLaw, n: u64, horizon: usize, replicates: usize, seed: u64, probes: &[Probe]) -> Result<Vec<Vec<f64>>> {
    let nf = n as f64;
    let rows = map_multitype_replicates(law, n, horizon, replicates, seed, |traj| {
        probes
            .iter()
            .map(|p| {
                let s: f64 = p
                    .terms
                    .iter()
                    .map(|t| t.weight * traj.counts[t.score][t.time] as f64 / nf.powi(t.score as i32 + 1))
                    .sum();
                (-s).exp()
            })
            .collect::<Vec<_>>()
    })?;
    Ok(transpose(rows, probes.len()))
}

/// Simulator estimates of each probe against the exact transform.
pub fn monte_carlo_check(plan: &SweepPlan, seed: u64) -> Result<McReport> {
    let mc = plan
        .monte_carlo
        .as_ref()
        .ok_or_else(|| Error::Plan(format!("{}: no monte_carlo section", plan.id)))?;
    if mc.replicates < 2 {
        return Err(Error::Precondition("Monte Carlo needs at least two replicates".into()));
    }
    let law = plan.resolve()?;
    let seed = plan_seed(seed, &plan.id);
    let horizon = mc
        .probes
        .iter()
        .flat_map(|p| p.terms.iter().map(|t| t.time))
        .max()
        .unwrap_or(0);

    let (exact, columns, modes) = match &law {
        PlanLaw::Single { law, scores } => {
            let exact = mc
                .probes
                .iter()
                .map(|p| single_exact(law, scores, p, mc.n))
                .collect::<Result<Vec<_>>>()?;
            let config = SimConfig::new(law.clone(), scores.clone(), mc.n, horizon, mc.replicates).with_seed(seed);
            let columns = single_samples(&config, &mc.probes)?;
            let modes = if mc.mode_replicates >= 2 {
                let base = SimConfig::new(law.clone(), scores.clone(), mc.n, horizon, mc.mode_replicates);
                let agg = single_samples(&base.clone().with_seed(seed.wrapping_add(1)), &mc.probes)?;
                let ind = single_samples(
                    &base.with_seed(seed.wrapping_add(2)).with_mode(SimMode::Individual),
                    &mc.probes,
                )?;
                agg.iter()
                    .zip(&ind)
                    .map(|(a, i)| {
                        let a = TransformEstimate::from_samples(a, mc.n)?;
                        let i = TransformEstimate::from_samples(i, mc.n)?;
                        let se = (a.std_error.powi(2) + i.std_error.powi(2)).sqrt();
                        Ok(ModeReport {
                            aggregate: a.estimate,
                            individual: i.estimate,
                            combined_std_error: se,
                            z: z_score(a.estimate, i.estimate, se),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            (exact, columns, modes)
        }
        PlanLaw::Multi(law) => {
            let exact = mc
                .probes
                .iter()
                .map(|p| multi_exact(law, p, mc.n))
                .collect::<Result<Vec<_>>>()?;
            let columns = multi_samples(law, mc.n, horizon, mc.replicates, seed, &mc.probes)?;
            (exact, columns, Vec::new())
        }
    };

    let probes = columns
        .iter()
        .zip(&exact)
        .map(|(samples, &exact)| {
            let est = TransformEstimate::from_samples(samples, mc.n)?.resolved()?;
            Ok(ProbeReport {
                estimate: est.estimate,
                std_error: est.std_error,
                exact,
                z: z_score(est.estimate, exact, est.std_error),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let z_limit = mc.z_limit.unwrap_or_else(|| bonferroni_threshold(probes.len()));
    let within = probes.iter().filter(|p| p.z.abs() < z_limit).count();
    let fraction_within = if probes.is_empty() { 1.0 } else { within as f64 / probes.len() as f64 };
    let max_abs_z = probes.iter().map(|p| p.z.abs()).fold(0.0, f64::max);
    let pass = fraction_within >= 0.95 && max_abs_z <= 5.0 && modes.iter().all(|m| m.z.abs() < 4.0);
    Ok(McReport {
        n: mc.n,
        replicates: mc.replicates,
        z_limit,
        probes,
        fraction_within,
        max_abs_z,
        modes,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_probe_threshold_is_three_sigma() {
        assert!((bonferroni_threshold(1) - 3.0).abs() < 1e-9);
        assert!(bonferroni_threshold(10) > 3.0);
    }
}
