//! Discrete renewal function and residual waiting times.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::law::LawMoments;
use crate::numeric::{compensated_sum, gcd};

/// Renewal function `U(0..=T)` for an inter-arrival law `A(1), A(2), ...`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenewalTable {
    /// `inter_arrival[k] = A(k + 1)`.
    inter_arrival: Vec<f64>,
    values: Vec<f64>,
}

impl RenewalTable {
    /// Forward recursion `U(t) = 1{t=0} + Σ_{j=1}^{t} A(j) U(t-j)`.
    pub fn new(inter_arrival: &[f64], horizon: usize) -> Result<Self> {
        if let Some((k, p)) = inter_arrival
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
        {
            return Err(Error::NonProbability(format!("A({}) = {p}", k + 1)));
        }
        let total = compensated_sum(inter_arrival.iter().copied());
        if total > 1.0 + 1e-12 {
            return Err(Error::NonProbability(format!(
                "inter-arrival probabilities sum to {total}"
            )));
        }
        let mut values = vec![0.0; horizon + 1];
        values[0] = 1.0;
        for t in 1..=horizon {
            let reach = t.min(inter_arrival.len());
            values[t] =
                compensated_sum((1..=reach).map(|j| inter_arrival[j - 1] * values[t - j]));
        }
        Ok(RenewalTable {
            inter_arrival: inter_arrival.to_vec(),
            values,
        })
    }

    pub fn from_moments(moments: &LawMoments, horizon: usize) -> Result<Self> {
        RenewalTable::new(&moments.inter_arrival, horizon)
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `U(t)`; zero for `t < 0`.
    pub fn u(&self, t: i64) -> f64 {
        if t < 0 {
            0.0
        } else {
            self.values[t as usize]
        }
    }

    /// `A(t)`, zero outside the support.
    pub fn a_at(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.inter_arrival.get(t - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn max_age(&self) -> usize {
        self.inter_arrival
            .iter()
            .rposition(|&p| p > 0.0)
            .map_or(0, |k| k + 1)
    }

    /// Mean inter-arrival time `Σ t A(t)`.
    pub fn mean(&self) -> f64 {
        compensated_sum(
            self.inter_arrival
                .iter()
                .enumerate()
                .map(|(k, p)| (k + 1) as f64 * p),
        )
    }

    /// gcd of the support of `A`; 1 means aperiodic.
    pub fn period(&self) -> usize {
        self.inter_arrival
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .fold(0, |g, (k, _)| gcd(g, k + 1))
    }

    pub fn is_aperiodic(&self) -> bool {
        self.period() == 1
    }

    /// `U(t) - 1{t=0} - (U*A)(t)`, recomputed independently of the stored recursion order.
    pub fn convolution_residual(&self, t: usize) -> f64 {
        let conv: f64 = (1..=t).map(|j| self.a_at(j) * self.values[t - j]).sum();
        self.values[t] - if t == 0 { 1.0 } else { 0.0 } - conv
    }

    /// Elementary renewal limit `1/a`; rejects periodic laws.
    pub fn limit(&self) -> Result<f64> {
        if !self.is_aperiodic() {
            return Err(Error::Precondition(format!(
                "inter-arrival law has period {}; renewal limits need aperiodicity",
                self.period()
            )));
        }
        Ok(1.0 / self.mean())
    }

    /// `R_t(j)` for `j = 1..=j_max`; `j_max = None` means `max_age`.
    pub fn residual_distribution(&self, t: usize, j_max: Option<usize>) -> Result<ResidualTable> {
        if t > self.horizon() {
            return Err(Error::Precondition(format!(
                "residual time at t={t} beyond horizon {}",
                self.horizon()
            )));
        }
        let j_max = j_max.unwrap_or_else(|| self.max_age()).max(1);
        let residual = (1..=j_max)
            .map(|j| {
                // A(t+j-k) vanishes once t+j-k exceeds the support.
                let k_lo = (t + j).saturating_sub(self.inter_arrival.len());
                compensated_sum((k_lo..=t).map(|k| self.a_at(t + j - k) * self.values[k]))
            })
            .collect();
        let a = self.mean();
        let limit = (1..=j_max)
            .map(|j| {
                compensated_sum((j..=self.inter_arrival.len()).map(|k| self.a_at(k))) / a
            })
            .collect();
        Ok(ResidualTable {
            t,
            residual,
            limit,
        })
    }
}

/// Distribution of the waiting time from `t` to the next renewal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualTable {
    pub t: usize,
    /// `residual[j-1] = R_t(j)`.
    pub residual: Vec<f64>,
    /// `limit[j-1] = R(j) = a^{-1} Σ_{k>=j} A(k)`.
    pub limit: Vec<f64>,
}

impl ResidualTable {
    pub fn r(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.residual.get(j - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.residual.iter().copied())
    }

    pub fn max_deviation_from_limit(&self) -> f64 {
        self.residual
            .iter()
            .zip(&self.limit)
            .map(|(r, l)| (r - l).abs())
            .fold(0.0, f64::max)
    }
}
