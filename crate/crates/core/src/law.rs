//! Individual reproduction laws with finite support over life histories.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, e2};

const NORMALIZATION_TOL: f64 = 1e-12;

/// One possible life: a life length and the litter size at each age `1..=L`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LifeHistory {
    life_length: usize,
    litters: Vec<u64>,
}

impl LifeHistory {
    pub fn new(life_length: usize, litters: Vec<u64>) -> Result<Self> {
        if life_length == 0 {
            return Err(Error::MalformedLaw("life length must be at least 1".into()));
        }
        if litters.len() != life_length {
            return Err(Error::MalformedLaw(format!(
                "litter sequence has {} entries but life length is {}",
                litters.len(),
                life_length
            )));
        }
        Ok(LifeHistory {
            life_length,
            litters,
        })
    }

    pub fn life_length(&self) -> usize {
        self.life_length
    }

    /// Litter sizes; `litters()[k]` is the number of births at age `k + 1`.
    pub fn litters(&self) -> &[u64] {
        &self.litters
    }

    /// Litter size at age `t`, zero outside `1..=L`.
    pub fn litter_at(&self, t: usize) -> u64 {
        if t == 0 || t > self.life_length {
            0
        } else {
            self.litters[t - 1]
        }
    }

    /// Total number of births N.
    pub fn total_births(&self) -> u64 {
        self.litters.iter().sum()
    }

    /// Ordered birth ages `τ_1 <= ... <= τ_N`.
    pub fn birth_ages(&self) -> Vec<usize> {
        self.litters
            .iter()
            .enumerate()
            .flat_map(|(k, &nu)| std::iter::repeat_n(k + 1, nu as usize))
            .collect()
    }
}

/// A finite-support distribution over life histories.
#[derive(Debug, Clone, PartialEq)]
pub struct LifeLaw {
    support: Vec<(LifeHistory, f64)>,
    max_age: usize,
}

impl LifeLaw {
    pub fn new(support: Vec<(LifeHistory, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::MalformedLaw("empty support".into()));
        }
        for (i, (_, p)) in support.iter().enumerate() {
            if !(p.is_finite() && *p > 0.0 && *p <= 1.0 + NORMALIZATION_TOL) {
                return Err(Error::MalformedLaw(format!(
                    "probability of history {i} is {p}, outside (0, 1]"
                )));
            }
        }
        let total = compensated_sum(support.iter().map(|(_, p)| *p));
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::MalformedLaw(format!(
                "probabilities sum to {total:.17}, not 1"
            )));
        }
        let mut seen = HashSet::new();
        for (h, _) in &support {
            if !seen.insert(h) {
                return Err(Error::MalformedLaw(format!(
                    "duplicate history L={} nu={:?}",
                    h.life_length, h.litters
                )));
            }
        }
        let max_age = support.iter().map(|(h, _)| h.life_length).max().unwrap();
        Ok(LifeLaw { support, max_age })
    }

    /// Galton-Watson law with `P(N = k) = probs[k]`, every life of length 1.
    pub fn galton_watson(offspring: &[(u64, f64)]) -> Result<Self> {
        let support = offspring
            .iter()
            .map(|&(k, p)| Ok((LifeHistory::new(1, vec![k])?, p)))
            .collect::<Result<Vec<_>>>()?;
        LifeLaw::new(support)
    }

    /// The two-point GW law: N = 0 or 2 with probability 1/2 each.
    pub fn gw_toy() -> Self {
        LifeLaw::galton_watson(&[(0, 0.5), (2, 0.5)]).expect("valid toy law")
    }

    /// The two-point GWO law: L = 2 with litters (0,0) or (1,1), each w.p. 1/2.
    pub fn gwo_toy() -> Self {
        LifeLaw::new(vec![
            (LifeHistory::new(2, vec![0, 0]).unwrap(), 0.5),
            (LifeHistory::new(2, vec![1, 1]).unwrap(), 0.5),
        ])
        .expect("valid toy law")
    }

    pub fn support(&self) -> &[(LifeHistory, f64)] {
        &self.support
    }

    pub fn max_age(&self) -> usize {
        self.max_age
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: LawDocument = serde_json::from_str(text)?;
        LifeLaw::try_from(doc)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        LifeLaw::from_json_str(&text)
    }

    pub fn to_document(&self) -> LawDocument {
        LawDocument {
            histories: self
                .support
                .iter()
                .map(|(h, p)| HistoryEntry {
                    p: Probability::Float(*p),
                    life_length: h.life_length,
                    nu: h.litters.clone(),
                })
                .collect(),
        }
    }

    /// Exact moments by summation over the support.
    pub fn moments(&self) -> LawMoments {
        let mean_n = compensated_sum(
            self.support
                .iter()
                .map(|(h, p)| p * h.total_births() as f64),
        );
        let second_n = compensated_sum(self.support.iter().map(|(h, p)| {
            let n = h.total_births() as f64;
            p * n * n
        }));
        let mu = compensated_sum(
            self.support
                .iter()
                .map(|(h, p)| p * h.life_length as f64),
        );
        let inter_arrival: Vec<f64> = (1..=self.max_age)
            .map(|t| {
                compensated_sum(
                    self.support
                        .iter()
                        .map(|(h, p)| p * h.litter_at(t) as f64),
                )
            })
            .collect();
        // a = E(τ_1 + ... + τ_N), summed per history.
        let a = compensated_sum(self.support.iter().map(|(h, p)| {
            let s: u64 = h
                .litters
                .iter()
                .enumerate()
                .map(|(k, &nu)| (k as u64 + 1) * nu)
                .sum();
            p * s as f64
        }));
        LawMoments {
            a,
            b: (second_n - mean_n * mean_n) / 2.0,
            mu,
            mean_offspring: mean_n,
            inter_arrival,
            critical: (mean_n - 1.0).abs() < NORMALIZATION_TOL,
        }
    }

    /// `Ψ(z) = E e^{-zN} - e^{-z}` evaluated without cancellation near zero.
    pub fn offspring_laplace(&self, z: f64) -> f64 {
        // E e^{-zN} - e^{-z} = E e2(zN) - e2(z) + z (1 - E N)
        let mean_n = compensated_sum(
            self.support
                .iter()
                .map(|(h, p)| p * h.total_births() as f64),
        );
        let lin = z * (1.0 - mean_n);
        let quad = compensated_sum(
            self.support
                .iter()
                .map(|(h, p)| p * e2(z * h.total_births() as f64)),
        );
        quad - e2(z) + lin
    }
}

/// Characteristic moments of a life law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawMoments {
    /// Mean generation length `E(τ_1 + ... + τ_N)`.
    pub a: f64,
    /// Half the offspring variance.
    pub b: f64,
    /// Mean life length.
    pub mu: f64,
    pub mean_offspring: f64,
    /// `A(t) = E ν(t) 1{L >= t}` for `t = 1..=max_age`.
    #[serde(rename = "A")]
    pub inter_arrival: Vec<f64>,
    pub critical: bool,
}

impl LawMoments {
    /// `A(t)`, zero outside the support.
    pub fn inter_arrival_at(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.inter_arrival.get(t - 1).copied().unwrap_or(0.0)
        }
    }
}

/// Probability as a float or an exact `"num/den"` string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Probability {
    Float(f64),
    Ratio(String),
}

impl Probability {
    pub fn value(&self) -> Result<f64> {
        match self {
            Probability::Float(p) => Ok(*p),
            Probability::Ratio(s) => parse_ratio(s),
        }
    }
}

pub(crate) fn parse_ratio(s: &str) -> Result<f64> {
    let bad = || Error::MalformedLaw(format!("cannot parse probability `{s}`"));
    match s.split_once('/') {
        Some((num, den)) => {
            let num: u64 = num.trim().parse().map_err(|_| bad())?;
            let den: u64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0 {
                return Err(bad());
            }
            Ok(num as f64 / den as f64)
        }
        None => s.trim().parse::<f64>().map_err(|_| bad()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub p: Probability,
    #[serde(rename = "L")]
    pub life_length: usize,
    pub nu: Vec<u64>,
}

/// On-disk law format: `{"histories": [{"p": .., "L": .., "nu": [..]}, ..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawDocument {
    pub histories: Vec<HistoryEntry>,
}

impl TryFrom<LawDocument> for LifeLaw {
    type Error = Error;

    fn try_from(doc: LawDocument) -> Result<Self> {
        let support = doc
            .histories
            .into_iter()
            .map(|e| Ok((LifeHistory::new(e.life_length, e.nu)?, e.p.value()?)))
            .collect::<Result<Vec<_>>>()?;
        LifeLaw::new(support)
    }
}
