//! Individual scores and their mean profiles.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::{LifeHistory, LifeLaw};
use crate::numeric::compensated_sum;
use crate::renewal::RenewalTable;

/// A deterministic score `χ(t | history)`, zero for `t < 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreSpec {
    /// `1{0 <= t < L}`
    Alive,
    /// `1{t = 0}`
    Newborn,
    /// `1{t >= 0}`
    EverBorn,
    /// `(t+1)^γ - t^γ` for `t >= 0`.
    PowerTail { gamma: f64 },
    /// Explicit values by history index; `values[h][t]` for `t = 0..len`, zero after.
    Table { values: BTreeMap<usize, Vec<f64>> },
}

impl ScoreSpec {
    pub fn power_tail(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::config("score", format!("power tail exponent {gamma} outside (0, 1]")));
        }
        Ok(ScoreSpec::PowerTail { gamma })
    }

    /// Table scores from a JSON document `{"0": [..], "1": [..]}`.
    pub fn table_from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<f64>> = serde_json::from_str(text)?;
        let mut values = BTreeMap::new();
        for (k, v) in raw {
            let idx: usize = k
                .parse()
                .map_err(|_| Error::config("score", format!("history index `{k}` is not an integer")))?;
            if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::config("score", format!("table value {x} is not a finite nonnegative number")));
            }
            values.insert(idx, v);
        }
        Ok(ScoreSpec::Table { values })
    }

    /// Checks table indices against a law.
    pub fn validate_for(&self, law: &LifeLaw) -> Result<()> {
        if let ScoreSpec::Table { values } = self {
            if let Some(&k) = values.keys().find(|&&k| k >= law.len()) {
                return Err(Error::config(
                    "score",
                    format!("table refers to history {k}, law has {}", law.len()),
                ));
            }
        }
        Ok(())
    }

    /// `χ(t)` for the history with support index `index`.
    #[inline]
    pub fn value(&self, index: usize, history: &LifeHistory, t: i64) -> f64 {
        if t < 0 {
            return 0.0;
        }
        match self {
            ScoreSpec::Alive => {
                if (t as usize) < history.life_length() {
                    1.0
                } else {
                    0.0
                }
            }
            ScoreSpec::Newborn => {
                if t == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            ScoreSpec::EverBorn => 1.0,
            ScoreSpec::PowerTail { gamma } => {
                let t = t as f64;
                (t + 1.0).powf(*gamma) - t.powf(*gamma)
            }
            ScoreSpec::Table { values } => values
                .get(&index)
                .and_then(|v| v.get(t as usize))
                .copied()
                .unwrap_or(0.0),
        }
    }

    /// Smallest `s` with `χ(t) = 0` for all `t >= s` and every history; `None` if unbounded.
    pub fn time_support(&self, law: &LifeLaw) -> Option<usize> {
        match self {
            ScoreSpec::Alive => Some(law.max_age()),
            ScoreSpec::Newborn => Some(1),
            ScoreSpec::EverBorn | ScoreSpec::PowerTail { .. } => None,
            ScoreSpec::Table { values } => Some(values.values().map(Vec::len).max().unwrap_or(0)),
        }
    }

    /// True when `χ` is the same for every history.
    pub fn history_independent(&self) -> bool {
        matches!(
            self,
            ScoreSpec::Newborn | ScoreSpec::EverBorn | ScoreSpec::PowerTail { .. }
        )
    }

    /// Whether `E χ^2(t) = o(t^{2γ} ℓ^2)` holds. Built-in scores are bounded per age;
    /// tables have finite time support, so both hold whenever the values are finite.
    pub fn satisfies_second_moment_condition(&self) -> bool {
        match self {
            ScoreSpec::Table { values } => values.values().flatten().all(|x| x.is_finite()),
            _ => true,
        }
    }

    pub fn profile(&self, law: &LifeLaw, horizon: usize) -> Result<ScoreProfile> {
        score_profile(self, law, horizon)
    }
}

impl fmt::Display for ScoreSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreSpec::Alive => write!(f, "alive"),
            ScoreSpec::Newborn => write!(f, "newborn"),
            ScoreSpec::EverBorn => write!(f, "ever_born"),
            ScoreSpec::PowerTail { gamma } => write!(f, "power:{gamma}"),
            ScoreSpec::Table { .. } => write!(f, "table"),
        }
    }
}

impl FromStr for ScoreSpec {
    type Err = Error;

    /// `alive | newborn | ever_born | power:<gamma> | table:<file>`
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alive" => Ok(ScoreSpec::Alive),
            "newborn" => Ok(ScoreSpec::Newborn),
            "ever_born" => Ok(ScoreSpec::EverBorn),
            _ => {
                if let Some(g) = s.strip_prefix("power:") {
                    let gamma: f64 = g
                        .parse()
                        .map_err(|_| Error::config("score", format!("bad exponent `{g}`")))?;
                    ScoreSpec::power_tail(gamma)
                } else if let Some(path) = s.strip_prefix("table:") {
                    let text = std::fs::read_to_string(path)?;
                    ScoreSpec::table_from_json(&text)
                } else {
                    Err(Error::config("score", format!("unknown score `{s}`")))
                }
            }
        }
    }
}

/// Mean score profile over `t = 0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreProfile {
    /// `m(t) = E χ(t)`
    pub m: Vec<f64>,
    /// `cum[t] = Σ_{j<=t} m(j)`
    pub cum: Vec<f64>,
    /// `a^{-1} Σ m(t)` when the score has bounded support within the horizon.
    pub m_chi: Option<f64>,
    pub gamma: f64,
    /// Constant slowly varying factor: `cum(t) ~ t^γ ell`.
    pub ell: f64,
}

pub fn score_profile(score: &ScoreSpec, law: &LifeLaw, horizon: usize) -> Result<ScoreProfile> {
    if horizon < law.max_age() {
        return Err(Error::Precondition(format!(
            "profile horizon {horizon} shorter than max age {}",
            law.max_age()
        )));
    }
    score.validate_for(law)?;
    let m: Vec<f64> = (0..=horizon)
        .map(|t| {
            compensated_sum(
                law.support()
                    .iter()
                    .enumerate()
                    .map(|(i, (h, p))| p * score.value(i, h, t as i64)),
            )
        })
        .collect();
    let mut cum = Vec::with_capacity(m.len());
    let mut acc = 0.0;
    for &v in &m {
        acc += v;
        cum.push(acc);
    }
    let total = compensated_sum(m.iter().copied());
    let a = law.moments().a;
    let bounded = score.time_support(law).is_some_and(|s| s <= horizon + 1);
    let m_chi = bounded.then(|| total / a);
    let (gamma, ell) = match score {
        ScoreSpec::EverBorn => (1.0, 1.0),
        ScoreSpec::PowerTail { gamma } => (*gamma, 1.0),
        _ => (0.0, total),
    };
    Ok(ScoreProfile {
        m,
        cum,
        m_chi,
        gamma,
        ell,
    })
}

/// `M(t) = (m * U)(t)` for `t = 0..=T`.
pub fn expected_count(profile: &ScoreProfile, renewal: &RenewalTable, horizon: usize) -> Result<Vec<f64>> {
    if horizon > renewal.horizon() || horizon >= profile.m.len() {
        return Err(Error::Precondition(format!(
            "expected count horizon {horizon} exceeds renewal ({}) or profile ({}) horizon",
            renewal.horizon(),
            profile.m.len() - 1
        )));
    }
    let u = renewal.values();
    Ok((0..=horizon)
        .map(|t| compensated_sum((0..=t).map(|j| profile.m[t - j] * u[j])))
        .collect())
}

/// One term `weight · χ(time + t)` of a shifted score.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedTerm {
    pub score: ScoreSpec,
    pub time: i64,
    pub weight: f64,
}

/// `ψ(t) = Σ_i w_i χ_i(t_i + t)`, the score whose population count is the
/// weighted multi-time functional of the original counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedScore {
    pub terms: Vec<ShiftedTerm>,
}

impl ShiftedScore {
    pub fn new(terms: Vec<ShiftedTerm>) -> Self {
        ShiftedScore { terms }
    }

    #[inline]
    pub fn value(&self, index: usize, history: &LifeHistory, t: i64) -> f64 {
        self.terms
            .iter()
            .filter(|term| term.weight != 0.0)
            .map(|term| term.weight * term.score.value(index, history, term.time + t))
            .sum()
    }

    /// Largest shift `max t_i`; `ψ(t) = 0` whenever `t < -max t_i`.
    pub fn max_shift(&self) -> i64 {
        self.terms.iter().map(|t| t.time).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.weight == 0.0)
    }
}
