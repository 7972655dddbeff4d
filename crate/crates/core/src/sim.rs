//! Monte Carlo simulation of population counts started from `n` newborns.
//!
//! Replicate `r` draws from a ChaCha8 stream selected by `(seed, r)`, so the
//! output of a run does not depend on how replicates are scheduled.

use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::{LawDocument, LifeLaw};
use crate::numeric::mean_and_std_error;
use crate::score::ScoreSpec;

pub const DEFAULT_BIRTH_CAP: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    /// One multinomial draw over the support per time step.
    #[default]
    Aggregate,
    /// One draw per newborn.
    Individual,
}

impl FromStr for SimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aggregate" => Ok(SimMode::Aggregate),
            "individual" => Ok(SimMode::Individual),
            _ => Err(Error::config("mode", format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub law: LifeLaw,
    pub scores: Vec<ScoreSpec>,
    pub n: u64,
    pub horizon: usize,
    pub replicates: usize,
    pub seed: u64,
    pub mode: SimMode,
    /// Maximum number of births per replicate.
    pub birth_cap: u64,
}

impl SimConfig {
    pub fn new(law: LifeLaw, scores: Vec<ScoreSpec>, n: u64, horizon: usize, replicates: usize) -> Self {
        SimConfig {
            law,
            scores,
            n,
            horizon,
            replicates,
            seed: crate::DEFAULT_SEED,
            mode: SimMode::Aggregate,
            birth_cap: DEFAULT_BIRTH_CAP,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_mode(mut self, mode: SimMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "need at least one progenitor"));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates", "need at least one replicate"));
        }
        for s in &self.scores {
            s.validate_for(&self.law)?;
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: SimConfigDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// A score given either as a short name (`"alive"`, `"power:0.5"`) or as a tagged object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoreEntry {
    Name(String),
    Spec(ScoreSpec),
}

impl ScoreEntry {
    pub fn resolve(self) -> Result<ScoreSpec> {
        match self {
            ScoreEntry::Name(s) => s.parse(),
            ScoreEntry::Spec(s) => Ok(s),
        }
    }
}

/// On-disk simulation config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfigDocument {
    pub law: LawDocument,
    #[serde(default)]
    pub scores: Vec<ScoreEntry>,
    pub n: u64,
    pub horizon: usize,
    pub replicates: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default)]
    pub birth_cap: Option<u64>,
}

impl TryFrom<SimConfigDocument> for SimConfig {
    type Error = Error;

    fn try_from(doc: SimConfigDocument) -> Result<Self> {
        let config = SimConfig {
            law: LifeLaw::try_from(doc.law)?,
            scores: doc
                .scores
                .into_iter()
                .map(ScoreEntry::resolve)
                .collect::<Result<_>>()?,
            n: doc.n,
            horizon: doc.horizon,
            replicates: doc.replicates,
            seed: doc.seed.unwrap_or(crate::DEFAULT_SEED),
            mode: doc.mode,
            birth_cap: doc.birth_cap.unwrap_or(DEFAULT_BIRTH_CAP),
        };
        config.validate()?;
        Ok(config)
    }
}

/// One replicate: `newborns[t] = Z_t` and `counts[k][t] = X_k(t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrajectory {
    pub newborns: Vec<u64>,
    pub counts: Vec<Vec<f64>>,
}

/// Precomputed per-history data.
struct Plan {
    probs: Vec<f64>,
    /// Nonzero litters `(age, size)`.
    litters: Vec<Vec<(usize, u64)>>,
    /// For history-dependent scores: nonzero `(age, χ(age))` per history.
    contributions: Vec<Option<Vec<Vec<(usize, f64)>>>>,
    sampler: WeightedIndex<f64>,
}

impl Plan {
    fn new(config: &SimConfig) -> Result<Self> {
        let support = config.law.support();
        let probs: Vec<f64> = support.iter().map(|(_, p)| *p).collect();
        let litters = support
            .iter()
            .map(|(h, _)| {
                h.litters()
                    .iter()
                    .enumerate()
                    .filter(|(_, &nu)| nu > 0)
                    .map(|(k, &nu)| (k + 1, nu))
                    .collect()
            })
            .collect();
        let contributions = config
            .scores
            .iter()
            .map(|score| {
                if score.history_independent() {
                    return None;
                }
                let reach = score.time_support(&config.law).unwrap_or(config.horizon + 1);
                Some(
                    support
                        .iter()
                        .enumerate()
                        .map(|(i, (h, _))| {
                            (0..reach.min(config.horizon + 1))
                                .map(|s| (s, score.value(i, h, s as i64)))
                                .filter(|(_, v)| *v != 0.0)
                                .collect()
                        })
                        .collect(),
                )
            })
            .collect();
        let sampler = WeightedIndex::new(&probs)
            .map_err(|e| Error::NonProbability(format!("cannot sample life histories: {e}")))?;
        Ok(Plan {
            probs,
            litters,
            contributions,
            sampler,
        })
    }
}

/// Multinomial split of `total` over `probs` by the conditional-binomial chain.
pub(crate) fn multinomial(rng: &mut ChaCha8Rng, total: u64, probs: &[f64], out: &mut [u64]) {
    let mut left = total;
    let mut mass = 1.0f64;
    let last = probs.len() - 1;
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            out[i] = 0;
            continue;
        }
        if i == last {
            out[i] = left;
            break;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let k = if q >= 1.0 {
            left
        } else {
            Binomial::new(left, q).expect("valid binomial").sample(rng)
        };
        out[i] = k;
        left -= k;
        mass -= p;
    }
}

pub(crate) fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

fn run_replicate(config: &SimConfig, plan: &Plan, r: usize) -> Result<SimTrajectory> {
    let horizon = config.horizon;
    let mut rng = replicate_rng(config.seed, r);
    let mut z = vec![0u64; horizon + 1];
    z[0] = config.n;
    let mut counts = vec![vec![0.0; horizon + 1]; config.scores.len()];
    let mut births = 0u64;
    let mut split = vec![0u64; plan.probs.len()];

    let add_cohort =
        |t: usize, h: usize, c: u64, z: &mut [u64], counts: &mut [Vec<f64>], births: &mut u64| -> Result<()> {
            for &(age, nu) in &plan.litters[h] {
                let added = c
                    .checked_mul(nu)
                    .filter(|&b| b <= config.birth_cap)
                    .ok_or_else(|| cap_error(config.birth_cap))?;
                *births = births
                    .checked_add(added)
                    .filter(|&b| b <= config.birth_cap)
                    .ok_or_else(|| cap_error(config.birth_cap))?;
                if t + age <= horizon {
                    z[t + age] += added;
                }
            }
            for (k, table) in plan.contributions.iter().enumerate() {
                if let Some(table) = table {
                    for &(s, v) in &table[h] {
                        if t + s > horizon {
                            break;
                        }
                        counts[k][t + s] += c as f64 * v;
                    }
                }
            }
            Ok(())
        };

    for t in 0..=horizon {
        let newborns = z[t];
        if newborns == 0 {
            continue;
        }
        match config.mode {
            SimMode::Aggregate => {
                multinomial(&mut rng, newborns, &plan.probs, &mut split);
                for (h, &c) in split.iter().enumerate() {
                    if c > 0 {
                        add_cohort(t, h, c, &mut z, &mut counts, &mut births)?;
                    }
                }
            }
            SimMode::Individual => {
                for _ in 0..newborns {
                    let h = plan.sampler.sample(&mut rng);
                    add_cohort(t, h, 1, &mut z, &mut counts, &mut births)?;
                }
            }
        }
    }

    for (k, score) in config.scores.iter().enumerate() {
        if score.history_independent() {
            counts[k] = history_independent_counts(score, &z);
        }
    }
    Ok(SimTrajectory {
        newborns: z,
        counts,
    })
}

fn cap_error(cap: u64) -> Error {
    Error::Capacity(format!("cumulative births exceed the cap of {cap}"))
}

/// `X(t) = Σ_k Z_k χ(t - k)` for scores that ignore the life history.
fn history_independent_counts(score: &ScoreSpec, z: &[u64]) -> Vec<f64> {
    match score {
        ScoreSpec::Newborn => z.iter().map(|&v| v as f64).collect(),
        ScoreSpec::EverBorn => z
            .iter()
            .scan(0u64, |acc, &v| {
                *acc += v;
                Some(*acc as f64)
            })
            .collect(),
        ScoreSpec::PowerTail { gamma } => {
            let weights: Vec<f64> = (0..z.len())
                .map(|s| ((s + 1) as f64).powf(*gamma) - (s as f64).powf(*gamma))
                .collect();
            (0..z.len())
                .map(|t| (0..=t).map(|k| z[k] as f64 * weights[t - k]).sum())
                .collect()
        }
        ScoreSpec::Alive | ScoreSpec::Table { .. } => unreachable!("history-dependent score"),
    }
}

/// Replicate `r` of `config`.
pub fn replicate(config: &SimConfig, r: usize) -> Result<SimTrajectory> {
    config.validate()?;
    run_replicate(config, &Plan::new(config)?, r)
}

/// Lazily generated replicates `0..R`, in order.
pub fn simulate(config: &SimConfig) -> Result<impl Iterator<Item = Result<SimTrajectory>> + '_> {
    config.validate()?;
    let plan = Plan::new(config)?;
    Ok((0..config.replicates).map(move |r| run_replicate(config, &plan, r)))
}

/// All replicates, computed in parallel and returned in replicate order.
pub fn simulate_parallel(config: &SimConfig) -> Result<Vec<SimTrajectory>> {
    map_replicates(config, |t| t)
}

/// Apply `f` to every replicate in parallel, keeping replicate order.
pub fn map_replicates<T, F>(config: &SimConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(SimTrajectory) -> T + Sync,
{
    config.validate()?;
    let plan = Plan::new(config)?;
    (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, &plan, r).map(&f))
        .collect()
}

/// One term `weight · X_score(time)` of a transform argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformTerm {
    pub score: usize,
    pub time: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// `-ln(estimate) / n`.
    pub exponent: f64,
    /// Delta-method standard error of `exponent`.
    pub exponent_se: f64,
    /// Set when the estimate is within 10 standard errors of zero.
    pub degenerate: bool,
    pub replicates: usize,
}

impl TransformEstimate {
    pub fn from_samples(samples: &[f64], n: u64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Precondition(
                "a standard error needs at least two replicates".into(),
            ));
        }
        let (estimate, std_error) = mean_and_std_error(samples);
        let n = n as f64;
        Ok(TransformEstimate {
            estimate,
            std_error,
            exponent: -estimate.ln() / n,
            exponent_se: std_error / (estimate * n),
            degenerate: estimate <= 10.0 * std_error,
            replicates: samples.len(),
        })
    }

    /// Fails with [`Error::DegenerateEstimate`] when the estimate is not resolved.
    pub fn resolved(self) -> Result<Self> {
        if self.degenerate {
            Err(Error::DegenerateEstimate {
                mean: self.estimate,
                std_error: self.std_error,
            })
        } else {
            Ok(self)
        }
    }
}

/// `exp(-Σ w X_k(t) / scale)` for one trajectory.
pub fn transform_sample(trajectory: &SimTrajectory, terms: &[TransformTerm], scale: f64) -> f64 {
    let s: f64 = terms
        .iter()
        .map(|term| term.weight * trajectory.counts[term.score][term.time])
        .sum();
    (-s / scale).exp()
}

/// Sample mean and standard error of `exp(-Σ λ_i X(t_i) / scale)`.
pub fn estimate_transform(
    trajectories: &[SimTrajectory],
    terms: &[TransformTerm],
    scale: f64,
    n: u64,
) -> Result<TransformEstimate> {
    check_terms(trajectories.first(), terms)?;
    let samples: Vec<f64> = trajectories
        .iter()
        .map(|t| transform_sample(t, terms, scale))
        .collect();
    TransformEstimate::from_samples(&samples, n)
}

/// Simulate and estimate in one pass without keeping trajectories.
pub fn monte_carlo_transform(config: &SimConfig, terms: &[TransformTerm], scale: f64) -> Result<TransformEstimate> {
    for term in terms {
        if term.score >= config.scores.len() || term.time > config.horizon {
            return Err(Error::InvalidQuery(format!(
                "term {term:?} outside {} scores and horizon {}",
                config.scores.len(),
                config.horizon
            )));
        }
    }
    if config.replicates < 2 {
        return Err(Error::Precondition(
            "a standard error needs at least two replicates".into(),
        ));
    }
    let samples = map_replicates(config, |t| transform_sample(&t, terms, scale))?;
    TransformEstimate::from_samples(&samples, config.n)
}

fn check_terms(first: Option<&SimTrajectory>, terms: &[TransformTerm]) -> Result<()> {
    let Some(first) = first else {
        return Ok(());
    };
    for term in terms {
        if term.score >= first.counts.len() || term.time >= first.newborns.len() {
            return Err(Error::InvalidQuery(format!("term {term:?} outside the simulated range")));
        }
        if !(term.weight.is_finite() && term.weight >= 0.0) {
            return Err(Error::InvalidQuery(format!("weight {} must be nonnegative", term.weight)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::LifeHistory;

    fn barren() -> LifeLaw {
        LifeLaw::new(vec![(LifeHistory::new(2, vec![0, 0]).unwrap(), 1.0)]).unwrap()
    }

    #[test]
    fn barren_law_keeps_the_founders() {
        let config = SimConfig::new(barren(), vec![ScoreSpec::Newborn, ScoreSpec::Alive], 5, 6, 3);
        for t in simulate(&config).unwrap() {
            let t = t.unwrap();
            assert_eq!(t.newborns, vec![5, 0, 0, 0, 0, 0, 0]);
            assert_eq!(t.counts[0], vec![5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
            assert_eq!(t.counts[1], vec![5.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn multinomial_preserves_total() {
        let mut rng = replicate_rng(1, 0);
        let mut out = vec![0; 3];
        for total in [0u64, 1, 7, 1000, 123_456] {
            multinomial(&mut rng, total, &[0.2, 0.5, 0.3], &mut out);
            assert_eq!(out.iter().sum::<u64>(), total);
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let config = SimConfig::new(LifeLaw::gwo_toy(), vec![ScoreSpec::Alive, ScoreSpec::EverBorn], 20, 30, 16);
        let seq: Vec<_> = simulate(&config).unwrap().map(|t| t.unwrap()).collect();
        assert_eq!(seq, simulate_parallel(&config).unwrap());
        assert_eq!(seq[5], replicate(&config, 5).unwrap());
    }

    #[test]
    fn ever_born_is_cumulative_newborns() {
        let config = SimConfig::new(LifeLaw::gwo_toy(), vec![ScoreSpec::EverBorn, ScoreSpec::power_tail(1.0).unwrap()], 10, 25, 4);
        for t in simulate(&config).unwrap() {
            let t = t.unwrap();
            let mut acc = 0;
            for (s, &z) in t.newborns.iter().enumerate() {
                acc += z;
                assert_eq!(t.counts[0][s], acc as f64);
                assert_eq!(t.counts[1][s], acc as f64);
            }
        }
    }

    #[test]
    fn zero_weights_give_unit_transform() {
        let config = SimConfig::new(LifeLaw::gw_toy(), vec![ScoreSpec::Newborn], 10, 5, 50);
        let est = monte_carlo_transform(&config, &[TransformTerm { score: 0, time: 5, weight: 0.0 }], 1.0).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.std_error, 0.0);
        assert!(!est.degenerate);
    }

    #[test]
    fn single_replicate_has_no_standard_error() {
        let config = SimConfig::new(LifeLaw::gw_toy(), vec![ScoreSpec::Newborn], 10, 5, 1);
        let trajectories = simulate_parallel(&config).unwrap();
        let terms = [TransformTerm { score: 0, time: 5, weight: 1.0 }];
        assert!(matches!(
            estimate_transform(&trajectories, &terms, 1.0, 10),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn birth_cap_is_enforced() {
        let mut config = SimConfig::new(LifeLaw::gw_toy(), vec![], 1_000, 50, 1);
        config.birth_cap = 500;
        assert!(matches!(replicate(&config, 0), Err(Error::Capacity(_))));
    }

    #[test]
    fn config_json_round() {
        let text = r#"{"law": {"histories": [{"p": "1/2", "L": 1, "nu": [0]}, {"p": "1/2", "L": 1, "nu": [2]}]},
                       "scores": ["newborn", {"kind": "power_tail", "gamma": 0.5}],
                       "n": 3, "horizon": 4, "replicates": 2, "mode": "individual"}"#;
        let config = SimConfig::from_json_str(text).unwrap();
        assert_eq!(config.mode, SimMode::Individual);
        assert_eq!(config.scores[1], ScoreSpec::PowerTail { gamma: 0.5 });
        assert_eq!(config.seed, crate::DEFAULT_SEED);
        assert!(SimConfig::from_json_str(&text.replace("\"n\": 3", "\"n\": 0")).is_err());
    }
}
