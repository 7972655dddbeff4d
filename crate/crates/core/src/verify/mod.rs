//! Convergence sweeps, Monte Carlo cross-checks and the canonical suite.
//!
//! Reports carry no wall-clock or thread information, so a report depends only
//! on the plans and the seed.

mod monte_carlo;
mod suite;
mod sweep;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::{LawDocument, LifeLaw};
use crate::limits::{LimitQuery, Theorem};
use crate::multitype::{MultitypeDocument, MultitypeLaw};
use crate::score::ScoreSpec;
use crate::sim::{ScoreEntry, TransformTerm};

pub use monte_carlo::{bonferroni_threshold, monte_carlo_check, McReport, ModeReport, ProbeReport};
pub use suite::{canonical_plans, corollary_suite, deco_moment_checks, verify_all, verify_plans};
pub use sweep::{convergence_sweep, CurvePoint, SweepReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanTheorem {
    Nrt,
    Nrtg,
    Nrtm,
    Deco,
    Cor1,
    Cor2,
    Cor3,
}

impl PlanTheorem {
    /// The limit theorem the plan is checked against.
    pub fn limit_theorem(self) -> Theorem {
        match self {
            PlanTheorem::Nrt | PlanTheorem::Cor1 => Theorem::Nrt,
            PlanTheorem::Nrtg | PlanTheorem::Cor2 => Theorem::Nrtg,
            PlanTheorem::Nrtm | PlanTheorem::Cor3 | PlanTheorem::Deco => Theorem::Nrtm,
        }
    }

    pub fn all() -> [PlanTheorem; 7] {
        use PlanTheorem::*;
        [Nrt, Nrtg, Nrtm, Deco, Cor1, Cor2, Cor3]
    }
}

impl FromStr for PlanTheorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::config("theorem", format!("unknown theorem `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YGrid {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl Default for YGrid {
    fn default() -> Self {
        YGrid {
            start: 0.2,
            end: 2.0,
            steps: 37,
        }
    }
}

impl YGrid {
    pub fn points(&self) -> Vec<f64> {
        if self.steps <= 1 {
            return vec![self.start];
        }
        let h = (self.end - self.start) / (self.steps - 1) as f64;
        (0..self.steps).map(|k| self.start + k as f64 * h).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub final_rel_err: f64,
    pub monotone_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            final_rel_err: 0.05,
            monotone_slack: 0.10,
        }
    }
}

/// A spot value of the limit exponent: `|r_p(y) - expected| <= tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotCheck {
    pub y: f64,
    pub expected: f64,
    pub tolerance: f64,
}

/// Closed forms available for one-point queries at `u = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedForm {
    /// `c / (1 + c b y / a)` with `c = m_χ λ`.
    Csb,
    /// `sqrt(c / b) tanh(sqrt(c b) y / a)` with `c = λ`, for `γ = 1`.
    LinearRiccati,
}

/// A Monte Carlo probe: `E_n exp(-Σ w X_k(t) / scale)`.
///
/// For multitype plans `score` is the type index counted from 0 and the
/// weight of type `j` is divided by `n^j` instead of by `scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub terms: Vec<TransformTerm>,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloPlan {
    pub n: u64,
    pub replicates: usize,
    pub probes: Vec<Probe>,
    /// Replicates per mode for the aggregate-vs-individual comparison; 0 disables it.
    #[serde(default)]
    pub mode_replicates: usize,
    /// `|z|` bound per probe; defaults to the Bonferroni-adjusted 3-sigma level.
    #[serde(default)]
    pub z_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub id: String,
    pub theorem: PlanTheorem,
    #[serde(default)]
    pub law: Option<LawDocument>,
    #[serde(default)]
    pub multitype_law: Option<MultitypeDocument>,
    #[serde(default)]
    pub scores: Vec<ScoreEntry>,
    pub query: LimitQuery,
    #[serde(default = "default_n_values")]
    pub n_values: Vec<u64>,
    #[serde(default)]
    pub y_grid: YGrid,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub spot_checks: Vec<SpotCheck>,
    #[serde(default)]
    pub closed_form: Option<ClosedForm>,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloPlan>,
    /// Skip the exact sweep and run only the other checks.
    #[serde(default)]
    pub skip_sweep: bool,
}

fn default_n_values() -> Vec<u64> {
    vec![100, 400, 1600]
}

/// The law of a plan after parsing.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum PlanLaw {
    Single { law: LifeLaw, scores: Vec<ScoreSpec> },
    Multi(MultitypeLaw),
}

impl SweepPlan {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let plan: SweepPlan = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    pub(crate) fn resolve(&self) -> Result<PlanLaw> {
        let plan_err = |msg: String| Error::Plan(format!("{}: {msg}", self.id));
        if self.n_values.is_empty() || self.n_values.windows(2).any(|w| w[0] >= w[1]) || self.n_values[0] == 0 {
            return Err(plan_err("n_values must be positive and strictly increasing".into()));
        }
        let grid = self.y_grid;
        if !(grid.start > 0.0 && grid.end >= grid.start && grid.steps >= 1) {
            return Err(plan_err("y_grid must lie in (0, y_max] and have at least one point".into()));
        }
        let law = match (self.theorem, &self.law, &self.multitype_law) {
            (PlanTheorem::Deco, None, Some(doc)) => PlanLaw::Multi(MultitypeLaw::try_from(doc.clone())?),
            (PlanTheorem::Deco, _, _) => {
                return Err(plan_err("deco plans need `multitype_law` and no `law`".into()));
            }
            (_, Some(doc), None) => PlanLaw::Single {
                law: LifeLaw::try_from(doc.clone())?,
                scores: self
                    .scores
                    .iter()
                    .cloned()
                    .map(ScoreEntry::resolve)
                    .collect::<Result<_>>()?,
            },
            _ => return Err(plan_err("single-type plans need `law` and no `multitype_law`".into())),
        };
        let q = self.query.weights.first().map_or(0, Vec::len);
        if self.query.offsets.len() != self.query.weights.len() || q == 0 {
            return Err(plan_err("query needs one weight row per offset".into()));
        }
        match &law {
            PlanLaw::Single { law, scores } => {
                if scores.len() != q {
                    return Err(plan_err(format!("{} scores but {q} weight columns", scores.len())));
                }
                for s in scores {
                    s.validate_for(law)?;
                }
                sweep::check_score_classes(self.theorem, law, scores).map_err(plan_err)?;
            }
            PlanLaw::Multi(law) => {
                if law.q() != q {
                    return Err(plan_err(format!("{} types but {q} weight columns", law.q())));
                }
            }
        }
        if let Some(mc) = &self.monte_carlo {
            if mc.replicates < 2 {
                return Err(Error::Precondition(format!(
                    "{}: Monte Carlo needs at least two replicates",
                    self.id
                )));
            }
            let columns = match &law {
                PlanLaw::Single { scores, .. } => scores.len(),
                PlanLaw::Multi(law) => law.q(),
            };
            for probe in &mc.probes {
                if probe.terms.iter().any(|t| t.score >= columns) {
                    return Err(plan_err(format!("probe refers to a column beyond {columns}")));
                }
            }
        }
        Ok(law)
    }
}

/// A named scalar check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn absolute(name: impl Into<String>, value: f64, expected: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            expected,
            tolerance,
            pass: (value - expected).abs() <= tolerance,
        }
    }

    pub fn relative(name: impl Into<String>, value: f64, expected: f64, tolerance: f64) -> Self {
        let scale = expected.abs().max(f64::MIN_POSITIVE);
        Check {
            name: name.into(),
            value,
            expected,
            tolerance,
            pass: (value - expected).abs() <= tolerance * scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub id: String,
    pub theorem: PlanTheorem,
    #[serde(default)]
    pub sweep: Option<SweepReport>,
    #[serde(default)]
    pub monte_carlo: Option<McReport>,
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub theorem: PlanTheorem,
    pub plans: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub seed: u64,
    pub items: Vec<ItemReport>,
    #[serde(default)]
    pub coverage: Vec<Coverage>,
    pub pass: bool,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn item(&self, id: &str) -> Option<&ItemReport> {
        self.items.iter().find(|i| i.id == id)
    }

    /// Human-readable summary, one line per item.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            let sweep = item.sweep.as_ref().map_or(String::from("-"), |s| {
                s.sup_errors
                    .iter()
                    .map(|e| format!("{e:.3e}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            });
            let mc = item
                .monte_carlo
                .as_ref()
                .map_or(String::from("-"), |m| format!("max|z|={:.2}", m.max_abs_z));
            out.push_str(&format!(
                "{:<28} {:<5} {:<4} sup-err: {:<36} mc: {}\n",
                item.id,
                format!("{:?}", item.theorem).to_lowercase(),
                if item.pass { "pass" } else { "FAIL" },
                sweep,
                mc
            ));
            if let Some(e) = &item.error {
                out.push_str(&format!("    error: {e}\n"));
            }
            for c in item.checks.iter().filter(|c| !c.pass) {
                out.push_str(&format!(
                    "    failed check {}: {} vs {} (tol {})\n",
                    c.name, c.value, c.expected, c.tolerance
                ));
            }
        }
        out.push_str(if self.pass { "verdict: pass\n" } else { "verdict: FAIL\n" });
        out
    }
}

/// Per-plan seed derived from the run seed and the plan id.
pub(crate) fn plan_seed(seed: u64, id: &str) -> u64 {
    // FNV-1a over the id, mixed into the run seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    seed ^ h
}

/// Run one plan: sweep, closed forms, spot values and Monte Carlo.
pub fn run_plan(plan: &SweepPlan, seed: u64) -> ItemReport {
    let mut report = ItemReport {
        id: plan.id.clone(),
        theorem: plan.theorem,
        sweep: None,
        monte_carlo: None,
        checks: Vec::new(),
        error: None,
        pass: false,
    };
    let outcome = (|| -> Result<()> {
        plan.validate()?;
        report.checks.extend(sweep::limit_checks(plan)?);
        if !plan.skip_sweep {
            let (sweep, checks) = sweep::sweep_with_checks(plan)?;
            report.sweep = Some(sweep);
            report.checks.extend(checks);
        }
        if plan.monte_carlo.is_some() {
            report.monte_carlo = Some(monte_carlo_check(plan, seed)?);
        }
        Ok(())
    })();
    match outcome {
        Ok(()) => {
            report.pass = report.sweep.as_ref().is_none_or(|s| s.pass)
                && report.monte_carlo.as_ref().is_none_or(|m| m.pass)
                && report.checks.iter().all(|c| c.pass);
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theorem_names_parse() {
        for t in PlanTheorem::all() {
            let name = serde_json::to_value(t).unwrap();
            assert_eq!(name.as_str().unwrap().parse::<PlanTheorem>().unwrap(), t);
        }
        assert!("nrtx".parse::<PlanTheorem>().is_err());
    }

    #[test]
    fn y_grid_points() {
        let g = YGrid::default().points();
        assert_eq!(g.len(), 37);
        assert_eq!(g[0], 0.2);
        assert!((g[36] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn plan_seeds_differ_by_id() {
        assert_ne!(plan_seed(42, "a"), plan_seed(42, "b"));
        assert_eq!(plan_seed(42, "a"), plan_seed(42, "a"));
    }
}
