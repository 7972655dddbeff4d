//! Decomposable critical multitype GW-processes.
//!
//! Types are numbered `1..=q` in the public API. A type-`i` individual lives one
//! unit of time and leaves offspring of types `i..=q` only.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplace::combine;
use crate::law::{LifeLaw, Probability};
use crate::numeric::compensated_sum;
use crate::sim::{multinomial, replicate_rng, DEFAULT_BIRTH_CAP};

const MAX_ATOMS: usize = 1_000_000;

/// One point of a joint offspring law: `counts[k] = N_{i,i+k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub p: f64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultitypeLaw {
    q: usize,
    /// `offspring[i - 1]` is the joint law for type `i`.
    offspring: Vec<Vec<Atom>>,
    means: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomEntry {
    pub p: Probability,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringEntry {
    #[serde(rename = "type")]
    pub type_index: usize,
    pub atoms: Vec<AtomEntry>,
}

/// On-disk format `{"q": .., "offspring": [{"type": i, "atoms": [{"p": .., "counts": [..]}]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultitypeDocument {
    pub q: usize,
    pub offspring: Vec<OffspringEntry>,
}

impl MultitypeLaw {
    pub fn new(offspring: Vec<Vec<Atom>>) -> Result<Self> {
        let q = offspring.len();
        if q == 0 {
            return Err(Error::config("q", "need at least one type"));
        }
        for (i, atoms) in offspring.iter().enumerate() {
            let field = || format!("offspring[type {}]", i + 1);
            if atoms.is_empty() {
                return Err(Error::config(field(), "empty offspring law"));
            }
            for atom in atoms {
                if !(atom.p.is_finite() && atom.p > 0.0 && atom.p <= 1.0) {
                    return Err(Error::config(field(), format!("probability {} outside (0, 1]", atom.p)));
                }
                if atom.counts.len() != q - i {
                    return Err(Error::config(
                        field(),
                        format!("expected {} counts (types {}..={q}), got {}", q - i, i + 1, atom.counts.len()),
                    ));
                }
            }
            let total = compensated_sum(atoms.iter().map(|a| a.p));
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::config(field(), format!("probabilities sum to {total}")));
            }
        }
        let means: Vec<Vec<f64>> = (0..q)
            .map(|i| {
                (0..q)
                    .map(|j| {
                        if j < i {
                            0.0
                        } else {
                            compensated_sum(offspring[i].iter().map(|a| a.p * a.counts[j - i] as f64))
                        }
                    })
                    .collect()
            })
            .collect();
        for j in 0..q {
            if (means[j][j] - 1.0).abs() > 1e-12 {
                return Err(Error::config(
                    format!("offspring[type {}]", j + 1),
                    format!("m_{{{0},{0}}} = {1}, criticality needs 1", j + 1, means[j][j]),
                ));
            }
            if j > 0 && means[j - 1][j] <= 0.0 {
                return Err(Error::config(
                    format!("offspring[type {j}]"),
                    format!("m_{{{j},{}}} must be positive", j + 1),
                ));
            }
        }
        Ok(MultitypeLaw { q, offspring, means })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: MultitypeDocument = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_document(&self) -> MultitypeDocument {
        MultitypeDocument {
            q: self.q,
            offspring: self
                .offspring
                .iter()
                .enumerate()
                .map(|(i, atoms)| OffspringEntry {
                    type_index: i + 1,
                    atoms: atoms
                        .iter()
                        .map(|a| AtomEntry {
                            p: Probability::Float(a.p),
                            counts: a.counts.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Joint offspring law of type `i`.
    pub fn offspring(&self, i: usize) -> &[Atom] {
        &self.offspring[i - 1]
    }

    /// `m_{ij} = E N_{ij}`.
    pub fn mean(&self, i: usize, j: usize) -> f64 {
        self.means[i - 1][j - 1]
    }

    /// `Var(N_{11}) / 2`.
    pub fn b(&self) -> f64 {
        let second = compensated_sum(self.offspring[0].iter().map(|a| a.p * (a.counts[0] as f64).powi(2)));
        (second - 1.0) / 2.0
    }

    /// `α_j = m_{1,2} ⋯ m_{j,j+1} / j!` for `j = 1..q-1`.
    pub fn alpha(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.q.saturating_sub(1));
        let mut acc = 1.0;
        for j in 1..self.q {
            acc *= self.mean(j, j + 1) / j as f64;
            out.push(acc);
        }
        out
    }

    /// Single-type law of the type-1 individuals (life length 1, litter `N_{11}`).
    pub fn type1_law(&self) -> Result<LifeLaw> {
        let mut marginal: BTreeMap<u64, f64> = BTreeMap::new();
        for a in &self.offspring[0] {
            *marginal.entry(a.counts[0]).or_default() += a.p;
        }
        LifeLaw::galton_watson(&marginal.into_iter().collect::<Vec<_>>())
    }
}

impl TryFrom<MultitypeDocument> for MultitypeLaw {
    type Error = Error;

    fn try_from(doc: MultitypeDocument) -> Result<Self> {
        if doc.q == 0 {
            return Err(Error::config("q", "need at least one type"));
        }
        let mut offspring: Vec<Option<Vec<Atom>>> = vec![None; doc.q];
        for entry in doc.offspring {
            let i = entry.type_index;
            if i == 0 || i > doc.q {
                return Err(Error::config("offspring.type", format!("type {i} outside 1..={}", doc.q)));
            }
            if offspring[i - 1].is_some() {
                return Err(Error::config("offspring.type", format!("type {i} listed twice")));
            }
            let atoms = entry
                .atoms
                .into_iter()
                .map(|a| Ok(Atom { p: a.p.value()?, counts: a.counts }))
                .collect::<Result<Vec<_>>>()?;
            offspring[i - 1] = Some(atoms);
        }
        let offspring = offspring
            .into_iter()
            .enumerate()
            .map(|(i, o)| o.ok_or_else(|| Error::config("offspring", format!("type {} missing", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        MultitypeLaw::new(offspring)
    }
}

/// Mean matrices `M_{ij}(t)` with `M(0) = I` and `M(t + 1) = m M(t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTable {
    pub q: usize,
    pub horizon: usize,
    /// `m[i-1][j-1][t] = M_{ij}(t)`; zero below the diagonal.
    pub m: Vec<Vec<Vec<f64>>>,
    pub alpha: Vec<f64>,
}

impl MomentTable {
    /// `M_{ij}(t)`.
    pub fn get(&self, i: usize, j: usize, t: usize) -> f64 {
        self.m[i - 1][j - 1][t]
    }
}

pub fn moment_table(law: &MultitypeLaw, horizon: usize) -> MomentTable {
    let q = law.q;
    let mut m = vec![vec![vec![0.0; horizon + 1]; q]; q];
    for (i, row) in m.iter_mut().enumerate() {
        row[i][0] = 1.0;
    }
    for t in 0..horizon {
        for i in 0..q {
            for j in i..q {
                let v = compensated_sum((i..=j).map(|l| law.means[i][l] * m[l][j][t]));
                m[i][j][t + 1] = v;
            }
        }
    }
    MomentTable {
        q,
        horizon,
        m,
        alpha: law.alpha(),
    }
}

/// `E χ_j(t)` for `t = 0..=T`: type-`j` descendants born at `t` with no
/// intermediate type-1 ancestor. `E χ_j(0) = 0`, `E χ_j(t+1) = Σ_{i=2}^j m_{1i} M_{ij}(t)`.
pub fn type1_score_means(law: &MultitypeLaw, j: usize, horizon: usize) -> Result<Vec<f64>> {
    if j < 2 || j > law.q {
        return Err(Error::config("j", format!("type {j} outside 2..={}", law.q)));
    }
    let table = moment_table(law, horizon);
    let mut out = vec![0.0; horizon + 1];
    for t in 0..horizon {
        out[t + 1] = compensated_sum((2..=j).map(|i| law.mean(1, i) * table.get(i, j, t)));
    }
    Ok(out)
}

/// Weights `λ_{ij}` on `Z^j_{t_i}` with per-type scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedQuery {
    /// Strictly decreasing, nonnegative.
    pub time_points: Vec<i64>,
    /// `weights[i][j-1] = λ_{ij}`.
    pub weights: Vec<Vec<f64>>,
    /// `scales[j-1]` divides the weights of type `j`.
    pub scales: Vec<f64>,
}

impl NestedQuery {
    /// Scales `(n, n^2, ..., n^q)`.
    pub fn with_population_scales(time_points: Vec<i64>, weights: Vec<Vec<f64>>, n: u64) -> Self {
        let q = weights.first().map_or(0, Vec::len);
        NestedQuery {
            time_points,
            weights,
            scales: (1..=q).map(|j| (n as f64).powi(j as i32)).collect(),
        }
    }

    fn validate(&self, q: usize) -> Result<()> {
        if self.time_points.is_empty() {
            return Err(Error::InvalidQuery("query needs at least one time point".into()));
        }
        if self.time_points.windows(2).any(|w| w[0] <= w[1]) || *self.time_points.last().unwrap() < 0 {
            return Err(Error::InvalidQuery(
                "time points must be strictly decreasing and nonnegative".into(),
            ));
        }
        if self.weights.len() != self.time_points.len() || self.weights.iter().any(|r| r.len() != q) {
            return Err(Error::InvalidQuery(format!(
                "weights must be {} x {q}",
                self.time_points.len()
            )));
        }
        if self.weights.iter().flatten().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidQuery("weights must be finite and nonnegative".into()));
        }
        if self.scales.len() != q || self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidQuery(format!("need {q} positive scales")));
        }
        Ok(())
    }
}

/// `Λ_l(t)` per type for `t = t_min..=T`, started from one type-`l` individual.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedGrid {
    t_min: i64,
    values: Vec<Vec<f64>>,
}

impl NestedGrid {
    pub fn t_min(&self) -> i64 {
        self.t_min
    }

    pub fn horizon(&self) -> i64 {
        self.t_min + self.values[0].len() as i64 - 1
    }

    /// `Λ_l(t)`, zero below `t_min`.
    pub fn at(&self, l: usize, t: i64) -> f64 {
        if t < self.t_min {
            0.0
        } else {
            self.values[l - 1][(t - self.t_min) as usize]
        }
    }

    pub fn type1(&self) -> &[f64] {
        &self.values[0]
    }
}

/// Exact joint transform of `(Z^1, ..., Z^q)` by descending recursion over types:
/// `e^{-Λ_l(t)} = e^{-ψ_l(t)} E Π_r e^{-N_{lr} Λ_r(t-1)}`.
pub fn nested_transform(law: &MultitypeLaw, query: &NestedQuery, horizon: i64) -> Result<NestedGrid> {
    let q = law.q;
    query.validate(q)?;
    let atoms: usize = law.offspring.iter().map(Vec::len).sum();
    if atoms > MAX_ATOMS {
        return Err(Error::Capacity(format!(
            "joint offspring support has {atoms} atoms, limit is {MAX_ATOMS}"
        )));
    }
    if horizon < 0 {
        return Err(Error::InvalidQuery(format!("horizon {horizon} is negative")));
    }
    let t_min = -query.time_points[0];
    let len = (horizon - t_min + 1) as usize;
    let mut values = vec![vec![0.0f64; len]; q];
    for l in (0..q).rev() {
        let mut exponents = vec![0.0; law.offspring[l].len()];
        for k in 0..len {
            let t = t_min + k as i64;
            let psi: f64 = query
                .time_points
                .iter()
                .zip(&query.weights)
                .filter(|(&ti, _)| ti + t == 0)
                .map(|(_, w)| w[l] / query.scales[l])
                .sum();
            if k == 0 {
                values[l][k] = psi;
                continue;
            }
            for (e, atom) in exponents.iter_mut().zip(&law.offspring[l]) {
                *e = atom
                    .counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(r, &c)| c as f64 * values[l + r][k - 1])
                    .sum();
            }
            values[l][k] = psi + combine(law.offspring[l].iter().map(|a| a.p), &exponents);
        }
    }
    Ok(NestedGrid { t_min, values })
}

/// `counts[j-1][t] = Z^j_t` for one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultitypeTrajectory {
    pub counts: Vec<Vec<u64>>,
}

fn run_multitype(law: &MultitypeLaw, n: u64, horizon: usize, seed: u64, r: usize) -> Result<MultitypeTrajectory> {
    let q = law.q;
    let mut rng = replicate_rng(seed, r);
    let mut z = vec![vec![0u64; horizon + 1]; q];
    z[0][0] = n;
    let probs: Vec<Vec<f64>> = law.offspring.iter().map(|a| a.iter().map(|x| x.p).collect()).collect();
    let mut births = 0u64;
    for t in 0..horizon {
        for l in 0..q {
            let parents = z[l][t];
            if parents == 0 {
                continue;
            }
            let mut split = vec![0u64; probs[l].len()];
            multinomial(&mut rng, parents, &probs[l], &mut split);
            for (atom, &c) in law.offspring[l].iter().zip(&split) {
                if c == 0 {
                    continue;
                }
                for (r, &k) in atom.counts.iter().enumerate() {
                    let added = c.checked_mul(k).ok_or_else(cap_error)?;
                    births = births
                        .checked_add(added)
                        .filter(|&b| b <= DEFAULT_BIRTH_CAP)
                        .ok_or_else(cap_error)?;
                    z[l + r][t + 1] += added;
                }
            }
        }
    }
    Ok(MultitypeTrajectory { counts: z })
}

fn cap_error() -> Error {
    Error::Capacity(format!("cumulative births exceed the cap of {DEFAULT_BIRTH_CAP}"))
}

/// Replicates `0..R` from `Z^1_0 = n`, computed in parallel, in replicate order.
pub fn simulate_multitype(
    law: &MultitypeLaw,
    n: u64,
    horizon: usize,
    replicates: usize,
    seed: u64,
) -> Result<Vec<MultitypeTrajectory>> {
    map_multitype_replicates(law, n, horizon, replicates, seed, |t| t)
}

pub fn map_multitype_replicates<T, F>(
    law: &MultitypeLaw,
    n: u64,
    horizon: usize,
    replicates: usize,
    seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(MultitypeTrajectory) -> T + Sync,
{
    if n == 0 {
        return Err(Error::config("n", "need at least one progenitor"));
    }
    if replicates == 0 {
        return Err(Error::config("replicates", "need at least one replicate"));
    }
    (0..replicates)
        .into_par_iter()
        .map(|r| run_multitype(law, n, horizon, seed, r).map(&f))
        .collect()
}

/// A two-type example: `N_{11}` critical binary, `N_{12} ∈ {0, 2}` fair, `N_{22} ≡ 1`.
pub fn two_type_example() -> MultitypeLaw {
    MultitypeLaw::new(vec![
        vec![
            Atom { p: 0.25, counts: vec![0, 0] },
            Atom { p: 0.25, counts: vec![0, 2] },
            Atom { p: 0.25, counts: vec![2, 0] },
            Atom { p: 0.25, counts: vec![2, 2] },
        ],
        vec![Atom { p: 1.0, counts: vec![1] }],
    ])
    .expect("valid two-type law")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::{log_laplace, FddQuery};
    use crate::score::ScoreSpec;

    fn chain(q: usize) -> MultitypeLaw {
        let mut offspring = Vec::new();
        for i in 0..q {
            let mut up = vec![0; q - i];
            let mut same = vec![0; q - i];
            same[0] = 2;
            if i + 1 < q {
                up[1] = 2;
                same[1] = 0;
            }
            offspring.push(vec![
                Atom { p: 0.5, counts: up },
                Atom { p: 0.5, counts: same },
            ]);
        }
        MultitypeLaw::new(offspring).unwrap()
    }

    #[test]
    fn superdiagonal_moments_are_linear() {
        let law = chain(3);
        let table = moment_table(&law, 50);
        for t in 0..=50 {
            assert_eq!(table.get(1, 2, t), t as f64);
            assert_eq!(table.get(2, 3, t), t as f64);
            assert_eq!(table.get(2, 2, t), 1.0);
        }
        assert_eq!(table.alpha, vec![1.0, 0.5]);
    }

    #[test]
    fn single_type_moments() {
        let law = MultitypeLaw::new(vec![vec![Atom { p: 0.5, counts: vec![0] }, Atom { p: 0.5, counts: vec![2] }]]).unwrap();
        let table = moment_table(&law, 10);
        assert!(table.m[0][0].iter().all(|&v| v == 1.0));
        assert!(table.alpha.is_empty());
    }

    #[test]
    fn second_type_score_mean_is_constant() {
        let law = two_type_example();
        let means = type1_score_means(&law, 2, 10).unwrap();
        assert_eq!(means[0], 0.0);
        assert!(means[1..].iter().all(|&m| m == 1.0));
        assert!(type1_score_means(&law, 1, 10).is_err());
    }

    #[test]
    fn rejects_missing_link() {
        let text = r#"{"q": 2, "offspring": [
            {"type": 1, "atoms": [{"p": 0.5, "counts": [0, 0]}, {"p": 0.5, "counts": [2, 0]}]},
            {"type": 2, "atoms": [{"p": 1, "counts": [1]}]}]}"#;
        assert!(matches!(MultitypeLaw::from_json_str(text), Err(Error::Config { .. })));
        let ok = text.replace("[2, 0]", "[2, 1]");
        assert!(MultitypeLaw::from_json_str(&ok).is_ok());
    }

    #[test]
    fn document_round_trip() {
        let law = two_type_example();
        let text = serde_json::to_string(&law.to_document()).unwrap();
        assert_eq!(MultitypeLaw::from_json_str(&text).unwrap(), law);
    }

    #[test]
    fn one_type_matches_single_type_dp() {
        let law = MultitypeLaw::new(vec![vec![Atom { p: 0.5, counts: vec![0] }, Atom { p: 0.5, counts: vec![2] }]]).unwrap();
        let query = NestedQuery {
            time_points: vec![4, 1],
            weights: vec![vec![0.7], vec![1.3]],
            scales: vec![3.0],
        };
        let nested = nested_transform(&law, &query, 20).unwrap();
        let single = log_laplace(
            &FddQuery::new(vec![4, 1], vec![0.7, 1.3], ScoreSpec::Newborn, 3.0).unwrap(),
            &law.type1_law().unwrap(),
            20,
        )
        .unwrap();
        for t in -4..=20 {
            assert!((nested.at(1, t) - single.at(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_step_second_type_enumeration() {
        let law = two_type_example();
        let (lambda, n) = (1.5, 10u64);
        let query = NestedQuery::with_population_scales(vec![1], vec![vec![0.0, lambda]], n);
        let grid = nested_transform(&law, &query, 0).unwrap();
        let expected = -(0.5 + 0.5 * (-2.0 * lambda / (n * n) as f64).exp()).ln();
        assert!((grid.at(1, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_give_zero_transform() {
        let law = chain(3);
        let query = NestedQuery::with_population_scales(vec![5, 2], vec![vec![0.0; 3]; 2], 7);
        let grid = nested_transform(&law, &query, 10).unwrap();
        assert!(grid.type1().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn multitype_simulation_is_reproducible() {
        let law = MultitypeLaw::new(vec![
            vec![Atom { p: 0.5, counts: vec![0, 0] }, Atom { p: 0.5, counts: vec![2, 2] }],
            vec![Atom { p: 1.0, counts: vec![1] }],
        ])
        .unwrap();
        let out = simulate_multitype(&law, 1, 5, 20, 3).unwrap();
        for t in &out {
            assert_eq!(t.counts[0][0], 1);
            assert_eq!(t.counts[1][0], 0);
        }
        assert_eq!(out, simulate_multitype(&law, 1, 5, 20, 3).unwrap());
    }
}
