//! The canonical plan registry.

use rayon::prelude::*;

use super::{
    run_plan, Check, ClosedForm, Coverage, ItemReport, MonteCarloPlan, PlanTheorem, Probe, RunReport, SpotCheck,
    SweepPlan, Tolerances, YGrid,
};
use crate::error::{Error, Result};
use crate::law::LifeLaw;
use crate::limits::LimitQuery;
use crate::multitype::{moment_table, two_type_example, Atom, MultitypeLaw};
use crate::sim::{ScoreEntry, TransformTerm};

fn plan(id: &str, theorem: PlanTheorem, law: &LifeLaw, scores: &[&str], query: LimitQuery) -> SweepPlan {
    SweepPlan {
        id: id.into(),
        theorem,
        law: Some(law.to_document()),
        multitype_law: None,
        scores: scores.iter().map(|s| ScoreEntry::Name(s.to_string())).collect(),
        query,
        n_values: vec![100, 400, 1600],
        y_grid: YGrid::default(),
        tolerances: Tolerances::default(),
        spot_checks: Vec::new(),
        closed_form: None,
        monte_carlo: None,
        skip_sweep: false,
    }
}

fn one_point_probes(times: &[usize], scale: f64) -> Vec<Probe> {
    times
        .iter()
        .map(|&time| Probe {
            terms: vec![TransformTerm { score: 0, time, weight: 1.0 }],
            scale,
        })
        .collect()
}

/// The built-in plans run by [`verify_all`], sorted by id.
pub fn canonical_plans() -> Vec<SweepPlan> {
    let gw = LifeLaw::gw_toy();
    let gwo = LifeLaw::gwo_toy();
    let mut plans = Vec::new();

    let mut p = plan("cor1-gwo-alive-p1", PlanTheorem::Cor1, &gwo, &["alive"], LimitQuery::single(vec![0.0], vec![1.0]));
    p.spot_checks.push(SpotCheck {
        y: 1.5,
        expected: 0.8,
        tolerance: 1e-12,
    });
    p.closed_form = Some(ClosedForm::Csb);
    p.monte_carlo = Some(MonteCarloPlan {
        n: 100,
        replicates: 100_000,
        probes: {
            let mut probes = one_point_probes(&[10, 50, 100], 100.0);
            probes.push(Probe {
                terms: vec![
                    TransformTerm { score: 0, time: 100, weight: 1.0 },
                    TransformTerm { score: 0, time: 50, weight: 1.0 },
                ],
                scale: 100.0,
            });
            probes
        },
        mode_replicates: 10_000,
        z_limit: None,
    });
    plans.push(p);

    plans.push(plan(
        "cor1-gwo-alive-p2",
        PlanTheorem::Cor1,
        &gwo,
        &["alive"],
        LimitQuery::single(vec![1.0, 0.0], vec![1.0, 1.0]),
    ));

    let mut p = plan("nrt-gw-newborn", PlanTheorem::Nrt, &gw, &["newborn"], LimitQuery::single(vec![0.0], vec![1.0]));
    p.closed_form = Some(ClosedForm::Csb);
    p.monte_carlo = Some(MonteCarloPlan {
        n: 100,
        replicates: 100_000,
        probes: one_point_probes(&[10, 50, 100], 100.0),
        mode_replicates: 10_000,
        z_limit: None,
    });
    plans.push(p);

    let mut p = plan("cor2-gw-ever-born", PlanTheorem::Cor2, &gw, &["ever_born"], LimitQuery::single(vec![0.0], vec![1.0]));
    p.closed_form = Some(ClosedForm::LinearRiccati);
    plans.push(p);

    plans.push(plan(
        "cor2-gw-power-half",
        PlanTheorem::Cor2,
        &gw,
        &["power:0.5"],
        LimitQuery::single(vec![0.0], vec![1.0]),
    ));

    plans.push(plan(
        "cor3-gwo-joint",
        PlanTheorem::Cor3,
        &gwo,
        &["newborn", "ever_born"],
        LimitQuery {
            offsets: vec![0.0],
            weights: vec![vec![1.0, 1.0]],
        },
    ));

    plans.push(plan(
        "nrtm-gwo-two-point",
        PlanTheorem::Nrtm,
        &gwo,
        &["alive", "power:0.5"],
        LimitQuery {
            offsets: vec![1.0, 0.0],
            weights: vec![vec![1.0, 0.5], vec![0.5, 1.0]],
        },
    ));

    let law = two_type_example();
    plans.push(SweepPlan {
        id: "deco-two-type".into(),
        theorem: PlanTheorem::Deco,
        law: None,
        multitype_law: Some(law.to_document()),
        scores: Vec::new(),
        query: LimitQuery {
            offsets: vec![0.0],
            weights: vec![vec![1.0, 1.0]],
        },
        n_values: vec![100, 400, 1600],
        y_grid: YGrid::default(),
        tolerances: Tolerances::default(),
        spot_checks: Vec::new(),
        closed_form: None,
        monte_carlo: Some(MonteCarloPlan {
            n: 400,
            replicates: 20_000,
            probes: [200, 400]
                .iter()
                .map(|&time| Probe {
                    terms: vec![
                        TransformTerm { score: 0, time, weight: 1.0 },
                        TransformTerm { score: 1, time, weight: 1.0 },
                    ],
                    scale: 1.0,
                })
                .collect(),
            mode_replicates: 0,
            z_limit: Some(4.0),
        }),
        skip_sweep: false,
    });

    plans.sort_by(|a, b| a.id.cmp(&b.id));
    plans
}

/// A three-type chain with `m_{12} = m_{23} = 1`.
pub(crate) fn three_type_chain() -> MultitypeLaw {
    MultitypeLaw::new(vec![
        vec![
            Atom { p: 0.5, counts: vec![0, 2, 0] },
            Atom { p: 0.5, counts: vec![2, 0, 0] },
        ],
        vec![
            Atom { p: 0.5, counts: vec![0, 2] },
            Atom { p: 0.5, counts: vec![2, 0] },
        ],
        vec![Atom { p: 0.5, counts: vec![0] }, Atom { p: 0.5, counts: vec![2] }],
    ])
    .expect("valid chain law")
}

/// Exact moment identities: `M_{i,i+1}(t) = t m_{i,i+1}` and the quadratic growth of `M_{i,i+2}`.
pub fn deco_moment_checks(law: &MultitypeLaw, t: usize) -> Vec<Check> {
    let table = moment_table(law, t);
    let mut checks = Vec::new();
    let linear = (1..law.q())
        .flat_map(|i| (1..=t).map(move |s| (i, s)))
        .map(|(i, s)| {
            let exact = s as f64 * law.mean(i, i + 1);
            (table.get(i, i + 1, s) - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    checks.push(Check::absolute("M_{i,i+1}(t) = t m_{i,i+1}", linear, 0.0, 1e-12));
    for i in 1..law.q().saturating_sub(1) {
        let target = law.mean(i, i + 1) * law.mean(i + 1, i + 2);
        let value = 2.0 * table.get(i, i + 2, t) / (t as f64).powi(2);
        checks.push(Check::relative(format!("2 M_{{{i},{}}}(t)/t^2 at t={t}", i + 2), value, target, 0.01));
    }
    checks
}

fn moment_item() -> ItemReport {
    let checks = deco_moment_checks(&three_type_chain(), 10_000);
    ItemReport {
        id: "deco-moments-q3".into(),
        theorem: PlanTheorem::Deco,
        sweep: None,
        monte_carlo: None,
        pass: checks.iter().all(|c| c.pass),
        checks,
        error: None,
    }
}

fn report(mut items: Vec<ItemReport>, seed: u64, coverage: Vec<Coverage>) -> RunReport {
    items.sort_by(|a, b| a.id.cmp(&b.id));
    let pass = !items.is_empty() && items.iter().all(|i| i.pass) && coverage.iter().all(|c| !c.plans.is_empty());
    RunReport {
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        items,
        coverage,
        pass,
    }
}

/// Run the given plans in parallel; items are sorted by id.
pub fn verify_plans(plans: &[SweepPlan], seed: u64) -> RunReport {
    let items = plans.par_iter().map(|p| run_plan(p, seed)).collect();
    report(items, seed, Vec::new())
}

fn coverage(plans: &[SweepPlan], extra: &[ItemReport]) -> Vec<Coverage> {
    [PlanTheorem::Nrt, PlanTheorem::Nrtg, PlanTheorem::Nrtm, PlanTheorem::Deco]
        .into_iter()
        .map(|theorem| {
            let covers = |t: PlanTheorem| match theorem {
                PlanTheorem::Deco => t == PlanTheorem::Deco,
                _ => t != PlanTheorem::Deco && t.limit_theorem() == theorem.limit_theorem(),
            };
            let mut ids: Vec<String> = plans
                .iter()
                .filter(|p| covers(p.theorem))
                .map(|p| p.id.clone())
                .chain(extra.iter().filter(|i| covers(i.theorem)).map(|i| i.id.clone()))
                .collect();
            ids.sort();
            Coverage { theorem, plans: ids }
        })
        .collect()
}

/// The full canonical suite with the coverage guard.
pub fn verify_all(seed: u64) -> RunReport {
    let plans = canonical_plans();
    let extra = vec![moment_item()];
    let coverage = coverage(&plans, &extra);
    let mut items: Vec<ItemReport> = plans.par_iter().map(|p| run_plan(p, seed)).collect();
    items.extend(extra);
    report(items, seed, coverage)
}

/// Plans for one of the three corollaries.
pub fn corollary_suite(id: u8, seed: u64) -> Result<RunReport> {
    let theorem = match id {
        1 => PlanTheorem::Cor1,
        2 => PlanTheorem::Cor2,
        3 => PlanTheorem::Cor3,
        _ => return Err(Error::config("corollary", format!("no corollary {id}"))),
    };
    let plans: Vec<SweepPlan> = canonical_plans().into_iter().filter(|p| p.theorem == theorem).collect();
    Ok(verify_plans(&plans, seed))
}
