mod common;

use std::collections::BTreeMap;

use gwolab::laplace::{log_laplace, log_laplace_joint, nre_residual};
use gwolab::limits::g_p;
use gwolab::{FddQuery, LifeLaw, RenewalTable, ScoreSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all_scores() -> Vec<ScoreSpec> {
    let mut table = BTreeMap::new();
    table.insert(0, vec![0.5, 2.0]);
    table.insert(1, vec![1.0, 0.0, 3.0]);
    vec![
        ScoreSpec::Alive,
        ScoreSpec::Newborn,
        ScoreSpec::EverBorn,
        ScoreSpec::power_tail(0.5).unwrap(),
        ScoreSpec::Table { values: table },
    ]
}

fn exact_transform(law: &LifeLaw, score: ScoreSpec, points: &[(usize, f64)]) -> f64 {
    let mut pts = points.to_vec();
    pts.sort_by_key(|p| std::cmp::Reverse(p.0));
    let q = FddQuery::new(
        pts.iter().map(|p| p.0 as i64).collect(),
        pts.iter().map(|p| p.1).collect(),
        score,
        1.0,
    )
    .unwrap();
    (-log_laplace(&q, law, 0).unwrap().at(0)).exp()
}

#[test]
fn dp_matches_enumeration_gwo_alive() {
    let law = LifeLaw::gwo_toy();
    let track = law.max_age();
    let chi = |_: usize, h: &gwolab::LifeHistory, a: usize| if a < h.life_length() { 1.0 } else { 0.0 };
    for t in 0..=10 {
        let oracle = common::enumerate_transform(&law, chi, track, &[(t, 1.0)], 1e-22);
        let dp = exact_transform(&law, ScoreSpec::Alive, &[(t, 1.0)]);
        assert!((oracle - dp).abs() < 1e-12, "t={t}: {oracle} vs {dp}");
    }
    let pts = [(10, 1.0), (6, 0.5)];
    let oracle = common::enumerate_transform(&law, chi, track, &pts, 1e-22);
    let dp = exact_transform(&law, ScoreSpec::Alive, &pts);
    assert!((oracle - dp).abs() < 1e-12, "{oracle} vs {dp}");
}

#[test]
fn dp_matches_enumeration_gw_newborn() {
    let law = LifeLaw::gw_toy();
    let chi = |_: usize, _: &gwolab::LifeHistory, a: usize| if a == 0 { 1.0 } else { 0.0 };
    for t in [0, 1, 3, 6, 8] {
        let oracle = common::enumerate_transform(&law, chi, 1, &[(t, 0.7)], 1e-22);
        let dp = exact_transform(&law, ScoreSpec::Newborn, &[(t, 0.7)]);
        assert!((oracle - dp).abs() < 1e-12, "t={t}: {oracle} vs {dp}");
    }
}

#[test]
fn dp_matches_enumeration_table_score() {
    let law = LifeLaw::gwo_toy();
    let mut values = BTreeMap::new();
    values.insert(0, vec![0.3, 1.1]);
    values.insert(1, vec![2.0, 0.25]);
    let oracle_values = values.clone();
    let chi = move |h: usize, _: &gwolab::LifeHistory, a: usize| {
        oracle_values.get(&h).and_then(|v| v.get(a)).copied().unwrap_or(0.0)
    };
    let pts = [(8, 0.4), (5, 0.2), (2, 1.0)];
    let oracle = common::enumerate_transform(&law, chi, 2, &pts, 1e-22);
    let dp = exact_transform(&law, ScoreSpec::Table { values }, &pts);
    assert!((oracle - dp).abs() < 1e-12, "{oracle} vs {dp}");
}

#[test]
fn nre_residual_vanishes_on_toy_laws() {
    for law in [LifeLaw::gw_toy(), LifeLaw::gwo_toy()] {
        let renewal = RenewalTable::from_moments(&law.moments(), 100).unwrap();
        for score in all_scores() {
            for (times, weights) in [(vec![0i64], vec![1.0]), (vec![7, 0], vec![0.3, 1.2])] {
                let q = FddQuery::new(times, weights, score.clone(), 1.0).unwrap();
                let grid = log_laplace(&q, &law, 100).unwrap();
                for t in 0..=100 {
                    let r = nre_residual(&grid, &law, &renewal, t).unwrap();
                    assert!(r.abs() < 1e-10, "{score} t={t}: residual {r}");
                }
            }
        }
    }
}

#[test]
fn joint_query_nre_residual_vanishes() {
    let law = LifeLaw::gwo_toy();
    let renewal = RenewalTable::from_moments(&law.moments(), 60).unwrap();
    let comps = vec![
        FddQuery::new(vec![5, 0], vec![1.0, 0.5], ScoreSpec::Alive, 1.0).unwrap(),
        FddQuery::new(vec![3], vec![2.0], ScoreSpec::EverBorn, 4.0).unwrap(),
    ];
    let grid = log_laplace_joint(&comps, &law, 60).unwrap();
    for t in 0..=60 {
        assert!(nre_residual(&grid, &law, &renewal, t).unwrap().abs() < 1e-10);
    }
}

#[test]
fn renewal_convolution_identity() {
    for law in [LifeLaw::gw_toy(), LifeLaw::gwo_toy()] {
        let u = RenewalTable::from_moments(&law.moments(), 500).unwrap();
        for t in 0..=500 {
            assert!(u.convolution_residual(t).abs() < 1e-12);
        }
        // Brute-force convolution powers: U = Σ_k A^{*k}.
        let m = law.moments();
        let horizon = 40;
        let mut power = vec![0.0; horizon + 1];
        power[0] = 1.0;
        let mut brute = power.clone();
        for _ in 0..horizon {
            let mut next = vec![0.0; horizon + 1];
            for (s, &p) in power.iter().enumerate() {
                for j in 1..=horizon - s {
                    next[s + j] += p * m.inter_arrival_at(j);
                }
            }
            for (b, &x) in brute.iter_mut().zip(&next) {
                *b += x;
            }
            power = next;
        }
        for t in 0..=horizon {
            assert!((brute[t] - u.u(t as i64)).abs() < 1e-12, "t={t}");
        }
    }
}

#[test]
fn g2_matches_explicit_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let u2 = rng.random_range(0.0..3.0);
        let u1 = u2 + rng.random_range(0.01..3.0);
        let l1 = rng.random_range(0.0..5.0);
        let l2 = rng.random_range(0.0..5.0);
        let y = rng.random_range(0.0..4.0);
        let b = rng.random_range(0.1..2.0);
        let got = g_p(&[u1, u2], &[l1, l2], y, b).unwrap();
        let want = common::g2_explicit(u1, u2, l1, l2, y, b);
        assert!((got - want).abs() < 1e-12 * want.max(1.0), "{got} vs {want}");
    }
}
