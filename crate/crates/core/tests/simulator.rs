use gwolab::laplace::log_laplace;
use gwolab::numeric::mean_and_std_error;
use gwolab::score::expected_count;
use gwolab::sim::{map_replicates, monte_carlo_transform, simulate_parallel, SimConfig, SimMode, TransformTerm};
use gwolab::verify::bonferroni_threshold;
use gwolab::{FddQuery, LifeLaw, RenewalTable, ScoreSpec};

fn z(a: (f64, f64), b: (f64, f64)) -> f64 {
    let se = (a.1 * a.1 + b.1 * b.1).sqrt();
    if a.0 == b.0 {
        0.0
    } else {
        (a.0 - b.0) / se
    }
}

#[test]
fn newborn_means_follow_renewal_function() {
    for law in [LifeLaw::gw_toy(), LifeLaw::gwo_toy()] {
        let (n, horizon) = (50u64, 30usize);
        let u = RenewalTable::from_moments(&law.moments(), horizon).unwrap();
        let config = SimConfig::new(law, vec![ScoreSpec::Newborn], n, horizon, 4000).with_seed(11);
        let rows = map_replicates(&config, |t| t.newborns).unwrap();
        let limit = bonferroni_threshold(horizon + 1);
        for t in 0..=horizon {
            let xs: Vec<f64> = rows.iter().map(|r| r[t] as f64).collect();
            let (mean, se) = mean_and_std_error(&xs);
            let exact = n as f64 * u.u(t as i64);
            let score = if se == 0.0 { (mean - exact).abs() / 1e-12 } else { (mean - exact) / se };
            assert!(score.abs() < limit, "t={t}: {mean} vs {exact} (se {se})");
        }
    }
}

#[test]
fn alive_mean_matches_expected_count_at_long_horizon() {
    let law = LifeLaw::gwo_toy();
    let (n, horizon) = (10u64, 300usize);
    let profile = ScoreSpec::Alive.profile(&law, horizon).unwrap();
    let renewal = RenewalTable::from_moments(&law.moments(), horizon).unwrap();
    let exact = n as f64 * expected_count(&profile, &renewal, horizon).unwrap()[horizon];
    let config = SimConfig::new(law, vec![ScoreSpec::Alive], n, horizon, 20_000).with_seed(3);
    let xs = map_replicates(&config, |t| t.counts[0][horizon]).unwrap();
    let (mean, se) = mean_and_std_error(&xs);
    assert!(((mean - exact) / se).abs() < 4.0, "{mean} vs {exact} (se {se})");
}

#[test]
fn aggregate_and_individual_modes_agree() {
    for law in [LifeLaw::gw_toy(), LifeLaw::gwo_toy()] {
        let base = SimConfig::new(law, vec![ScoreSpec::Alive, ScoreSpec::EverBorn], 20, 25, 8000);
        let agg = base.clone().with_seed(5);
        let ind = base.with_seed(6).with_mode(SimMode::Individual);
        let terms = [TransformTerm { score: 0, time: 25, weight: 1.0 }];
        let a = monte_carlo_transform(&agg, &terms, 20.0).unwrap();
        let i = monte_carlo_transform(&ind, &terms, 20.0).unwrap();
        assert!(z((a.estimate, a.std_error), (i.estimate, i.std_error)).abs() < 4.0);
        let pick = |c: &SimConfig| {
            let xs = map_replicates(c, |t| t.counts[1][25]).unwrap();
            mean_and_std_error(&xs)
        };
        assert!(z(pick(&agg), pick(&ind)).abs() < 4.0);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let config = SimConfig::new(LifeLaw::gwo_toy(), vec![ScoreSpec::Alive, ScoreSpec::power_tail(0.5).unwrap()], 30, 40, 300)
        .with_seed(99);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_parallel(&config).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
    let serial: Vec<_> = gwolab::sim::simulate(&config).unwrap().map(Result::unwrap).collect();
    assert_eq!(one, serial);
    let individual = config.clone().with_mode(SimMode::Individual);
    let run_ind = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_parallel(&individual).unwrap())
    };
    assert_eq!(run_ind(1), run_ind(4));
}

#[test]
fn gw_newborn_transform_matches_dp() {
    let law = LifeLaw::gw_toy();
    let (n, t) = (100u64, 10usize);
    let q = FddQuery::new(vec![t as i64], vec![1.0], ScoreSpec::Newborn, n as f64).unwrap();
    let exact = (-(n as f64) * log_laplace(&q, &law, 0).unwrap().at(0)).exp();
    let config = SimConfig::new(law, vec![ScoreSpec::Newborn], n, t, 50_000).with_seed(17);
    let est = monte_carlo_transform(&config, &[TransformTerm { score: 0, time: t, weight: 1.0 }], n as f64).unwrap();
    assert!(!est.degenerate);
    assert!(((est.estimate - exact) / est.std_error).abs() < 4.0, "{} vs {exact}", est.estimate);
}

#[test]
fn seeds_change_the_stream() {
    let base = SimConfig::new(LifeLaw::gwo_toy(), vec![ScoreSpec::Alive], 10, 20, 4);
    let a = simulate_parallel(&base.clone().with_seed(1)).unwrap();
    let b = simulate_parallel(&base.with_seed(2)).unwrap();
    assert_ne!(a, b);
}
