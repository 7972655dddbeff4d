use gwolab::limits::{
    csb_transform, g_p, h_p, h_pq, limit_exponent, riccati_grid, LimitParams, LimitQuery, Theorem,
};

fn power(g: f64, x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else if g == 0.0 {
        1.0
    } else {
        x.powf(g)
    }
}

/// One Riccati grid over `[0, u_1 + y]` with all points entering through
/// delayed forcing `Φ(w) = Σ_i Σ_j λ_ij F_j(w - (u_1 - u_i))`.
fn single_grid(offsets: &[f64], weights: &[Vec<f64>], gammas: &[f64], y: f64, b: f64, n: usize) -> f64 {
    let last = *offsets.last().unwrap();
    let u1 = offsets[0] - last;
    let total = u1 + y + last;
    let delays: Vec<f64> = offsets.iter().map(|u| offsets[0] - u).collect();
    let phi = |w: f64| {
        delays
            .iter()
            .zip(weights)
            .map(|(d, row)| row.iter().zip(gammas).map(|(l, &g)| l * power(g, w - d + 1e-12)).sum::<f64>())
            .sum::<f64>()
    };
    riccati_grid(phi, b, n, total).last()
}

#[test]
fn grid_halving_is_first_order() {
    let (offsets, weights, gamma, y, b) = ([0.75, 0.25, 0.0], [1.0, 0.5, 2.0], 0.5, 1.0, 0.8);
    let reference = h_p(&offsets, &weights, gamma, y, b, 1 << 18).unwrap();
    let errs: Vec<f64> = [256, 512, 1024, 2048]
        .iter()
        .map(|&n| (h_p(&offsets, &weights, gamma, y, b, n).unwrap() - reference).abs())
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.0..=3.0).contains(&ratio), "halving ratio {ratio} from {errs:?}");
    }
}

#[test]
fn zero_exponent_reduces_to_g_p() {
    for (offsets, weights) in [
        (vec![0.0], vec![1.3]),
        (vec![1.0, 0.0], vec![1.0, 1.0]),
        (vec![2.5, 1.0, 0.3], vec![0.2, 3.0, 0.7]),
    ] {
        for y in [0.0, 0.4, 1.7] {
            let g = g_p(&offsets, &weights, y, 0.6).unwrap();
            let h = h_p(&offsets, &weights, 0.0, y, 0.6, 64).unwrap();
            assert!((g - h).abs() < 1e-12, "{offsets:?} y={y}: {g} vs {h}");
        }
    }
}

#[test]
fn nested_stages_match_single_grid() {
    let offsets = [1.0, 0.5, 0.0];
    let weights = vec![vec![1.0, 0.2], vec![0.0, 1.5], vec![0.7, 0.7]];
    let gammas = [0.0, 0.5];
    for y in [0.25, 1.0, 2.0] {
        let nested = h_pq(&offsets, &weights, &gammas, y, 0.5, 8192).unwrap();
        let single = single_grid(&offsets, &weights, &gammas, y, 0.5, 8192);
        assert!((nested - single).abs() < 1e-3 * single, "y={y}: {nested} vs {single}");
    }
    // With γ = 0 and delays on the grid both routes are exact and coincide.
    let w0 = vec![vec![1.0], vec![2.0]];
    let nested = h_pq(&[0.5, 0.0], &w0, &[0.0], 0.75, 1.0, 64).unwrap();
    let single = single_grid(&[0.5, 0.0], &w0, &[0.0], 0.75, 1.0, 64);
    assert!((nested - single).abs() < 1e-12);
}

#[test]
fn linear_forcing_closed_form() {
    // H' = λ - b H^2 gives H(y) = sqrt(λ/b) tanh(sqrt(λ b) y).
    for (l, b) in [(1.0f64, 1.0f64), (2.0, 0.5), (0.3, 1.5)] {
        let y: f64 = 1.3;
        let exact = (l / b).sqrt() * ((l * b).sqrt() * y).tanh();
        let h = h_p(&[0.0], &[l], 1.0, y, b, 1 << 14).unwrap();
        assert!((h - exact).abs() < 1e-3 * exact, "{h} vs {exact}");
    }
}

#[test]
fn one_point_nrt_is_csb() {
    let params = LimitParams {
        b: 0.5,
        a: 1.5,
        m_chi: Some(4.0 / 3.0),
        gammas: vec![0.0],
        ells: vec![2.0],
    };
    let r = limit_exponent(Theorem::Nrt, &params, &LimitQuery::single(vec![0.0], vec![1.0])).unwrap();
    for y in [0.0, 0.5, 1.5, 4.0] {
        let want = csb_transform(4.0 / 3.0, y / 1.5, 0.5);
        assert!((r.eval(y).unwrap() - want).abs() < 1e-15);
    }
    assert!((r.eval(1.5).unwrap() - 0.8).abs() < 1e-12);
}

#[test]
fn nrtg_scales_weights_by_a() {
    let params = LimitParams {
        b: 0.5,
        a: 2.0,
        m_chi: None,
        gammas: vec![1.0],
        ells: vec![1.0],
    };
    let r = limit_exponent(Theorem::Nrtg, &params, &LimitQuery::single(vec![0.0], vec![1.0]))
        .unwrap()
        .with_grid(1 << 14);
    let direct = h_p(&[0.0], &[1.0], 1.0, 0.5, 0.5, 1 << 14).unwrap();
    assert!((r.eval(1.0).unwrap() - direct).abs() < 1e-12);
    assert!(limit_exponent(Theorem::Nrt, &params, &LimitQuery::single(vec![0.0], vec![1.0])).is_err());
}
