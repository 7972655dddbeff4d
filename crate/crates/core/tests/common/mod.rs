//! Independent oracles used by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use gwolab::law::LifeHistory;
use gwolab::LifeLaw;

/// `P(Binomial(n, p) = k)` by direct products.
pub fn binomial_pmf(n: u32, k: u32, p: f64) -> f64 {
    let mut c = 1.0f64;
    for i in 0..k {
        c *= (n - i) as f64 / (i + 1) as f64;
    }
    c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// All splits of `total` over `probs` with their multinomial probabilities.
pub fn multinomial_splits(total: u32, probs: &[f64]) -> Vec<(Vec<u32>, f64)> {
    fn rec(left: u32, probs: &[f64], mass: f64, prefix: &mut Vec<u32>, weight: f64, out: &mut Vec<(Vec<u32>, f64)>) {
        if probs.len() == 1 {
            prefix.push(left);
            out.push((prefix.clone(), weight));
            prefix.pop();
            return;
        }
        let q = (probs[0] / mass).min(1.0);
        for k in 0..=left {
            let w = weight * binomial_pmf(left, k, q);
            if w == 0.0 {
                continue;
            }
            prefix.push(k);
            rec(left - k, &probs[1..], mass - probs[0], prefix, w, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, probs, 1.0, &mut Vec::new(), 1.0, &mut out);
    out
}

/// `E_1 exp(-Σ_i λ_i X(t_i))` by forward enumeration of the population state.
///
/// The state counts individuals per (history, age) for ages below `track`;
/// `chi(h, history, age)` must vanish from age `track` on. States whose weight
/// drops below `prune` are discarded.
pub fn enumerate_transform(
    law: &LifeLaw,
    chi: impl Fn(usize, &LifeHistory, usize) -> f64,
    track: usize,
    points: &[(usize, f64)],
    prune: f64,
) -> f64 {
    let support = law.support();
    let k = support.len();
    let probs: Vec<f64> = support.iter().map(|(_, p)| *p).collect();
    let horizon = points.iter().map(|(t, _)| *t).max().unwrap_or(0);
    let idx = |h: usize, a: usize| a * k + h;

    let mut states: HashMap<Vec<u32>, f64> = HashMap::new();
    for (h, p) in probs.iter().enumerate() {
        let mut s = vec![0u32; k * track];
        s[idx(h, 0)] = 1;
        *states.entry(s).or_default() += p;
    }
    for s in 0..=horizon {
        let lambda: f64 = points.iter().filter(|(t, _)| *t == s).map(|(_, l)| l).sum();
        if lambda != 0.0 {
            for (state, w) in states.iter_mut() {
                let mut x = 0.0;
                for h in 0..k {
                    for a in 0..track {
                        let c = state[idx(h, a)];
                        if c > 0 {
                            x += c as f64 * chi(h, &support[h].0, a);
                        }
                    }
                }
                *w *= (-lambda * x).exp();
            }
        }
        if s == horizon {
            break;
        }
        let mut next: HashMap<Vec<u32>, f64> = HashMap::new();
        for (state, w) in states {
            let mut births = 0u32;
            let mut aged = vec![0u32; k * track];
            for h in 0..k {
                for a in 0..track {
                    let c = state[idx(h, a)];
                    if c == 0 {
                        continue;
                    }
                    births += c * support[h].0.litter_at(a + 1) as u32;
                    if a + 1 < track {
                        aged[idx(h, a + 1)] = c;
                    }
                }
            }
            for (split, p) in multinomial_splits(births, &probs) {
                let weight = w * p;
                if weight < prune {
                    continue;
                }
                let mut s2 = aged.clone();
                for (h, c) in split.into_iter().enumerate() {
                    s2[idx(h, 0)] = c;
                }
                *next.entry(s2).or_default() += weight;
            }
        }
        states = next;
    }
    states.values().sum()
}

/// `G_2` written out as a single rational expression.
pub fn g2_explicit(u1: f64, u2: f64, l1: f64, l2: f64, y: f64, b: f64) -> f64 {
    let d = u1 - u2;
    let num = l2 * (1.0 + b * l1 * d) + l1;
    num / ((1.0 + b * l1 * d) + b * (u2 + y) * num)
}

/// A critical law with the given litter vectors (each with at least one birth)
/// and raw weights, plus a barren history carrying the remaining mass.
pub fn critical_law(litters: &[Vec<u64>], raw: &[f64]) -> LifeLaw {
    let mut merged: std::collections::BTreeMap<Vec<u64>, f64> = std::collections::BTreeMap::new();
    for (nu, w) in litters.iter().zip(raw) {
        *merged.entry(nu.clone()).or_default() += w;
    }
    let (litters, raw): (Vec<Vec<u64>>, Vec<f64>) = merged.into_iter().unzip();
    let total: f64 = litters
        .iter()
        .zip(&raw)
        .map(|(nu, w)| w * nu.iter().sum::<u64>() as f64)
        .sum();
    let mut support: Vec<(LifeHistory, f64)> = Vec::new();
    let mut used = 0.0;
    for (nu, w) in litters.iter().zip(&raw) {
        let p = w / total;
        used += p;
        support.push((LifeHistory::new(nu.len(), nu.clone()).unwrap(), p));
    }
    let barren = 1.0 - used;
    if barren > 1e-9 {
        support.push((LifeHistory::new(1, vec![0]).unwrap(), barren));
    } else {
        let last = support.len() - 1;
        support[last].1 += barren;
    }
    LifeLaw::new(support).unwrap()
}
