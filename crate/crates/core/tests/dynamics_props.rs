mod support;

use std::collections::BTreeMap;

use influence_ode::dynamics::{
    simulate, step, step_betas, InfluenceNetwork, InfluenceWeights, Opinion, RecipientLinks, SimulationOptions, UserId,
};
use proptest::prelude::*;
use rayon::prelude::*;
use support::SplitMix;

fn weights_strategy() -> impl Strategy<Value = InfluenceWeights> {
    (-1.0f64..1.0, prop::collection::vec(-1.0f64..1.0, 0..24)).prop_map(|(s, ws)| {
        InfluenceWeights::new(
            "i",
            s,
            ws.into_iter().enumerate().map(|(k, w)| (format!("j{k}"), w)).collect(),
        )
    })
}

fn opinions_for(w: &InfluenceWeights, values: &[f64]) -> BTreeMap<UserId, Opinion> {
    std::iter::once(w.recipient_id.clone())
        .chain(w.influence.iter().map(|(j, _)| j.clone()))
        .zip(values.iter().cycle())
        .map(|(id, v)| (id, Opinion::new(*v).unwrap()))
        .collect()
}

fn term_scale(w: &InfluenceWeights, x: &BTreeMap<UserId, Opinion>) -> f64 {
    let xi = x[&w.recipient_id].get();
    let w_form = w.self_weight.abs() * xi.abs()
        + w.influence
            .iter()
            .map(|(j, v)| v.abs() * (x[j].get() - xi).abs())
            .sum::<f64>();
    let b = w.betas();
    let b_form =
        b.self_beta.abs() * xi.abs() + b.influence.iter().map(|(j, v)| v.abs() * x[j].get().abs()).sum::<f64>();
    w_form.max(b_form)
}

proptest! {
    #[test]
    fn step_is_linear(
        w in weights_strategy(),
        xs in prop::collection::vec(-5.0f64..5.0, 25),
        ys in prop::collection::vec(-5.0f64..5.0, 25),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let x = opinions_for(&w, &xs);
        let y = opinions_for(&w, &ys);
        let mix: BTreeMap<UserId, Opinion> = x
            .iter()
            .map(|(k, v)| (k.clone(), Opinion::new(a * v.get() + b * y[k].get()).unwrap()))
            .collect();
        let lhs = step(&mix, &w).unwrap().get();
        let rhs = a * step(&x, &w).unwrap().get() + b * step(&y, &w).unwrap().get();
        let scale = 1.0 + a.abs() * term_scale(&w, &x) + b.abs() * term_scale(&w, &y);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale, "{lhs} vs {rhs}");
    }

    #[test]
    fn weight_and_beta_forms_agree(w in weights_strategy(), xs in prop::collection::vec(-1.0f64..1.0, 25)) {
        let x = opinions_for(&w, &xs);
        let a = step(&x, &w).unwrap().get();
        let b = step_betas(&x, &w.recipient_id, &w.betas()).unwrap().get();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * term_scale(&w, &x));
    }

    #[test]
    fn consensus_scales_by_self_weight(w in weights_strategy(), c in -10.0f64..10.0) {
        let x = opinions_for(&w, &[c]);
        let next = step(&x, &w).unwrap().get();
        prop_assert_eq!(next, w.self_weight * c);
        let anchored = InfluenceWeights::new("i", 1.0, w.influence.clone());
        prop_assert_eq!(step(&x, &anchored).unwrap().get(), c);
    }
}

/// Closed group where every member is a recipient with a convex row.
fn convex_group(
    rng: &mut SplitMix,
    size: usize,
) -> (
    InfluenceNetwork,
    BTreeMap<UserId, InfluenceWeights>,
    BTreeMap<UserId, Opinion>,
) {
    let ids: Vec<UserId> = (0..size).map(|k| format!("u{k}")).collect();
    let mut links = Vec::new();
    let mut weights = BTreeMap::new();
    let mut initial = BTreeMap::new();
    for (k, id) in ids.iter().enumerate() {
        let others: Vec<UserId> = ids
            .iter()
            .enumerate()
            .filter(|(m, _)| *m != k && rng.uniform() < 0.6)
            .map(|(_, s)| s.clone())
            .collect();
        // non-negative betas summing to one
        let raw: Vec<f64> = (0..=others.len()).map(|_| rng.uniform() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let betas: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let self_weight: f64 = betas.iter().sum();
        let influence: Vec<(UserId, f64)> = others.iter().cloned().zip(betas[1..].iter().copied()).collect();
        weights.insert(id.clone(), InfluenceWeights::new(id.clone(), self_weight, influence));
        links.push(RecipientLinks {
            id: id.clone(),
            influencers: others,
        });
        initial.insert(id.clone(), Opinion::new(rng.range(-1.0, 1.0)).unwrap());
    }
    (InfluenceNetwork::new(links).unwrap(), weights, initial)
}

/// Straight iteration of the regression form, written independently of
/// `simulate`.
fn brute_force(
    weights: &BTreeMap<UserId, InfluenceWeights>,
    initial: &BTreeMap<UserId, Opinion>,
    steps: usize,
) -> BTreeMap<UserId, Vec<f64>> {
    let mut state: BTreeMap<UserId, f64> = initial.iter().map(|(k, v)| (k.clone(), v.get())).collect();
    let mut out: BTreeMap<UserId, Vec<f64>> = state.iter().map(|(k, v)| (k.clone(), vec![*v])).collect();
    for _ in 0..steps {
        let mut next = state.clone();
        for (id, w) in weights {
            let b = w.betas();
            let mut v = b.self_beta * state[id];
            for (j, bj) in &b.influence {
                v += bj * state[j];
            }
            next.insert(id.clone(), v);
        }
        for (k, v) in &next {
            out.get_mut(k).unwrap().push(*v);
        }
        state = next;
    }
    out
}

#[test]
#[allow(clippy::needless_range_loop)]
fn convex_combination_stays_in_hull_and_contracts() {
    let mut rng = SplitMix(2024);
    for _ in 0..20 {
        let (net, weights, initial) = convex_group(&mut rng, 12);
        let lo = initial.values().map(|o| o.get()).fold(f64::INFINITY, f64::min);
        let hi = initial.values().map(|o| o.get()).fold(f64::NEG_INFINITY, f64::max);
        let opts = SimulationOptions {
            steps: 70,
            ..Default::default()
        };
        let sim = simulate(&net, &weights, &initial, &opts).unwrap();
        let oracle = brute_force(&weights, &initial, 70);
        let mut prev_spread = hi - lo;
        for t in 0..=70 {
            let col: Vec<f64> = sim.values().map(|s| s.values()[t]).collect();
            for v in &col {
                assert!(*v >= lo && *v <= hi, "t={t}: {v} outside [{lo}, {hi}]");
            }
            let spread = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - col.iter().cloned().fold(f64::INFINITY, f64::min);
            // once the group has converged, rounding alone moves the spread by ulps
            let slack = 4.0 * f64::EPSILON * lo.abs().max(hi.abs());
            assert!(spread <= prev_spread + slack, "spread grew at t={t}");
            prev_spread = spread;
            for (id, s) in &sim {
                assert!((s.values()[t] - oracle[id][t]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn parallel_runs_are_bit_identical() {
    let mut rng = SplitMix(9);
    let (net, weights, initial) = convex_group(&mut rng, 15);
    let opts = SimulationOptions {
        steps: 40,
        noise_sigma: 0.05,
        seed: 1234,
        ..Default::default()
    };
    let serial = simulate(&net, &weights, &initial, &opts).unwrap();
    let runs: Vec<_> = (0..8)
        .into_par_iter()
        .map(|_| simulate(&net, &weights, &initial, &opts).unwrap())
        .collect();
    for r in runs {
        for (id, s) in &serial {
            let bits: Vec<u64> = s.values().iter().map(|v| v.to_bits()).collect();
            let other: Vec<u64> = r[id].values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits, other);
        }
    }
}
