//! Synthetic cohorts with known influence weights, for checking that the
//! identification recovers what generated the data.
//!
//! Every draw comes from a ChaCha stream keyed by `(seed, purpose, user)`, so
//! outputs are a pure function of the configuration and never depend on
//! iteration order.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    simulate, stream_id, InfluenceNetwork, InfluenceWeights, Opinion, OpinionSeries, RecipientLinks, SimulationOptions,
    UserId,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_recipients: usize,
    pub influencer_count_mean: f64,
    /// Variance of the influencer count; 0 makes every count `round(mean)`.
    pub influencer_count_var: f64,
    /// Users who only ever act as influencers.
    pub n_pure_influencers: usize,
    /// Upper clip on the influencer count. The default leaves
    /// `min(10, (n_kernels - 1) / 4)` residual degrees of freedom per
    /// regression (58 influencers for 70 kernels).
    pub max_influencers: Option<usize>,
    pub n_kernels: usize,
    pub noise_sigma: f64,
    pub weight_bound: f64,
    pub stability_margin: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_recipients: 87,
            influencer_count_mean: 17.655,
            influencer_count_var: 123.07,
            n_pure_influencers: 200,
            max_influencers: None,
            n_kernels: 70,
            noise_sigma: 0.0,
            weight_bound: 1.0,
            stability_margin: 0.05,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn pool_size(&self) -> usize {
        self.n_recipients.saturating_sub(1) + self.n_pure_influencers
    }

    fn count_cap(&self) -> usize {
        let cap = self.max_influencers.unwrap_or_else(|| {
            let reserve = (self.n_kernels.saturating_sub(1) / 4).min(10);
            self.n_kernels.saturating_sub(2 + reserve)
        });
        cap.min(self.pool_size())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_recipients == 0 {
            return bad("n_recipients must be positive".into());
        }
        if self.n_kernels < 3 {
            return bad(format!("n_kernels must be at least 3, got {}", self.n_kernels));
        }
        if !(self.influencer_count_mean.is_finite() && self.influencer_count_mean >= 1.0) {
            return bad(format!(
                "influencer_count_mean must be at least 1, got {}",
                self.influencer_count_mean
            ));
        }
        if !(self.influencer_count_var.is_finite() && self.influencer_count_var >= 0.0) {
            return bad("influencer_count_var must be non-negative".into());
        }
        if self.influencer_count_mean > self.pool_size() as f64 {
            return bad(format!(
                "influencer_count_mean {} exceeds the pool of {} candidate influencers",
                self.influencer_count_mean,
                self.pool_size()
            ));
        }
        if self.count_cap() == 0 {
            return bad("influencer cap leaves no room for any influencer".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.weight_bound) {
            return bad("weight_bound must lie in [0, 1]".into());
        }
        if !(self.stability_margin > 0.0 && self.stability_margin <= 1.0) {
            return bad("stability_margin must lie in (0, 1]".into());
        }
        Ok(())
    }

    pub fn recipient_ids(&self) -> Vec<UserId> {
        let w = digits(self.n_recipients);
        (0..self.n_recipients).map(|k| format!("r{k:0w$}")).collect()
    }

    pub fn pure_influencer_ids(&self) -> Vec<UserId> {
        let w = digits(self.n_pure_influencers);
        (0..self.n_pure_influencers).map(|k| format!("p{k:0w$}")).collect()
    }
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len().max(3)
}

fn rng_for(seed: u64, purpose: &str, id: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(&format!("{purpose}:{id}")));
    rng
}

/// Discrete draw with the configured mean and variance: a point mass when the
/// variance is zero, Poisson when it does not exceed the mean, otherwise a
/// gamma-Poisson (negative binomial) mixture.
fn draw_count(rng: &mut ChaCha8Rng, mean: f64, var: f64) -> usize {
    if var == 0.0 {
        return mean.round() as usize;
    }
    let lambda = if var <= mean {
        mean
    } else {
        let scale = (var - mean) / mean;
        let shape = mean / scale;
        Gamma::new(shape, scale).expect("positive parameters").sample(rng)
    };
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).map(|p| p.sample(rng) as usize).unwrap_or(0)
}

/// Random follower lists. Counts are clipped to `[1, cap]`; recipients may
/// follow each other and share influencers.
pub fn gen_network(config: &SynthConfig) -> Result<InfluenceNetwork> {
    config.validate()?;
    let recipients = config.recipient_ids();
    let pure = config.pure_influencer_ids();
    let cap = config.count_cap();

    let links = recipients
        .iter()
        .map(|id| {
            let mut rng = rng_for(config.seed, "network", id);
            let count = draw_count(&mut rng, config.influencer_count_mean, config.influencer_count_var).clamp(1, cap);
            let candidates: Vec<&UserId> = recipients.iter().filter(|r| *r != id).chain(&pure).collect();
            let chosen: BTreeSet<&UserId> = sample(&mut rng, candidates.len(), count)
                .into_iter()
                .map(|k| candidates[k])
                .collect();
            RecipientLinks {
                id: id.clone(),
                influencers: chosen.into_iter().cloned().collect(),
            }
        })
        .collect();
    InfluenceNetwork::new(links)
}

/// Uniform weights in `[-weight_bound, weight_bound]`, shrunk per recipient
/// until the coefficient row satisfies `sum |beta| <= 1 - stability_margin`.
pub fn gen_weights(network: &InfluenceNetwork, config: &SynthConfig) -> BTreeMap<UserId, InfluenceWeights> {
    let b = config.weight_bound;
    let target = 1.0 - config.stability_margin;
    network
        .recipients()
        .iter()
        .map(|r| {
            let mut rng = rng_for(config.seed, "weights", &r.id);
            let mut draw = || if b > 0.0 { rng.random_range(-b..=b) } else { 0.0 };
            let self_weight = draw();
            let influence: Vec<(UserId, f64)> = r.influencers.iter().map(|j| (j.clone(), draw())).collect();
            let mut w = InfluenceWeights::new(r.id.clone(), self_weight, influence);
            let total = w.betas().sum_abs();
            if total > target {
                // betas are linear in the weights, so one factor rescales both
                let k = target / total;
                w.self_weight *= k;
                w.influence.iter_mut().for_each(|(_, v)| *v *= k);
            }
            (r.id.clone(), w)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub network: InfluenceNetwork,
    pub true_weights: BTreeMap<UserId, InfluenceWeights>,
    pub series: BTreeMap<UserId, OpinionSeries>,
}

/// Network, weights and trajectories of length `n_kernels`.
///
/// Initial opinions are uniform in `[0, 1]`. Pure influencers are driven by
/// independent uniform draws each kernel; held constant they would all be
/// collinear and no design could separate them.
pub fn gen_dataset(config: &SynthConfig) -> Result<SynthDataset> {
    let network = gen_network(config)?;
    let true_weights = gen_weights(&network, config);
    let steps = config.n_kernels - 1;

    let mut initial = BTreeMap::new();
    for id in network.users() {
        let mut rng = rng_for(config.seed, "initial", id);
        initial.insert(id.to_owned(), Opinion::new(rng.random_range(0.0..=1.0))?);
    }
    let scripted = network
        .pure_influencers()
        .into_iter()
        .map(|id| {
            let mut rng = rng_for(config.seed, "drive", id);
            let mut path = Vec::with_capacity(steps + 1);
            path.push(initial[id].get());
            path.extend((0..steps).map(|_| rng.random_range(0.0..=1.0)));
            (id.to_owned(), path)
        })
        .collect();

    let opts = SimulationOptions {
        steps,
        noise_sigma: config.noise_sigma,
        seed: config.seed,
        scripted,
    };
    let series = simulate(&network, &true_weights, &initial, &opts)?;
    Ok(SynthDataset {
        config: config.clone(),
        network,
        true_weights,
        series,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecipientRecovery {
    pub recipient: UserId,
    pub n_weights: usize,
    pub max_abs_error: f64,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub max_abs_error: f64,
    pub rmse: f64,
    pub per_recipient: Vec<RecipientRecovery>,
}

/// Elementwise comparison of `w_ii` and every `w_ij`.
pub fn evaluate_recovery(
    true_weights: &BTreeMap<UserId, InfluenceWeights>,
    fitted: &BTreeMap<UserId, InfluenceWeights>,
) -> Result<RecoveryReport> {
    let a: BTreeSet<&UserId> = true_weights.keys().collect();
    let b: BTreeSet<&UserId> = fitted.keys().collect();
    if a != b {
        let missing: Vec<_> = a.symmetric_difference(&b).map(|s| s.as_str()).collect();
        return Err(Error::IdMismatch(format!(
            "recipient sets differ on {}",
            missing.join(", ")
        )));
    }

    let mut per_recipient = Vec::with_capacity(true_weights.len());
    let mut sq_total = 0.0;
    let mut count_total = 0usize;
    let mut max_total: f64 = 0.0;
    for (id, truth) in true_weights {
        let est = &fitted[id];
        if truth.influence.len() != est.influence.len() {
            return Err(Error::IdMismatch(format!(
                "`{id}` has {} true and {} fitted influencers",
                truth.influence.len(),
                est.influence.len()
            )));
        }
        let mut errors = vec![truth.self_weight - est.self_weight];
        for (j, w) in &truth.influence {
            let e = est
                .weight_of(j)
                .ok_or_else(|| Error::IdMismatch(format!("no fitted weight for `{j}` in `{id}`")))?;
            errors.push(w - e);
        }
        let max = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let sq: f64 = errors.iter().map(|e| e * e).sum();
        per_recipient.push(RecipientRecovery {
            recipient: id.clone(),
            n_weights: errors.len(),
            max_abs_error: max,
            rmse: (sq / errors.len() as f64).sqrt(),
        });
        sq_total += sq;
        count_total += errors.len();
        max_total = max_total.max(max);
    }
    Ok(RecoveryReport {
        max_abs_error: max_total,
        rmse: if count_total > 0 {
            (sq_total / count_total as f64).sqrt()
        } else {
            0.0
        },
        per_recipient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_recipients: 5,
            influencer_count_mean: 3.0,
            influencer_count_var: 0.0,
            n_pure_influencers: 10,
            n_kernels: 20,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn degenerate_count() {
        let cfg = SynthConfig {
            n_recipients: 1,
            ..small()
        };
        let net = gen_network(&cfg).unwrap();
        assert_eq!(net.len(), 1);
        assert_eq!(net.recipients()[0].influencers.len(), 3);
    }

    #[test]
    fn infeasible_mean_rejected() {
        let cfg = SynthConfig {
            n_recipients: 2,
            n_pure_influencers: 2,
            influencer_count_mean: 10.0,
            ..small()
        };
        assert!(matches!(gen_network(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn zero_bound_gives_zero_weights() {
        let cfg = SynthConfig {
            weight_bound: 0.0,
            ..small()
        };
        let net = gen_network(&cfg).unwrap();
        for w in gen_weights(&net, &cfg).values() {
            assert_eq!(w.self_weight, 0.0);
            assert!(w.influence.iter().all(|(_, v)| *v == 0.0));
        }
    }

    #[test]
    fn weights_respect_bounds_and_stability() {
        let cfg = SynthConfig::default();
        let net = gen_network(&cfg).unwrap();
        for w in gen_weights(&net, &cfg).values() {
            assert!(w.bound_violations(1.0).is_empty());
            assert!(w.betas().sum_abs() <= 1.0 - cfg.stability_margin + 1e-12);
        }
    }

    #[test]
    fn dataset_shape_and_determinism() {
        let cfg = small();
        let a = gen_dataset(&cfg).unwrap();
        let b = gen_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.series.values().all(|s| s.len() == 20 && s.is_complete()));
        let other = gen_dataset(&SynthConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.series, other.series);
    }

    #[test]
    fn recovery_metrics() {
        let cfg = small();
        let net = gen_network(&cfg).unwrap();
        let truth = gen_weights(&net, &cfg);
        let same = evaluate_recovery(&truth, &truth).unwrap();
        assert_eq!(same.max_abs_error, 0.0);
        assert_eq!(same.rmse, 0.0);

        let mut off = truth.clone();
        let first = off.values_mut().next().unwrap();
        first.influence[0].1 += 0.01;
        let r = evaluate_recovery(&truth, &off).unwrap();
        assert!((r.max_abs_error - 0.01).abs() < 1e-15);

        let mut missing = truth.clone();
        missing.pop_first();
        assert!(matches!(evaluate_recovery(&truth, &missing), Err(Error::IdMismatch(_))));
    }
}
