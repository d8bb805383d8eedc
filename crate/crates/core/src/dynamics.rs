//! Opinion state and the discrete-time influence map.
//!
//! A recipient `i` anchored with self-weight `w_ii` and pulled by each
//! followed influencer `j` with tie weight `w_ij` moves to
//!
//! ```text
//! x_i(t+1) = w_ii * x_i(t) + sum_j w_ij * (x_j(t) - x_i(t))
//! ```
//!
//! Collecting the `x_i(t)` terms gives the regression form used by
//! [`crate::identify`]: `x_i(t+1) = b_ii * x_i(t) + sum_j b_ij * x_j(t)` with
//! `b_ij = w_ij` and `b_ii = w_ii - sum_j w_ij`. Both forms are exposed here.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type UserId = String;

/// A point on the one-dimensional opinion axis. Always finite.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Opinion(f64);

impl Opinion {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Opinion(value))
        } else {
            Err(Error::NonFinite(value))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Opinion {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Opinion::new(value)
    }
}

impl From<Opinion> for f64 {
    fn from(o: Opinion) -> f64 {
        o.0
    }
}

impl fmt::Display for Opinion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One user's opinion per time kernel.
///
/// Unobserved kernels hold `NaN` in `values` until the series is
/// forward-filled (see [`crate::kernelize::forward_fill`]).
#[derive(Clone, Debug, PartialEq)]
pub struct OpinionSeries {
    pub user_id: UserId,
    values: Vec<f64>,
    observed: Vec<bool>,
}

impl OpinionSeries {
    /// Builds a fully observed series.
    pub fn observed(user_id: impl Into<UserId>, values: Vec<f64>) -> Result<Self> {
        let observed = vec![true; values.len()];
        Self::with_mask(user_id, values, observed)
    }

    /// Builds a series from values and an observation mask. Values at
    /// unobserved positions are ignored and stored as `NaN`.
    pub fn with_mask(user_id: impl Into<UserId>, mut values: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        let user_id = user_id.into();
        if values.len() != observed.len() {
            return Err(Error::LengthMismatch {
                user: user_id,
                expected: observed.len(),
                found: values.len(),
            });
        }
        if values.is_empty() {
            return Err(Error::SeriesTooShort(0, 1));
        }
        for (v, &seen) in values.iter_mut().zip(&observed) {
            if !seen {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::NonFinite(*v));
            }
        }
        Ok(OpinionSeries {
            user_id,
            values,
            observed,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed_mask(&self) -> &[bool] {
        &self.observed
    }

    /// Value at kernel `t`, `None` when the kernel is unobserved and unfilled.
    pub fn get(&self, t: usize) -> Option<f64> {
        self.values.get(t).copied().filter(|v| v.is_finite())
    }

    pub fn first_observed(&self) -> Option<usize> {
        self.observed.iter().position(|&o| o)
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// True when every kernel carries a finite value.
    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Regression-form coefficients of one recipient's update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Betas {
    pub self_beta: f64,
    pub influence: Vec<(UserId, f64)>,
}

impl Betas {
    pub fn sum_abs(&self) -> f64 {
        self.self_beta.abs() + self.influence.iter().map(|(_, b)| b.abs()).sum::<f64>()
    }
}

/// Self-weight and per-influencer tie weights of one recipient.
///
/// Influencers are kept in network order so they line up with design
/// matrix columns.
#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceWeights {
    pub recipient_id: UserId,
    pub self_weight: f64,
    pub influence: Vec<(UserId, f64)>,
}

impl InfluenceWeights {
    pub fn new(recipient_id: impl Into<UserId>, self_weight: f64, influence: Vec<(UserId, f64)>) -> Self {
        InfluenceWeights {
            recipient_id: recipient_id.into(),
            self_weight,
            influence,
        }
    }

    /// `b_ij = w_ij`, `b_ii = w_ii - sum_j w_ij`.
    pub fn betas(&self) -> Betas {
        let pulled: f64 = self.influence.iter().map(|(_, w)| w).sum();
        Betas {
            self_beta: self.self_weight - pulled,
            influence: self.influence.clone(),
        }
    }

    /// Inverse of [`InfluenceWeights::betas`]: `w_ii = b_ii + sum_j b_ij`.
    pub fn from_betas(recipient_id: impl Into<UserId>, betas: &Betas) -> Self {
        let pulled: f64 = betas.influence.iter().map(|(_, b)| b).sum();
        InfluenceWeights {
            recipient_id: recipient_id.into(),
            self_weight: betas.self_beta + pulled,
            influence: betas.influence.clone(),
        }
    }

    pub fn weight_of(&self, influencer: &str) -> Option<f64> {
        self.influence.iter().find(|(id, _)| id == influencer).map(|&(_, w)| w)
    }

    /// Weights outside `[-bound, bound]`. The self-weight is reported under
    /// the recipient's own id. Nothing is clamped.
    pub fn bound_violations(&self, bound: f64) -> Vec<(UserId, f64)> {
        std::iter::once((&self.recipient_id, self.self_weight))
            .chain(self.influence.iter().map(|(id, w)| (id, *w)))
            .filter(|(_, w)| w.abs() > bound)
            .map(|(id, w)| (id.clone(), w))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecipientLinks {
    pub id: UserId,
    pub influencers: Vec<UserId>,
}

/// Recipients and the accounts each one follows.
///
/// Links between influencers are not part of the model, so only the
/// recipient rows are stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct InfluenceNetwork {
    recipients: Vec<RecipientLinks>,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    recipients: Vec<RecipientLinks>,
}

impl TryFrom<NetworkRepr> for InfluenceNetwork {
    type Error = Error;

    fn try_from(repr: NetworkRepr) -> Result<Self> {
        InfluenceNetwork::new(repr.recipients)
    }
}

impl From<InfluenceNetwork> for NetworkRepr {
    fn from(net: InfluenceNetwork) -> Self {
        NetworkRepr {
            recipients: net.recipients,
        }
    }
}

impl InfluenceNetwork {
    pub fn new(recipients: Vec<RecipientLinks>) -> Result<Self> {
        let mut seen_recipients = BTreeSet::new();
        for r in &recipients {
            if !seen_recipients.insert(r.id.as_str()) {
                return Err(Error::Network(format!("recipient `{}` listed twice", r.id)));
            }
            let mut seen = BTreeSet::new();
            for j in &r.influencers {
                if *j == r.id {
                    return Err(Error::Network(format!(
                        "recipient `{}` lists itself as an influencer",
                        r.id
                    )));
                }
                if !seen.insert(j.as_str()) {
                    return Err(Error::Network(format!(
                        "recipient `{}` lists influencer `{j}` twice",
                        r.id
                    )));
                }
            }
        }
        Ok(InfluenceNetwork { recipients })
    }

    pub fn recipients(&self) -> &[RecipientLinks] {
        &self.recipients
    }

    pub fn get(&self, recipient: &str) -> Option<&RecipientLinks> {
        self.recipients.iter().find(|r| r.id == recipient)
    }

    pub fn len(&self) -> usize {
        self.recipients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recipients.is_empty()
    }

    /// Every user that appears anywhere in the network.
    pub fn users(&self) -> BTreeSet<&str> {
        self.recipients
            .iter()
            .flat_map(|r| std::iter::once(r.id.as_str()).chain(r.influencers.iter().map(String::as_str)))
            .collect()
    }

    /// Users that influence someone but are nobody's recipient.
    pub fn pure_influencers(&self) -> BTreeSet<&str> {
        let recipients: BTreeSet<&str> = self.recipients.iter().map(|r| r.id.as_str()).collect();
        self.users().into_iter().filter(|u| !recipients.contains(u)).collect()
    }

    pub fn influencer_counts(&self) -> Vec<usize> {
        self.recipients.iter().map(|r| r.influencers.len()).collect()
    }
}

/// Force exerted on an opinion `x_i` by an opinion `x_j`.
#[inline]
pub fn influence_force(x_i: Opinion, x_j: Opinion) -> f64 {
    x_j.get() - x_i.get()
}

fn lookup(opinions: &BTreeMap<UserId, Opinion>, id: &str) -> Result<f64> {
    opinions
        .get(id)
        .map(|o| o.get())
        .ok_or_else(|| Error::MissingUser(id.to_owned()))
}

/// One application of the influence map for a single recipient.
pub fn step(opinions: &BTreeMap<UserId, Opinion>, weights: &InfluenceWeights) -> Result<Opinion> {
    let x_i = Opinion::new(lookup(opinions, &weights.recipient_id)?)?;
    let mut next = weights.self_weight * x_i.get();
    for (j, w) in &weights.influence {
        let x_j = Opinion::new(lookup(opinions, j)?)?;
        next += w * influence_force(x_i, x_j);
    }
    Opinion::new(next)
}

/// Same update evaluated through the regression coefficients.
pub fn step_betas(opinions: &BTreeMap<UserId, Opinion>, recipient: &str, betas: &Betas) -> Result<Opinion> {
    let mut next = betas.self_beta * lookup(opinions, recipient)?;
    for (j, b) in &betas.influence {
        next += b * lookup(opinions, j)?;
    }
    Opinion::new(next)
}

/// Parameters of a forward simulation.
#[derive(Clone, Debug, Default)]
pub struct SimulationOptions {
    pub steps: usize,
    /// Standard deviation of the Gaussian noise added to each recipient update.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Trajectories for pure influencers, indexed by kernel. Influencers
    /// without a script are held at their initial opinion. A script must
    /// cover kernels `0..=steps`; kernel 0 overrides the initial value.
    pub scripted: BTreeMap<UserId, Vec<f64>>,
}

/// Stable 64-bit FNV-1a, used to derive per-recipient random streams.
pub(crate) fn stream_id(id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn user_rng(seed: u64, id: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(id));
    rng
}

/// Iterates the influence map over `steps` kernels.
///
/// Returns one series of length `steps + 1` for every user in `initial`.
/// Each recipient draws noise from its own stream keyed by `(seed, id)`, so
/// the result does not depend on iteration order.
pub fn simulate(
    network: &InfluenceNetwork,
    weights: &BTreeMap<UserId, InfluenceWeights>,
    initial: &BTreeMap<UserId, Opinion>,
    opts: &SimulationOptions,
) -> Result<BTreeMap<UserId, OpinionSeries>> {
    if !(opts.noise_sigma >= 0.0 && opts.noise_sigma.is_finite()) {
        return Err(Error::Config(format!(
            "noise_sigma must be a finite non-negative number, got {}",
            opts.noise_sigma
        )));
    }

    let mut models = Vec::with_capacity(network.len());
    for r in network.recipients() {
        if !initial.contains_key(&r.id) {
            return Err(Error::MissingUser(r.id.clone()));
        }
        for j in &r.influencers {
            if !initial.contains_key(j) {
                return Err(Error::DanglingInfluencer {
                    recipient: r.id.clone(),
                    influencer: j.clone(),
                });
            }
        }
        let w = weights
            .get(&r.id)
            .ok_or_else(|| Error::Config(format!("no weights for recipient `{}`", r.id)))?;
        let wired: BTreeSet<&str> = r.influencers.iter().map(String::as_str).collect();
        if let Some((stray, _)) = w.influence.iter().find(|(j, _)| !wired.contains(j.as_str())) {
            return Err(Error::Config(format!(
                "weights for `{}` reference `{stray}`, which it does not follow",
                r.id
            )));
        }
        models.push(w);
    }

    for (id, script) in &opts.scripted {
        if network.get(id).is_some() {
            return Err(Error::Config(format!(
                "`{id}` is a recipient and cannot follow a scripted trajectory"
            )));
        }
        if script.len() < opts.steps + 1 {
            return Err(Error::Config(format!(
                "script for `{id}` covers {} kernels, need {}",
                script.len(),
                opts.steps + 1
            )));
        }
    }

    let noise = if opts.noise_sigma > 0.0 {
        Some(Normal::new(0.0, opts.noise_sigma).expect("sigma checked above"))
    } else {
        None
    };
    let mut rngs: Vec<ChaCha8Rng> = models.iter().map(|w| user_rng(opts.seed, &w.recipient_id)).collect();

    let mut state: BTreeMap<UserId, Opinion> = initial.clone();
    for (id, script) in &opts.scripted {
        if state.contains_key(id) {
            state.insert(id.clone(), Opinion::new(script[0])?);
        }
    }
    let mut history: BTreeMap<UserId, Vec<f64>> = state
        .iter()
        .map(|(id, o)| {
            let mut v = Vec::with_capacity(opts.steps + 1);
            v.push(o.get());
            (id.clone(), v)
        })
        .collect();

    for t in 0..opts.steps {
        let mut next = state.clone();
        for (w, rng) in models.iter().zip(rngs.iter_mut()) {
            let mut x = step(&state, w)?.get();
            if let Some(n) = &noise {
                x += n.sample(rng);
            }
            next.insert(w.recipient_id.clone(), Opinion::new(x)?);
        }
        for (id, script) in &opts.scripted {
            if let Some(slot) = next.get_mut(id) {
                *slot = Opinion::new(script[t + 1])?;
            }
        }
        for (id, o) in &next {
            history.get_mut(id).expect("same key set").push(o.get());
        }
        state = next;
    }

    history
        .into_iter()
        .map(|(id, values)| OpinionSeries::observed(id.clone(), values).map(|s| (id, s)))
        .collect()
}
