//! From timestamped observations to kernel-aligned opinion series.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::dynamics::{InfluenceNetwork, OpinionSeries, RecipientLinks, UserId};
use crate::error::{Error, Result};

const SECONDS_PER_DAY: i64 = 86_400;

/// Fixed-length time windows starting at midnight UTC of `epoch_start`.
///
/// Kernel `k` covers days `[k * kernel_days, (k + 1) * kernel_days)` after the
/// epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub epoch_start: NaiveDate,
    pub kernel_days: u32,
    pub num_kernels: u32,
}

impl Default for KernelSpec {
    /// Ten-day windows over the 700 days from 2020-03-01.
    fn default() -> Self {
        KernelSpec {
            epoch_start: NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date"),
            kernel_days: 10,
            num_kernels: 70,
        }
    }
}

impl KernelSpec {
    pub fn new(epoch_start: NaiveDate, kernel_days: u32, num_kernels: u32) -> Result<Self> {
        let spec = KernelSpec {
            epoch_start,
            kernel_days,
            num_kernels,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_days == 0 || self.num_kernels == 0 {
            return Err(Error::Config("kernel_days and num_kernels must be positive".into()));
        }
        Ok(())
    }

    pub fn span_days(&self) -> u64 {
        u64::from(self.kernel_days) * u64::from(self.num_kernels)
    }

    /// First day after the span.
    pub fn end_date(&self) -> NaiveDate {
        self.epoch_start + chrono::Days::new(self.span_days())
    }

    fn epoch(&self) -> DateTime<Utc> {
        self.epoch_start
            .and_hms_opt(0, 0, 0)
            .expect("midnight exists")
            .and_utc()
    }

    /// Kernel holding `ts`, or `None` outside the span.
    pub fn kernel_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let secs = (ts - self.epoch()).num_seconds();
        let day = secs.div_euclid(SECONDS_PER_DAY);
        if day < 0 || day as u64 >= self.span_days() {
            return None;
        }
        Some((day as u64 / u64::from(self.kernel_days)) as usize)
    }

    pub fn kernel_start(&self, k: usize) -> NaiveDate {
        self.epoch_start + chrono::Days::new(k as u64 * u64::from(self.kernel_days))
    }
}

/// One scored post.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationEvent {
    pub user_id: UserId,
    pub timestamp: DateTime<Utc>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregation {
    /// Per-user kernel means, unobserved kernels masked.
    pub series: BTreeMap<UserId, OpinionSeries>,
    /// Posts per kernel for each user.
    pub kernel_counts: BTreeMap<UserId, Vec<usize>>,
    /// Events outside the span.
    pub dropped: usize,
}

/// Averages each user's event values within each kernel.
pub fn aggregate_kernels(events: &[ObservationEvent], spec: &KernelSpec) -> Result<Aggregation> {
    spec.validate()?;
    let t = spec.num_kernels as usize;
    let mut sums: BTreeMap<&str, (Vec<f64>, Vec<usize>)> = BTreeMap::new();
    let mut dropped = 0;
    for e in events {
        if !e.value.is_finite() {
            return Err(Error::NonFinite(e.value));
        }
        let Some(k) = spec.kernel_of(e.timestamp) else {
            dropped += 1;
            continue;
        };
        let (sum, count) = sums
            .entry(e.user_id.as_str())
            .or_insert_with(|| (vec![0.0; t], vec![0; t]));
        sum[k] += e.value;
        count[k] += 1;
    }

    let mut series = BTreeMap::new();
    let mut kernel_counts = BTreeMap::new();
    for (user, (sum, count)) in sums {
        let values = sum
            .iter()
            .zip(&count)
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
            .collect();
        let observed = count.iter().map(|&c| c > 0).collect();
        series.insert(user.to_owned(), OpinionSeries::with_mask(user, values, observed)?);
        kernel_counts.insert(user.to_owned(), count);
    }
    Ok(Aggregation {
        series,
        kernel_counts,
        dropped,
    })
}

/// What to do with kernels before a user's first observation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeadingGap {
    /// Copy the first observed value backwards; length is preserved.
    #[default]
    Backfill,
    /// Cut the series at the first observation.
    DropLeading,
}

/// Fills each unobserved kernel with the latest earlier observation.
///
/// The observation mask is carried through unchanged, so filling twice is the
/// same as filling once.
pub fn forward_fill(series: &OpinionSeries, leading: LeadingGap) -> Result<OpinionSeries> {
    let first = series
        .first_observed()
        .ok_or_else(|| Error::AllMissing(series.user_id.clone()))?;
    let mask = series.observed_mask();
    let mut values = series.values().to_vec();
    let mut last = values[first];
    for t in 0..values.len() {
        if mask[t] {
            last = values[t];
        } else {
            values[t] = last;
        }
    }
    match leading {
        LeadingGap::Backfill => {
            let mut out = series.clone();
            out.values_mut().copy_from_slice(&values);
            Ok(out)
        }
        LeadingGap::DropLeading => {
            let mut out =
                OpinionSeries::with_mask(series.user_id.clone(), values[first..].to_vec(), mask[first..].to_vec())?;
            out.values_mut().copy_from_slice(&values[first..]);
            Ok(out)
        }
    }
}

/// Forward-fills every series, failing on the first all-missing user.
pub fn forward_fill_all(
    series: &BTreeMap<UserId, OpinionSeries>,
    leading: LeadingGap,
) -> Result<BTreeMap<UserId, OpinionSeries>> {
    series
        .iter()
        .map(|(id, s)| forward_fill(s, leading).map(|f| (id.clone(), f)))
        .collect()
}

/// Users with at least one post in at least `min_active_kernels` kernels.
pub fn activity_filter(
    per_user_kernel_counts: &BTreeMap<UserId, Vec<usize>>,
    min_active_kernels: usize,
) -> BTreeSet<UserId> {
    activity_filter_with(per_user_kernel_counts, min_active_kernels, 1)
}

/// As [`activity_filter`], but a kernel only counts once it holds
/// `min_posts_per_kernel` posts.
pub fn activity_filter_with(
    per_user_kernel_counts: &BTreeMap<UserId, Vec<usize>>,
    min_active_kernels: usize,
    min_posts_per_kernel: usize,
) -> BTreeSet<UserId> {
    per_user_kernel_counts
        .iter()
        .filter(|(_, counts)| {
            counts.iter().filter(|&&c| c >= min_posts_per_kernel.max(1)).count() >= min_active_kernels
        })
        .map(|(id, _)| id.clone())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkBuild {
    pub network: InfluenceNetwork,
    /// Recipients left without any active influencer.
    pub self_only: Vec<UserId>,
}

/// Assembles each recipient's influencer list from `(follower, followee)` edges.
///
/// Only edges leaving a recipient are used; followees must be active and
/// self-loops are dropped. Influencers are listed in id order.
pub fn build_network(
    following_edges: &[(UserId, UserId)],
    active: &BTreeSet<UserId>,
    recipients: &BTreeSet<UserId>,
) -> Result<NetworkBuild> {
    if let Some(r) = recipients.iter().find(|r| !active.contains(*r)) {
        return Err(Error::Network(format!("recipient `{r}` is not an active user")));
    }
    let mut follows: BTreeMap<&str, BTreeSet<&str>> =
        recipients.iter().map(|r| (r.as_str(), BTreeSet::new())).collect();
    for (follower, followee) in following_edges {
        if follower == followee || !active.contains(followee) {
            continue;
        }
        if let Some(list) = follows.get_mut(follower.as_str()) {
            list.insert(followee.as_str());
        }
    }
    let self_only = follows
        .iter()
        .filter(|(_, f)| f.is_empty())
        .map(|(r, _)| (*r).to_owned())
        .collect();
    let links = follows
        .into_iter()
        .map(|(r, f)| RecipientLinks {
            id: r.to_owned(),
            influencers: f.into_iter().map(str::to_owned).collect(),
        })
        .collect();
    Ok(NetworkBuild {
        network: InfluenceNetwork::new(links)?,
        self_only,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub user: UserId,
    pub ts: DateTime<Utc>,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopicFilter {
    pub kept: Vec<Post>,
    pub total: usize,
    pub topic: usize,
}

/// Lower-cased runs of alphanumerics, `-` and `_`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Keeps posts containing at least one keyword as a whole token (or, for
/// multi-word keywords, a contiguous token run). Case-insensitive.
pub fn topic_filter(posts: &[Post], keywords: &[String]) -> Result<TopicFilter> {
    let needles: Vec<Vec<String>> = keywords.iter().map(|k| tokenize(k)).filter(|t| !t.is_empty()).collect();
    if needles.is_empty() {
        return Err(Error::Config("at least one non-blank keyword is required".into()));
    }
    let kept: Vec<Post> = posts
        .iter()
        .filter(|p| {
            let tokens = tokenize(&p.text);
            needles.iter().any(|n| contains_run(&tokens, n))
        })
        .cloned()
        .collect();
    Ok(TopicFilter {
        total: posts.len(),
        topic: kept.len(),
        kept,
    })
}
