//! Per-recipient least-squares identification of influence weights.
//!
//! Each recipient gets its own through-origin regression of `x_i(t+1)` on
//! `x_i(t)` and the followed influencers' `x_j(t)`. Coefficients come from a
//! pivoted QR solve and are mapped back to `(w_ii, w_ij)` with
//! [`betas_to_weights`]. Goodness of fit uses the uncentered convention that
//! matches a model with no intercept:
//!
//! ```text
//! R^2     = 1 - SSR / sum(y^2)
//! adj R^2 = 1 - (1 - R^2) * n / (n - p)
//! F       = (R^2 / p) / ((1 - R^2) / (n - p)),   Prob(F) = P(F(p, n - p) > F)
//! ```

mod fdist;
pub mod qr;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Betas, InfluenceNetwork, InfluenceWeights, OpinionSeries, RecipientLinks, UserId};
use crate::error::{Error, Result};

pub use fdist::{f_cdf, f_sf};
use qr::{Dense, PivotedQr};

/// Declared range of every weight; fitted values outside it are reported.
pub const WEIGHT_BOUND: f64 = 1.0;

/// Regression inputs for one recipient.
///
/// Column 0 is the recipient's own lagged opinion, columns `1..` the
/// influencers in network order. Row `t` predicts kernel `t + 1` from kernel `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    matrix: Dense,
    response: Vec<f64>,
    column_ids: Vec<UserId>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix.get(row, col)
    }

    pub fn column(&self, col: usize) -> &[f64] {
        self.matrix.column(col)
    }

    pub fn matrix(&self) -> &Dense {
        &self.matrix
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn column_ids(&self) -> &[UserId] {
        &self.column_ids
    }

    pub fn recipient(&self) -> &str {
        &self.column_ids[0]
    }
}

/// Lays out the lag-one regression for `recipient` against `influencers`.
pub fn build_design(recipient: &OpinionSeries, influencers: &[&OpinionSeries]) -> Result<DesignMatrix> {
    let t = recipient.len();
    if t < 3 {
        return Err(Error::SeriesTooShort(t, 3));
    }
    let all = std::iter::once(recipient).chain(influencers.iter().copied());
    let mut columns = Vec::with_capacity(1 + influencers.len());
    let mut column_ids = Vec::with_capacity(1 + influencers.len());
    for s in all {
        if s.len() != t {
            return Err(Error::LengthMismatch {
                user: s.user_id.clone(),
                expected: t,
                found: s.len(),
            });
        }
        if !s.is_complete() {
            return Err(Error::Unfilled(s.user_id.clone()));
        }
        columns.push(s.values()[..t - 1].to_vec());
        column_ids.push(s.user_id.clone());
    }
    Ok(DesignMatrix {
        matrix: Dense::from_columns(t - 1, &columns),
        response: recipient.values()[1..].to_vec(),
        column_ids,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitFlags {
    /// `n <= p`: no residual degrees of freedom.
    pub saturated: bool,
    /// Numerical rank below the predictor count; betas are minimum-norm.
    pub rank_deficient: bool,
    /// `sum(y^2) == 0`; R^2 is defined as 1 for a zero residual.
    pub zero_response: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub weight_id: UserId,
    pub value: f64,
}

/// Outputs of one recipient's regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub recipient: UserId,
    pub column_ids: Vec<UserId>,
    pub n_obs: usize,
    pub n_predictors: usize,
    pub betas: Vec<f64>,
    pub rank: usize,
    #[serde(with = "json_float")]
    pub r_squared: f64,
    #[serde(with = "json_float")]
    pub adj_r_squared: f64,
    /// `+inf` for perfect and saturated fits.
    #[serde(with = "json_float")]
    pub f_statistic: f64,
    #[serde(with = "json_float")]
    pub prob_f: f64,
    pub residuals: Vec<f64>,
    pub bound_violations: Vec<BoundViolation>,
    pub flags: FitFlags,
}

impl FitDiagnostics {
    pub fn weights(&self) -> InfluenceWeights {
        betas_to_weights(&self.betas, &self.column_ids)
    }

    pub fn influencer_count(&self) -> usize {
        self.n_predictors.saturating_sub(1)
    }
}

/// JSON has no infinities or NaN, so non-finite statistics are written as
/// the strings `"inf"`, `"-inf"` and `"nan"`.
pub(crate) mod json_float {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(D::Error::custom(format!("expected a number, found `{other}`"))),
            },
        }
    }
}

/// Maps regression coefficients (aligned with `column_ids`, recipient first)
/// back to self and tie weights.
pub fn betas_to_weights(betas: &[f64], column_ids: &[UserId]) -> InfluenceWeights {
    assert_eq!(betas.len(), column_ids.len(), "one beta per column");
    assert!(!betas.is_empty(), "column 0 must be the recipient");
    let b = Betas {
        self_beta: betas[0],
        influence: column_ids[1..]
            .iter()
            .cloned()
            .zip(betas[1..].iter().copied())
            .collect(),
    };
    InfluenceWeights::from_betas(column_ids[0].clone(), &b)
}

/// Inverse of [`betas_to_weights`]: coefficient vector aligned with
/// `[recipient, influencers...]`.
pub fn weights_to_betas(weights: &InfluenceWeights) -> Vec<f64> {
    let b = weights.betas();
    std::iter::once(b.self_beta)
        .chain(b.influence.iter().map(|(_, v)| *v))
        .collect()
}

/// Ordinary least squares without intercept. Rank-deficient designs get the
/// minimum-norm coefficients and a flag; nothing here is fatal.
pub fn fit_ols(design: &DesignMatrix) -> FitDiagnostics {
    let qr = PivotedQr::new(&design.matrix);
    let betas = qr.solve_min_norm(&design.response);
    assemble(design, betas, qr.rank())
}

/// Goodness-of-fit statistics for `betas` on `design`.
pub fn regression_diagnostics(design: &DesignMatrix, betas: &[f64]) -> FitDiagnostics {
    assert_eq!(betas.len(), design.cols(), "one beta per design column");
    let rank = PivotedQr::new(&design.matrix).rank();
    assemble(design, betas.to_vec(), rank)
}

fn assemble(design: &DesignMatrix, betas: Vec<f64>, rank: usize) -> FitDiagnostics {
    let (n, p) = (design.rows(), design.cols());
    let fitted = design.matrix.mul_vec(&betas);
    let residuals: Vec<f64> = design.response.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let ssr: f64 = residuals.iter().map(|r| r * r).sum();
    let sst: f64 = design.response.iter().map(|y| y * y).sum();

    let zero_response = sst == 0.0;
    let r_squared = if zero_response {
        if ssr == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - ssr / sst
    };

    let saturated = n <= p;
    let (adj_r_squared, f_statistic, prob_f) = if saturated {
        (r_squared, f64::INFINITY, 0.0)
    } else {
        let df_model = p as f64;
        let df_resid = (n - p) as f64;
        let unexplained = 1.0 - r_squared;
        let adj = 1.0 - unexplained * n as f64 / df_resid;
        if unexplained <= 0.0 {
            (adj, f64::INFINITY, 0.0)
        } else {
            let f = ((r_squared / df_model) / (unexplained / df_resid)).max(0.0);
            let prob = f_sf(f, df_model, df_resid).unwrap_or(f64::NAN);
            (adj, f, prob)
        }
    };

    let weights = betas_to_weights(&betas, &design.column_ids);
    let bound_violations = weights
        .bound_violations(WEIGHT_BOUND)
        .into_iter()
        .map(|(weight_id, value)| BoundViolation { weight_id, value })
        .collect();

    FitDiagnostics {
        recipient: design.recipient().to_owned(),
        column_ids: design.column_ids.clone(),
        n_obs: n,
        n_predictors: p,
        betas,
        rank,
        r_squared,
        adj_r_squared,
        f_statistic,
        prob_f,
        residuals,
        bound_violations,
        flags: FitFlags {
            saturated,
            rank_deficient: rank < p,
            zero_response,
        },
    }
}

/// Aggregates over a cohort of fits. Variances are population variances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n_models: usize,
    /// Common observation count, `None` if fits disagree or there are none.
    pub observations_per_model: Option<usize>,
    #[serde(with = "json_float")]
    pub adj_r_squared_mean: f64,
    #[serde(with = "json_float")]
    pub adj_r_squared_var: f64,
    #[serde(with = "json_float")]
    pub prob_f_mean: f64,
    #[serde(with = "json_float")]
    pub prob_f_var: f64,
    #[serde(with = "json_float")]
    pub influencer_count_mean: f64,
    #[serde(with = "json_float")]
    pub influencer_count_var: f64,
}

/// Mean and population variance; `NaN` for an empty sample.
pub fn mean_var(xs: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let xs: Vec<f64> = xs.into_iter().collect();
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

impl CohortSummary {
    pub fn from_fits(fits: &[FitDiagnostics]) -> Self {
        let (adj_m, adj_v) = mean_var(fits.iter().map(|f| f.adj_r_squared));
        let (pf_m, pf_v) = mean_var(fits.iter().map(|f| f.prob_f));
        let (ic_m, ic_v) = mean_var(fits.iter().map(|f| f.influencer_count() as f64));
        let observations_per_model = match fits.split_first() {
            Some((first, rest)) if rest.iter().all(|f| f.n_obs == first.n_obs) => Some(first.n_obs),
            _ => None,
        };
        CohortSummary {
            n_models: fits.len(),
            observations_per_model,
            adj_r_squared_mean: adj_m,
            adj_r_squared_var: adj_v,
            prob_f_mean: pf_m,
            prob_f_var: pf_v,
            influencer_count_mean: ic_m,
            influencer_count_var: ic_v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitFailure {
    pub recipient: UserId,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohortFit {
    /// Sorted by recipient id.
    pub fits: Vec<FitDiagnostics>,
    pub failures: Vec<FitFailure>,
    pub summary: CohortSummary,
}

impl CohortFit {
    pub fn weights(&self) -> BTreeMap<UserId, InfluenceWeights> {
        self.fits.iter().map(|f| (f.recipient.clone(), f.weights())).collect()
    }
}

fn fit_recipient(links: &RecipientLinks, series: &BTreeMap<UserId, OpinionSeries>) -> Result<FitDiagnostics> {
    let find = |id: &str| series.get(id).ok_or_else(|| Error::MissingUser(id.to_owned()));
    let own = find(&links.id)?;
    let others = links.influencers.iter().map(|j| find(j)).collect::<Result<Vec<_>>>()?;
    Ok(fit_ols(&build_design(own, &others)?))
}

/// Fits every recipient independently. A failing recipient is recorded and
/// skipped; the rest of the cohort is still fitted.
pub fn fit_cohort(network: &InfluenceNetwork, series: &BTreeMap<UserId, OpinionSeries>) -> CohortFit {
    let results: Vec<(UserId, Result<FitDiagnostics>)> = network
        .recipients()
        .par_iter()
        .map(|links| (links.id.clone(), fit_recipient(links, series)))
        .collect();

    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for (recipient, res) in results {
        match res {
            Ok(fit) => fits.push(fit),
            Err(e) => failures.push(FitFailure {
                recipient,
                error: e.to_string(),
            }),
        }
    }
    fits.sort_by(|a, b| a.recipient.cmp(&b.recipient));
    failures.sort_by(|a, b| a.recipient.cmp(&b.recipient));
    let summary = CohortSummary::from_fits(&fits);
    CohortFit {
        fits,
        failures,
        summary,
    }
}
