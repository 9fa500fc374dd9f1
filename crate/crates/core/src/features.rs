//! Per-user temporal feature vectors.
//!
//! One row per cascade group: the jointly fitted kernel parameters, the
//! branching factor and viral score, and six-point summaries
//! `(min, q1, median, mean, q3, max)` of cascade sizes, inter-event times
//! (taken within each cascade, then pooled) and event magnitudes (initial
//! posts included). Quantiles interpolate linearly between order statistics.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cascade::CascadeGroup;
use crate::fitting::{fit_series, FitConfig};
use crate::kernels::ModelType;
use crate::math::{self, KahanSum};
use crate::measures::{diffusion_measures, MarkLaw};
use crate::{Error, Result};

/// Feature-table schema version; bump when columns change.
pub const FEATURE_SCHEMA_VERSION: u32 = 1;

/// Viral score written for divergent (`n* ≥ 1`) models, alongside the
/// `viral_divergent` flag.
pub const DIVERGENT_VIRAL_SCORE: f64 = 1e6;

/// Quantile `q` of an ascending sample: linear interpolation at 0-based
/// position `(n − 1) q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let pos = (n - 1) as f64 * q;
    let lo = math::floor(pos) as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SixPoint {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

impl SixPoint {
    pub const LABELS: [&'static str; 6] = ["min", "q1", "median", "mean", "q3", "max"];

    pub const ZERO: SixPoint = SixPoint {
        min: 0.0,
        q1: 0.0,
        median: 0.0,
        mean: 0.0,
        q3: 0.0,
        max: 0.0,
    };

    pub fn to_array(&self) -> [f64; 6] {
        [self.min, self.q1, self.median, self.mean, self.q3, self.max]
    }
}

pub fn six_point_summary(values: &[f64]) -> Result<SixPoint> {
    if values.is_empty() {
        return Err(Error::Validation(String::from(
            "six-point summary of an empty sample",
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Validation(String::from("sample contains NaN")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut acc = KahanSum::default();
    for &v in &sorted {
        acc.add(v);
    }
    let n = sorted.len();
    let mean = (acc.total() / n as f64).max(sorted[0]).min(sorted[n - 1]);
    Ok(SixPoint {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        mean,
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[n - 1],
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureConfig {
    pub fit: FitConfig,
    pub mark_law: MarkLaw,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    NotConverged,
    /// Fit failed; parameter and measure columns are zero.
    Failed(String),
}

impl RowStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::NotConverged => "not_converged",
            RowStatus::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserFeatureVector {
    pub user_id: String,
    pub n_cascades: usize,
    pub status: RowStatus,
    pub converged: bool,
    /// Fitted parameters in [`ModelType::params`] order.
    pub params: Vec<f64>,
    pub branching_factor: f64,
    /// Finite viral score, or [`DIVERGENT_VIRAL_SCORE`] when divergent.
    pub viral_score: f64,
    pub viral_divergent: bool,
    pub sizes: SixPoint,
    pub intervals: SixPoint,
    /// Number of pooled inter-event times; the interval summary is all zeros
    /// when this is 0.
    pub n_intervals: usize,
    pub magnitudes: SixPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub family: ModelType,
    pub rows: Vec<UserFeatureVector>,
}

impl FeatureTable {
    /// Column names; the layout is fixed per family.
    pub fn header(&self) -> Vec<String> {
        header_for(self.family)
    }

    /// Assembles rows computed by [`user_features`]; fails only when every
    /// row failed.
    pub fn from_rows(family: ModelType, rows: Vec<UserFeatureVector>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput(String::from("no cascade groups")));
        }
        if rows.iter().all(|r| matches!(r.status, RowStatus::Failed(_))) {
            let first = match &rows[0].status {
                RowStatus::Failed(msg) => msg.clone(),
                _ => String::new(),
            };
            return Err(Error::Validation(format!("every group failed to fit; first error: {first}")));
        }
        Ok(Self { family, rows })
    }

    /// Numeric feature columns only (everything after the identifying and
    /// status columns), in header order.
    pub fn numeric_matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(UserFeatureVector::numeric).collect()
    }
}

/// Identifying and status columns that precede the numeric ones.
pub const LEADING_COLUMNS: [&str; 4] = ["user_id", "n_cascades", "status", "converged"];

pub fn header_for(family: ModelType) -> Vec<String> {
    let mut h: Vec<String> = LEADING_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.extend(numeric_header_for(family));
    h
}

pub fn numeric_header_for(family: ModelType) -> Vec<String> {
    let mut h: Vec<String> = family
        .params()
        .iter()
        .map(|p| format!("param_{}", p.name()))
        .collect();
    h.push("branching_factor".into());
    h.push("viral_score".into());
    h.push("viral_divergent".into());
    for prefix in ["size", "interval"] {
        h.extend(SixPoint::LABELS.iter().map(|l| format!("{prefix}_{l}")));
    }
    h.push("n_intervals".into());
    h.extend(SixPoint::LABELS.iter().map(|l| format!("magnitude_{l}")));
    h
}

impl UserFeatureVector {
    pub fn numeric(&self) -> Vec<f64> {
        let mut v = self.params.clone();
        v.push(self.branching_factor);
        v.push(self.viral_score);
        v.push(if self.viral_divergent { 1.0 } else { 0.0 });
        v.extend(self.sizes.to_array());
        v.extend(self.intervals.to_array());
        v.push(self.n_intervals as f64);
        v.extend(self.magnitudes.to_array());
        v
    }
}

fn summaries(group: &CascadeGroup) -> Result<(SixPoint, SixPoint, usize, SixPoint)> {
    let sizes: Vec<f64> = group.cascades().iter().map(|c| c.len() as f64).collect();
    let intervals: Vec<f64> = group
        .cascades()
        .iter()
        .flat_map(|c| c.inter_event_times())
        .collect();
    let magnitudes = group.magnitudes();
    let interval_summary = if intervals.is_empty() {
        SixPoint::ZERO
    } else {
        six_point_summary(&intervals)?
    };
    Ok((
        six_point_summary(&sizes)?,
        interval_summary,
        intervals.len(),
        six_point_summary(&magnitudes)?,
    ))
}

/// Feature row of one group. Fit failures are recorded in the row.
pub fn user_features(group: &CascadeGroup, family: ModelType, config: &FeatureConfig) -> Result<UserFeatureVector> {
    let (sizes, intervals, n_intervals, magnitudes) = summaries(group)?;
    let mut row = UserFeatureVector {
        user_id: group.group_key.clone(),
        n_cascades: group.len(),
        status: RowStatus::Ok,
        converged: false,
        params: alloc::vec![0.0; family.n_params()],
        branching_factor: 0.0,
        viral_score: 0.0,
        viral_divergent: false,
        sizes,
        intervals,
        n_intervals,
        magnitudes,
    };
    let outcome = fit_series(group.cascades(), family, &config.fit).and_then(|model| {
        let measures = diffusion_measures(&model, config.mark_law)?;
        Ok((model, measures))
    });
    match outcome {
        Ok((model, measures)) => {
            row.params = model.params.to_vector(family)?;
            row.converged = model.converged;
            row.status = if model.converged {
                RowStatus::Ok
            } else {
                RowStatus::NotConverged
            };
            row.branching_factor = measures.branching_factor;
            match measures.viral_score.value() {
                Some(v) => row.viral_score = v,
                None => {
                    row.viral_score = DIVERGENT_VIRAL_SCORE;
                    row.viral_divergent = true;
                }
            }
        }
        Err(e) => row.status = RowStatus::Failed(e.to_string()),
    }
    Ok(row)
}

/// Fits every group jointly and assembles the feature table, one row per
/// group in input order.
pub fn generate_features(groups: &[CascadeGroup], family: ModelType, config: &FeatureConfig) -> Result<FeatureTable> {
    if groups.is_empty() {
        return Err(Error::EmptyInput(String::from("no cascade groups")));
    }
    let rows = groups
        .iter()
        .map(|g| user_features(g, family, config))
        .collect::<Result<Vec<_>>>()?;
    FeatureTable::from_rows(family, rows)
}
