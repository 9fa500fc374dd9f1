//! Diffusion measures derived from a fitted model: branching factor, viral
//! score and expected final popularity.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cascade::Cascade;
use crate::features::quantile_sorted;
use crate::fitting::FittedModel;
use crate::kernels::{expected_mark_effect, Kernel, MarkEffect};
use crate::math::KahanSum;
use crate::rng;
use crate::simulation::{continue_series, Horizon, SimConfig};
use crate::{Error, Result};

/// How `E[m^β]` is obtained for marked families.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkLaw {
    /// Mean of `mᵢ^β` over the model's training marks.
    #[default]
    Empirical,
    /// Pareto marks with exponent `alpha`.
    PowerLaw { alpha: f64 },
}

/// Expected final size of a fresh cascade, counting the initial post.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ViralScore {
    Finite(f64),
    /// `n* ≥ 1`: the expectation diverges.
    Divergent,
}

impl ViralScore {
    pub fn from_branching_factor(n_star: f64) -> Self {
        if n_star < 1.0 {
            ViralScore::Finite(1.0 / (1.0 - n_star))
        } else {
            ViralScore::Divergent
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            ViralScore::Finite(v) => Some(v),
            ViralScore::Divergent => None,
        }
    }

    pub fn is_divergent(self) -> bool {
        self == ViralScore::Divergent
    }
}

/// Summary measures of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionMeasures {
    pub branching_factor: f64,
    pub viral_score: ViralScore,
    /// The viral score counts the initial post (it is at least 1).
    pub viral_score_counts_initial: bool,
    pub mark_effect: f64,
    pub supercritical: bool,
    /// HawkesN: the branching factor ignores population damping.
    pub nominal: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predicted_final_popularity: Vec<f64>,
}

/// `E[m^β]` for the model; exactly 1 for unmarked families.
pub fn mark_effect(model: &FittedModel, law: MarkLaw) -> Result<f64> {
    let beta = model.params.beta.unwrap_or(0.0);
    if !model.family.is_marked() || beta == 0.0 {
        return Ok(1.0);
    }
    match law {
        MarkLaw::Empirical => expected_mark_effect(MarkEffect::Empirical(&model.training_marks), beta),
        MarkLaw::PowerLaw { alpha } => expected_mark_effect(MarkEffect::PowerLaw { alpha }, beta),
    }
}

/// `n* = E[m^β] · ∫₀^∞ φ`. For HawkesN this is the unmodulated (nominal)
/// kernel mass.
pub fn branching_factor(model: &FittedModel) -> Result<f64> {
    branching_factor_with(model, MarkLaw::Empirical)
}

pub fn branching_factor_with(model: &FittedModel, law: MarkLaw) -> Result<f64> {
    if !model.family.is_hawkes() {
        return Err(Error::Validation(String::from(
            "SEISMIC has no fixed branching factor",
        )));
    }
    if model.family.is_power_law() && !(model.params.theta > 0.0) {
        return Err(Error::Divergent(format!(
            "power-law kernel mass diverges for theta = {}",
            model.params.theta
        )));
    }
    let kernel = Kernel::new(model.family, &model.params)?;
    Ok(mark_effect(model, law)? * kernel.total_mass())
}

/// `v = 1 / (1 − n*)`, or divergent when `n* ≥ 1`.
pub fn viral_score(model: &FittedModel) -> Result<ViralScore> {
    Ok(ViralScore::from_branching_factor(branching_factor(model)?))
}

pub fn diffusion_measures(model: &FittedModel, law: MarkLaw) -> Result<DiffusionMeasures> {
    let n_star = branching_factor_with(model, law)?;
    Ok(DiffusionMeasures {
        branching_factor: n_star,
        viral_score: ViralScore::from_branching_factor(n_star),
        viral_score_counts_initial: true,
        mark_effect: mark_effect(model, law)?,
        supercritical: n_star >= 1.0,
        nominal: model.family.is_hawkesn(),
        predicted_final_popularity: Vec::new(),
    })
}

/// Expected number of direct children arriving after `t`:
/// `A₁ = Σᵢ mᵢ^β ∫_{t−tᵢ}^∞ φ`.
pub fn direct_tail(model: &FittedModel, cascade: &Cascade, t: f64) -> Result<f64> {
    let kernel = Kernel::new(model.family, &model.params)?;
    let mut acc = KahanSum::default();
    for e in cascade.events().iter().filter(|e| e.time <= t) {
        acc.add(kernel.mark_factor(e.magnitude) * kernel.tail(t - e.time));
    }
    Ok(acc.total())
}

/// Closed-form expected final popularity `N̂ = n + A₁ / (1 − n*)` of a
/// cascade observed up to `t`.
///
/// Direct children use the observed marks; later generations use `E[m^β]`.
pub fn predict_final_popularity(model: &FittedModel, cascade: &Cascade, t: f64) -> Result<f64> {
    predict_final_popularity_with(model, cascade, t, MarkLaw::Empirical)
}

pub fn predict_final_popularity_with(
    model: &FittedModel,
    cascade: &Cascade,
    t: f64,
    law: MarkLaw,
) -> Result<f64> {
    if model.family.is_hawkesn() {
        return Err(Error::Validation(String::from(
            "HawkesN has no closed-form popularity; use the Monte-Carlo predictor",
        )));
    }
    if !(t >= cascade.last_time()) {
        return Err(Error::Domain(format!(
            "observation time {t} precedes last event {}",
            cascade.last_time()
        )));
    }
    let n_star = branching_factor_with(model, law)?;
    if n_star >= 1.0 {
        return Err(Error::Supercritical {
            branching_factor: n_star,
        });
    }
    let a1 = direct_tail(model, cascade, t)?;
    Ok(cascade.len() as f64 + a1 / (1.0 - n_star))
}

/// Monte-Carlo popularity estimate with an 80% band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopularityEstimate {
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
    pub runs: usize,
}

/// HawkesN popularity: mean final size over `n_runs` seeded continuations
/// (`config.seed + i`) run until extinction.
pub fn predict_final_popularity_hawkesn(
    model: &FittedModel,
    cascade: &Cascade,
    t: f64,
    config: &SimConfig,
    n_runs: usize,
) -> Result<PopularityEstimate> {
    if !model.family.is_hawkesn() {
        return Err(Error::Validation(format!(
            "{} is not a HawkesN family",
            model.family
        )));
    }
    if n_runs == 0 {
        return Err(Error::Validation(String::from("need at least one run")));
    }
    let observed = cascade.truncated(t)?;
    if observed.len() != cascade.len() {
        return Err(Error::Domain(format!(
            "observation time {t} precedes last event {}",
            cascade.last_time()
        )));
    }
    let mut sizes = Vec::with_capacity(n_runs);
    for i in 0..n_runs {
        let cfg = SimConfig {
            seed: rng::run_seed(config.seed, i as u64),
            horizon: Horizon::Extinction,
            ..config.clone()
        };
        let sim = continue_series(model.family, &model.params, &observed, &cfg)?;
        sizes.push(sim.size() as f64);
    }
    let mut acc = KahanSum::default();
    for &s in &sizes {
        acc.add(s);
    }
    sizes.sort_by(f64::total_cmp);
    Ok(PopularityEstimate {
        mean: acc.total() / n_runs as f64,
        p10: quantile_sorted(&sizes, 0.1),
        p90: quantile_sorted(&sizes, 0.9),
        runs: n_runs,
    })
}
