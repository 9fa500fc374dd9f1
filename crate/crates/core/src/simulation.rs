//! Thinning (rejection-sampling) simulation of self-exciting cascades.
//!
//! All supported kernels are non-increasing, so between accepted events the
//! intensity can only decay. The sampler keeps `λ̄ = λ(s⁺)` at the current
//! time `s`, proposes `s' = s + Exp(λ̄)`, accepts with probability
//! `λ(s') / λ̄`, and lowers the bound to `λ(s')` after a rejection or raises
//! it to `λ(s'⁺)` after an acceptance.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::cascade::{Cascade, MarkedEvent};
use crate::kernels::{expected_mark_effect, Kernel, KernelParams, MarkEffect, ModelType};
use crate::math;
use crate::rng;
use crate::{Error, Result};

/// Default cap on the number of simulated events.
pub const DEFAULT_MAX_EVENTS: usize = 1_000_000;

/// Where marks of simulated events come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkSource {
    /// Resample uniformly from observed marks.
    Empirical { marks: Vec<f64> },
    /// Pareto marks on `[1, ∞)` with exponent `alpha`.
    PowerLaw { alpha: f64 },
    Constant { value: f64 },
}

impl Default for MarkSource {
    fn default() -> Self {
        MarkSource::Constant { value: 1.0 }
    }
}

impl MarkSource {
    pub fn validate(&self) -> Result<()> {
        match self {
            MarkSource::Empirical { marks } => {
                if marks.is_empty() {
                    return Err(Error::Validation(String::from("empirical mark source is empty")));
                }
                if marks.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                    return Err(Error::Validation(String::from(
                        "empirical marks must be finite and non-negative",
                    )));
                }
            }
            MarkSource::PowerLaw { alpha } => {
                if !(*alpha > 1.0) {
                    return Err(Error::Validation(format!(
                        "power-law mark exponent must exceed 1, got {alpha}"
                    )));
                }
            }
            MarkSource::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(Error::Validation(format!("invalid constant mark {value}")));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            MarkSource::Empirical { marks } => marks[rng::index(rng, marks.len())],
            MarkSource::PowerLaw { alpha } => rng::pareto(rng, *alpha),
            MarkSource::Constant { value } => *value,
        }
    }

    /// `E[m^β]` of this source.
    pub fn expected_effect(&self, beta: f64) -> Result<f64> {
        match self {
            MarkSource::Empirical { marks } => expected_mark_effect(MarkEffect::Empirical(marks), beta),
            MarkSource::PowerLaw { alpha } => {
                expected_mark_effect(MarkEffect::PowerLaw { alpha: *alpha }, beta)
            }
            MarkSource::Constant { value } => Ok(if beta == 0.0 {
                1.0
            } else {
                math::powf(*value, beta)
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Simulate on `[0, T]`.
    Until(f64),
    /// Simulate until the intensity vanishes.
    Extinction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub horizon: Horizon,
    /// `None` disables the cap.
    pub max_events: Option<usize>,
    pub mark_source: MarkSource,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: Horizon::Extinction,
            max_events: Some(DEFAULT_MAX_EVENTS),
            mark_source: MarkSource::default(),
        }
    }
}

impl SimConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_horizon(mut self, horizon: Horizon) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_marks(mut self, source: MarkSource) -> Self {
        self.mark_source = source;
        self
    }

    fn validate(&self) -> Result<()> {
        self.mark_source.validate()?;
        if self.max_events == Some(0) {
            return Err(Error::Validation(String::from("max_events must be at least 1")));
        }
        if let Horizon::Until(t) = self.horizon {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Validation(format!("invalid horizon {t}")));
            }
        }
        Ok(())
    }
}

/// A simulated (or continued) cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub cascade: Cascade,
    /// `simulated[i]` is true when event `i` was generated rather than observed.
    pub simulated: Vec<bool>,
    /// The event cap stopped the simulation.
    pub truncated: bool,
}

impl Simulation {
    pub fn size(&self) -> usize {
        self.cascade.len()
    }

    pub fn n_simulated(&self) -> usize {
        self.simulated.iter().filter(|&&s| s).count()
    }
}

/// A non-increasing excitation kernel the thinning sampler can draw from.
pub trait Excitation {
    /// Multiplier applied to the kernel of an event with this mark.
    fn mark_factor(&self, mark: f64) -> f64;
    /// Unmarked kernel value; must be non-increasing in `dt`.
    fn value(&self, dt: f64) -> f64;
    /// Finite population (HawkesN), if any.
    fn population(&self) -> Option<f64> {
        None
    }
    /// `Some(θ)` when `value(dt) = value(0) e^(−θ dt)`, enabling O(1) updates.
    fn exponential_rate(&self) -> Option<f64> {
        None
    }
}

/// Hawkes or HawkesN process with a parametric kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HawkesProcess {
    pub family: ModelType,
    pub params: KernelParams,
    kernel: Kernel,
}

impl HawkesProcess {
    pub fn new(family: ModelType, params: KernelParams) -> Result<Self> {
        let kernel = Kernel::new(family, &params)?;
        Ok(Self {
            family,
            params,
            kernel,
        })
    }

    /// Nominal branching factor `E[m^β] · ∫φ` under a mark source.
    pub fn branching_factor(&self, marks: &MarkSource) -> Result<f64> {
        Ok(marks.expected_effect(self.kernel.beta())? * self.kernel.total_mass())
    }
}

impl Excitation for HawkesProcess {
    fn mark_factor(&self, mark: f64) -> f64 {
        self.kernel.mark_factor(mark)
    }

    fn value(&self, dt: f64) -> f64 {
        self.kernel.value(dt)
    }

    fn population(&self) -> Option<f64> {
        if self.family.is_hawkesn() {
            self.params.n
        } else {
            None
        }
    }

    fn exponential_rate(&self) -> Option<f64> {
        if self.kernel.is_power_law() {
            None
        } else {
            Some(self.kernel.theta())
        }
    }
}

/// Event history with cached mark factors.
struct History<'a, E: Excitation> {
    exc: &'a E,
    times: Vec<f64>,
    weights: Vec<f64>,
    // exponential fast path: Σ wᵢ e^{−θ(at − tᵢ)}
    rate: Option<f64>,
    run_sum: f64,
    at: f64,
    base: f64,
}

impl<'a, E: Excitation> History<'a, E> {
    fn new(exc: &'a E) -> Self {
        Self {
            exc,
            times: Vec::new(),
            weights: Vec::new(),
            rate: exc.exponential_rate(),
            run_sum: 0.0,
            at: 0.0,
            base: exc.value(0.0),
        }
    }

    fn push(&mut self, t: f64, mark: f64) {
        let w = self.exc.mark_factor(mark);
        if let Some(theta) = self.rate {
            self.run_sum = self.run_sum * math::exp(-theta * (t - self.at)) + w;
            self.at = t;
        }
        self.times.push(t);
        self.weights.push(w);
    }

    fn len(&self) -> usize {
        self.times.len()
    }

    fn damping(&self) -> f64 {
        match self.exc.population() {
            Some(n) => (1.0 - self.len() as f64 / n).max(0.0),
            None => 1.0,
        }
    }

    /// Intensity at `t` counting every event in the history (all at or
    /// before `t`): the right limit `λ(t⁺)` when `t` is an event time.
    fn intensity(&self, t: f64) -> f64 {
        let damp = self.damping();
        if damp == 0.0 {
            return 0.0;
        }
        let raw = match self.rate {
            Some(theta) => self.base * self.run_sum * math::exp(-theta * (t - self.at)),
            None => {
                let mut acc = math::KahanSum::default();
                for (&ti, &w) in self.times.iter().zip(&self.weights) {
                    acc.add(w * self.exc.value(t - ti));
                }
                acc.total()
            }
        };
        damp * raw
    }
}

/// Core thinning loop: extends `events` (all at or before `start`) forward
/// from `start`. Returns whether the event cap was hit.
fn thin<E: Excitation, R: RngCore + ?Sized>(
    exc: &E,
    events: &mut Vec<MarkedEvent>,
    start: f64,
    horizon: Horizon,
    max_events: Option<usize>,
    marks: &MarkSource,
    rng: &mut R,
) -> bool {
    let mut hist = History::new(exc);
    for e in events.iter() {
        hist.push(e.time, e.magnitude);
    }
    let limit = match horizon {
        Horizon::Until(t) => t,
        Horizon::Extinction => f64::INFINITY,
    };
    let cap = max_events.unwrap_or(usize::MAX);
    let mut s = start;
    let mut bound = hist.intensity(s);
    loop {
        if events.len() >= cap {
            return true;
        }
        if !(bound > 0.0) || !bound.is_finite() {
            return false;
        }
        let mut next = s + rng::exponential(rng, bound);
        if next <= s {
            // the wait vanished in rounding; keep times strictly increasing
            next = s.next_up();
        }
        if !(next <= limit) || !next.is_finite() {
            return false;
        }
        let lam = hist.intensity(next);
        debug_assert!(
            lam <= bound * (1.0 + 1e-9),
            "thinning bound violated: {lam} > {bound}"
        );
        s = next;
        if rng::uniform(rng) * bound < lam {
            let m = marks.sample(rng);
            hist.push(s, m);
            events.push(MarkedEvent::new(s, m));
            bound = hist.intensity(s);
        } else {
            bound = lam;
        }
    }
}

fn check_termination(process: &HawkesProcess, config: &SimConfig) -> Result<()> {
    if config.horizon == Horizon::Extinction
        && config.max_events.is_none()
        && !process.family.is_hawkesn()
    {
        let n_star = process.branching_factor(&config.mark_source)?;
        if n_star >= 1.0 {
            return Err(Error::Validation(format!(
                "branching factor {n_star} >= 1: simulating until extinction needs an event cap"
            )));
        }
    }
    Ok(())
}

fn finish(
    id: &str,
    events: Vec<MarkedEvent>,
    observed: usize,
    horizon: Horizon,
    truncated: bool,
) -> Result<Simulation> {
    let last = events.last().map_or(0.0, |e| e.time);
    let t = match horizon {
        Horizon::Until(t) => t.max(last),
        Horizon::Extinction => last,
    };
    let n = events.len();
    let cascade = Cascade::new(id, events, Some(t))?;
    let simulated = (0..n).map(|i| i >= observed).collect();
    Ok(Simulation {
        cascade,
        simulated,
        truncated,
    })
}

/// Simulates a fresh cascade. The initial event defaults to time 0 with a
/// mark drawn from the configured source.
pub fn generate_series(
    family: ModelType,
    params: &KernelParams,
    config: &SimConfig,
    initial: Option<MarkedEvent>,
) -> Result<Simulation> {
    let process = HawkesProcess::new(family, *params)?;
    generate_process(&process, config, initial)
}

/// [`generate_series`] for any excitation kernel.
pub fn generate_with<E: Excitation>(
    exc: &E,
    config: &SimConfig,
    initial: Option<MarkedEvent>,
) -> Result<Simulation> {
    config.validate()?;
    let mut rng = rng::seeded(config.seed);
    let mut first = match initial {
        Some(e) => e,
        None => MarkedEvent::new(0.0, config.mark_source.sample(&mut rng)),
    };
    first.time = 0.0;
    let mut events = alloc::vec![first];
    let truncated = thin(
        exc,
        &mut events,
        0.0,
        config.horizon,
        config.max_events,
        &config.mark_source,
        &mut rng,
    );
    finish("simulated", events, 0, config.horizon, truncated)
}

/// Simulates a fresh cascade; refuses to run forever on supercritical
/// models.
pub fn generate_process(
    process: &HawkesProcess,
    config: &SimConfig,
    initial: Option<MarkedEvent>,
) -> Result<Simulation> {
    check_termination(process, config)?;
    generate_with(process, config, initial)
}

/// Continues an observed cascade past its observation time, conditioning on
/// the full observed history. Observed events keep `simulated = false`.
pub fn continue_series(
    family: ModelType,
    params: &KernelParams,
    observed: &Cascade,
    config: &SimConfig,
) -> Result<Simulation> {
    let process = HawkesProcess::new(family, *params)?;
    check_termination(&process, config)?;
    continue_with(&process, observed, config)
}

/// [`continue_series`] for any excitation kernel.
pub fn continue_with<E: Excitation>(
    exc: &E,
    observed: &Cascade,
    config: &SimConfig,
) -> Result<Simulation> {
    config.validate()?;
    let mut rng = rng::seeded(config.seed);
    let mut events = observed.events().to_vec();
    let n_obs = events.len();
    let start = observed.observation_time();
    let horizon = match config.horizon {
        Horizon::Until(t) if t < start => {
            return Err(Error::Domain(format!(
                "horizon {t} precedes observation time {start}"
            )))
        }
        h => h,
    };
    let truncated = thin(
        exc,
        &mut events,
        start,
        horizon,
        config.max_events,
        &config.mark_source,
        &mut rng,
    );
    let mut sim = finish(&observed.cascade_id, events, n_obs, horizon, truncated)?;
    if horizon == Horizon::Extinction {
        let t = sim.cascade.last_time().max(start);
        sim.cascade = sim.cascade.with_observation_time(t)?;
    }
    sim.cascade.initiator_user_id = observed.initiator_user_id.clone();
    sim.cascade.orphan = observed.orphan;
    Ok(sim)
}

/// HawkesN simulation: never produces more than `N` events.
pub fn simulate_hawkesn(
    family: ModelType,
    params: &KernelParams,
    config: &SimConfig,
) -> Result<Simulation> {
    if !family.is_hawkesn() {
        return Err(Error::Validation(format!("{family} is not a HawkesN family")));
    }
    generate_series(family, params, config, None)
}

/// Runs `n_runs` independent simulations with seeds `config.seed + i`.
pub fn generate_batch(
    family: ModelType,
    params: &KernelParams,
    config: &SimConfig,
    n_runs: usize,
) -> Result<Vec<Simulation>> {
    let process = HawkesProcess::new(family, *params)?;
    check_termination(&process, config)?;
    (0..n_runs)
        .map(|i| {
            let cfg = SimConfig {
                seed: rng::run_seed(config.seed, i as u64),
                ..config.clone()
            };
            generate_with(&process, &cfg, None)
        })
        .collect()
}

/// Number of direct children of a single parent with the given mark: the
/// parent's own kernel is thinned in isolation (children do not excite).
/// HawkesN damping counts the parent and the children born so far.
pub fn simulate_offspring<E: Excitation, R: RngCore + ?Sized>(
    exc: &E,
    parent_mark: f64,
    rng: &mut R,
) -> usize {
    let w = exc.mark_factor(parent_mark);
    let damp = |k: usize| match exc.population() {
        Some(n) => (1.0 - k as f64 / n).max(0.0),
        None => 1.0,
    };
    let mut children = 0usize;
    let mut s = 0.0;
    let mut bound = w * exc.value(0.0) * damp(1);
    loop {
        if !(bound > 0.0) || !bound.is_finite() {
            return children;
        }
        let next = s + rng::exponential(rng, bound);
        if !next.is_finite() {
            return children;
        }
        let lam = w * exc.value(next) * damp(1 + children);
        s = next;
        if rng::uniform(rng) * bound < lam {
            children += 1;
            bound = w * exc.value(s) * damp(1 + children);
        } else {
            bound = lam;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::intensity_after;

    #[test]
    fn zero_kappa_yields_initial_event_only() {
        let p = KernelParams::exp(0.0, 1.0);
        let sim = generate_series(ModelType::Exp, &p, &SimConfig::default(), None).unwrap();
        assert_eq!(sim.size(), 1);
        assert_eq!(sim.cascade.events()[0].time, 0.0);
    }

    #[test]
    fn seeds_control_output() {
        let p = KernelParams::power_law(0.3, 0.5, 1.0);
        let cfg = SimConfig::default()
            .with_seed(11)
            .with_horizon(Horizon::Until(1000.0));
        let a = generate_series(ModelType::Pl, &p, &cfg, None).unwrap();
        let b = generate_series(ModelType::Pl, &p, &cfg, None).unwrap();
        assert_eq!(a, b);
        let c = generate_series(ModelType::Pl, &p, &cfg.clone().with_seed(12), None).unwrap();
        assert_ne!(a.cascade.events(), c.cascade.events());
    }

    #[test]
    fn times_strictly_increase() {
        let p = KernelParams::exp(0.9, 2.0);
        for seed in 0..50 {
            let cfg = SimConfig::default().with_seed(seed);
            let sim = generate_series(ModelType::Exp, &p, &cfg, None).unwrap();
            let t: Vec<f64> = sim.cascade.times().collect();
            assert!(t.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn population_one_means_single_event() {
        let p = KernelParams::exp(5.0, 1.0).with_population(1.0);
        for seed in 0..20 {
            let cfg = SimConfig::default().with_seed(seed);
            assert_eq!(simulate_hawkesn(ModelType::ExpN, &p, &cfg).unwrap().size(), 1);
        }
    }

    #[test]
    fn cap_truncates() {
        let p = KernelParams::exp(3.0, 1.0);
        let cfg = SimConfig {
            max_events: Some(50),
            ..SimConfig::default()
        };
        let sim = generate_series(ModelType::Exp, &p, &cfg, None).unwrap();
        assert!(sim.truncated);
        assert_eq!(sim.size(), 50);
        let no_cap = SimConfig {
            max_events: None,
            ..SimConfig::default()
        };
        assert!(generate_batch(ModelType::Exp, &p, &no_cap, 1).is_err());
    }

    #[test]
    fn continuation_keeps_history() {
        let obs = Cascade::from_times("c", &[0.0, 1.0, 1.5], 2.0).unwrap();
        let p = KernelParams::exp(0.0, 1.0);
        let sim = continue_series(ModelType::Exp, &p, &obs, &SimConfig::default()).unwrap();
        assert_eq!(sim.cascade.events(), obs.events());
        assert!(sim.simulated.iter().all(|s| !s));

        let p = KernelParams::exp(0.7, 1.0);
        let process = HawkesProcess::new(ModelType::Exp, p).unwrap();
        let mut hist = History::new(&process);
        for e in obs.events() {
            hist.push(e.time, e.magnitude);
        }
        let expect = intensity_after(&p, ModelType::Exp, &obs, 2.0).unwrap();
        assert!((hist.intensity(2.0) - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn invalid_mark_law() {
        let p = KernelParams::exp(0.5, 1.0);
        let cfg = SimConfig::default().with_marks(MarkSource::PowerLaw { alpha: 0.5 });
        assert!(matches!(
            generate_series(ModelType::Exp, &p, &cfg, None),
            Err(Error::Validation(_))
        ));
    }
}
