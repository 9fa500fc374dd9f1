//! Maximum-likelihood fitting of Hawkes and HawkesN families.
//!
//! Parameters are optimized in log space whenever their lower bound is
//! positive (they span orders of magnitude); a parameter whose box may touch
//! zero, such as `β`, is optimized on its natural scale. Each fit runs the
//! bounded quasi-Newton solver from `n_restarts` seeded random starts and
//! keeps the best optimum (ties go to the lowest restart index).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cascade::Cascade;
use crate::kernels::{KernelParams, ModelType, Param};
use crate::likelihood::joint_over;
use crate::math;
use crate::optim::{self, OptimOptions, OptimResult};
use crate::rng;
use crate::{Error, Result};

/// Closed interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lower: f64,
    pub upper: f64,
}

impl Range {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn point(v: f64) -> Self {
        Self::new(v, v)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

pub const DEFAULT_KAPPA: Range = Range::new(1e-6, 1e3);
pub const DEFAULT_THETA: Range = Range::new(1e-6, 1e3);
pub const DEFAULT_C: Range = Range::new(1e-6, 300.0);
pub const DEFAULT_BETA: Range = Range::new(0.0, 1.5);
pub const DEFAULT_MAX_POPULATION: f64 = 1e9;

/// Box constraints. `None` means "use the default box"; HawkesN's default
/// population box is `[largest observed cascade, 1e9]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Range>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Range>,
}

impl Bounds {
    pub fn get(&self, p: Param) -> Option<Range> {
        match p {
            Param::Kappa => self.kappa,
            Param::Theta => self.theta,
            Param::C => self.c,
            Param::Beta => self.beta,
            Param::N => self.n,
        }
    }

    pub fn set(&mut self, p: Param, r: Range) {
        match p {
            Param::Kappa => self.kappa = Some(r),
            Param::Theta => self.theta = Some(r),
            Param::C => self.c = Some(r),
            Param::Beta => self.beta = Some(r),
            Param::N => self.n = Some(r),
        }
    }

    /// Fills every parameter of `family` with an explicit range, taking
    /// `self` where set and the defaults otherwise.
    pub fn resolve(&self, family: ModelType, max_cascade_size: usize) -> Result<Bounds> {
        let mut out = Bounds::default();
        for &p in family.params() {
            let r = self.get(p).unwrap_or(match p {
                Param::Kappa => DEFAULT_KAPPA,
                Param::Theta => DEFAULT_THETA,
                Param::C => DEFAULT_C,
                Param::Beta => DEFAULT_BETA,
                Param::N => Range::new(
                    (max_cascade_size as f64).max(1.0),
                    DEFAULT_MAX_POPULATION.max(max_cascade_size as f64),
                ),
            });
            if !(r.lower <= r.upper) || r.lower.is_nan() || !r.upper.is_finite() {
                return Err(Error::Validation(format!(
                    "empty or invalid box for `{}`: [{}, {}]",
                    p.name(),
                    r.lower,
                    r.upper
                )));
            }
            let floor = match p {
                Param::Kappa | Param::Beta => 0.0,
                Param::N => 1.0,
                _ => f64::MIN_POSITIVE,
            };
            if r.lower < floor {
                return Err(Error::Validation(format!(
                    "lower bound of `{}` must be >= {floor}, got {}",
                    p.name(),
                    r.lower
                )));
            }
            out.set(p, r);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub n_restarts: usize,
    pub seed: u64,
    pub bounds: Bounds,
    pub optimizer: OptimOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_restarts: 10,
            seed: 0,
            bounds: Bounds::default(),
            optimizer: OptimOptions::default(),
        }
    }
}

impl FitConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Gradient-projection threshold below which a fit counts as converged.
pub const CONVERGENCE_PG_NORM: f64 = 1e-5;

/// Result of a maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub family: ModelType,
    pub params: KernelParams,
    pub nll: f64,
    pub converged: bool,
    pub n_restarts_used: usize,
    /// Observation horizon of each training cascade.
    pub observation_time: Vec<f64>,
    /// Marks of the training reshares (every mark when no cascade has
    /// any), used for the empirical `E[m^β]` and for drawing new marks.
    pub training_marks: Vec<f64>,
    pub seed: u64,
    /// The resolved box the fit ran in.
    pub bounds: Bounds,
    /// Sup-norm of the projected gradient in optimizer coordinates.
    pub pg_norm: f64,
}

fn descendant_marks(cascades: &[Cascade]) -> Vec<f64> {
    let marks: Vec<f64> = cascades.iter().flat_map(|c| c.magnitudes().skip(1)).collect();
    if marks.is_empty() {
        cascades.iter().flat_map(Cascade::magnitudes).collect()
    } else {
        marks
    }
}

impl FittedModel {
    /// A model built from known parameters rather than a fit; useful for
    /// simulation and prediction with hand-specified kernels.
    pub fn from_params(family: ModelType, params: KernelParams, training_marks: Vec<f64>) -> Result<Self> {
        params.validate(family)?;
        Ok(Self {
            family,
            params,
            nll: f64::NAN,
            converged: false,
            n_restarts_used: 0,
            observation_time: Vec::new(),
            training_marks,
            seed: 0,
            bounds: Bounds::default(),
            pg_norm: f64::NAN,
        })
    }
}

/// Coordinates the optimizer works in.
struct Transform {
    family: ModelType,
    lower: Vec<f64>,
    upper: Vec<f64>,
    log: Vec<bool>,
}

impl Transform {
    fn new(family: ModelType, bounds: &Bounds) -> Self {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut log = Vec::new();
        for &p in family.params() {
            let r = bounds.get(p).expect("resolved bounds");
            let is_log = r.lower > 0.0;
            log.push(is_log);
            if is_log {
                lower.push(math::ln(r.lower));
                upper.push(math::ln(r.upper));
            } else {
                lower.push(r.lower);
                upper.push(r.upper);
            }
        }
        Self {
            family,
            lower,
            upper,
            log,
        }
    }

    fn natural_range(&self, i: usize) -> (f64, f64) {
        if self.log[i] {
            (math::exp(self.lower[i]), math::exp(self.upper[i]))
        } else {
            (self.lower[i], self.upper[i])
        }
    }

    fn to_natural(&self, u: &[f64], bounds: &Bounds) -> Vec<f64> {
        self.family
            .params()
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let r = bounds.get(p).expect("resolved bounds");
                if r.lower == r.upper {
                    return r.lower;
                }
                let v = if self.log[i] { math::exp(u[i]) } else { u[i] };
                v.max(r.lower).min(r.upper)
            })
            .collect()
    }

    fn to_internal(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .enumerate()
            .map(|(i, &v)| {
                let u = if self.log[i] { math::ln(v) } else { v };
                u.max(self.lower[i]).min(self.upper[i])
            })
            .collect()
    }
}

/// Common state of one optimization problem.
struct Problem<'a> {
    family: ModelType,
    cascades: &'a [Cascade],
    bounds: Bounds,
    transform: Transform,
}

impl<'a> Problem<'a> {
    fn new(family: ModelType, cascades: &'a [Cascade], bounds: &Bounds) -> Result<Self> {
        let max_size = cascades.iter().map(Cascade::len).max().unwrap_or(0);
        let bounds = bounds.resolve(family, max_size)?;
        Ok(Self {
            family,
            cascades,
            transform: Transform::new(family, &bounds),
            bounds,
        })
    }

    fn objective(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let natural = self.transform.to_natural(u, &self.bounds);
        let params = match KernelParams::from_vector(self.family, &natural) {
            Ok(p) => p,
            Err(_) => return f64::INFINITY,
        };
        match joint_over(&params, self.family, self.cascades) {
            Ok(r) if r.nll.is_finite() => {
                for (i, g) in grad.iter_mut().enumerate() {
                    *g = if self.transform.log[i] {
                        r.gradient[i] * natural[i]
                    } else {
                        r.gradient[i]
                    };
                }
                r.nll
            }
            _ => f64::INFINITY,
        }
    }

    fn run(&self, start_natural: &[f64], opts: &OptimOptions) -> OptimResult {
        let u0 = self.transform.to_internal(start_natural);
        self.run_internal(&u0, opts)
    }

    fn run_internal(&self, u0: &[f64], opts: &OptimOptions) -> OptimResult {
        optim::minimize(
            |u, g| self.objective(u, g),
            u0,
            &self.transform.lower,
            &self.transform.upper,
            opts,
        )
    }

    /// A run stopped by the objective-change test on a flat ridge is
    /// continued on the gradient test alone.
    fn polish(&self, best: OptimResult, opts: &OptimOptions) -> OptimResult {
        if best.pg_norm < CONVERGENCE_PG_NORM || best.status != optim::Status::FunctionTolerance {
            return best;
        }
        let strict = OptimOptions { ftol: 0.0, ..*opts };
        let r = self.run_internal(&best.x, &strict);
        if r.f <= best.f && r.status != optim::Status::NonFiniteStart {
            let status = if r.pg_norm < CONVERGENCE_PG_NORM {
                optim::Status::GradientTolerance
            } else {
                best.status
            };
            OptimResult { status, ..r }
        } else {
            best
        }
    }

    fn random_start(&self, rng: &mut rng::SimRng) -> Vec<f64> {
        (0..self.transform.lower.len())
            .map(|i| {
                let (lo, hi) = (self.transform.lower[i], self.transform.upper[i]);
                let u = lo + (hi - lo) * rng::uniform(rng);
                if self.transform.log[i] {
                    math::exp(u)
                } else {
                    u
                }
            })
            .collect()
    }

    fn finish(&self, best: OptimResult, restarts: usize, seed: u64) -> Result<FittedModel> {
        let natural = self.transform.to_natural(&best.x, &self.bounds);
        let params = KernelParams::from_vector(self.family, &natural)?;
        Ok(FittedModel {
            family: self.family,
            params,
            nll: best.f,
            converged: best.status.is_success() && best.pg_norm < CONVERGENCE_PG_NORM,
            n_restarts_used: restarts,
            observation_time: self.cascades.iter().map(Cascade::observation_time).collect(),
            training_marks: descendant_marks(self.cascades),
            seed,
            bounds: self.bounds,
            pg_norm: best.pg_norm,
        })
    }
}

fn check_data(cascades: &[Cascade], family: ModelType) -> Result<()> {
    if cascades.is_empty() {
        return Err(Error::EmptyInput(String::from("no cascades to fit")));
    }
    if !family.is_hawkes() {
        return Err(Error::Validation(String::from(
            "SEISMIC is not fitted by maximum likelihood; use the seismic predictor",
        )));
    }
    if family.is_marked() && cascades.iter().flat_map(Cascade::magnitudes).all(|m| m == 1.0) {
        return Err(Error::Validation(format!(
            "{family} is a marked family but the cascades carry no magnitudes"
        )));
    }
    if let Some(c) = cascades.iter().find(|c| c.events().get(1).is_some_and(|e| e.time == 0.0)) {
        return Err(Error::Validation(format!(
            "cascade `{}` has a reshare at t = 0, tied with the initial post; its intensity is zero under every model",
            c.cascade_id
        )));
    }
    Ok(())
}

/// Fits `family` to one or more cascades jointly (a shared parameter set
/// maximizing the summed log-likelihood).
pub fn fit_series(cascades: &[Cascade], family: ModelType, config: &FitConfig) -> Result<FittedModel> {
    check_data(cascades, family)?;
    let problem = Problem::new(family, cascades, &config.bounds)?;
    let restarts = config.n_restarts.max(1);
    let mut rng = rng::seeded(config.seed);
    let mut best: Option<OptimResult> = None;
    for _ in 0..restarts {
        let start = problem.random_start(&mut rng);
        let r = problem.run(&start, &config.optimizer);
        if !r.f.is_finite() {
            continue;
        }
        // strict improvement keeps the lowest index on ties
        if best.as_ref().is_none_or(|b| r.f < b.f) {
            best = Some(r);
        }
    }
    match best {
        Some(b) => problem.finish(problem.polish(b, &config.optimizer), restarts, config.seed),
        None => Err(Error::NonConvergence {
            restarts,
            best: None,
            diagnostic: String::from("objective was not finite at any restart"),
        }),
    }
}

/// Re-optimizes a fitted model under new box constraints, starting from its
/// parameters clipped into the new box. Unset entries of `overrides` keep
/// the model's current box.
pub fn refit_with_bounds(
    model: &FittedModel,
    cascades: &[Cascade],
    overrides: &Bounds,
    optimizer: &OptimOptions,
) -> Result<FittedModel> {
    check_data(cascades, model.family)?;
    let mut merged = model.bounds;
    for &p in model.family.params() {
        if let Some(r) = overrides.get(p) {
            merged.set(p, r);
        }
    }
    let problem = Problem::new(model.family, cascades, &merged)?;
    let start: Vec<f64> = model
        .params
        .to_vector(model.family)?
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let (lo, hi) = problem.transform.natural_range(i);
            v.max(lo).min(hi)
        })
        .collect();
    let r = problem.run(&start, optimizer);
    if !r.f.is_finite() {
        return Err(Error::NonConvergence {
            restarts: 1,
            best: Some(start),
            diagnostic: String::from("objective not finite at the clipped start"),
        });
    }
    problem.finish(problem.polish(r, optimizer), 1, model.seed)
}
