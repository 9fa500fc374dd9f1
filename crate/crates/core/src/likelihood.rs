//! Intensity, compensator and negative log-likelihood of Hawkes and HawkesN
//! cascades, with exact gradients.
//!
//! The first event of every cascade is the immigrant that starts the process:
//! it contributes no log-intensity term, and the compensator integrates from
//! time 0. Excitation uses the strict past (`tᵢ < t`), so events sharing a
//! timestamp never excite each other.
//!
//! HawkesN damps the intensity by `1 − N_t / N`, where `N_t` counts events
//! strictly before `t`; the intensity is 0 once `N_t ≥ N`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::cascade::{Cascade, CascadeGroup};
use crate::kernels::{Kernel, KernelGrad, KernelParams, ModelType, Param};
use crate::math::{self, sorted_sum};
use crate::{Error, Result};

/// Negative log-likelihood and its gradient over the family's free
/// parameters (order of [`ModelType::params`]).
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodResult {
    pub nll: f64,
    pub gradient: Vec<f64>,
    /// Set when the likelihood is zero (`nll = +∞`), e.g. an event with no
    /// strict past.
    pub diagnostic: Option<String>,
}

impl LikelihoodResult {
    pub fn is_finite(&self) -> bool {
        self.nll.is_finite()
    }

    fn infinite(n_params: usize, diagnostic: String) -> Self {
        Self {
            nll: f64::INFINITY,
            gradient: vec![0.0; n_params],
            diagnostic: Some(diagnostic),
        }
    }
}

/// Positions of each parameter inside the gradient vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    c: Option<usize>,
    beta: Option<usize>,
    n: Option<usize>,
    len: usize,
}

impl Layout {
    fn of(family: ModelType) -> Self {
        let ps = family.params();
        let pos = |p: Param| ps.iter().position(|&q| q == p);
        Self {
            c: pos(Param::C),
            beta: pos(Param::Beta),
            n: pos(Param::N),
            len: ps.len(),
        }
    }

    /// Adds `sign · (g + dβ · dbeta)` into `grad`.
    #[inline]
    fn accumulate(&self, grad: &mut [f64], g: KernelGrad, dbeta: f64, sign: f64) {
        grad[0] += sign * g.kappa;
        grad[1] += sign * g.theta;
        if let Some(i) = self.c {
            grad[i] += sign * g.c;
        }
        if let Some(i) = self.beta {
            grad[i] += sign * dbeta;
        }
    }
}

/// Everything the evaluators need, validated once.
struct Model {
    kernel: Kernel,
    population: Option<f64>,
    layout: Layout,
}

impl Model {
    fn new(family: ModelType, params: &KernelParams) -> Result<Self> {
        let kernel = Kernel::new(family, params)?;
        Ok(Self {
            kernel,
            population: if family.is_hawkesn() { params.n } else { None },
            layout: Layout::of(family),
        })
    }

    /// `1 − k/N`, clamped at 0; 1 for plain Hawkes.
    #[inline]
    fn damping(&self, prior_count: usize) -> f64 {
        match self.population {
            Some(n) => (1.0 - prior_count as f64 / n).max(0.0),
            None => 1.0,
        }
    }
}

/// `ln m` used in β-derivatives; zero marks contribute nothing.
#[inline]
fn ln_mark(m: f64) -> f64 {
    if m > 0.0 {
        math::ln(m)
    } else {
        0.0
    }
}

/// Number of events with time strictly less than `t` (events are sorted).
fn strict_prefix(cascade: &Cascade, t: f64) -> usize {
    cascade.events().partition_point(|e| e.time < t)
}

fn excitation(model: &Model, cascade: &Cascade, upto: usize, t: f64) -> f64 {
    let mut acc = math::KahanSum::default();
    for e in &cascade.events()[..upto] {
        acc.add(model.kernel.mark_factor(e.magnitude) * model.kernel.value(t - e.time));
    }
    acc.total()
}

fn check_window(cascade: &Cascade, t: f64) -> Result<()> {
    if t >= 0.0 && t <= cascade.observation_time() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "t = {t} outside observation window [0, {}]",
            cascade.observation_time()
        )))
    }
}

/// `λ(t | H)`: excitation from events strictly before `t`.
pub fn intensity_at(
    params: &KernelParams,
    family: ModelType,
    cascade: &Cascade,
    t: f64,
) -> Result<f64> {
    check_window(cascade, t)?;
    let model = Model::new(family, params)?;
    let k = strict_prefix(cascade, t);
    Ok(model.damping(k) * excitation(&model, cascade, k, t))
}

/// Right limit `λ(t⁺ | H)`: events at exactly `t` are included.
pub fn intensity_after(
    params: &KernelParams,
    family: ModelType,
    cascade: &Cascade,
    t: f64,
) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("t = {t} is negative")));
    }
    let model = Model::new(family, params)?;
    let k = cascade.events().partition_point(|e| e.time <= t);
    Ok(model.damping(k) * excitation(&model, cascade, k, t))
}

/// `Λ(T) = ∫₀ᵀ λ(s) ds` in closed form.
pub fn compensator(
    params: &KernelParams,
    family: ModelType,
    cascade: &Cascade,
    horizon: f64,
) -> Result<f64> {
    if !(horizon >= cascade.last_time()) {
        return Err(Error::Domain(format!(
            "horizon {horizon} precedes last event {}",
            cascade.last_time()
        )));
    }
    let model = Model::new(family, params)?;
    let mut grad = vec![0.0; model.layout.len];
    Ok(compensator_grad(&model, cascade, horizon, &mut grad))
}

/// Accumulates `∂Λ` into `grad` and returns `Λ`.
fn compensator_grad(model: &Model, cascade: &Cascade, horizon: f64, grad: &mut [f64]) -> f64 {
    let k = &model.kernel;
    let layout = model.layout;
    let events = cascade.events();
    match model.population {
        None => {
            let mut acc = math::KahanSum::default();
            for e in events {
                let w = k.mark_factor(e.magnitude);
                let (v, g) = k.integral_grad(horizon - e.time);
                acc.add(w * v);
                layout.accumulate(grad, g.scale(w), w * v * ln_mark(e.magnitude), 1.0);
            }
            acc.total()
        }
        Some(pop) => {
            // Piecewise over the intervals between distinct event times; the
            // damping factor is constant on each of them.
            let mut acc = math::KahanSum::default();
            let mut start = 0;
            while start < events.len() {
                let a = events[start].time;
                let mut end = start + 1;
                while end < events.len() && events[end].time == a {
                    end += 1;
                }
                let b = if end < events.len() {
                    events[end].time
                } else {
                    horizon
                };
                let count = end;
                let f = model.damping(count);
                if f > 0.0 && b > a {
                    let mut inner = math::KahanSum::default();
                    let mut inner_grad = [0.0; 5];
                    for e in &events[..count] {
                        let (vb, gb) = k.integral_grad(b - e.time);
                        let (va, ga) = k.integral_grad(a - e.time);
                        inner.add(vb - va);
                        let g = KernelGrad {
                            kappa: gb.kappa - ga.kappa,
                            theta: gb.theta - ga.theta,
                            c: gb.c - ga.c,
                        };
                        layout.accumulate(&mut inner_grad, g, 0.0, 1.0);
                    }
                    let inner = inner.total();
                    acc.add(f * inner);
                    for (gi, ig) in grad.iter_mut().zip(inner_grad.iter()) {
                        *gi += f * ig;
                    }
                    if let Some(i) = layout.n {
                        grad[i] += count as f64 / (pop * pop) * inner;
                    }
                }
                start = end;
            }
            acc.total()
        }
    }
}

/// NLL of a single cascade over `[0, T]`, `T` being its observation time.
pub fn neg_log_likelihood(
    params: &KernelParams,
    family: ModelType,
    cascade: &Cascade,
) -> Result<LikelihoodResult> {
    let model = Model::new(family, params)?;
    Ok(nll_single(&model, cascade))
}

fn nll_single(model: &Model, cascade: &Cascade) -> LikelihoodResult {
    let n_params = model.layout.len;
    let mut grad = vec![0.0; n_params];
    let comp = compensator_grad(model, cascade, cascade.observation_time(), &mut grad);

    let mut log_terms = math::KahanSum::default();
    let events = cascade.events();
    let layout = model.layout;
    let k = &model.kernel;
    let exp_fast = !k.is_power_law();
    let (weights, ln_marks): (Vec<f64>, Vec<f64>) = if exp_fast {
        (Vec::new(), Vec::new())
    } else {
        events
            .iter()
            .map(|e| (k.mark_factor(e.magnitude), ln_mark(e.magnitude)))
            .unzip()
    };

    // Running sums for the exponential recursion, valid at time `at`:
    // r = Σ w e^{-θ(at-tᵢ)}, d = Σ w (at-tᵢ) e^{..}, b = Σ w ln mᵢ e^{..}.
    let (mut r, mut d, mut b, mut at) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut absorbed = 0usize;

    let mut j = 1;
    while j < events.len() {
        let t = events[j].time;
        let prior = events[..j].partition_point(|e| e.time < t);
        let damp = model.damping(prior);

        let (lam_raw, g, dbeta) = if exp_fast {
            // absorb events strictly before t into the running sums
            while absorbed < prior {
                let e = &events[absorbed];
                let decay_dt = e.time - at;
                if decay_dt > 0.0 {
                    let f = math::exp(-k.theta() * decay_dt);
                    d = f * (d + decay_dt * r);
                    r *= f;
                    b *= f;
                    at = e.time;
                }
                let w = k.mark_factor(e.magnitude);
                r += w;
                b += w * ln_mark(e.magnitude);
                absorbed += 1;
            }
            let dt = t - at;
            let f = math::exp(-k.theta() * dt);
            let (r_t, d_t, b_t) = (f * r, f * (d + dt * r), f * b);
            let kappa = k.kappa();
            let theta = k.theta();
            let lam = kappa * theta * r_t;
            let g = KernelGrad {
                kappa: theta * r_t,
                theta: kappa * r_t - kappa * theta * d_t,
                c: 0.0,
            };
            (lam, g, kappa * theta * b_t)
        } else {
            let mut lam = math::KahanSum::default();
            let mut g = KernelGrad::default();
            let mut dbeta = 0.0;
            for (i, e) in events[..prior].iter().enumerate() {
                let w = weights[i];
                let (v, gv) = k.value_grad(t - e.time);
                lam.add(w * v);
                g.kappa += w * gv.kappa;
                g.theta += w * gv.theta;
                g.c += w * gv.c;
                dbeta += w * v * ln_marks[i];
            }
            (lam.total(), g, dbeta)
        };

        let lam = damp * lam_raw;
        if !(lam > 0.0) || !lam.is_finite() {
            return LikelihoodResult::infinite(
                n_params,
                format!(
                    "zero intensity at event {j} (t = {t}) of cascade `{}`",
                    cascade.cascade_id
                ),
            );
        }
        log_terms.add(math::ln(lam));
        // −∂ log λ = −∂λ_raw / λ_raw (damping cancels) − ∂ ln(damping)
        layout.accumulate(&mut grad, g, dbeta, -1.0 / lam_raw);
        if let (Some(i), Some(pop)) = (layout.n, model.population) {
            let kf = prior as f64;
            grad[i] -= kf / (pop * (pop - kf));
        }
        j += 1;
    }

    let nll = comp - log_terms.total();
    LikelihoodResult {
        nll,
        gradient: grad,
        diagnostic: None,
    }
}

/// Joint NLL of a group sharing one parameter set: the sum of per-cascade
/// NLLs and gradients.
///
/// Terms are summed in sorted order with compensation, so the result does not
/// depend on the order of cascades in the group.
pub fn joint_neg_log_likelihood(
    params: &KernelParams,
    family: ModelType,
    group: &CascadeGroup,
) -> Result<LikelihoodResult> {
    joint_over(params, family, group.cascades())
}

/// [`joint_neg_log_likelihood`] over a plain slice of cascades.
pub fn joint_over(
    params: &KernelParams,
    family: ModelType,
    cascades: &[Cascade],
) -> Result<LikelihoodResult> {
    if cascades.is_empty() {
        return Err(Error::EmptyInput(String::from("no cascades to evaluate")));
    }
    let model = Model::new(family, params)?;
    let parts: Vec<LikelihoodResult> = cascades.iter().map(|c| nll_single(&model, c)).collect();
    Ok(combine(&parts, model.layout.len))
}

/// Order-independent reduction of per-cascade results.
pub fn combine(parts: &[LikelihoodResult], n_params: usize) -> LikelihoodResult {
    if let Some(bad) = parts.iter().find(|p| !p.nll.is_finite()) {
        return LikelihoodResult::infinite(
            n_params,
            bad.diagnostic
                .clone()
                .unwrap_or_else(|| String::from("non-finite likelihood")),
        );
    }
    let mut buf: Vec<f64> = parts.iter().map(|p| p.nll).collect();
    let nll = sorted_sum(&mut buf);
    let gradient = (0..n_params)
        .map(|i| {
            buf.clear();
            buf.extend(parts.iter().map(|p| p.gradient[i]));
            sorted_sum(&mut buf)
        })
        .collect();
    LikelihoodResult {
        nll,
        gradient,
        diagnostic: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::kernel_value;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn intensity_examples() {
        let p = KernelParams::exp(1.0, 2.0);
        let c = Cascade::from_times("c", &[0.0], 1.0).unwrap();
        assert_eq!(intensity_at(&p, ModelType::Exp, &c, 0.0).unwrap(), 0.0);
        assert_eq!(intensity_after(&p, ModelType::Exp, &c, 0.0).unwrap(), 2.0);
        assert!(intensity_at(&p, ModelType::Exp, &c, 1.5).is_err());
    }

    #[test]
    fn intensity_is_direct_sum() {
        let c = Cascade::from_times("c", &[0.0, 3.0, 10.0], 12.0).unwrap();
        let p = KernelParams::power_law(0.4, 0.7, 2.0);
        let t = 11.0;
        let expect: f64 = [0.0, 3.0, 10.0]
            .iter()
            .map(|ti| kernel_value(&p, ModelType::Pl, t - ti, 1.0).unwrap())
            .sum();
        let got = intensity_at(&p, ModelType::Pl, &c, t).unwrap();
        assert!(close(got, expect, 1e-12));
    }

    #[test]
    fn single_event_nll_is_compensator() {
        let c = Cascade::from_times("c", &[0.0], 1.0).unwrap();
        let p = KernelParams::exp(1.0, 1.0);
        let r = neg_log_likelihood(&p, ModelType::Exp, &c).unwrap();
        assert!(close(r.nll, 1.0 - (-1.0f64).exp(), 1e-14));
        assert!(close(
            compensator(&p, ModelType::Exp, &c, 1.0).unwrap(),
            0.632_120_558_828_557_7,
            1e-14
        ));
        let zero = KernelParams::exp(0.0, 1.0);
        let big = Cascade::from_times("b", &[0.0, 1.0, 2.0], 5.0).unwrap();
        assert_eq!(compensator(&zero, ModelType::Exp, &big, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn compensator_rejects_short_horizon() {
        let c = Cascade::from_times("c", &[0.0, 2.0], 2.0).unwrap();
        let p = KernelParams::exp(1.0, 1.0);
        assert!(matches!(
            compensator(&p, ModelType::Exp, &c, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn duplicate_start_gives_infinite_nll() {
        let c = Cascade::from_times("c", &[0.0, 0.0, 1.0], 2.0).unwrap();
        let p = KernelParams::exp(1.0, 1.0);
        let r = neg_log_likelihood(&p, ModelType::Exp, &c).unwrap();
        assert_eq!(r.nll, f64::INFINITY);
        assert!(r.diagnostic.is_some());
    }

    #[test]
    fn hawkesn_intensity_vanishes_at_population() {
        let c = Cascade::from_times("c", &[0.0, 1.0], 3.0).unwrap();
        let p = KernelParams::exp(1.0, 1.0).with_population(2.0);
        assert!(intensity_at(&p, ModelType::ExpN, &c, 1.0).unwrap() > 0.0);
        assert_eq!(intensity_at(&p, ModelType::ExpN, &c, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn joint_of_copies_scales() {
        let c = Cascade::from_times("a", &[0.0, 0.5, 2.0], 4.0).unwrap();
        let p = KernelParams::exp(0.6, 1.1);
        let single = neg_log_likelihood(&p, ModelType::Exp, &c).unwrap();
        let one = joint_neg_log_likelihood(&p, ModelType::Exp, &CascadeGroup::single(c.clone()))
            .unwrap();
        assert_eq!(one.nll, single.nll);
        let copies: Vec<_> = (0..3)
            .map(|i| {
                let mut x = c.clone();
                x.cascade_id = format!("c{i}");
                x
            })
            .collect();
        let g = CascadeGroup::new("g", copies).unwrap();
        let r = joint_neg_log_likelihood(&p, ModelType::Exp, &g).unwrap();
        assert!(close(r.nll, 3.0 * single.nll, 1e-14));
    }
}
