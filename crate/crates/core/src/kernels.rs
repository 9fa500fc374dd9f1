//! Excitation kernels, their integrals, and the model-type registry.
//!
//! Exponential: `φ(t) = κ θ e^(−θ t)`. Power law: `φ(t) = κ (t + c)^(−(1+θ))`.
//! Marked families scale every kernel by `m^β`, where `m` is the mark of the
//! exciting event. This multiplicative coupling and the default power-law
//! mark exponent `α = 2.016` are conventions inherited from the retweet
//! popularity literature.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::math::{self, KahanSum};
use crate::{Error, Result};

/// Default exponent of the power-law mark distribution.
pub const DEFAULT_MARK_ALPHA: f64 = 2.016;

/// Model families, identified by their string codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelType {
    #[serde(rename = "EXP")]
    Exp,
    #[serde(rename = "PL")]
    Pl,
    #[serde(rename = "mEXP")]
    MExp,
    #[serde(rename = "mPL")]
    MPl,
    #[serde(rename = "EXPN")]
    ExpN,
    #[serde(rename = "PLN")]
    PlN,
    #[serde(rename = "SEISMIC")]
    Seismic,
}

impl ModelType {
    pub const ALL: [ModelType; 7] = [
        ModelType::Exp,
        ModelType::Pl,
        ModelType::MExp,
        ModelType::MPl,
        ModelType::ExpN,
        ModelType::PlN,
        ModelType::Seismic,
    ];

    /// Families with a parametric Hawkes kernel (everything but SEISMIC).
    pub const HAWKES: [ModelType; 6] = [
        ModelType::Exp,
        ModelType::Pl,
        ModelType::MExp,
        ModelType::MPl,
        ModelType::ExpN,
        ModelType::PlN,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ModelType::Exp => "EXP",
            ModelType::Pl => "PL",
            ModelType::MExp => "mEXP",
            ModelType::MPl => "mPL",
            ModelType::ExpN => "EXPN",
            ModelType::PlN => "PLN",
            ModelType::Seismic => "SEISMIC",
        }
    }

    pub fn is_marked(self) -> bool {
        matches!(self, ModelType::MExp | ModelType::MPl)
    }

    pub fn is_power_law(self) -> bool {
        matches!(self, ModelType::Pl | ModelType::MPl | ModelType::PlN)
    }

    pub fn is_hawkesn(self) -> bool {
        matches!(self, ModelType::ExpN | ModelType::PlN)
    }

    pub fn is_hawkes(self) -> bool {
        self != ModelType::Seismic
    }

    /// Free parameters of the family, in optimizer order.
    pub fn params(self) -> &'static [Param] {
        use Param::*;
        match self {
            ModelType::Exp | ModelType::Seismic => &[Kappa, Theta],
            ModelType::Pl => &[Kappa, Theta, C],
            ModelType::MExp => &[Kappa, Theta, Beta],
            ModelType::MPl => &[Kappa, Theta, C, Beta],
            ModelType::ExpN => &[Kappa, Theta, N],
            ModelType::PlN => &[Kappa, Theta, C, N],
        }
    }

    pub fn n_params(self) -> usize {
        self.params().len()
    }

    fn require_hawkes(self) -> Result<()> {
        if self.is_hawkes() {
            Ok(())
        } else {
            Err(Error::Validation(String::from(
                "SEISMIC has no parametric Hawkes kernel",
            )))
        }
    }
}

impl fmt::Display for ModelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ModelType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelType::ALL
            .iter()
            .copied()
            .find(|m| m.code() == s)
            .ok_or_else(|| Error::UnknownModelType(String::from(s)))
    }
}

/// Kernel parameter names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Param {
    #[serde(rename = "kappa")]
    Kappa,
    #[serde(rename = "theta")]
    Theta,
    #[serde(rename = "c")]
    C,
    #[serde(rename = "beta")]
    Beta,
    #[serde(rename = "N")]
    N,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::Kappa => "kappa",
            Param::Theta => "theta",
            Param::C => "c",
            Param::Beta => "beta",
            Param::N => "N",
        }
    }
}

/// Kernel parameters. Fields irrelevant to a family are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub kappa: f64,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
}

impl KernelParams {
    pub fn exp(kappa: f64, theta: f64) -> Self {
        Self {
            kappa,
            theta,
            c: None,
            beta: None,
            n: None,
        }
    }

    pub fn power_law(kappa: f64, theta: f64, c: f64) -> Self {
        Self {
            c: Some(c),
            ..Self::exp(kappa, theta)
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn with_population(mut self, n: f64) -> Self {
        self.n = Some(n);
        self
    }

    pub fn get(&self, p: Param) -> Option<f64> {
        match p {
            Param::Kappa => Some(self.kappa),
            Param::Theta => Some(self.theta),
            Param::C => self.c,
            Param::Beta => self.beta,
            Param::N => self.n,
        }
    }

    fn set(&mut self, p: Param, v: f64) {
        match p {
            Param::Kappa => self.kappa = v,
            Param::Theta => self.theta = v,
            Param::C => self.c = Some(v),
            Param::Beta => self.beta = Some(v),
            Param::N => self.n = Some(v),
        }
    }

    /// Flattens the free parameters of `family` in optimizer order.
    pub fn to_vector(&self, family: ModelType) -> Result<Vec<f64>> {
        family
            .params()
            .iter()
            .map(|&p| {
                self.get(p).ok_or_else(|| {
                    Error::Validation(format!("{family} requires parameter `{}`", p.name()))
                })
            })
            .collect()
    }

    /// Inverse of [`KernelParams::to_vector`].
    pub fn from_vector(family: ModelType, values: &[f64]) -> Result<Self> {
        let names = family.params();
        if values.len() != names.len() {
            return Err(Error::Validation(format!(
                "{family} takes {} parameters, got {}",
                names.len(),
                values.len()
            )));
        }
        let mut out = Self::exp(0.0, 0.0);
        for (&p, &v) in names.iter().zip(values) {
            out.set(p, v);
        }
        Ok(out)
    }

    /// Checks presence, absence and domain of every parameter for `family`.
    pub fn validate(&self, family: ModelType) -> Result<()> {
        let wanted = family.params();
        for p in [Param::C, Param::Beta, Param::N] {
            match (wanted.contains(&p), self.get(p)) {
                (true, None) => {
                    return Err(Error::Validation(format!(
                        "{family} requires parameter `{}`",
                        p.name()
                    )))
                }
                (false, Some(_)) => {
                    return Err(Error::Validation(format!(
                        "parameter `{}` does not apply to {family}",
                        p.name()
                    )))
                }
                _ => {}
            }
        }
        let bad = |name: &str, v: f64| {
            Err(Error::Validation(format!("{family}: invalid {name} = {v}")))
        };
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return bad("kappa", self.kappa);
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return bad("theta", self.theta);
        }
        if let Some(c) = self.c {
            if !(c.is_finite() && c > 0.0) {
                return bad("c", c);
            }
        }
        if let Some(b) = self.beta {
            if !(b.is_finite() && b >= 0.0) {
                return bad("beta", b);
            }
        }
        if let Some(n) = self.n {
            if !(n >= 1.0) || n.is_nan() {
                return bad("N", n);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Exponential,
    PowerLaw { c: f64 },
}

/// A validated kernel ready for repeated evaluation.
///
/// Lags are not checked here; the free functions [`kernel_value`],
/// [`kernel_integral`] and [`kernel_tail_integral`] are the checked API.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    shape: Shape,
    kappa: f64,
    theta: f64,
    beta: f64,
}

/// Partial derivatives of a kernel quantity with respect to `(κ, θ, c)`.
/// `c` is zero for exponential kernels. The `β` derivative is `value · ln m`
/// and is formed by the caller.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KernelGrad {
    pub kappa: f64,
    pub theta: f64,
    pub c: f64,
}

impl KernelGrad {
    pub fn scale(self, s: f64) -> Self {
        Self {
            kappa: self.kappa * s,
            theta: self.theta * s,
            c: self.c * s,
        }
    }
}

impl Kernel {
    pub fn new(family: ModelType, params: &KernelParams) -> Result<Self> {
        family.require_hawkes()?;
        params.validate(family)?;
        let shape = if family.is_power_law() {
            Shape::PowerLaw {
                c: params.c.unwrap_or(1.0),
            }
        } else {
            Shape::Exponential
        };
        Ok(Self {
            shape,
            kappa: params.kappa,
            theta: params.theta,
            beta: params.beta.unwrap_or(0.0),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_power_law(&self) -> bool {
        matches!(self.shape, Shape::PowerLaw { .. })
    }

    /// `m^β`; exactly 1 for unmarked families.
    #[inline]
    pub fn mark_factor(&self, mark: f64) -> f64 {
        if self.beta == 0.0 {
            1.0
        } else {
            math::powf(mark, self.beta)
        }
    }

    /// Unmarked kernel `φ(dt)`.
    #[inline]
    pub fn value(&self, dt: f64) -> f64 {
        match self.shape {
            Shape::Exponential => self.kappa * self.theta * math::exp(-self.theta * dt),
            Shape::PowerLaw { c } => self.kappa * math::powf(dt + c, -(1.0 + self.theta)),
        }
    }

    /// `∫₀ˣ φ`.
    #[inline]
    pub fn integral(&self, x: f64) -> f64 {
        match self.shape {
            Shape::Exponential => -self.kappa * math::expm1(-self.theta * x),
            Shape::PowerLaw { c } => {
                let head = self.kappa / self.theta * math::powf(c, -self.theta);
                -head * math::expm1(-self.theta * math::ln1p(x / c))
            }
        }
    }

    /// `∫ₓ^∞ φ`.
    #[inline]
    pub fn tail(&self, x: f64) -> f64 {
        match self.shape {
            Shape::Exponential => self.kappa * math::exp(-self.theta * x),
            Shape::PowerLaw { c } => self.kappa / self.theta * math::powf(x + c, -self.theta),
        }
    }

    /// `∫₀^∞ φ`, the unmarked kernel mass.
    pub fn total_mass(&self) -> f64 {
        self.tail(0.0)
    }

    pub fn value_grad(&self, dt: f64) -> (f64, KernelGrad) {
        match self.shape {
            Shape::Exponential => {
                let e = math::exp(-self.theta * dt);
                let v = self.kappa * self.theta * e;
                let g = KernelGrad {
                    kappa: self.theta * e,
                    theta: self.kappa * e * (1.0 - self.theta * dt),
                    c: 0.0,
                };
                (v, g)
            }
            Shape::PowerLaw { c } => {
                let base = dt + c;
                let ln_base = math::ln(base);
                let p = math::exp(-(1.0 + self.theta) * ln_base);
                let v = self.kappa * p;
                let g = KernelGrad {
                    kappa: p,
                    theta: -v * ln_base,
                    c: -(1.0 + self.theta) * v / base,
                };
                (v, g)
            }
        }
    }

    pub fn integral_grad(&self, x: f64) -> (f64, KernelGrad) {
        match self.shape {
            Shape::Exponential => {
                let one_minus = -math::expm1(-self.theta * x);
                let e = math::exp(-self.theta * x);
                let v = self.kappa * one_minus;
                let g = KernelGrad {
                    kappa: one_minus,
                    theta: self.kappa * x * e,
                    c: 0.0,
                };
                (v, g)
            }
            Shape::PowerLaw { c } => {
                let th = self.theta;
                let c_pow = math::powf(c, -th);
                let xc_pow = math::powf(x + c, -th);
                // (c^-θ − (x+c)^-θ), computed without cancellation
                let diff = -c_pow * math::expm1(-th * math::ln1p(x / c));
                let unit = diff / th;
                let v = self.kappa * unit;
                let dunit_dtheta =
                    (-math::ln(c) * c_pow + math::ln(x + c) * xc_pow) / th - unit / th;
                let g = KernelGrad {
                    kappa: unit,
                    theta: self.kappa * dunit_dtheta,
                    c: self.kappa * (xc_pow / (x + c) - c_pow / c),
                };
                (v, g)
            }
        }
    }

    pub fn tail_grad(&self, x: f64) -> (f64, KernelGrad) {
        match self.shape {
            Shape::Exponential => {
                let e = math::exp(-self.theta * x);
                let v = self.kappa * e;
                (
                    v,
                    KernelGrad {
                        kappa: e,
                        theta: -x * v,
                        c: 0.0,
                    },
                )
            }
            Shape::PowerLaw { c } => {
                let th = self.theta;
                let unit = math::powf(x + c, -th) / th;
                let v = self.kappa * unit;
                (
                    v,
                    KernelGrad {
                        kappa: unit,
                        theta: -v * math::ln(x + c) - v / th,
                        c: -self.kappa * math::powf(x + c, -th - 1.0),
                    },
                )
            }
        }
    }
}

fn check_lag(what: &str, x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be non-negative, got {x}")))
    }
}

fn check_mark(mark: f64) -> Result<()> {
    if mark >= 0.0 && mark.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("invalid mark {mark}")))
    }
}

/// `m^β · φ(dt)`. The mark is ignored by unmarked families.
pub fn kernel_value(params: &KernelParams, family: ModelType, dt: f64, mark: f64) -> Result<f64> {
    check_lag("lag", dt)?;
    let k = Kernel::new(family, params)?;
    if family.is_marked() {
        check_mark(mark)?;
    }
    Ok(k.mark_factor(mark) * k.value(dt))
}

/// `m^β · ∫₀ˣ φ`.
pub fn kernel_integral(params: &KernelParams, family: ModelType, x: f64, mark: f64) -> Result<f64> {
    check_lag("integration limit", x)?;
    let k = Kernel::new(family, params)?;
    if family.is_marked() {
        check_mark(mark)?;
    }
    Ok(k.mark_factor(mark) * k.integral(x))
}

/// `m^β · ∫ₓ^∞ φ`.
pub fn kernel_tail_integral(
    params: &KernelParams,
    family: ModelType,
    x: f64,
    mark: f64,
) -> Result<f64> {
    check_lag("integration limit", x)?;
    let k = Kernel::new(family, params)?;
    if family.is_marked() {
        check_mark(mark)?;
    }
    Ok(k.mark_factor(mark) * k.tail(x))
}

/// Where the expectation `E[m^β]` is taken from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarkEffect<'a> {
    /// Sample mean of `mᵢ^β` over observed marks.
    Empirical(&'a [f64]),
    /// Pareto marks on `[1, ∞)` with density `(α−1) m^(−α)`.
    PowerLaw { alpha: f64 },
}

/// `E[m^β]` under the given mark source.
pub fn expected_mark_effect(source: MarkEffect<'_>, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::Validation(format!("beta must be >= 0, got {beta}")));
    }
    match source {
        MarkEffect::Empirical(marks) => {
            if marks.is_empty() {
                return Err(Error::EmptyInput(String::from(
                    "empirical mark effect needs at least one mark",
                )));
            }
            if beta == 0.0 {
                return Ok(1.0);
            }
            let mut acc = KahanSum::default();
            for &m in marks {
                check_mark(m)?;
                acc.add(math::powf(m, beta));
            }
            Ok(acc.total() / marks.len() as f64)
        }
        MarkEffect::PowerLaw { alpha } => {
            if !(alpha > beta + 1.0) {
                return Err(Error::Divergent(format!(
                    "E[m^beta] diverges for alpha = {alpha} <= beta + 1 = {}",
                    beta + 1.0
                )));
            }
            Ok((alpha - 1.0) / (alpha - 1.0 - beta))
        }
    }
}
