//! Closed-form average reconstruction MSE for the three schemes, their
//! MSSC approximations, and the bounds in BLEP and spatial correlation.
//!
//! Every formula is written for a target with unit-normalized weights
//! `f_n = e^{-2 b r_mn}` (so `f_m = 1`) and equal sensor variances.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::model::{SensorField, SourceParams};
use crate::roots::{self, RootOptions};
use crate::spt::{self, BlepModel, LinkParams};

/// Relative slack on feasibility checks so grid points computed in floating
/// point are not rejected at the boundary.
const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    NoInfer,
    SynInfer,
    AsynInfer,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::NoInfer, Scheme::SynInfer, Scheme::AsynInfer];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::NoInfer => "no-infer",
            Scheme::SynInfer => "syn-infer",
            Scheme::AsynInfer => "asyn-infer",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "no-infer" | "noinfer" | "none" => Ok(Scheme::NoInfer),
            "syn-infer" | "syninfer" | "syn" => Ok(Scheme::SynInfer),
            "asyn-infer" | "asyninfer" | "asyn" => Ok(Scheme::AsynInfer),
            other => Err(invalid(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Transmission schedule for one reconstruction scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// `T`, seconds between sampling rounds.
    pub period_s: f64,
    /// `h`, stagger between consecutive sensors. Only read by the
    /// asynchronous scheme.
    pub time_shift_s: f64,
    /// `M`.
    pub sensors: usize,
    /// `m`, 0-based.
    pub target: usize,
}

impl SchemeConfig {
    pub fn no_infer(period_s: f64) -> Self {
        Self {
            scheme: Scheme::NoInfer,
            period_s,
            time_shift_s: 0.0,
            sensors: 1,
            target: 0,
        }
    }

    pub fn syn(period_s: f64, sensors: usize, target: usize) -> Self {
        Self {
            scheme: Scheme::SynInfer,
            period_s,
            time_shift_s: 0.0,
            sensors,
            target,
        }
    }

    pub fn asyn(period_s: f64, time_shift_s: f64, sensors: usize, target: usize) -> Self {
        Self {
            scheme: Scheme::AsynInfer,
            period_s,
            time_shift_s,
            sensors,
            target,
        }
    }

    pub fn for_field(scheme: Scheme, period_s: f64, time_shift_s: f64, field: &SensorField) -> Self {
        Self {
            scheme,
            period_s,
            time_shift_s,
            sensors: field.len(),
            target: field.target(),
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_time_shift(mut self, time_shift_s: f64) -> Self {
        self.time_shift_s = time_shift_s;
        self
    }

    pub fn with_period(mut self, period_s: f64) -> Self {
        self.period_s = period_s;
        self
    }

    /// Sensors that enter the formulas; the no-inference scheme only uses
    /// the target.
    pub fn effective_sensors(&self) -> usize {
        match self.scheme {
            Scheme::NoInfer => 1,
            _ => self.sensors,
        }
    }

    /// Largest feasible stagger `(T - tau)/(M - 1)`.
    pub fn max_time_shift(&self, delay_s: f64) -> f64 {
        if self.sensors < 2 {
            return f64::INFINITY;
        }
        (self.period_s - delay_s) / (self.sensors - 1) as f64
    }

    pub fn validate(&self, link: &LinkParams) -> Result<()> {
        link.validate()?;
        let t = self.period_s;
        if !(t.is_finite() && t > 0.0) {
            return Err(invalid(format!("period must be positive, got {t}")));
        }
        if self.sensors == 0 {
            return Err(invalid("at least one sensor is required"));
        }
        if self.target >= self.sensors {
            return Err(invalid(format!(
                "target {} out of range for {} sensors",
                self.target, self.sensors
            )));
        }
        let tau = link.delay_s();
        if t <= tau {
            return Err(invalid(format!(
                "period {t} s must exceed the packet delay {tau} s"
            )));
        }
        if self.scheme == Scheme::AsynInfer {
            let h = self.time_shift_s;
            if !(h.is_finite() && h > 0.0) {
                return Err(invalid(format!("time shift must be positive, got {h}")));
            }
            if self.sensors >= 2 {
                let lo = link.symbol_duration_s;
                let hi = self.max_time_shift(tau);
                let slack = FEASIBILITY_SLACK * t;
                if h < lo - slack || h > hi + slack {
                    return Err(invalid(format!(
                        "time shift {h} s outside the feasible band [{lo}, {hi}] s"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Sensors ordered by decreasing spatial correlation with the target.
#[derive(Debug, Clone, PartialEq)]
pub struct ReindexedField {
    pub order: Vec<usize>,
    pub factors: Vec<f64>,
}

/// Squared spatial factors `f_n = e^{-2 b r_mn}` in transmission order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    factors: Vec<f64>,
    target: usize,
}

impl SpatialWeights {
    pub fn from_field(field: &SensorField, b_per_m: f64) -> Self {
        Self {
            factors: field.squared_factors(b_per_m),
            target: field.target(),
        }
    }

    pub fn from_factors(factors: Vec<f64>, target: usize) -> Result<Self> {
        if target >= factors.len() {
            return Err(invalid("target outside the weight vector"));
        }
        if factors.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(invalid("squared spatial factors must lie in [0, 1]"));
        }
        if factors[target] != 1.0 {
            return Err(invalid("the target's own factor must be 1"));
        }
        Ok(Self { factors, target })
    }

    /// Every non-target factor replaced by the MSSC.
    pub fn uniform(sensors: usize, target: usize, mssc: f64) -> Result<Self> {
        if sensors < 2 {
            return Err(invalid(format!("MSSC approximation needs M >= 2, got {sensors}")));
        }
        if !(0.0..=1.0).contains(&mssc) {
            return Err(invalid(format!("MSSC must lie in [0, 1], got {mssc}")));
        }
        let mut factors = vec![mssc; sensors];
        if target >= sensors {
            return Err(invalid("target outside the weight vector"));
        }
        factors[target] = 1.0;
        Ok(Self { factors, target })
    }

    pub fn single() -> Self {
        Self {
            factors: vec![1.0],
            target: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn mssc(&self) -> Option<f64> {
        let m = self.len();
        if m < 2 {
            return None;
        }
        let s: f64 = self.factors.iter().sum::<f64>() - self.factors[self.target];
        Some(s / (m - 1) as f64)
    }

    /// Same weights with every non-target factor set to `value`.
    pub fn with_non_target(&self, value: f64) -> Self {
        let mut factors = vec![value; self.len()];
        factors[self.target] = 1.0;
        Self {
            factors,
            target: self.target,
        }
    }

    /// Target first, then descending factor with ties by ascending index.
    pub fn reindexed(&self) -> ReindexedField {
        let mut rest: Vec<usize> = (0..self.len()).filter(|&n| n != self.target).collect();
        rest.sort_by(|&i, &j| self.factors[j].total_cmp(&self.factors[i]).then(i.cmp(&j)));
        let mut order = vec![self.target];
        order.extend(rest);
        let factors = order.iter().map(|&n| self.factors[n]).collect();
        ReindexedField { order, factors }
    }
}

/// Packet delay and average BLEP at which the closed forms are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub delay_s: f64,
    pub blep: f64,
}

impl OperatingPoint {
    pub fn from_link(link: &LinkParams, model: BlepModel) -> Self {
        Self {
            delay_s: link.delay_s(),
            blep: spt::blep_average_with(link, model),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseComponents {
    /// Scale multiplying the weighted sum: `beta_syn` or its asynchronous
    /// counterpart.
    pub beta: f64,
    /// `Psi_n` in transmission order; empty for the synchronous schemes.
    pub psi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseValue {
    pub value: f64,
    pub components: Option<MseComponents>,
}

impl MseValue {
    fn plain(value: f64) -> Self {
        Self {
            value,
            components: None,
        }
    }
}

/// `sigma^2 A e^{-2 a tau} / (2 a T)`, common to every closed form.
fn scale(source: &SourceParams, period_s: f64, delay_s: f64) -> f64 {
    let a = source.a_per_s;
    source.sigma2_x * source.observation_gain() * (-2.0 * a * delay_s).exp() / (2.0 * a * period_s)
}

fn check_blep(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Domain(format!("average BLEP must lie in [0, 1], got {eps}")));
    }
    Ok(())
}

/// `beta_syn = K (1 - c)(1 - eps)/(1 - c eps^M)` with `c = e^{-2aT}`.
pub fn beta_syn(source: &SourceParams, period_s: f64, sensors: usize, op: OperatingPoint) -> f64 {
    let c = (-2.0 * source.a_per_s * period_s).exp();
    let eps = op.blep;
    scale(source, period_s, op.delay_s) * -(-2.0 * source.a_per_s * period_s).exp_m1() * (1.0 - eps)
        / (1.0 - c * eps.powi(sensors as i32))
}

/// Synchronous-inference MSE at an explicit operating point.
pub fn syn_mse_at(source: &SourceParams, weights: &SpatialWeights, period_s: f64, op: OperatingPoint) -> MseValue {
    let sorted = weights.reindexed().factors;
    let eps = op.blep;
    let sum: f64 = sorted.iter().enumerate().map(|(s, f)| f * eps.powi(s as i32)).sum();
    let beta = beta_syn(source, period_s, sorted.len(), op);
    MseValue {
        value: source.sigma2_x - beta * sum,
        components: Some(MseComponents { beta, psi: Vec::new() }),
    }
}

/// `Psi_n` for `n = 1..=M` in transmission order.
pub fn psi(a_per_s: f64, period_s: f64, time_shift_s: f64, sensors: usize, eps: f64) -> Vec<f64> {
    let (a, t, h) = (a_per_s, period_s, time_shift_s);
    let q1 = -(-2.0 * a * h).exp_m1();
    let denom = 1.0 - (-2.0 * a * t).exp() * eps.powi(sensors as i32);
    (1..=sensors)
        .map(|n| {
            let nf = n as f64;
            let wrap = (-2.0 * a * h * (sensors as f64 + 1.0 - nf)).exp()
                - (-2.0 * a * (t - (nf - 1.0) * h)).exp();
            q1 + eps.powi((sensors - n) as i32) * (1.0 - eps) * wrap / denom
        })
        .collect()
}

/// `d Psi_n / d eps` in transmission order.
pub fn dpsi_deps(a_per_s: f64, period_s: f64, time_shift_s: f64, sensors: usize, eps: f64) -> Vec<f64> {
    let (a, t, h) = (a_per_s, period_s, time_shift_s);
    let c = (-2.0 * a * t).exp();
    let m = sensors as f64;
    let em = eps.powi(sensors as i32);
    let denom = 1.0 - c * em;
    (1..=sensors)
        .map(|n| {
            let nf = n as f64;
            let wrap = (-2.0 * a * h * (m + 1.0 - nf)).exp() - (-2.0 * a * (t - (nf - 1.0) * h)).exp();
            // eps^{M-n-1} times the bracket, with the n = M case divided out.
            let body = if n == sensors {
                -1.0 + c * eps.powi(sensors as i32 - 1) * (nf * (1.0 - eps) + eps)
            } else {
                eps.powi((sensors - n - 1) as i32)
                    * ((m - nf) * (1.0 - eps) - eps + c * em * (nf * (1.0 - eps) + eps))
            };
            wrap * body / (denom * denom)
        })
        .collect()
}

/// Scale `K (1 - eps)/(1 - q eps)` of the asynchronous weighted sum.
pub fn beta_asyn(source: &SourceParams, period_s: f64, time_shift_s: f64, op: OperatingPoint) -> f64 {
    let q = (-2.0 * source.a_per_s * time_shift_s).exp();
    scale(source, period_s, op.delay_s) * (1.0 - op.blep) / (1.0 - q * op.blep)
}

/// Asynchronous-inference MSE at an explicit operating point.
pub fn asyn_mse_at(
    source: &SourceParams,
    weights: &SpatialWeights,
    period_s: f64,
    time_shift_s: f64,
    op: OperatingPoint,
) -> MseValue {
    let psi = psi(source.a_per_s, period_s, time_shift_s, weights.len(), op.blep);
    let beta = beta_asyn(source, period_s, time_shift_s, op);
    let sum: f64 = weights.factors().iter().zip(&psi).map(|(f, p)| f * p).sum();
    MseValue {
        value: source.sigma2_x - beta * sum,
        components: Some(MseComponents { beta, psi }),
    }
}

/// Exact derivative of the asynchronous MSE with respect to the average BLEP.
pub fn asyn_dmse_deps(
    source: &SourceParams,
    weights: &SpatialWeights,
    period_s: f64,
    time_shift_s: f64,
    op: OperatingPoint,
) -> f64 {
    let (a, eps, m) = (source.a_per_s, op.blep, weights.len());
    let q = (-2.0 * a * time_shift_s).exp();
    let f = weights.factors();
    let s: f64 = f.iter().zip(psi(a, period_s, time_shift_s, m, eps)).map(|(f, p)| f * p).sum();
    let ds: f64 = f.iter().zip(dpsi_deps(a, period_s, time_shift_s, m, eps)).map(|(f, p)| f * p).sum();
    let k = scale(source, period_s, op.delay_s);
    let d = 1.0 - q * eps;
    -k * ((1.0 - eps) * d * ds - (1.0 - q) * s) / (d * d)
}

/// Slope of the asynchronous MSE in BLEP at zero BLEP. Negative exactly when
/// the curve first dips before rising.
pub fn asyn_slope_at_zero_blep(
    source: &SourceParams,
    weights: &SpatialWeights,
    period_s: f64,
    time_shift_s: f64,
    delay_s: f64,
) -> f64 {
    asyn_dmse_deps(source, weights, period_s, time_shift_s, OperatingPoint { delay_s, blep: 0.0 })
}

/// `alpha_asyn`, the weighted sum of the asynchronous MSE at zero BLEP.
pub fn alpha_asyn(a_per_s: f64, period_s: f64, time_shift_s: f64, weights: &SpatialWeights) -> f64 {
    let (a, t, h) = (a_per_s, period_s, time_shift_s);
    let m = weights.len();
    let q = (-2.0 * a * h).exp();
    let total: f64 = weights.factors().iter().sum();
    weights.factors()[m - 1] * q * -(-2.0 * a * (t - m as f64 * h)).exp_m1() + (1.0 - q) * total
}

fn weights_match(scheme: &SchemeConfig, weights: &SpatialWeights) -> Result<()> {
    if weights.len() != scheme.sensors || weights.target() != scheme.target {
        return Err(invalid(format!(
            "weights for {} sensors (target {}) do not match scheme with {} sensors (target {})",
            weights.len(),
            weights.target(),
            scheme.sensors,
            scheme.target
        )));
    }
    Ok(())
}

/// MSE of `scheme` at an explicit operating point; checks only that the
/// BLEP is a probability and the weights fit the scheme.
pub fn mse_at(
    source: &SourceParams,
    weights: &SpatialWeights,
    scheme: &SchemeConfig,
    op: OperatingPoint,
) -> Result<MseValue> {
    check_blep(op.blep)?;
    match scheme.scheme {
        Scheme::NoInfer => Ok(syn_mse_at(source, &SpatialWeights::single(), scheme.period_s, op)),
        Scheme::SynInfer => {
            weights_match(scheme, weights)?;
            Ok(syn_mse_at(source, weights, scheme.period_s, op))
        }
        Scheme::AsynInfer => {
            weights_match(scheme, weights)?;
            Ok(asyn_mse_at(source, weights, scheme.period_s, scheme.time_shift_s, op))
        }
    }
}

/// Validated MSE with the average BLEP taken from `link` under `model`.
pub fn mse(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    model: BlepModel,
) -> Result<MseValue> {
    scheme.validate(link)?;
    mse_at(source, weights, scheme, OperatingPoint::from_link(link, model))
}

fn expect_scheme(scheme: &SchemeConfig, want: Scheme) -> Result<()> {
    if scheme.scheme != want {
        return Err(invalid(format!("expected a {want} configuration, got {}", scheme.scheme)));
    }
    Ok(())
}

fn expect_field(scheme: &SchemeConfig, field: &SensorField) -> Result<()> {
    if field.len() != scheme.sensors || field.target() != scheme.target {
        return Err(invalid("sensor field does not match the scheme's sensor count or target"));
    }
    Ok(())
}

pub fn mse_syn_infer(
    source: &SourceParams,
    field: &SensorField,
    link: &LinkParams,
    scheme: &SchemeConfig,
) -> Result<MseValue> {
    expect_scheme(scheme, Scheme::SynInfer)?;
    expect_field(scheme, field)?;
    mse(source, &SpatialWeights::from_field(field, source.b_per_m), link, scheme, BlepModel::Segmented)
}

pub fn mse_syn_infer_approx(
    source: &SourceParams,
    mssc: f64,
    link: &LinkParams,
    scheme: &SchemeConfig,
) -> Result<MseValue> {
    expect_scheme(scheme, Scheme::SynInfer)?;
    let w = SpatialWeights::uniform(scheme.sensors, scheme.target, mssc)?;
    mse(source, &w, link, scheme, BlepModel::Segmented)
}

pub fn mse_no_infer(source: &SourceParams, link: &LinkParams, scheme: &SchemeConfig) -> Result<MseValue> {
    let s = SchemeConfig::no_infer(scheme.period_s);
    mse(source, &SpatialWeights::single(), link, &s, BlepModel::Segmented)
}

pub fn mse_asyn_infer(
    source: &SourceParams,
    field: &SensorField,
    link: &LinkParams,
    scheme: &SchemeConfig,
) -> Result<MseValue> {
    expect_scheme(scheme, Scheme::AsynInfer)?;
    expect_field(scheme, field)?;
    mse(source, &SpatialWeights::from_field(field, source.b_per_m), link, scheme, BlepModel::Segmented)
}

pub fn mse_asyn_infer_approx(
    source: &SourceParams,
    mssc: f64,
    link: &LinkParams,
    scheme: &SchemeConfig,
) -> Result<MseValue> {
    expect_scheme(scheme, Scheme::AsynInfer)?;
    let w = SpatialWeights::uniform(scheme.sensors, scheme.target, mssc)?;
    mse(source, &w, link, scheme, BlepModel::Segmented)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundAxis {
    /// Extremes over the average BLEP with everything else fixed.
    Blep,
    /// Extremes over the non-target spatial factors in `[0, 1]`.
    Spatial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseBounds {
    pub lower: MseValue,
    pub upper: MseValue,
    /// BLEP attaining the lower bound on the BLEP axis.
    pub argmin_blep: Option<f64>,
}

/// Global minimum of the asynchronous MSE over `eps` in `[0, 1]`.
///
/// The stationary point is found from the exact derivative; zero BLEP is
/// always a candidate.
pub fn asyn_blep_minimizer(
    source: &SourceParams,
    weights: &SpatialWeights,
    period_s: f64,
    time_shift_s: f64,
    delay_s: f64,
) -> (f64, MseValue) {
    let at = |eps: f64| OperatingPoint { delay_s, blep: eps };
    let deriv = |eps: f64| asyn_dmse_deps(source, weights, period_s, time_shift_s, at(eps));
    let value = |eps: f64| asyn_mse_at(source, weights, period_s, time_shift_s, at(eps));
    let mut best = (0.0, value(0.0));
    let hi = 1.0 - 1e-9;
    for (lo, up) in roots::sign_changes(deriv, 0.0, hi, 512) {
        if deriv(lo) >= 0.0 {
            continue;
        }
        let opts = RootOptions {
            f_tol: 0.0,
            x_tol: 1e-10,
            max_iterations: 200,
        };
        if let Ok(r) = roots::find_root(deriv, lo, up, opts, "asyn dMSE/dBLEP") {
            let v = value(r.x);
            if v.value < best.1.value {
                best = (r.x, v);
            }
        }
    }
    best
}

/// Closed-form MSE bounds along `axis`.
pub fn bounds_for(
    source: &SourceParams,
    weights: &SpatialWeights,
    scheme: &SchemeConfig,
    op: OperatingPoint,
    axis: BoundAxis,
) -> Result<MseBounds> {
    check_blep(op.blep)?;
    let (t, h) = (scheme.period_s, scheme.time_shift_s);
    let sigma2 = source.sigma2_x;
    let zero = OperatingPoint { blep: 0.0, ..op };
    let b = match (scheme.scheme, axis) {
        (Scheme::NoInfer, BoundAxis::Blep) => MseBounds {
            lower: syn_mse_at(source, &SpatialWeights::single(), t, zero),
            upper: MseValue::plain(sigma2),
            argmin_blep: Some(0.0),
        },
        (Scheme::NoInfer, BoundAxis::Spatial) => {
            let v = syn_mse_at(source, &SpatialWeights::single(), t, op);
            MseBounds {
                lower: v.clone(),
                upper: v,
                argmin_blep: None,
            }
        }
        (Scheme::SynInfer, BoundAxis::Blep) => {
            weights_match(scheme, weights)?;
            MseBounds {
                lower: syn_mse_at(source, weights, t, zero),
                upper: MseValue::plain(sigma2),
                argmin_blep: Some(0.0),
            }
        }
        (Scheme::SynInfer, BoundAxis::Spatial) => {
            weights_match(scheme, weights)?;
            let beta = beta_syn(source, t, scheme.sensors, op);
            let geometric: f64 = (0..scheme.sensors).map(|k| op.blep.powi(k as i32)).sum();
            let comp = |b| Some(MseComponents { beta: b, psi: Vec::new() });
            MseBounds {
                lower: MseValue {
                    value: sigma2 - beta * geometric,
                    components: comp(beta),
                },
                upper: MseValue {
                    value: sigma2 - beta,
                    components: comp(beta),
                },
                argmin_blep: None,
            }
        }
        (Scheme::AsynInfer, BoundAxis::Blep) => {
            weights_match(scheme, weights)?;
            let (eps_star, lower) = asyn_blep_minimizer(source, weights, t, h, op.delay_s);
            MseBounds {
                lower,
                upper: MseValue::plain(sigma2),
                argmin_blep: Some(eps_star),
            }
        }
        (Scheme::AsynInfer, BoundAxis::Spatial) => {
            weights_match(scheme, weights)?;
            let p = psi(source.a_per_s, t, h, scheme.sensors, op.blep);
            let beta = beta_asyn(source, t, h, op);
            let total: f64 = p.iter().sum();
            let comp = Some(MseComponents { beta, psi: p.clone() });
            MseBounds {
                lower: MseValue {
                    value: sigma2 - beta * total,
                    components: comp.clone(),
                },
                upper: MseValue {
                    value: sigma2 - beta * p[scheme.target],
                    components: comp,
                },
                argmin_blep: None,
            }
        }
    };
    Ok(b)
}

pub fn bounds(
    source: &SourceParams,
    field: &SensorField,
    link: &LinkParams,
    scheme: &SchemeConfig,
    axis: BoundAxis,
) -> Result<MseBounds> {
    scheme.validate(link)?;
    let weights = match scheme.scheme {
        Scheme::NoInfer => SpatialWeights::single(),
        _ => {
            expect_field(scheme, field)?;
            SpatialWeights::from_field(field, source.b_per_m)
        }
    };
    bounds_for(source, &weights, scheme, OperatingPoint::from_link(link, BlepModel::Segmented), axis)
}

/// The non-monotonicity threshold on the MSSC, evaluated with the last two
/// factors taken in either of the two plausible orders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Upsilon {
    /// Second-weakest and weakest factors.
    pub reindexed: f64,
    /// Factors of the last two sensors to transmit.
    pub transmission_order: f64,
}

impl Upsilon {
    pub fn value(&self) -> f64 {
        self.reindexed
    }
}

fn upsilon_expr(a: f64, t: f64, h: f64, m: usize, f_prev: f64, f_last: f64) -> f64 {
    let q1 = -(-2.0 * a * h).exp_m1();
    let mf = (m - 1) as f64;
    -(-2.0 * a * (t - m as f64 * h)).exp_m1() * (f_prev - f_last * q1)
        / ((2.0 * a * h).exp() * mf * q1 * q1)
        - 1.0 / mf
}

pub fn upsilon_for(source: &SourceParams, weights: &SpatialWeights, scheme: &SchemeConfig) -> Result<Upsilon> {
    let m = weights.len();
    if m < 2 {
        return Err(Error::UndefinedMssc { sensors: m });
    }
    let (a, t, h) = (source.a_per_s, scheme.period_s, scheme.time_shift_s);
    let sorted = weights.reindexed().factors;
    let raw = weights.factors();
    Ok(Upsilon {
        reindexed: upsilon_expr(a, t, h, m, sorted[m - 2], sorted[m - 1]),
        transmission_order: upsilon_expr(a, t, h, m, raw[m - 2], raw[m - 1]),
    })
}

pub fn upsilon(
    source: &SourceParams,
    field: &SensorField,
    link: &LinkParams,
    scheme: &SchemeConfig,
) -> Result<Upsilon> {
    expect_scheme(scheme, Scheme::AsynInfer)?;
    expect_field(scheme, field)?;
    scheme.validate(link)?;
    upsilon_for(source, &SpatialWeights::from_field(field, source.b_per_m), scheme)
}
