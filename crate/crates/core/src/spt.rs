//! Short-packet reliability: normal-approximation block error probability,
//! its segmented-linear form and the Rayleigh-averaged forms.
//!
//! `info_bits` enters the formulas as `L/N` in nats, exactly as the capacity
//! term `ln(1 + gamma)` does.

use std::f64::consts::PI;

use log::{debug, warn};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};

pub const DEFAULT_MIN_BLOCKLENGTH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    /// `L`, information bits per packet.
    pub info_bits: f64,
    /// `N`, channel uses per packet. Real-valued so optimizers can relax it.
    pub blocklength: f64,
    /// `T_s`, seconds per channel use.
    pub symbol_duration_s: f64,
    /// Average received SNR, linear.
    pub mean_snr: f64,
}

impl LinkParams {
    pub fn new(info_bits: f64, blocklength: f64, symbol_duration_s: f64, mean_snr: f64) -> Result<Self> {
        let link = Self {
            info_bits,
            blocklength,
            symbol_duration_s,
            mean_snr,
        };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.info_bits) {
            return Err(invalid(format!("info bits must be positive, got {}", self.info_bits)));
        }
        if !pos(self.blocklength) {
            return Err(invalid(format!("blocklength must be positive, got {}", self.blocklength)));
        }
        if !pos(self.symbol_duration_s) {
            return Err(invalid(format!(
                "symbol duration must be positive, got {}",
                self.symbol_duration_s
            )));
        }
        if !pos(self.mean_snr) {
            return Err(invalid(format!("mean SNR must be positive, got {}", self.mean_snr)));
        }
        Ok(())
    }

    pub fn with_blocklength(mut self, blocklength: f64) -> Self {
        self.blocklength = blocklength;
        self
    }

    pub fn with_mean_snr(mut self, mean_snr: f64) -> Self {
        self.mean_snr = mean_snr;
        self
    }

    /// `tau = N T_s`.
    pub fn delay_s(&self) -> f64 {
        self.blocklength * self.symbol_duration_s
    }

    /// `eta = e^{L/N} - 1`, the SNR at which capacity equals the rate.
    pub fn eta(&self) -> f64 {
        (self.info_bits / self.blocklength).exp_m1()
    }

    /// Slope of the linear segment, always negative.
    pub fn lambda(&self) -> f64 {
        let r = self.info_bits / self.blocklength;
        -(self.blocklength / (2.0 * PI * (2.0 * r).exp_m1())).sqrt()
    }

    /// SNR knots where the segmented form leaves 1 and reaches 0.
    pub fn knots(&self) -> (f64, f64) {
        let eta = self.eta();
        let half = 0.5 / self.lambda();
        (eta + half, eta - half)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Which average-BLEP expression to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlepModel {
    /// Exact Rayleigh average of the segmented-linear BLEP.
    #[default]
    Segmented,
    /// `1 - exp(-(eta - sqrt(pi L)/N)/gamma_bar)`, the form the stationarity
    /// conditions are written in.
    Simplified,
}

fn clamp_probability(v: f64, what: &str) -> f64 {
    if v < 0.0 || v > 1.0 {
        debug!("{what} = {v:e} clamped to [0, 1]");
    }
    v.clamp(0.0, 1.0)
}

fn check_snr(gamma_r: f64) -> Result<()> {
    if gamma_r.is_nan() || gamma_r <= 0.0 {
        return Err(Error::Domain(format!("instantaneous SNR must be positive, got {gamma_r}")));
    }
    Ok(())
}

/// Gaussian tail function.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `Q(sqrt(N/V) (C - L/N))` with dispersion `V = 1 - (1+gamma)^-2`.
pub fn blep_instantaneous(link: &LinkParams, gamma_r: f64) -> Result<f64> {
    check_snr(gamma_r)?;
    if gamma_r.is_infinite() {
        return Ok(0.0);
    }
    let n = link.blocklength;
    let capacity = gamma_r.ln_1p();
    let dispersion = 1.0 - (1.0 + gamma_r).powi(-2);
    let arg = (n / dispersion).sqrt() * (capacity - link.info_bits / n);
    Ok(clamp_probability(q_function(arg), "instantaneous BLEP"))
}

fn segmented(link: &LinkParams, gamma_r: f64) -> f64 {
    let (lo, hi) = link.knots();
    if gamma_r <= lo {
        1.0
    } else if gamma_r >= hi {
        0.0
    } else {
        link.lambda() * (gamma_r - link.eta()) + 0.5
    }
}

/// Piecewise-linear fit of the instantaneous BLEP around `eta`.
pub fn blep_segmented(link: &LinkParams, gamma_r: f64) -> Result<f64> {
    check_snr(gamma_r)?;
    Ok(segmented(link, gamma_r))
}

/// Segmented BLEP averaged over an exponential SNR with mean `mean_snr`.
///
/// When the lower knot is positive this is
/// `1 + g lambda (e^{-g1/g} - e^{-g2/g})`. For small `L` the lower knot is
/// negative and the integral starts inside the linear segment instead.
pub fn blep_average(link: &LinkParams) -> f64 {
    let g = link.mean_snr;
    let lambda = link.lambda();
    let (g1, g2) = link.knots();
    let tail2 = (-g2 / g).exp();
    let v = if g1 >= 0.0 {
        1.0 + g * lambda * ((-g1 / g).exp() - tail2)
    } else {
        0.5 - lambda * link.eta() + g * lambda * (1.0 - tail2)
    };
    clamp_probability(v, "average BLEP")
}

fn simplified_exponent(link: &LinkParams) -> f64 {
    (link.eta() - (PI * link.info_bits).sqrt() / link.blocklength) / link.mean_snr
}

pub fn blep_average_simplified(link: &LinkParams) -> f64 {
    clamp_probability(-(-simplified_exponent(link)).exp_m1(), "simplified average BLEP")
}

pub fn blep_average_with(link: &LinkParams, model: BlepModel) -> f64 {
    match model {
        BlepModel::Segmented => blep_average(link),
        BlepModel::Simplified => blep_average_simplified(link),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlepSlope {
    pub value: f64,
    /// False when `L < pi`, where the slope may be positive.
    pub sign_guaranteed: bool,
}

/// Derivative of the simplified average BLEP with respect to `N`.
pub fn dblep_dn(link: &LinkParams) -> BlepSlope {
    let l = link.info_bits;
    let n = link.blocklength;
    let value = ((PI * l).sqrt() - l * (l / n).exp()) * (-simplified_exponent(link)).exp()
        / (link.mean_snr * n * n);
    let sign_guaranteed = l >= PI;
    if !sign_guaranteed {
        warn!("info bits {l} < pi: BLEP slope in N is not guaranteed negative");
    }
    BlepSlope {
        value,
        sign_guaranteed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(l: f64, n: f64, snr_db: f64) -> LinkParams {
        LinkParams::new(l, n, 1e-4, db_to_linear(snr_db)).unwrap()
    }

    #[test]
    fn derived_link_quantities() {
        let k = link(160.0, 80.0, 5.0);
        assert!((k.delay_s() - 0.008).abs() < 1e-15);
        assert!((k.eta() - (2f64.exp() - 1.0)).abs() < 1e-12);
        let lam = -(80.0 / (2.0 * PI * (4f64.exp() - 1.0))).sqrt();
        assert!((k.lambda() - lam).abs() < 1e-12);
        assert!(k.lambda() < 0.0 && k.eta() > 0.0);
    }

    #[test]
    fn instantaneous_midpoint_and_limits() {
        let k = link(160.0, 80.0, 5.0);
        assert!((blep_instantaneous(&k, k.eta()).unwrap() - 0.5).abs() < 1e-12);
        assert!(blep_instantaneous(&k, 1e9).unwrap() < 1e-12);
        assert!(blep_instantaneous(&k, f64::INFINITY).unwrap() == 0.0);
        assert!(blep_instantaneous(&k, 1e-9).unwrap() > 1.0 - 1e-12);
        assert!(matches!(blep_instantaneous(&k, 0.0), Err(Error::Domain(_))));
        assert!(matches!(blep_segmented(&k, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn segmented_shape() {
        let k = link(160.0, 80.0, 5.0);
        let (lo, hi) = k.knots();
        assert!((blep_segmented(&k, k.eta()).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(blep_segmented(&k, hi + 1e-9).unwrap(), 0.0);
        assert_eq!(blep_segmented(&k, lo - 1e-9).unwrap(), 1.0);
        let lin = |g: f64| k.lambda() * (g - k.eta()) + 0.5;
        assert!((lin(lo) - 1.0).abs() < 1e-12 && lin(hi).abs() < 1e-12);
        let mut prev = 1.0;
        for i in 1..=400 {
            let v = blep_segmented(&k, 0.05 * i as f64).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn averages_vanish_at_high_snr() {
        let k = link(160.0, 80.0, 80.0);
        assert!(blep_average(&k) < 1e-6);
        assert!(blep_average_simplified(&k) < 1e-6);
    }

    #[test]
    fn small_payload_uses_exact_branch() {
        // L = 2 at N = 80: the lower knot is negative.
        let k = LinkParams::new(2.0, 80.0, 1e-4, 3.0).unwrap();
        assert!(k.knots().0 < 0.0);
        let printed = {
            let (g1, g2) = k.knots();
            1.0 + k.mean_snr * k.lambda() * ((-g1 / k.mean_snr).exp() - (-g2 / k.mean_snr).exp())
        };
        let exact = blep_average(&k);
        assert!((0.0..=1.0).contains(&exact));
        // The closed form integrates the linear segment over negative SNR too.
        assert!((printed - exact).abs() > 1e-6);
    }

    #[test]
    fn slope_sign_flag() {
        let k = link(160.0, 80.0, 5.0);
        let s = dblep_dn(&k);
        assert!(s.value < 0.0 && s.sign_guaranteed);
        let small = LinkParams::new(2.0, 80.0, 1e-4, 3.0).unwrap();
        assert!(!dblep_dn(&small).sign_guaranteed);
    }

    #[test]
    fn db_round_trip() {
        assert!((db_to_linear(5.0) - 10f64.powf(0.5)).abs() < 1e-15);
        assert!((linear_to_db(db_to_linear(-3.7)) + 3.7).abs() < 1e-12);
    }
}
