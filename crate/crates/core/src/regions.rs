//! MSSC thresholds that decide between no inference, synchronous inference
//! and asynchronous inference.

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{self, OperatingPoint, Scheme, SchemeConfig, SpatialWeights};
use crate::error::{invalid, Error, Result};
use crate::model::SourceParams;
use crate::spt::{BlepModel, LinkParams};

/// `e^{-2aT}(1 - eps)/(1 - e^{-2aT} eps)`.
pub fn threshold_infer_at(a_per_s: f64, period_s: f64, eps: f64) -> f64 {
    let c = (-2.0 * a_per_s * period_s).exp();
    c * (1.0 - eps) / (1.0 - c * eps)
}

/// MSSC above which synchronous inference beats no inference.
pub fn threshold_infer(source: &SourceParams, link: &LinkParams, scheme: &SchemeConfig) -> Result<f64> {
    let probe = SchemeConfig::no_infer(scheme.period_s);
    probe.validate(link)?;
    let eps = OperatingPoint::from_link(link, BlepModel::Segmented).blep;
    Ok(threshold_infer_at(source.a_per_s, scheme.period_s, eps))
}

/// MSSC above which asynchronous inference beats synchronous inference,
/// both evaluated through their MSSC approximations.
pub fn threshold_asyn_over_syn_at(a_per_s: f64, scheme: &SchemeConfig, eps: f64) -> Result<f64> {
    let m = scheme.sensors;
    if m < 2 {
        return Err(invalid("the asyn/syn threshold needs at least two sensors"));
    }
    let (t, h) = (scheme.period_s, scheme.time_shift_s);
    let c = (-2.0 * a_per_s * t).exp();
    let q = (-2.0 * a_per_s * h).exp();
    let psi = analytic::psi(a_per_s, t, h, m, eps);
    let ratio = (1.0 - c) * (1.0 - q * eps) / (1.0 - c * eps.powi(m as i32));
    // (eps - eps^M)/(1 - eps) summed directly so eps = 1 stays finite.
    let tail: f64 = (1..m).map(|k| eps.powi(k as i32)).sum();
    let others: f64 = psi.iter().enumerate().filter(|&(n, _)| n != scheme.target).map(|(_, p)| p).sum();
    let numer = ratio - psi[scheme.target];
    let denom = others - ratio * tail;
    if denom <= 0.0 {
        // Asyn wins at MSSC rho iff rho * denom > numer; with denom <= 0 the
        // left side is largest at rho = 0.
        return Err(Error::RegionDegenerate {
            asyn_always_superior: denom > numer,
        });
    }
    Ok(numer / denom)
}

pub fn threshold_asyn_over_syn(source: &SourceParams, link: &LinkParams, scheme: &SchemeConfig) -> Result<f64> {
    if scheme.scheme != Scheme::AsynInfer {
        return Err(invalid("the asyn/syn threshold needs an asynchronous configuration"));
    }
    scheme.validate(link)?;
    let eps = OperatingPoint::from_link(link, BlepModel::Segmented).blep;
    threshold_asyn_over_syn_at(source.a_per_s, scheme, eps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub thr1: f64,
    /// `+inf` when asyn never wins, `-inf` when it always does.
    pub thr2: f64,
}

/// Both thresholds for an asynchronous configuration; the synchronous side
/// shares its period, sensor count and target.
pub fn thresholds(source: &SourceParams, link: &LinkParams, scheme: &SchemeConfig) -> Result<Thresholds> {
    let thr1 = threshold_infer(source, link, scheme)?;
    let thr2 = match threshold_asyn_over_syn(source, link, scheme) {
        Ok(v) => v,
        Err(Error::RegionDegenerate { asyn_always_superior }) => {
            if asyn_always_superior {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        }
        Err(e) => return Err(e),
    };
    Ok(Thresholds { thr1, thr2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gains {
    /// No-inference MSE over synchronous-inference MSE.
    pub infer: f64,
    /// Synchronous-inference MSE over asynchronous-inference MSE.
    pub asyn_over_syn: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionReport {
    pub mssc: f64,
    pub thr1: f64,
    pub thr2: f64,
    pub winner: Scheme,
    pub gains: Option<Gains>,
}

/// Three-way selection: no inference up to and including `thr1`, asyn from
/// `thr2` on, syn in between.
pub fn classify(mssc: f64, thresholds: &Thresholds) -> RegionReport {
    let winner = if mssc <= thresholds.thr1 {
        Scheme::NoInfer
    } else if mssc < thresholds.thr2 {
        Scheme::SynInfer
    } else {
        Scheme::AsynInfer
    };
    RegionReport {
        mssc,
        thr1: thresholds.thr1,
        thr2: thresholds.thr2,
        winner,
        gains: None,
    }
}

/// Approximate MSE of each scheme at a given MSSC, in `Scheme::ALL` order.
pub fn scheme_mses(source: &SourceParams, scheme: &SchemeConfig, op: OperatingPoint, mssc: f64) -> Result<[f64; 3]> {
    let w = SpatialWeights::uniform(scheme.sensors, scheme.target, mssc)?;
    let no = analytic::mse_at(source, &w, &scheme.with_scheme(Scheme::NoInfer), op)?.value;
    let syn = analytic::mse_at(source, &w, &scheme.with_scheme(Scheme::SynInfer), op)?.value;
    let asyn = analytic::mse_at(source, &w, &scheme.with_scheme(Scheme::AsynInfer), op)?.value;
    Ok([no, syn, asyn])
}

/// Classification plus the approximate gains at `mssc`.
pub fn region_report(
    source: &SourceParams,
    link: &LinkParams,
    scheme: &SchemeConfig,
    mssc: f64,
) -> Result<RegionReport> {
    let th = thresholds(source, link, scheme)?;
    let op = OperatingPoint::from_link(link, BlepModel::Segmented);
    let [no, syn, asyn] = scheme_mses(source, scheme, op, mssc)?;
    let mut r = classify(mssc, &th);
    r.gains = Some(Gains {
        infer: no / syn,
        asyn_over_syn: syn / asyn,
    });
    Ok(r)
}

fn lowest(mses: [f64; 3]) -> Scheme {
    // Ties go to no inference, then to asyn, matching the closed ends of the
    // classification intervals.
    let [no, syn, asyn] = mses;
    if no <= syn && no <= asyn {
        Scheme::NoInfer
    } else if asyn <= syn {
        Scheme::AsynInfer
    } else {
        Scheme::SynInfer
    }
}

/// Winner at each grid MSSC by direct comparison of the approximate MSEs.
pub fn exhaustive_region_oracle(
    source: &SourceParams,
    link: &LinkParams,
    scheme: &SchemeConfig,
    mssc_grid: &[f64],
) -> Result<Vec<(f64, Scheme)>> {
    scheme.with_scheme(Scheme::AsynInfer).validate(link)?;
    let op = OperatingPoint::from_link(link, BlepModel::Segmented);
    mssc_grid
        .par_iter()
        .map(|&rho| Ok((rho, lowest(scheme_mses(source, scheme, op, rho)?))))
        .collect()
}

/// Same comparison on the exact weights of a field, for reporting how the
/// approximation-based thresholds compare with the exact crossover.
pub fn exact_winner(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
) -> Result<Scheme> {
    let op = OperatingPoint::from_link(link, BlepModel::Segmented);
    let mut v = [0.0; 3];
    for (slot, s) in v.iter_mut().zip(Scheme::ALL) {
        *slot = analytic::mse_at(source, weights, &scheme.with_scheme(s), op)?.value;
    }
    Ok(lowest(v))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionRow {
    #[serde(rename = "T")]
    pub period_s: f64,
    #[serde(rename = "gamma_r_bar_dB")]
    pub mean_snr_db: f64,
    pub mssc: f64,
    pub thr1: f64,
    pub thr2: f64,
    pub winner: String,
}
