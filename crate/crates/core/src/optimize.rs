//! Blocklength and time-shift adaptation.
//!
//! Stationarity conditions are written with the simplified average BLEP,
//! whose slope in `N` has a closed form. Candidate points produced by the
//! root finders are compared, and results reported, under
//! `OptimizerConfig::eval_model`.

use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{self, MseValue, OperatingPoint, Scheme, SchemeConfig, SpatialWeights};
use crate::error::{invalid, Error, Result};
use crate::model::SourceParams;
use crate::roots::{self, Root, RootOptions};
use crate::spt::{self, BlepModel, LinkParams, DEFAULT_MIN_BLOCKLENGTH};

/// Relative slack when flooring continuous bounds onto integer grids.
const GRID_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub n_min: f64,
    /// Upper blocklength; defaults to the largest `N` with `N T_s < T`.
    pub n_max: Option<f64>,
    /// Alternating sweeps, each a time-shift step followed by a blocklength step.
    pub max_iterations: usize,
    /// Seconds.
    pub tol_h: f64,
    /// Channel uses.
    pub tol_n: f64,
    /// Residual above which a converged stationarity root is logged.
    pub root_tol: f64,
    /// Starting blocklength, and the fixed one for time-shift-only runs.
    pub initial_blocklength: f64,
    /// Model used to compare candidates and report the objective.
    pub eval_model: BlepModel,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_min: DEFAULT_MIN_BLOCKLENGTH,
            n_max: None,
            max_iterations: 3,
            tol_h: 1e-6,
            tol_n: 0.5,
            root_tol: 1e-9,
            initial_blocklength: 80.0,
            eval_model: BlepModel::Segmented,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.n_min >= 1.0) {
            return Err(invalid(format!("n_min must be at least 1, got {}", self.n_min)));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be at least 1"));
        }
        for (name, v) in [("tol_h", self.tol_h), ("tol_n", self.tol_n), ("root_tol", self.root_tol)] {
            if !(v > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(n) = self.n_max {
            if n < self.n_min {
                return Err(invalid(format!("n_max {n} below n_min {}", self.n_min)));
            }
        }
        Ok(())
    }

    // Slopes are tiny near BLEP saturation, so an absolute residual test
    // would accept spurious roots there; converge on the bracket instead.
    fn root_options(&self) -> RootOptions {
        RootOptions {
            f_tol: 0.0,
            x_tol: 1e-13,
            max_iterations: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub h_s: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub mse: f64,
    pub residual_h: Option<f64>,
    #[serde(rename = "residual_N")]
    pub residual_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub n_star: u64,
    pub h_star: Option<f64>,
    pub mse_star: MseValue,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
    /// Objective evaluations spent; meaningful for the exhaustive search.
    pub evaluations: u64,
    /// False when `L < pi`, where convexity in `N` is not guaranteed.
    pub convexity_guaranteed: bool,
    /// The start point had to be moved into the feasible set.
    pub projected_start: bool,
}

fn effective_weights(scheme: &SchemeConfig, weights: &SpatialWeights) -> Result<SpatialWeights> {
    match scheme.scheme {
        Scheme::NoInfer => Ok(SpatialWeights::single()),
        _ => {
            if weights.len() != scheme.sensors || weights.target() != scheme.target {
                return Err(invalid("weights do not match the scheme's sensors or target"));
            }
            Ok(weights.clone())
        }
    }
}

fn objective(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    n: f64,
    h: f64,
    model: BlepModel,
) -> Result<MseValue> {
    let k = link.with_blocklength(n);
    analytic::mse(source, weights, &k, &scheme.with_time_shift(h), model)
}

struct Slope {
    eps: f64,
    deps: f64,
    sign_ok: bool,
}

fn simplified_at(link: &LinkParams, n: f64) -> Slope {
    let k = link.with_blocklength(n);
    let s = spt::dblep_dn(&k);
    Slope {
        eps: spt::blep_average_simplified(&k),
        deps: s.value,
        sign_ok: s.sign_guaranteed,
    }
}

/// Derivative of the synchronous MSE (simplified BLEP) with respect to `N`.
pub fn eval_h(source: &SourceParams, weights: &SpatialWeights, link: &LinkParams, scheme: &SchemeConfig, n: f64) -> f64 {
    let (a, t, ts) = (source.a_per_s, scheme.period_s, link.symbol_duration_s);
    let sorted = if scheme.scheme == Scheme::NoInfer {
        vec![1.0]
    } else {
        weights.reindexed().factors
    };
    let m = sorted.len();
    let mf = m as f64;
    let Slope { eps, deps, .. } = simplified_at(link, n);
    let c = (-2.0 * a * t).exp();
    let em = eps.powi(m as i32);
    let d = 1.0 - c * em;
    let pre = source.sigma2_x * source.observation_gain() * (-2.0 * a * n * ts).exp() * -(-2.0 * a * t).exp_m1()
        / (2.0 * a * t * d * d);
    let sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let s = (i + 1) as f64;
            // eps^{s-2} times the bracket; the s = 1 term has eps divided out.
            let body = if i == 0 {
                deps * (1.0 - c * eps.powi(m as i32 - 1) * (mf - (mf - 1.0) * eps))
                    + 2.0 * a * ts * (1.0 - eps) * d
            } else {
                eps.powi(i as i32 - 1)
                    * (d * (deps + 2.0 * a * ts * eps * (1.0 - eps))
                        - deps * (1.0 - eps) * (c * em * (mf - s) + s))
            };
            f * body
        })
        .sum();
    pre * sum
}

/// Derivative of the asynchronous MSE (simplified BLEP) with respect to `h`.
pub fn eval_j(source: &SourceParams, weights: &SpatialWeights, link: &LinkParams, scheme: &SchemeConfig, h: f64) -> f64 {
    let (a, t) = (source.a_per_s, scheme.period_s);
    let m = weights.len();
    let mf = m as f64;
    let eps = spt::blep_average_simplified(link);
    let q = (-2.0 * a * h).exp();
    let c = (-2.0 * a * t).exp();
    let d = 1.0 - q * eps;
    let pre = -source.sigma2_x * source.observation_gain() * (-2.0 * a * link.delay_s()).exp() * (1.0 - eps).powi(2) * q
        / (t * d * d);
    let denom = 1.0 - c * eps.powi(m as i32);
    let sum: f64 = weights
        .factors()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let n = (i + 1) as f64;
            // e^{2ahn} folded into the exponentials it multiplies.
            let lead = (-2.0 * a * h * (mf - n)).exp();
            let wrap = lead - (-2.0 * a * (t - n * h)).exp();
            let inner = d * mf * lead + (1.0 - n * d) * wrap;
            f * (1.0 - eps.powi(m as i32 - i as i32 - 1) * inner / denom)
        })
        .sum();
    pre * sum
}

/// Derivative of the asynchronous MSE (simplified BLEP) with respect to `N`.
pub fn eval_f(source: &SourceParams, weights: &SpatialWeights, link: &LinkParams, scheme: &SchemeConfig, n: f64) -> f64 {
    let (a, t, h, ts) = (source.a_per_s, scheme.period_s, scheme.time_shift_s, link.symbol_duration_s);
    let m = weights.len();
    let Slope { eps, deps, .. } = simplified_at(link, n);
    let q = (-2.0 * a * h).exp();
    let d = 1.0 - q * eps;
    let pre = -source.sigma2_x * source.observation_gain() * (-2.0 * a * n * ts).exp() / (2.0 * a * t * d * d);
    let psi = analytic::psi(a, t, h, m, eps);
    let dpsi = analytic::dpsi_deps(a, t, h, m, eps);
    let sum: f64 = weights
        .factors()
        .iter()
        .zip(psi.iter().zip(&dpsi))
        .map(|(f, (p, dp))| f * ((1.0 - eps) * d * (dp * deps - 2.0 * a * ts * p) - deps * p * (1.0 - q)))
        .sum();
    pre * sum
}

/// Largest integer `N` with `N T_s < T`, or the configured cap.
fn syn_n_range(cfg: &OptimizerConfig, link: &LinkParams, period_s: f64) -> Result<(u64, u64)> {
    let slots = period_s / link.symbol_duration_s;
    let mut hi = (slots * (1.0 - GRID_SLACK)).ceil() as u64 - 1;
    if let Some(cap) = cfg.n_max {
        hi = hi.min(cap.floor() as u64);
    }
    let lo = cfg.n_min.ceil() as u64;
    if hi < lo {
        return Err(invalid(format!(
            "no feasible blocklength: n_min {lo} exceeds the period's {hi} channel uses"
        )));
    }
    Ok((lo, hi))
}

fn check_residual(cfg: &OptimizerConfig, root: &Root, name: &str) {
    if root.residual.abs() > cfg.root_tol {
        warn!("{name} root at {} has residual {:e}", root.x, root.residual);
    }
}

/// Smallest integer in `[lo, hi]` where the simplified BLEP is numerically
/// below one. Below it every slope underflows to zero.
fn unsaturated_floor(link: &LinkParams, lo: u64, hi: u64) -> u64 {
    let live = |n: u64| spt::blep_average_simplified(&link.with_blocklength(n as f64)) < 1.0;
    if live(lo) || !live(hi) {
        return lo;
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > 1 {
        let mid = a + (b - a) / 2;
        if live(mid) {
            b = mid;
        } else {
            a = mid;
        }
    }
    b
}

fn better(a: &(f64, u64, u64), b: &(f64, u64, u64)) -> bool {
    // Lower objective, then smaller N, then smaller h index.
    a.0 < b.0 || a.0 == b.0 && (a.1, a.2) < (b.1, b.2)
}

/// Best of the given integer blocklengths; ties go to the smaller one.
fn pick_n(candidates: &[u64], eval: impl Fn(u64) -> Result<MseValue>) -> Result<(u64, MseValue)> {
    let mut best: Option<(u64, MseValue)> = None;
    for &n in candidates {
        let v = eval(n)?;
        let take = match &best {
            None => true,
            Some((bn, bv)) => v.value < bv.value || v.value == bv.value && n < *bn,
        };
        if take {
            best = Some((n, v));
        }
    }
    best.ok_or_else(|| invalid("no candidate blocklength"))
}

/// Blocklength minimizing the synchronous MSE (or the no-inference MSE).
pub fn optimize_blocklength_syn(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    cfg: &OptimizerConfig,
) -> Result<OptResult> {
    cfg.validate()?;
    if scheme.scheme == Scheme::AsynInfer {
        return Err(invalid("use the joint optimizer for the asynchronous scheme"));
    }
    let w = effective_weights(scheme, weights)?;
    let (lo, hi) = syn_n_range(cfg, link, scheme.period_s)?;
    let h_at = |n: f64| eval_h(source, &w, link, scheme, n);
    let eval = |n: u64| objective(source, &w, link, scheme, n as f64, 0.0, cfg.eval_model);
    let sign_ok = simplified_at(link, lo as f64).sign_ok;
    if !sign_ok {
        warn!("info bits below pi: the blocklength problem may not be convex");
    }
    let live = unsaturated_floor(link, lo, hi);
    let (h_lo, h_hi) = (h_at(live as f64), h_at(hi as f64));
    let mut residual = None;
    let n_star = if h_lo > 0.0 {
        if live > lo { pick_n(&[lo, live], eval)?.0 } else { lo }
    } else if h_hi < 0.0 {
        hi
    } else {
        let root = roots::find_root(h_at, live as f64, hi as f64, cfg.root_options(), "H")?;
        check_residual(cfg, &root, "H");
        residual = Some(root.residual);
        let cands = [root.x.floor() as u64, root.x.ceil() as u64];
        let cands: Vec<u64> = cands.iter().map(|&n| n.clamp(lo, hi)).collect();
        pick_n(&cands, eval)?.0
    };
    let mse_star = eval(n_star)?;
    Ok(OptResult {
        n_star,
        h_star: None,
        trace: vec![TraceRow {
            iter: 1,
            h_s: 0.0,
            n: n_star as f64,
            mse: mse_star.value,
            residual_h: None,
            residual_n: residual,
        }],
        mse_star,
        iterations: 1,
        converged: true,
        evaluations: 0,
        convexity_guaranteed: sign_ok,
        projected_start: false,
    })
}

/// Integer scan of the synchronous (or no-inference) MSE over the feasible
/// blocklengths.
pub fn exhaustive_blocklength_syn(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    cfg: &OptimizerConfig,
) -> Result<OptResult> {
    cfg.validate()?;
    let w = effective_weights(scheme, weights)?;
    let (lo, hi) = syn_n_range(cfg, link, scheme.period_s)?;
    let values: Vec<(u64, f64)> = (lo..=hi)
        .into_par_iter()
        .map(|n| Ok((n, objective(source, &w, link, scheme, n as f64, 0.0, cfg.eval_model)?.value)))
        .collect::<Result<_>>()?;
    let (n_star, _) = values
        .iter()
        .copied()
        .reduce(|a, b| if b.1 < a.1 { b } else { a })
        .expect("nonempty range");
    let mse_star = objective(source, &w, link, scheme, n_star as f64, 0.0, cfg.eval_model)?;
    Ok(OptResult {
        n_star,
        h_star: None,
        mse_star,
        iterations: 1,
        converged: true,
        trace: Vec::new(),
        evaluations: values.len() as u64,
        convexity_guaranteed: true,
        projected_start: false,
    })
}

fn require_asyn(scheme: &SchemeConfig, weights: &SpatialWeights) -> Result<()> {
    if scheme.scheme != Scheme::AsynInfer {
        return Err(invalid("expected an asynchronous configuration"));
    }
    if scheme.sensors < 2 {
        return Err(invalid("time-shift optimization needs at least two sensors"));
    }
    effective_weights(scheme, weights).map(|_| ())
}

/// Largest multiple of `T_s` not exceeding `(T - N T_s)/(M - 1)`.
fn max_shift_index(link: &LinkParams, scheme: &SchemeConfig, n: f64) -> u64 {
    let h_max = scheme.max_time_shift(n * link.symbol_duration_s);
    (h_max / link.symbol_duration_s * (1.0 + GRID_SLACK)).floor().max(0.0) as u64
}

/// Largest integer `N` with `N T_s <= T - (M - 1) h`.
fn max_blocklength(cfg: &OptimizerConfig, link: &LinkParams, scheme: &SchemeConfig, h: f64) -> u64 {
    let room = scheme.period_s - (scheme.sensors - 1) as f64 * h;
    let mut n = (room / link.symbol_duration_s * (1.0 + GRID_SLACK)).floor().max(0.0) as u64;
    if let Some(cap) = cfg.n_max {
        n = n.min(cap.floor() as u64);
    }
    // tau must stay strictly below T.
    let slots = scheme.period_s / link.symbol_duration_s;
    n.min((slots * (1.0 - GRID_SLACK)).ceil() as u64 - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftStep {
    /// Chosen stagger in seconds, a multiple of `T_s`.
    pub h: f64,
    pub mse: MseValue,
    /// Continuous stationary point, when the boundary rules did not fire.
    pub root: Option<Root>,
}

fn shift_step(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    cfg: &OptimizerConfig,
    n: f64,
    current: Option<u64>,
) -> Result<(u64, ShiftStep)> {
    let ts = link.symbol_duration_s;
    let k_max = max_shift_index(link, scheme, n);
    if k_max < 1 {
        return Err(invalid(format!("no feasible time shift at blocklength {n}")));
    }
    let k_link = link.with_blocklength(n);
    let j = |h: f64| eval_j(source, weights, &k_link, &scheme.with_time_shift(h), h);
    let eval = |k: u64| objective(source, weights, link, scheme, n, k as f64 * ts, cfg.eval_model);
    let (h_lo, h_hi) = (ts, k_max as f64 * ts);
    let mut root = None;
    let mut cands: Vec<u64> = if j(h_lo) > 0.0 {
        vec![1]
    } else if j(h_hi) < 0.0 {
        vec![k_max]
    } else {
        let r = roots::find_root(j, h_lo, h_hi, cfg.root_options(), "J")?;
        check_residual(cfg, &r, "J");
        root = Some(r);
        let k = r.x / ts;
        vec![(k.floor() as u64).clamp(1, k_max), (k.ceil() as u64).clamp(1, k_max)]
    };
    if let Some(k) = current.filter(|&k| (1..=k_max).contains(&k)) {
        cands.push(k);
    }
    cands.sort_unstable();
    cands.dedup();
    let (k, mse) = pick_n(&cands, eval)?;
    Ok((k, ShiftStep { h: k as f64 * ts, mse, root }))
}

/// Best time shift on the `T_s` grid for a fixed blocklength.
pub fn optimize_time_shift(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    cfg: &OptimizerConfig,
) -> Result<ShiftStep> {
    cfg.validate()?;
    require_asyn(scheme, weights)?;
    Ok(shift_step(source, weights, link, scheme, cfg, link.blocklength, None)?.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlocklengthStep {
    pub n: u64,
    pub mse: MseValue,
    pub root: Option<Root>,
    /// The derivative changed sign more than once, so the grid was scanned.
    pub grid_fallback: bool,
}

/// Best integer blocklength of the asynchronous MSE for the stagger in
/// `scheme`.
pub fn optimize_blocklength_asyn(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    cfg: &OptimizerConfig,
) -> Result<BlocklengthStep> {
    cfg.validate()?;
    require_asyn(scheme, weights)?;
    blocklength_step(source, weights, link, scheme, cfg, None)
}

fn blocklength_step(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    cfg: &OptimizerConfig,
    current: Option<u64>,
) -> Result<BlocklengthStep> {
    let h = scheme.time_shift_s;
    let lo = cfg.n_min.ceil() as u64;
    let hi = max_blocklength(cfg, link, scheme, h);
    if hi < lo {
        return Err(invalid(format!("no feasible blocklength at time shift {h} s")));
    }
    let f = |n: f64| eval_f(source, weights, link, scheme, n);
    let eval = |n: u64| objective(source, weights, link, scheme, n as f64, h, cfg.eval_model);
    let live = unsaturated_floor(link, lo, hi);
    let changes = roots::sign_changes(f, live as f64, hi as f64, 64);
    if changes.len() > 1 {
        debug!("F changes sign {} times; scanning blocklengths", changes.len());
        let values: Vec<(u64, MseValue)> =
            (lo..=hi).into_par_iter().map(|n| Ok((n, eval(n)?))).collect::<Result<_>>()?;
        let (n, mse) = values
            .into_iter()
            .reduce(|a, b| if b.1.value < a.1.value { b } else { a })
            .expect("nonempty range");
        return Ok(BlocklengthStep { n, mse, root: None, grid_fallback: true });
    }
    let mut root = None;
    let mut cands: Vec<u64> = if f(live as f64) > 0.0 {
        vec![lo, live]
    } else if f(hi as f64) < 0.0 {
        vec![hi]
    } else {
        let r = roots::find_root(f, live as f64, hi as f64, cfg.root_options(), "F")?;
        check_residual(cfg, &r, "F");
        root = Some(r);
        vec![(r.x.floor() as u64).clamp(lo, hi), (r.x.ceil() as u64).clamp(lo, hi)]
    };
    if let Some(n) = current.filter(|&n| (lo..=hi).contains(&n)) {
        cands.push(n);
    }
    cands.sort_unstable();
    cands.dedup();
    let (n, mse) = pick_n(&cands, eval)?;
    Ok(BlocklengthStep { n, mse, root, grid_fallback: false })
}

/// Joint time-shift and blocklength optimization from the default start.
pub fn jtsbo(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    cfg: &OptimizerConfig,
) -> Result<OptResult> {
    let n0 = cfg.initial_blocklength;
    let h0 = (scheme.period_s - n0 * link.symbol_duration_s) / (2.0 * (scheme.sensors.max(2) - 1) as f64);
    jtsbo_from(source, weights, link, scheme, cfg, h0, n0)
}

/// Alternating minimization starting from `(h0, n0)`, projected onto the
/// feasible grid first.
pub fn jtsbo_from(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    cfg: &OptimizerConfig,
    h0: f64,
    n0: f64,
) -> Result<OptResult> {
    cfg.validate()?;
    require_asyn(scheme, weights)?;
    let ts = link.symbol_duration_s;
    let lo = cfg.n_min.ceil() as u64;
    let n_cap = max_blocklength(cfg, link, scheme, ts);
    if n_cap < lo {
        return Err(invalid("no feasible (time shift, blocklength) pair"));
    }
    let mut n = (n0.round().max(0.0) as u64).clamp(lo, n_cap);
    let k_max = max_shift_index(link, scheme, n as f64);
    let mut k = ((h0 / ts).round().max(0.0) as u64).clamp(1, k_max.max(1));
    let projected = n as f64 != n0 || (k as f64 * ts - h0).abs() > 1e-12 * ts.max(h0.abs());
    if projected {
        debug!("start ({h0} s, {n0}) projected to ({} s, {n})", k as f64 * ts);
    }
    let eval = |k: u64, n: u64| objective(source, weights, link, scheme, n as f64, k as f64 * ts, cfg.eval_model);
    let mut mse = eval(k, n)?;
    let mut trace = vec![TraceRow {
        iter: 0,
        h_s: k as f64 * ts,
        n: n as f64,
        mse: mse.value,
        residual_h: None,
        residual_n: None,
    }];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iterations {
        iterations = it;
        let (h_prev, n_prev) = (k as f64 * ts, n as f64);
        let (k_new, shift) = shift_step(source, weights, link, scheme, cfg, n as f64, Some(k))?;
        k = k_new;
        let sch = scheme.with_time_shift(k as f64 * ts);
        let blk = blocklength_step(source, weights, link, &sch, cfg, Some(n))?;
        n = blk.n;
        mse = blk.mse;
        trace.push(TraceRow {
            iter: it,
            h_s: k as f64 * ts,
            n: n as f64,
            mse: mse.value,
            residual_h: shift.root.map(|r| r.residual),
            residual_n: blk.root.map(|r| r.residual),
        });
        if (k as f64 * ts - h_prev).abs() < cfg.tol_h && (n as f64 - n_prev).abs() < cfg.tol_n {
            converged = true;
            break;
        }
    }
    let sign_ok = simplified_at(link, lo as f64).sign_ok;
    Ok(OptResult {
        n_star: n,
        h_star: Some(k as f64 * ts),
        mse_star: mse,
        iterations,
        converged,
        trace,
        evaluations: 0,
        convexity_guaranteed: sign_ok,
        projected_start: projected,
    })
}

/// Time-shift optimization with the blocklength held at
/// `cfg.initial_blocklength`.
pub fn time_shift_only(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    cfg: &OptimizerConfig,
) -> Result<OptResult> {
    cfg.validate()?;
    require_asyn(scheme, weights)?;
    let n = cfg.initial_blocklength.round();
    let k = link.with_blocklength(n);
    let step = optimize_time_shift(source, weights, &k, scheme, cfg)?;
    Ok(OptResult {
        n_star: n as u64,
        h_star: Some(step.h),
        trace: vec![TraceRow {
            iter: 1,
            h_s: step.h,
            n,
            mse: step.mse.value,
            residual_h: step.root.map(|r| r.residual),
            residual_n: None,
        }],
        mse_star: step.mse,
        iterations: 1,
        converged: true,
        evaluations: 0,
        convexity_guaranteed: true,
        projected_start: false,
    })
}

/// Number of `(N, h)` grid points the exhaustive search visits.
pub fn exhaustive_lattice_count(slots: u64, n_min: u64, sensors: usize) -> u64 {
    let p = (sensors - 1) as u64;
    (n_min..=slots.saturating_sub(p)).map(|n| (slots - n) / p).sum()
}

/// Closed-form complexity estimate `(N_max - N_min)(2K - N_max - N_min)/(2(M-1))`
/// with `N_max = K - (M - 1)` and `K = T/T_s`.
pub fn exhaustive_count_formula(slots: f64, n_min: f64, sensors: usize) -> f64 {
    let p = (sensors - 1) as f64;
    let n_max = slots - p;
    (n_max - n_min) * (2.0 * slots - n_max - n_min) / (2.0 * p)
}

/// Full scan over integer `N` and `h = k T_s` subject to `N T_s + (M-1) h <= T`.
pub fn exhaustive_search(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    cfg: &OptimizerConfig,
) -> Result<OptResult> {
    exhaustive_search_ordered(source, weights, link, scheme, cfg, None)
}

/// As [`exhaustive_search`], visiting blocklengths in the given order.
pub fn exhaustive_search_ordered(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    cfg: &OptimizerConfig,
    order: Option<&[u64]>,
) -> Result<OptResult> {
    cfg.validate()?;
    require_asyn(scheme, weights)?;
    let ts = link.symbol_duration_s;
    let lo = cfg.n_min.ceil() as u64;
    let hi = max_blocklength(cfg, link, scheme, ts);
    if hi < lo {
        return Err(invalid("no feasible (time shift, blocklength) pair"));
    }
    let ns: Vec<u64> = match order {
        Some(o) => o.iter().copied().filter(|n| (lo..=hi).contains(n)).collect(),
        None => (lo..=hi).collect(),
    };
    let per_n: Vec<((f64, u64, u64), u64)> = ns
        .par_iter()
        .map(|&n| {
            let k_max = max_shift_index(link, scheme, n as f64);
            let mut best = (f64::INFINITY, n, u64::MAX);
            for k in 1..=k_max {
                let v = objective(source, weights, link, scheme, n as f64, k as f64 * ts, cfg.eval_model)?.value;
                let c = (v, n, k);
                if better(&c, &best) {
                    best = c;
                }
            }
            Ok((best, k_max))
        })
        .collect::<Result<_>>()?;
    let evaluations = per_n.iter().map(|(_, c)| c).sum();
    let best = per_n
        .iter()
        .map(|(b, _)| *b)
        .filter(|b| b.2 != u64::MAX)
        .reduce(|a, b| if better(&b, &a) { b } else { a })
        .ok_or(Error::NumericBracket {
            function: "exhaustive search",
            lo: lo as f64,
            hi: hi as f64,
            f_lo: f64::NAN,
            f_hi: f64::NAN,
        })?;
    let (_, n, k) = best;
    let mse_star = objective(source, weights, link, scheme, n as f64, k as f64 * ts, cfg.eval_model)?;
    Ok(OptResult {
        n_star: n,
        h_star: Some(k as f64 * ts),
        mse_star,
        iterations: 1,
        converged: true,
        trace: Vec::new(),
        evaluations,
        convexity_guaranteed: true,
        projected_start: false,
    })
}

/// MSE of `scheme` at `(N, h)` with an explicit BLEP model; exposed for
/// finite-difference checks.
pub fn objective_at(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    n: f64,
    h: f64,
    model: BlepModel,
) -> Result<f64> {
    let w = effective_weights(scheme, weights)?;
    let k = link.with_blocklength(n);
    Ok(analytic::mse_at(source, &w, &scheme.with_time_shift(h), OperatingPoint::from_link(&k, model))?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source() -> SourceParams {
        SourceParams::new(1.0, 5.0, 2.0, 0.01).unwrap()
    }

    fn weights() -> SpatialWeights {
        SpatialWeights::from_factors(vec![1.0, 0.8, 0.6, 0.5, 0.3], 0).unwrap()
    }

    fn link(db: f64) -> LinkParams {
        LinkParams::new(160.0, 80.0, 1e-4, spt::db_to_linear(db)).unwrap()
    }

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let step = f64::EPSILON.cbrt() * x.abs().max(1e-3);
        (f(x + step) - f(x - step)) / (2.0 * step)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn h_matches_difference() {
        let s = source();
        let w = weights();
        let sch = SchemeConfig::syn(0.15, 5, 0);
        for n in [40.0, 80.0, 120.0, 600.0] {
            let k = link(5.0);
            let an = eval_h(&s, &w, &k, &sch, n);
            let num = fd(|x| objective_at(&s, &w, &k, &sch, x, 0.0, BlepModel::Simplified).unwrap(), n);
            assert!(rel(an, num) < 1e-4, "N {n}: {an} vs {num}");
        }
    }

    #[test]
    fn j_matches_difference() {
        let s = source();
        let w = weights();
        let k = link(15.0);
        for h in [0.001, 0.005, 0.02, 0.034] {
            let sch = SchemeConfig::asyn(0.15, h, 5, 0);
            let an = eval_j(&s, &w, &k, &sch, h);
            let num = fd(|x| objective_at(&s, &w, &k, &sch, 80.0, x, BlepModel::Simplified).unwrap(), h);
            assert!(rel(an, num) < 1e-4, "h {h}: {an} vs {num}");
        }
    }

    #[test]
    fn f_matches_difference() {
        let s = source();
        let w = weights();
        let k = link(15.0);
        for (h, n) in [(0.005, 60.0), (0.01, 80.0), (0.02, 100.0)] {
            let sch = SchemeConfig::asyn(0.15, h, 5, 0);
            let an = eval_f(&s, &w, &k, &sch, n);
            let num = fd(|x| objective_at(&s, &w, &k, &sch, x, h, BlepModel::Simplified).unwrap(), n);
            assert!(rel(an, num) < 1e-4, "({h}, {n}): {an} vs {num}");
        }
    }

    // Psi_n slope in N with the printed exponent -2ah(n+1) in the
    // denominator; the verified form uses -2ah(n-1).
    #[test]
    fn printed_psi_slope_exponent_is_off() {
        let (a, t, h, m) = (2.0f64, 0.15f64, 0.01f64, 5usize);
        let k = link(15.0);
        let sl = simplified_at(&k, 80.0);
        let (eps, deps) = (sl.eps, sl.deps);
        let (q, c) = ((-2.0 * a * h).exp(), (-2.0 * a * t).exp());
        let em = eps.powi(m as i32);
        let good = analytic::dpsi_deps(a, t, h, m, eps);
        for n in 1..m {
            let nf = n as f64;
            let bracket = m as f64 * (1.0 - eps) - (nf * (1.0 - eps) + eps) * (1.0 - c * em);
            let common = (q.powi(m as i32) - c) * eps.powi((m - n - 1) as i32) * deps * bracket / (1.0 - c * em).powi(2);
            let printed = common / (-2.0 * a * h * (nf + 1.0)).exp();
            let fixed = common * q.powi(1 - n as i32);
            assert!(rel(fixed, good[n - 1] * deps) < 1e-12);
            assert!(rel(printed, fixed) > 1e-2);
        }
    }

    #[test]
    fn syn_boundary_rule() {
        // Very high SNR: shorter packets always help, so N_min wins.
        let s = source();
        let k = LinkParams::new(160.0, 80.0, 1e-4, spt::db_to_linear(60.0)).unwrap();
        let sch = SchemeConfig::syn(0.15, 5, 0);
        let cfg = OptimizerConfig { n_min: 60.0, ..Default::default() };
        assert!(eval_h(&s, &weights(), &k, &sch, 60.0) > 0.0);
        let r = optimize_blocklength_syn(&s, &weights(), &k, &sch, &cfg).unwrap();
        assert_eq!(r.n_star, 60);
    }

    #[test]
    fn syn_interior_matches_scan() {
        let s = source();
        let sch = SchemeConfig::syn(0.3, 5, 0);
        let cfg = OptimizerConfig::default();
        let k = link(15.0);
        let r = optimize_blocklength_syn(&s, &weights(), &k, &sch, &cfg).unwrap();
        let e = exhaustive_blocklength_syn(&s, &weights(), &k, &sch, &cfg).unwrap();
        assert!(r.n_star.abs_diff(e.n_star) <= 1, "{} vs {}", r.n_star, e.n_star);
        assert!(r.trace[0].residual_n.unwrap().abs() < cfg.root_tol);
        for d in [-5i64, 5] {
            let n = (r.n_star as i64 + d) as f64;
            let v = objective_at(&s, &weights(), &k, &sch, n, 0.0, cfg.eval_model).unwrap();
            assert!(r.mse_star.value <= v);
        }
    }

    #[test]
    fn lattice_count_matches_scan() {
        let s = source();
        let k = link(5.0).with_blocklength(80.0);
        let sch = SchemeConfig::asyn(0.03, 0.001, 5, 0);
        let cfg = OptimizerConfig::default();
        let r = exhaustive_search(&s, &weights(), &k, &sch, &cfg).unwrap();
        assert_eq!(r.evaluations, exhaustive_lattice_count(300, 10, 5));
    }

    #[test]
    fn jtsbo_fixed_point_converges_at_once() {
        let s = source();
        let k = link(15.0);
        let sch = SchemeConfig::asyn(0.15, 0.005, 5, 0);
        let cfg = OptimizerConfig { max_iterations: 10, ..Default::default() };
        let first = jtsbo(&s, &weights(), &k, &sch, &cfg).unwrap();
        assert!(first.converged);
        let again = jtsbo_from(&s, &weights(), &k, &sch, &cfg, first.h_star.unwrap(), first.n_star as f64).unwrap();
        assert_eq!(again.iterations, 1);
        assert!(again.converged);
        assert_eq!(again.n_star, first.n_star);
    }

    #[test]
    fn jtsbo_projects_infeasible_start() {
        let s = source();
        let k = link(15.0);
        let sch = SchemeConfig::asyn(0.15, 0.005, 5, 0);
        let r = jtsbo_from(&s, &weights(), &k, &sch, &OptimizerConfig::default(), 1.0, 5000.0).unwrap();
        assert!(r.projected_start);
        let tau = r.n_star as f64 * 1e-4;
        assert!(tau + 4.0 * r.h_star.unwrap() <= 0.15 + 1e-12);
    }

    #[test]
    fn config_validation() {
        let bad = OptimizerConfig { max_iterations: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig { n_min: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig { tol_h: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn jtsbo_never_increases(
            t_ms in 40.0f64..300.0,
            db in 0.0f64..20.0,
            a in 0.5f64..6.0,
            m in 2usize..6,
        ) {
            let s = SourceParams::new(1.0, 5.0, a, 0.01).unwrap();
            let w = SpatialWeights::uniform(m, 0, 0.5).unwrap();
            let k = link(db);
            let sch = SchemeConfig::asyn(t_ms / 1e3, 1e-4, m, 0);
            let cfg = OptimizerConfig::default();
            let r = jtsbo(&s, &w, &k, &sch, &cfg).unwrap();
            for pair in r.trace.windows(2) {
                proptest::prop_assert!(pair[1].mse <= pair[0].mse + 1e-15);
            }
            let h = r.h_star.unwrap();
            proptest::prop_assert!(r.n_star as f64 * 1e-4 + (m - 1) as f64 * h <= sch.period_s * (1.0 + 1e-9));
            let direct = objective_at(&s, &w, &k, &sch, r.n_star as f64, h, cfg.eval_model).unwrap();
            proptest::prop_assert!((direct - r.mse_star.value).abs() <= 1e-12);
        }
    }
}
