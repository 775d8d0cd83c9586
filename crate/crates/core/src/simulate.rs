//! Monte Carlo oracles for the closed forms.
//!
//! The event-level simulator replays packet successes and failures and
//! integrates the instantaneous MSE exactly between receptions. The
//! data-level simulator draws the Gaussian field itself and applies the
//! linear MMSE reconstruction.

use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{Scheme, SchemeConfig, SpatialWeights};
use crate::error::{invalid, Error, Result};
use crate::model::{CorrelationQuery, JointGaussian, SensorField, SourceParams};
use crate::rng::{self, ChaCha8Rng, Purpose};
use crate::spt::{self, LinkParams};

/// Largest joint covariance the data-level oracle will factorize.
pub const DATA_LEVEL_MAX_ENTRIES: usize = 2000;

/// How a transmission's success is decided.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SuccessModel {
    /// `1 - blep_segmented(gamma_r)`.
    #[default]
    Segmented,
    /// `1 - Q(...)` with the instantaneous SNR.
    QForm,
    /// Fixed loss probability, ignoring the channel draw.
    Bernoulli(f64),
    AlwaysSucceed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Periods per replica.
    pub periods: u64,
    pub replicas: u64,
    pub seed: u64,
    pub success: SuccessModel,
    /// Batches per replica for the batch-means standard error.
    pub batches: u64,
}

impl SimConfig {
    pub fn new(periods: u64, seed: u64) -> Self {
        Self {
            periods,
            replicas: 1,
            seed,
            success: SuccessModel::Segmented,
            batches: 50,
        }
    }

    pub fn with_replicas(mut self, replicas: u64) -> Self {
        self.replicas = replicas;
        self
    }

    pub fn with_success(mut self, success: SuccessModel) -> Self {
        self.success = success;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.periods == 0 {
            return Err(invalid("at least one period is required"));
        }
        if self.replicas == 0 {
            return Err(invalid("at least one replica is required"));
        }
        if self.batches == 0 {
            return Err(invalid("at least one batch is required"));
        }
        if let SuccessModel::Bernoulli(p) = self.success {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("loss probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransmissionEvent {
    pub period: u64,
    pub sensor: usize,
    pub t_start_s: f64,
    pub gamma_r: f64,
    pub success: bool,
}

/// Inter-update statistics.
///
/// Under syn an update is a period with at least one success; under asyn
/// every successful packet is an update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuxStats {
    pub intervals: u64,
    pub sum_interval_s: f64,
    pub sum_exp_decay: f64,
    /// Counts of transmission slots between consecutive updates, index 0
    /// holding a gap of one slot. The last bin collects the tail.
    pub skip_counts: Vec<u64>,
}

const SKIP_BINS: usize = 64;

impl AuxStats {
    fn new() -> Self {
        Self {
            skip_counts: vec![0; SKIP_BINS],
            ..Default::default()
        }
    }

    /// Empirical `E[D]`.
    pub fn mean_interval_s(&self) -> f64 {
        self.sum_interval_s / self.intervals as f64
    }

    /// Empirical `E[e^{-2aD}]`.
    pub fn mean_exp_decay(&self) -> f64 {
        self.sum_exp_decay / self.intervals as f64
    }

    fn merge(&mut self, other: &AuxStats) {
        self.intervals += other.intervals;
        self.sum_interval_s += other.sum_interval_s;
        self.sum_exp_decay += other.sum_exp_decay;
        if self.skip_counts.len() < other.skip_counts.len() {
            self.skip_counts.resize(other.skip_counts.len(), 0);
        }
        for (a, b) in self.skip_counts.iter_mut().zip(&other.skip_counts) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub avg_mse: f64,
    pub stderr: f64,
    pub periods: u64,
    /// Seconds over which the average was taken.
    pub horizon_s: f64,
    pub aux: Option<AuxStats>,
    integral: f64,
    batch_means: Vec<f64>,
}

impl SimReport {
    fn from_parts(integral: f64, horizon_s: f64, periods: u64, batch_means: Vec<f64>, aux: Option<AuxStats>) -> Self {
        let avg_mse = if horizon_s > 0.0 { integral / horizon_s } else { f64::NAN };
        Self {
            avg_mse,
            stderr: batch_stderr(&batch_means),
            periods,
            horizon_s,
            aux,
            integral,
            batch_means,
        }
    }

    /// Time-weighted combination of runs over disjoint horizons.
    pub fn merge(reports: &[SimReport]) -> Result<SimReport> {
        let first = reports.first().ok_or_else(|| invalid("nothing to merge"))?;
        let mut integral = 0.0;
        let mut horizon = 0.0;
        let mut periods = 0;
        let mut batches = Vec::new();
        let mut aux = first.aux.as_ref().map(|_| AuxStats::new());
        for r in reports {
            integral += r.integral;
            horizon += r.horizon_s;
            periods += r.periods;
            batches.extend_from_slice(&r.batch_means);
            if let (Some(acc), Some(x)) = (aux.as_mut(), r.aux.as_ref()) {
                acc.merge(x);
            }
        }
        Ok(Self::from_parts(integral, horizon, periods, batches, aux))
    }

    pub fn z_score(&self, analytic: f64) -> f64 {
        (self.avg_mse - analytic) / self.stderr
    }
}

fn batch_stderr(means: &[f64]) -> f64 {
    let means: Vec<f64> = means.iter().copied().filter(|m| m.is_finite()).collect();
    let k = means.len();
    if k < 2 {
        return f64::NAN;
    }
    let mean = means.iter().sum::<f64>() / k as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (var / k as f64).sqrt()
}

/// Latest information at the fusion center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverState {
    /// Sensor whose sample is in use.
    pub sensor: usize,
    /// Generation time of that sample.
    pub generated_s: f64,
}

/// `∫ σ²(1 - A f e^{-2a(t-u)}) dt` over `[t0, t1]`.
fn interval_integral(source: &SourceParams, factor: f64, u: f64, t0: f64, t1: f64) -> f64 {
    let a = source.a_per_s;
    let decay = (-2.0 * a * (t0 - u)).exp() * -(-2.0 * a * (t1 - t0)).exp_m1();
    source.sigma2_x * ((t1 - t0) - source.observation_gain() * factor * decay / (2.0 * a))
}

/// Resumable event-level simulation of one replica.
///
/// Period `k` covers `[kT + tau, (k+1)T + tau)`, which holds every
/// reception of that period. The average starts at the first reception.
#[derive(Debug, Clone)]
pub struct EventSimulator {
    source: SourceParams,
    factors: Vec<f64>,
    lanes: Vec<usize>,
    link: LinkParams,
    scheme: SchemeConfig,
    success: SuccessModel,
    streams: Vec<ChaCha8Rng>,
    next_period: u64,
    state: Option<ReceiverState>,
    last_update: Option<(f64, u64)>,
    slot: u64,
}

impl EventSimulator {
    pub fn new(
        source: &SourceParams,
        weights: &SpatialWeights,
        link: &LinkParams,
        scheme: &SchemeConfig,
        cfg: &SimConfig,
        replica: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        scheme.validate(link)?;
        let (factors, lanes) = match scheme.scheme {
            Scheme::NoInfer => (vec![1.0], vec![scheme.target]),
            _ => {
                if weights.len() != scheme.sensors || weights.target() != scheme.target {
                    return Err(invalid("weights do not match the scheme's sensors or target"));
                }
                (weights.factors().to_vec(), (0..weights.len()).collect())
            }
        };
        let streams = lanes
            .iter()
            .map(|&l| rng::stream(cfg.seed, Purpose::Channel, replica, l as u64))
            .collect();
        Ok(Self {
            source: *source,
            factors,
            lanes,
            link: *link,
            scheme: *scheme,
            success: cfg.success,
            streams,
            next_period: 0,
            state: None,
            last_update: None,
            slot: 0,
        })
    }

    pub fn state(&self) -> Option<ReceiverState> {
        self.state
    }

    fn draw(&mut self, idx: usize) -> Result<(f64, bool)> {
        let rng = &mut self.streams[idx];
        let e: f64 = rng.sample(Exp1);
        let u: f64 = rng.random();
        let gamma = self.link.mean_snr * e;
        let loss = match self.success {
            SuccessModel::Segmented => {
                if gamma > 0.0 {
                    spt::blep_segmented(&self.link, gamma)?
                } else {
                    1.0
                }
            }
            SuccessModel::QForm => {
                if gamma > 0.0 {
                    spt::blep_instantaneous(&self.link, gamma)?
                } else {
                    1.0
                }
            }
            SuccessModel::Bernoulli(p) => p,
            SuccessModel::AlwaysSucceed => 0.0,
        };
        Ok((gamma, u >= loss))
    }

    fn record_update(&mut self, t: f64, aux: &mut AuxStats) {
        if let Some((prev, prev_slot)) = self.last_update {
            let d = t - prev;
            aux.intervals += 1;
            aux.sum_interval_s += d;
            aux.sum_exp_decay += (-2.0 * self.source.a_per_s * d).exp();
            let skip = (self.slot - prev_slot) as usize;
            let bin = skip.saturating_sub(1).min(aux.skip_counts.len() - 1);
            aux.skip_counts[bin] += 1;
        }
        self.last_update = Some((t, self.slot));
    }

    /// Advances `periods` periods, optionally logging every transmission.
    pub fn run(&mut self, periods: u64, batches: u64, mut trace: Option<&mut Vec<TransmissionEvent>>) -> Result<SimReport> {
        let t_period = self.scheme.period_s;
        let tau = self.link.delay_s();
        let syn = self.scheme.scheme != Scheme::AsynInfer;
        let h = self.scheme.time_shift_s;
        let per_batch = periods.div_ceil(batches.max(1)).max(1);
        let mut aux = AuxStats::new();
        let (mut integral, mut horizon) = (0.0, 0.0);
        let (mut b_int, mut b_hor) = (0.0, 0.0);
        let mut batch_means = Vec::new();
        let source = self.source;
        for i in 0..periods {
            let k = self.next_period;
            self.next_period += 1;
            let t_k = k as f64 * t_period;
            let window_end = t_k + t_period + tau;
            let mut cursor = t_k + tau;
            let mut period_int = 0.0;
            let mut period_hor = 0.0;
            let mut integrate = |state: Option<ReceiverState>, factors: &[f64], from: f64, to: f64| {
                if let Some(s) = state {
                    period_int += interval_integral(&source, factors[s.sensor], s.generated_s, from, to);
                    period_hor += to - from;
                }
            };
            if syn {
                let mut best: Option<usize> = None;
                for idx in 0..self.lanes.len() {
                    let (gamma, ok) = self.draw(idx)?;
                    if let Some(tr) = trace.as_deref_mut() {
                        tr.push(TransmissionEvent {
                            period: k,
                            sensor: self.lanes[idx],
                            t_start_s: t_k,
                            gamma_r: gamma,
                            success: ok,
                        });
                    }
                    if ok && best.is_none_or(|b| self.factors[idx] > self.factors[b]) {
                        best = Some(idx);
                    }
                }
                self.slot += 1;
                if let Some(b) = best {
                    self.state = Some(ReceiverState { sensor: b, generated_s: t_k });
                    self.record_update(cursor, &mut aux);
                }
                integrate(self.state, &self.factors, cursor, window_end);
            } else {
                for idx in 0..self.lanes.len() {
                    let start = t_k + idx as f64 * h;
                    let (gamma, ok) = self.draw(idx)?;
                    if let Some(tr) = trace.as_deref_mut() {
                        tr.push(TransmissionEvent {
                            period: k,
                            sensor: self.lanes[idx],
                            t_start_s: start,
                            gamma_r: gamma,
                            success: ok,
                        });
                    }
                    self.slot += 1;
                    if ok {
                        let arrival = start + tau;
                        integrate(self.state, &self.factors, cursor, arrival);
                        cursor = arrival;
                        self.state = Some(ReceiverState { sensor: idx, generated_s: start });
                        self.record_update(arrival, &mut aux);
                    }
                }
                integrate(self.state, &self.factors, cursor, window_end);
            }
            integral += period_int;
            horizon += period_hor;
            b_int += period_int;
            b_hor += period_hor;
            if (i + 1) % per_batch == 0 || i + 1 == periods {
                if b_hor > 0.0 {
                    batch_means.push(b_int / b_hor);
                }
                b_int = 0.0;
                b_hor = 0.0;
            }
        }
        Ok(SimReport::from_parts(integral, horizon, periods, batch_means, Some(aux)))
    }
}

/// Time-averaged MSE by packet replay, with replicas run in parallel and
/// merged in replica order.
pub fn simulate_event_level(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    cfg: &SimConfig,
) -> Result<SimReport> {
    cfg.validate()?;
    let reports: Vec<SimReport> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| EventSimulator::new(source, weights, link, scheme, cfg, r)?.run(cfg.periods, cfg.batches, None))
        .collect::<Result<_>>()?;
    SimReport::merge(&reports)
}

/// Single-replica run that also returns every transmission.
pub fn simulate_with_trace(
    source: &SourceParams,
    weights: &SpatialWeights,
    link: &LinkParams,
    scheme: &SchemeConfig,
    cfg: &SimConfig,
) -> Result<(SimReport, Vec<TransmissionEvent>)> {
    let mut sim = EventSimulator::new(source, weights, link, scheme, cfg, 0)?;
    let mut trace = Vec::new();
    let report = sim.run(cfg.periods, cfg.batches, Some(&mut trace))?;
    Ok((report, trace))
}

pub fn write_trace<W: Write>(w: W, trace: &[TransmissionEvent]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for e in trace {
        out.serialize(e)?;
    }
    out.flush()?;
    Ok(())
}

/// Empirical inter-update law next to its closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct InterUpdateStats {
    pub mean_interval_s: f64,
    pub expected_interval_s: f64,
    pub mean_exp_decay: f64,
    /// Closed form for `E[e^{-2aD}]`; only available under syn.
    pub expected_exp_decay: Option<f64>,
    /// Empirical `Pr{z full rounds, i further slots}` indexed `[z][i-1]`.
    pub residue_probabilities: Vec<Vec<f64>>,
    /// `eps^{zM} eps^{i-1} (1 - eps)` on the same index.
    pub expected_residue_probabilities: Vec<Vec<f64>>,
}

/// Compares a report's inter-update statistics with their closed forms at
/// average BLEP `eps`.
pub fn inter_update_stats(
    report: &SimReport,
    source: &SourceParams,
    scheme: &SchemeConfig,
    eps: f64,
) -> Result<InterUpdateStats> {
    let aux = report
        .aux
        .as_ref()
        .ok_or_else(|| invalid("report carries no inter-update statistics"))?;
    if aux.intervals == 0 {
        return Err(invalid("no inter-update intervals were observed"));
    }
    let t = scheme.period_s;
    let m = scheme.effective_sensors();
    let c = (-2.0 * source.a_per_s * t).exp();
    let (expected_interval_s, expected_exp_decay, slots_per_round, p_slot) = match scheme.scheme {
        Scheme::AsynInfer => (t / (m as f64 * (1.0 - eps)), None, m, eps),
        _ => {
            let pm = eps.powi(m as i32);
            (t / (1.0 - pm), Some((1.0 - pm) * c / (1.0 - c * pm)), 1, pm)
        }
    };
    let rounds = (aux.skip_counts.len() - 1) / slots_per_round;
    let total = aux.intervals as f64;
    let mut emp = Vec::with_capacity(rounds);
    let mut exp = Vec::with_capacity(rounds);
    for z in 0..rounds {
        let mut row_e = Vec::with_capacity(slots_per_round);
        let mut row_x = Vec::with_capacity(slots_per_round);
        for i in 1..=slots_per_round {
            let skip = z * slots_per_round + i;
            row_e.push(aux.skip_counts[skip - 1] as f64 / total);
            row_x.push(p_slot.powi(skip as i32 - 1) * (1.0 - p_slot));
        }
        emp.push(row_e);
        exp.push(row_x);
    }
    Ok(InterUpdateStats {
        mean_interval_s: aux.mean_interval_s(),
        expected_interval_s,
        mean_exp_decay: aux.mean_exp_decay(),
        expected_exp_decay,
        residue_probabilities: emp,
        expected_residue_probabilities: exp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataLevelConfig {
    pub periods: u64,
    /// Independent field realizations over the same reception pattern.
    pub draws: u64,
    /// Evaluation instants per period, at sub-interval midpoints.
    pub grid_per_period: usize,
    pub seed: u64,
    pub success: SuccessModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataLevelReport {
    pub report: SimReport,
    /// Event-level average on the same reception pattern.
    pub event_level: SimReport,
    /// Expected squared error at the evaluation instants given the pattern.
    pub grid_expectation: f64,
}

/// Draws the field at every generation time and every evaluation instant
/// and scores the linear MMSE reconstruction.
pub fn simulate_data_level(
    source: &SourceParams,
    field: &SensorField,
    link: &LinkParams,
    scheme: &SchemeConfig,
    cfg: &DataLevelConfig,
) -> Result<DataLevelReport> {
    if cfg.draws < 2 || cfg.grid_per_period == 0 {
        return Err(invalid("data-level runs need at least two draws and one grid point per period"));
    }
    let weights = SpatialWeights::from_field(field, source.b_per_m);
    let sim_cfg = SimConfig {
        periods: cfg.periods,
        replicas: 1,
        seed: cfg.seed,
        success: cfg.success,
        batches: 1,
    };
    let (event_level, trace) = simulate_with_trace(source, &weights, link, scheme, &sim_cfg)?;
    let tau = link.delay_s();

    // Updates in arrival order: (arrival, sensor, generation).
    let mut updates: Vec<(f64, usize, f64)> = Vec::new();
    let syn = scheme.scheme != Scheme::AsynInfer;
    for period in trace.chunk_by(|a, b| a.period == b.period) {
        if syn {
            let best = period
                .iter()
                .filter(|e| e.success)
                .max_by(|a, b| {
                    weights.factors()[a.sensor]
                        .total_cmp(&weights.factors()[b.sensor])
                        .then(b.sensor.cmp(&a.sensor))
                });
            if let Some(e) = best {
                updates.push((e.t_start_s + tau, e.sensor, e.t_start_s));
            }
        } else {
            for e in period.iter().filter(|e| e.success) {
                updates.push((e.t_start_s + tau, e.sensor, e.t_start_s));
            }
        }
    }
    let Some(&(first, _, _)) = updates.first() else {
        return Err(invalid("no packet was received; nothing to reconstruct"));
    };

    let t = scheme.period_s;
    let end = cfg.periods as f64 * t + tau;
    let step = t / cfg.grid_per_period as f64;
    let grid: Vec<f64> = (0..cfg.periods as usize * cfg.grid_per_period)
        .map(|i| tau + (i as f64 + 0.5) * step)
        .filter(|&g| g >= first && g < end)
        .collect();
    let entries = updates.len() + grid.len();
    if entries > DATA_LEVEL_MAX_ENTRIES {
        return Err(Error::ScaleLimit {
            requested: entries,
            limit: DATA_LEVEL_MAX_ENTRIES,
        });
    }
    let target = scheme.target;
    let mut points: Vec<(usize, f64)> = updates.iter().map(|&(_, s, u)| (s, u)).collect();
    points.extend(grid.iter().map(|&g| (target, g)));
    let law = JointGaussian::new(source, field, &points)?;

    // Estimator coefficient per grid point, from the latest update.
    let gain = source.observation_gain();
    let mut coef = Vec::with_capacity(grid.len());
    let mut expect = 0.0;
    let mut cur = 0;
    for &g in &grid {
        while cur + 1 < updates.len() && updates[cur + 1].0 <= g {
            cur += 1;
        }
        let (_, s, u) = updates[cur];
        let rho = crate::model::correlation(
            source,
            field,
            &CorrelationQuery { sensor_i: target, sensor_j: s, dt_s: g - u },
        )?;
        coef.push((cur, gain * rho));
        expect += source.sigma2_x * (1.0 - gain * rho * rho);
    }
    let grid_expectation = expect / grid.len() as f64;

    let offset = updates.len();
    let per_draw: Vec<f64> = (0..cfg.draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = rng::stream(cfg.seed, Purpose::Field, d, 0);
            let s = law.sample(&mut rng);
            let se: f64 = coef
                .iter()
                .enumerate()
                .map(|(i, &(u, c))| (s.x[offset + i] - c * s.y[u]).powi(2))
                .sum();
            se / grid.len() as f64
        })
        .collect();
    let n = per_draw.len() as f64;
    let mean = per_draw.iter().sum::<f64>() / n;
    let horizon = grid.len() as f64 * step;
    let mut report = SimReport::from_parts(mean * horizon, horizon, cfg.periods, Vec::new(), None);
    let var = per_draw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    report.stderr = (var / n).sqrt();
    Ok(DataLevelReport { report, event_level, grid_expectation })
}

/// Mean squared error of reconstructing one sensor from a sample of
/// another taken `age_s` earlier, over `draws` field realizations.
/// Returns the mean and its standard error.
pub fn single_interval_mse(
    source: &SourceParams,
    distance_m: f64,
    age_s: f64,
    draws: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    use crate::model::Position;
    let field = SensorField::new(vec![Position::new(0.0, 0.0), Position::new(distance_m, 0.0)], 0)?;
    let law = JointGaussian::new(source, &field, &[(1, 0.0), (0, age_s)])?;
    let rho = crate::model::correlation(source, &field, &CorrelationQuery { sensor_i: 0, sensor_j: 1, dt_s: age_s })?;
    let c = source.observation_gain() * rho;
    let mut rng = rng::stream(seed, Purpose::Field, 0, 0);
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..draws {
        let s = law.sample(&mut rng);
        let e = (s.x[1] - c * s.y[0]).powi(2);
        sum += e;
        sum2 += e * e;
    }
    let n = draws as f64;
    let mean = sum / n;
    Ok((mean, ((sum2 / n - mean * mean) / (n - 1.0)).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;
    use crate::spt::BlepModel;

    fn source() -> SourceParams {
        SourceParams::new(1.0, 5.0, 2.0, 0.01).unwrap()
    }

    fn link() -> LinkParams {
        LinkParams::new(160.0, 80.0, 1e-4, spt::db_to_linear(5.0)).unwrap()
    }

    fn weights() -> SpatialWeights {
        SpatialWeights::from_factors(vec![1.0, 0.8, 0.6, 0.5, 0.3], 0).unwrap()
    }

    #[test]
    fn always_success_single_sensor_is_exact() {
        let s = source();
        let sch = SchemeConfig::no_infer(0.15);
        let cfg = SimConfig::new(200, 1).with_success(SuccessModel::AlwaysSucceed);
        let r = simulate_event_level(&s, &SpatialWeights::single(), &link(), &sch, &cfg).unwrap();
        let op = analytic::OperatingPoint { delay_s: link().delay_s(), blep: 0.0 };
        let exact = analytic::mse_at(&s, &SpatialWeights::single(), &sch, op).unwrap().value;
        assert!((r.avg_mse - exact).abs() < 1e-9, "{} vs {exact}", r.avg_mse);
    }

    #[test]
    fn fixed_loss_matches_closed_forms() {
        let s = source();
        let w = weights();
        let w2 = SpatialWeights::from_factors(vec![0.5, 0.8, 1.0, 0.6, 0.3], 2).unwrap();
        for (sch, eps, w) in [
            (SchemeConfig::syn(0.15, 5, 0), 0.4, &w),
            (SchemeConfig::asyn(0.15, 0.02, 5, 0), 0.4, &w),
            (SchemeConfig::asyn(0.15, 0.03, 5, 2), 0.7, &w2),
        ] {
            let cfg = SimConfig::new(20_000, 7).with_success(SuccessModel::Bernoulli(eps)).with_replicas(4);
            let r = simulate_event_level(&s, w, &link(), &sch, &cfg).unwrap();
            let op = analytic::OperatingPoint { delay_s: link().delay_s(), blep: eps };
            let exact = analytic::mse_at(&s, w, &sch, op).unwrap().value;
            assert!(r.z_score(exact).abs() < 4.0, "{:?}: {} vs {exact} ({})", sch.scheme, r.avg_mse, r.stderr);
        }
    }

    #[test]
    fn horizon_partition_is_invisible() {
        let s = source();
        let sch = SchemeConfig::asyn(0.15, 0.005, 5, 0);
        let cfg = SimConfig::new(1000, 3);
        let mut whole = EventSimulator::new(&s, &weights(), &link(), &sch, &cfg, 0).unwrap();
        let full = whole.run(1000, 10, None).unwrap();
        let mut split = EventSimulator::new(&s, &weights(), &link(), &sch, &cfg, 0).unwrap();
        let a = split.run(500, 5, None).unwrap();
        let b = split.run(500, 5, None).unwrap();
        let merged = SimReport::merge(&[a, b]).unwrap();
        assert!((merged.avg_mse - full.avg_mse).abs() < 1e-12);
        let (x, y) = (merged.aux.unwrap(), full.aux.unwrap());
        assert_eq!((x.intervals, &x.skip_counts), (y.intervals, &y.skip_counts));
        assert!((x.sum_exp_decay - y.sum_exp_decay).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_bits() {
        let s = source();
        let sch = SchemeConfig::syn(0.15, 5, 0);
        let cfg = SimConfig::new(500, 11).with_replicas(3);
        let a = simulate_event_level(&s, &weights(), &link(), &sch, &cfg).unwrap();
        let b = simulate_event_level(&s, &weights(), &link(), &sch, &cfg).unwrap();
        assert_eq!(a.avg_mse.to_bits(), b.avg_mse.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn lossless_asyn_intervals() {
        let s = source();
        let sch = SchemeConfig::asyn(0.15, 0.02, 5, 0);
        let cfg = SimConfig::new(100, 1).with_success(SuccessModel::AlwaysSucceed);
        let r = simulate_event_level(&s, &weights(), &link(), &sch, &cfg).unwrap();
        let stats = inter_update_stats(&r, &s, &sch, 0.0).unwrap();
        // 499 gaps: every period minus the final wrap of 0.07 s.
        assert!((stats.mean_interval_s - (100.0 * 0.15 - 0.07) / 499.0).abs() < 1e-12);
        assert_eq!(r.aux.as_ref().unwrap().skip_counts[0], r.aux.as_ref().unwrap().intervals);
    }

    #[test]
    fn segmented_draws_average_to_eq2() {
        let s = source();
        let sch = SchemeConfig::syn(0.15, 5, 0);
        let cfg = SimConfig::new(20_000, 5);
        let (_, trace) = simulate_with_trace(&s, &weights(), &link(), &sch, &cfg).unwrap();
        let lost = trace.iter().filter(|e| !e.success).count() as f64 / trace.len() as f64;
        let eps = spt::blep_average_with(&link(), BlepModel::Segmented);
        let se = (eps * (1.0 - eps) / trace.len() as f64).sqrt();
        assert!((lost - eps).abs() < 4.0 * se);
    }

    #[test]
    fn noiseless_self_estimate() {
        let s = SourceParams::new(1.0, 1e12, 2.0, 0.01).unwrap();
        let (mse, _) = single_interval_mse(&s, 0.0, 0.0, 1000, 1).unwrap();
        assert!(mse < 1e-8);
    }

    #[test]
    fn data_level_scale_limit() {
        let s = source();
        let field = SensorField::colocated(5, 0).unwrap();
        let sch = SchemeConfig::asyn(0.15, 0.02, 5, 0);
        let cfg = DataLevelConfig {
            periods: 2000,
            draws: 10,
            grid_per_period: 1,
            seed: 1,
            success: SuccessModel::AlwaysSucceed,
        };
        let e = simulate_data_level(&s, &field, &link(), &sch, &cfg).unwrap_err();
        assert!(matches!(e, Error::ScaleLimit { .. }));
    }

    #[test]
    fn trace_csv_header() {
        let s = source();
        let sch = SchemeConfig::syn(0.15, 2, 0);
        let w = SpatialWeights::from_factors(vec![1.0, 0.5], 0).unwrap();
        let (_, trace) = simulate_with_trace(&s, &w, &link(), &sch, &SimConfig::new(2, 1)).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("period,sensor,t_start_s,gamma_r,success\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
