mod common;

use common::*;
use recon_core::analytic::{self, SchemeConfig};
use recon_core::model::{self, SourceParams};
use recon_core::simulate::{self, DataLevelConfig, SimConfig, SuccessModel};
use recon_core::spt::BlepModel;

#[test]
fn single_interval_matches_closed_form() {
    let s = SourceParams::new(1.0, 5.0, 2.0, 0.01).unwrap();
    for (r, age) in [(0.0, 0.0), (4.0, 0.05), (12.0, 0.3)] {
        let (mean, se) = simulate::single_interval_mse(&s, r, age, 200_000, 3).unwrap();
        let exact = 1.0 - 5.0 / 6.0 * (-2.0 * 2.0 * age - 2.0 * 0.01 * r).exp();
        assert!((mean - exact).abs() / exact < 0.02, "r={r} age={age}: {mean} vs {exact}");
        assert!((mean - exact).abs() < 4.0 * se);
    }
}

#[test]
fn data_level_agrees_with_event_level() {
    let s = source();
    let f = model::place_sensors(3, HALF_WIDTH_M, 0.01, FIELD_SEED).unwrap();
    let k = link();
    for sch in [
        SchemeConfig::for_field(analytic::Scheme::SynInfer, PERIOD_S, 0.0, &f),
        SchemeConfig::for_field(analytic::Scheme::AsynInfer, PERIOD_S, 0.02, &f),
    ] {
        let cfg = DataLevelConfig {
            periods: 50,
            draws: 1000,
            grid_per_period: 20,
            seed: 11,
            success: SuccessModel::Segmented,
        };
        let d = simulate::simulate_data_level(&s, &f, &k, &sch, &cfg).unwrap();
        let z = (d.report.avg_mse - d.grid_expectation) / d.report.stderr;
        assert!(z.abs() < 3.0, "{}: z {z}", sch.scheme);
        // The midpoint grid is fine enough to stand in for the time integral.
        let rel = (d.grid_expectation - d.event_level.avg_mse).abs() / d.event_level.avg_mse;
        assert!(rel < 0.01, "{}: grid vs event-level {rel}", sch.scheme);
    }
}

#[test]
fn sensors_fail_at_the_same_rate() {
    let (s, w, k) = (source(), weights(), link());
    let cfg = SimConfig::new(20_000, 5);
    let (_, trace) = simulate::simulate_with_trace(&s, &w, &k, &syn(), &cfg).unwrap();
    let mut sent = [0u64; SENSORS];
    let mut lost = [0u64; SENSORS];
    for e in &trace {
        sent[e.sensor] += 1;
        lost[e.sensor] += u64::from(!e.success);
    }
    let eps = recon_core::spt::blep_average(&k);
    for m in 0..SENSORS {
        assert_eq!(sent[m], 20_000);
        let p = lost[m] as f64 / sent[m] as f64;
        let se = (eps * (1.0 - eps) / sent[m] as f64).sqrt();
        assert!((p - eps).abs() < 4.0 * se, "sensor {m}: {p} vs {eps}");
    }
}

#[test]
fn inter_update_law() {
    let s = source();
    let w = weights();
    let k = link();
    let eps = 0.6;
    for sch in [syn(), asyn(0.01)] {
        let cfg = SimConfig::new(40_000, 9).with_success(SuccessModel::Bernoulli(eps));
        let r = simulate::simulate_event_level(&s, &w, &k, &sch, &cfg).unwrap();
        let a = simulate::inter_update_stats(&r, &s, &sch, eps).unwrap();
        let n = r.aux.as_ref().unwrap().intervals as f64;
        assert!((a.mean_interval_s - a.expected_interval_s).abs() / a.expected_interval_s < 0.02);
        if let Some(e) = a.expected_exp_decay {
            assert!((a.mean_exp_decay - e).abs() / e < 0.02);
        }
        for (row_e, row_x) in a.residue_probabilities.iter().zip(&a.expected_residue_probabilities).take(3) {
            for (p, q) in row_e.iter().zip(row_x) {
                let se = (q * (1.0 - q) / n).sqrt();
                assert!((p - q).abs() < 4.0 * se + 1e-12, "{}: {p} vs {q}", sch.scheme);
            }
        }
    }
}

#[test]
fn segmented_sampling_matches_analytic_mean() {
    let (s, w, k) = (source(), weights(), link());
    let cfg = SimConfig::new(5_000, 21).with_replicas(4);
    let r = simulate::simulate_event_level(&s, &w, &k, &asyn(0.01), &cfg).unwrap();
    let exact = analytic::mse(&s, &w, &k, &asyn(0.01), BlepModel::Segmented).unwrap().value;
    assert!(r.z_score(exact).abs() < 4.0, "z {}", r.z_score(exact));
}
