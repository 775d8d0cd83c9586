use rand::SeedableRng;
use rand_distr::{Distribution, Exp1};
use recon_core::rng::ChaCha8Rng;
use recon_core::spt::{self, LinkParams};
use serde::Deserialize;

#[derive(Deserialize)]
struct Row {
    info_bits: f64,
    blocklength: f64,
    mean_snr_db: f64,
    blep_segmented_avg: f64,
    blep_qform_avg: f64,
}

fn reference() -> Vec<Row> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/blep_reference.csv");
    csv::Reader::from_path(path).unwrap().deserialize().map(|r| r.unwrap()).collect()
}

fn link(r: &Row) -> LinkParams {
    LinkParams::new(r.info_bits, r.blocklength, 1e-4, spt::db_to_linear(r.mean_snr_db)).unwrap()
}

// Reference values come from adaptive quadrature of the fading average.
#[test]
fn average_blep_matches_quadrature() {
    let rows = reference();
    assert_eq!(rows.len(), 95);
    for r in &rows {
        let got = spt::blep_average(&link(r));
        assert!(
            (got - r.blep_segmented_avg).abs() < 1e-10,
            "L={} N={} {}dB: {got} vs {}",
            r.info_bits,
            r.blocklength,
            r.mean_snr_db,
            r.blep_segmented_avg
        );
    }
}

#[test]
fn segmented_fit_tracks_normal_approximation() {
    let worst = reference()
        .iter()
        .map(|r| (r.blep_segmented_avg - r.blep_qform_avg).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.01, "largest gap {worst}");
}

#[test]
fn average_blep_matches_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (l, n, db) in [(160.0, 80.0, 5.0), (160.0, 120.0, 15.0), (80.0, 40.0, 10.0)] {
        let k = LinkParams::new(l, n, 1e-4, spt::db_to_linear(db)).unwrap();
        let draws = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..draws {
            let e: f64 = Exp1.sample(&mut rng);
            let p = spt::blep_segmented(&k, k.mean_snr * e).unwrap();
            sum += p;
            sum2 += p * p;
        }
        let mean = sum / draws as f64;
        let se = ((sum2 / draws as f64 - mean * mean) / draws as f64).sqrt();
        let exact = spt::blep_average(&k);
        assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} (se {se})");
    }
}

#[test]
fn slope_sign_flag_below_pi() {
    let k = LinkParams::new(3.0, 40.0, 1e-4, 10.0).unwrap();
    assert!(!spt::dblep_dn(&k).sign_guaranteed);
    let k = LinkParams::new(4.0, 40.0, 1e-4, 10.0).unwrap();
    assert!(spt::dblep_dn(&k).sign_guaranteed);
}
