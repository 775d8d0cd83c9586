use recon_core::model::{self, SourceParams};

// Expected distance between two uniform points in a square of side `s`,
// from the density of the coordinate differences 2(s - u)/s^2 on [0, s].
fn expected_distance(s: f64) -> f64 {
    let n = 400;
    let h = s / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let u = (i as f64 + 0.5) * h;
        for j in 0..n {
            let v = (j as f64 + 0.5) * h;
            acc += (u * u + v * v).sqrt() * 4.0 * (s - u) * (s - v) / s.powi(4);
        }
    }
    acc * h * h
}

#[test]
fn mean_pairwise_distance() {
    let oracle = expected_distance(20.0);
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for seed in 0..10_000u64 {
        let f = model::place_sensors(5, 10.0, 0.01, seed).unwrap();
        for i in 0..5 {
            for j in (i + 1)..5 {
                sum += f.distance(i, j);
                pairs += 1;
            }
        }
    }
    let mean = sum / pairs as f64;
    assert!((mean - oracle).abs() / oracle < 0.01, "{mean} vs {oracle}");
}

#[test]
fn mssc_is_the_mean_squared_factor() {
    let s = SourceParams::new(1.0, 5.0, 2.0, 0.03).unwrap();
    for seed in 0..50 {
        let f = model::place_sensors(5, 10.0, 0.01, seed).unwrap();
        let pos = f.positions();
        let t = &pos[f.target()];
        let mut direct = 0.0;
        for (n, p) in pos.iter().enumerate() {
            if n != f.target() {
                let r = ((p.x_m - t.x_m).powi(2) + (p.y_m - t.y_m).powi(2)).sqrt();
                direct += (-2.0 * 0.03 * r).exp();
            }
        }
        direct /= 4.0;
        assert!((model::mssc(&s, &f).unwrap() - direct).abs() < 1e-14);
    }
}

#[test]
fn single_sensor_field() {
    let f = model::place_sensors(1, 3.0, 0.1, 9).unwrap();
    assert_eq!(f.distance_matrix(), vec![vec![0.0]]);
    let s = SourceParams::new(1.0, 5.0, 2.0, 0.01).unwrap();
    assert!(model::mssc(&s, &f).is_err());
}
