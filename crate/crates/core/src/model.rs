//! Stochastic source model: sensor geometry, separable spatial-temporal
//! correlation and joint Gaussian sampling.
//!
//! Units are fixed throughout the crate: seconds, meters, linear SNR.
//! Sensor indices are 0-based.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::rng::{self, ChaCha8Rng, Purpose};

/// Diagonal jitter, relative to the source variance, added before factorizing
/// a covariance assembled from the exponential kernel.
pub const COVARIANCE_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x_m: f64,
    pub y_m: f64,
}

impl Position {
    pub fn new(x_m: f64, y_m: f64) -> Self {
        Self { x_m, y_m }
    }

    pub fn distance_to(&self, other: &Position) -> f64 {
        (self.x_m - other.x_m).hypot(self.y_m - other.y_m)
    }
}

/// Sensor positions together with the target sensor whose state is
/// reconstructed. The position order doubles as the transmission order of
/// the asynchronous scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorField {
    positions: Vec<Position>,
    target: usize,
    distances: Vec<f64>,
    density_per_m2: Option<f64>,
}

impl SensorField {
    pub fn new(positions: Vec<Position>, target: usize) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid("a sensor field needs at least one sensor"));
        }
        if target >= positions.len() {
            return Err(invalid(format!(
                "target index {target} out of range for {} sensors",
                positions.len()
            )));
        }
        if positions.iter().any(|p| !p.x_m.is_finite() || !p.y_m.is_finite()) {
            return Err(invalid("sensor coordinates must be finite"));
        }
        let m = positions.len();
        let mut distances = vec![0.0; m * m];
        for i in 0..m {
            for j in (i + 1)..m {
                let r = positions[i].distance_to(&positions[j]);
                distances[i * m + j] = r;
                distances[j * m + i] = r;
            }
        }
        Ok(Self {
            positions,
            target,
            distances,
            density_per_m2: None,
        })
    }

    /// All sensors at the target's location, so every spatial factor is 1.
    pub fn colocated(count: usize, target: usize) -> Result<Self> {
        Self::new(vec![Position::new(0.0, 0.0); count], target)
    }

    pub fn with_density(mut self, density_per_m2: f64) -> Self {
        self.density_per_m2 = Some(density_per_m2);
        self
    }

    pub fn with_target(mut self, target: usize) -> Result<Self> {
        if target >= self.len() {
            return Err(invalid(format!("target index {target} out of range")));
        }
        self.target = target;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn density_per_m2(&self) -> Option<f64> {
        self.density_per_m2
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.len() + j]
    }

    /// Distance matrix as rows.
    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        self.distances.chunks(self.len()).map(|r| r.to_vec()).collect()
    }

    /// `e^{-b r_ij}`.
    pub fn spatial_factor(&self, i: usize, j: usize, b_per_m: f64) -> f64 {
        if i == j {
            return 1.0;
        }
        (-b_per_m * self.distance(i, j)).exp()
    }

    /// Squared spatial factors `e^{-2 b r_{m n}}` between the target and
    /// every sensor, in position order (the target's own entry is 1).
    pub fn squared_factors(&self, b_per_m: f64) -> Vec<f64> {
        (0..self.len())
            .map(|n| self.spatial_factor(self.target, n, b_per_m).powi(2))
            .collect()
    }

    fn mean_squared_factor(&self, b_per_m: f64) -> Result<f64> {
        let m = self.len();
        if m < 2 {
            return Err(Error::UndefinedMssc { sensors: m });
        }
        let sum: f64 = (0..m)
            .filter(|&n| n != self.target)
            .map(|n| (-2.0 * b_per_m * self.distance(self.target, n)).exp())
            .sum();
        Ok(sum / (m - 1) as f64)
    }
}

/// Source statistics shared by all sensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    /// Variance of the physical process at each sensor.
    pub sigma2_x: f64,
    /// Observation SNR `sigma2_x / sigma2_v`.
    pub gamma_o: f64,
    /// Temporal decay rate (1/s).
    pub a_per_s: f64,
    /// Spatial decay rate (1/m).
    pub b_per_m: f64,
}

impl SourceParams {
    pub fn new(sigma2_x: f64, gamma_o: f64, a_per_s: f64, b_per_m: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite();
        if !ok(sigma2_x) || sigma2_x <= 0.0 {
            return Err(invalid(format!("sigma2_x must be positive, got {sigma2_x}")));
        }
        if !ok(gamma_o) || gamma_o <= 0.0 {
            return Err(invalid(format!("gamma_o must be positive, got {gamma_o}")));
        }
        if !ok(a_per_s) || a_per_s <= 0.0 {
            return Err(invalid(format!("temporal decay a must be positive, got {a_per_s}")));
        }
        if !ok(b_per_m) || b_per_m < 0.0 {
            return Err(invalid(format!("spatial decay b must be nonnegative, got {b_per_m}")));
        }
        Ok(Self {
            sigma2_x,
            gamma_o,
            a_per_s,
            b_per_m,
        })
    }

    /// Builds the observation SNR from an explicit noise variance.
    pub fn from_noise_variance(
        sigma2_x: f64,
        sigma2_v: f64,
        a_per_s: f64,
        b_per_m: f64,
    ) -> Result<Self> {
        if !(sigma2_v.is_finite() && sigma2_v > 0.0) {
            return Err(invalid(format!("sigma2_v must be positive, got {sigma2_v}")));
        }
        Self::new(sigma2_x, sigma2_x / sigma2_v, a_per_s, b_per_m)
    }

    pub fn noise_variance(&self) -> f64 {
        self.sigma2_x / self.gamma_o
    }

    /// `gamma_o / (gamma_o + 1)`, the fraction of variance an MMSE estimate
    /// recovers from a fresh, perfectly correlated sample.
    pub fn observation_gain(&self) -> f64 {
        self.gamma_o / (self.gamma_o + 1.0)
    }

    pub fn with_spatial_decay(mut self, b_per_m: f64) -> Self {
        self.b_per_m = b_per_m;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationQuery {
    pub sensor_i: usize,
    pub sensor_j: usize,
    pub dt_s: f64,
}

/// Places `count` sensors uniformly in the square `[-w, w]^2`.
///
/// This is a homogeneous Poisson point process conditioned on its count:
/// given `count` points, HPPP locations are i.i.d. uniform over the region,
/// so the density only matters as metadata. Sensor 0 is the target.
pub fn place_sensors(
    count: usize,
    region_half_width_m: f64,
    density_per_m2: f64,
    seed: u64,
) -> Result<SensorField> {
    if count == 0 {
        return Err(invalid("sensor count must be at least 1"));
    }
    if !(region_half_width_m.is_finite() && region_half_width_m > 0.0) {
        return Err(invalid(format!(
            "region half width must be positive, got {region_half_width_m}"
        )));
    }
    let mut rng = rng::stream(seed, Purpose::Placement, 0, 0);
    let w = region_half_width_m;
    let positions = (0..count)
        .map(|_| Position::new(rng.random_range(-w..w), rng.random_range(-w..w)))
        .collect();
    Ok(SensorField::new(positions, 0)?.with_density(density_per_m2))
}

/// Density that makes `count` the expected number of points in the disc
/// inscribed in the square of half width `w`.
pub fn inscribed_disc_density(count: usize, region_half_width_m: f64) -> f64 {
    count as f64 / (std::f64::consts::PI * region_half_width_m * region_half_width_m)
}

/// `rho = e^{-a dt - b r_ij}`.
pub fn correlation(params: &SourceParams, field: &SensorField, q: &CorrelationQuery) -> Result<f64> {
    if !(q.dt_s >= 0.0) || !q.dt_s.is_finite() {
        return Err(Error::InvalidQuery(format!("time lag must be >= 0, got {}", q.dt_s)));
    }
    let m = field.len();
    if q.sensor_i >= m || q.sensor_j >= m {
        return Err(Error::InvalidQuery(format!(
            "sensor pair ({}, {}) out of range for {m} sensors",
            q.sensor_i, q.sensor_j
        )));
    }
    let r = field.distance(q.sensor_i, q.sensor_j);
    Ok((-params.a_per_s * q.dt_s - params.b_per_m * r).exp())
}

/// Mean squared spatial correlation of the target against all other sensors.
pub fn mssc(params: &SourceParams, field: &SensorField) -> Result<f64> {
    field.mean_squared_factor(params.b_per_m)
}

/// Spatial decay rate `b` at which `field` reaches the requested MSSC.
pub fn decay_for_mssc(field: &SensorField, target_mssc: f64) -> Result<f64> {
    if !(target_mssc > 0.0 && target_mssc <= 1.0) {
        return Err(invalid(format!("MSSC must lie in (0, 1], got {target_mssc}")));
    }
    let at = |b: f64| field.mean_squared_factor(b);
    if at(0.0)? <= target_mssc {
        return Ok(0.0);
    }
    let mut hi = 1e-3;
    while at(hi)? > target_mssc {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(invalid(format!(
                "MSSC {target_mssc} unreachable: some sensors share the target location"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid)? > target_mssc {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One draw of the true states `x` and the noisy observations `y = x + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Factorized joint law of `X` at a list of `(sensor, time)` points.
#[derive(Debug, Clone)]
pub struct JointGaussian {
    factor: DMatrix<f64>,
    noise_sd: f64,
}

impl JointGaussian {
    pub fn new(params: &SourceParams, field: &SensorField, points: &[(usize, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("at least one (sensor, time) point is required"));
        }
        let n = points.len();
        let mut cov = DMatrix::<f64>::zeros(n, n);
        for (i, &(si, ti)) in points.iter().enumerate() {
            for (j, &(sj, tj)) in points.iter().enumerate().take(i + 1) {
                let rho = correlation(
                    params,
                    field,
                    &CorrelationQuery {
                        sensor_i: si,
                        sensor_j: sj,
                        dt_s: (ti - tj).abs(),
                    },
                )?;
                let c = params.sigma2_x * rho;
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
            cov[(i, i)] += COVARIANCE_JITTER * params.sigma2_x;
        }
        let chol = cov.cholesky().ok_or_else(|| Error::Decomposition {
            size: n,
            detail: "covariance not positive definite after jitter; check for duplicate points"
                .into(),
        })?;
        Ok(Self {
            factor: chol.unpack(),
            noise_sd: params.noise_variance().sqrt(),
        })
    }

    pub fn len(&self) -> usize {
        self.factor.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> JointSample {
        let n = self.len();
        let z = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
        let x = &self.factor * z;
        let y = x
            .iter()
            .map(|&xi| {
                let v: f64 = rng.sample(StandardNormal);
                xi + self.noise_sd * v
            })
            .collect();
        JointSample {
            x: x.iter().copied().collect(),
            y,
        }
    }
}

/// Draws noisy samples at the given `(sensor, time)` points.
pub fn sample_joint_gaussian(
    params: &SourceParams,
    field: &SensorField,
    sample_times: &[(usize, f64)],
    seed: u64,
) -> Result<JointSample> {
    let law = JointGaussian::new(params, field, sample_times)?;
    let mut rng: ChaCha8Rng = rng::stream(seed, Purpose::Field, 0, 0);
    Ok(law.sample(&mut rng))
}

/// A field as stored on disk, with the metadata carried in its header.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRecord {
    pub field: SensorField,
    pub seed: u64,
    pub b_per_m: f64,
}

/// Writes `sensor_id, x_m, y_m` rows under a `# key = value` header.
/// Coordinates use 17 significant digits so reading them back is exact.
pub fn write_field<W: Write>(mut w: W, field: &SensorField, seed: u64, b_per_m: f64) -> Result<()> {
    writeln!(w, "# seed = {seed}")?;
    writeln!(w, "# b_per_m = {b_per_m:.16e}")?;
    writeln!(w, "# target = {}", field.target())?;
    if let Some(d) = field.density_per_m2() {
        writeln!(w, "# density_per_m2 = {d:.16e}")?;
    }
    writeln!(w, "sensor_id, x_m, y_m")?;
    for (i, p) in field.positions().iter().enumerate() {
        writeln!(w, "{i}, {:.16e}, {:.16e}", p.x_m, p.y_m)?;
    }
    Ok(())
}

pub fn read_field<R: BufRead>(r: R) -> Result<FieldRecord> {
    let mut seed = None;
    let mut b = None;
    let mut target = 0usize;
    let mut density = None;
    let mut positions = Vec::new();
    let mut seen_columns = false;
    for (idx, line) in r.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        let perr = |message: String| Error::Parse { line: line_no, message };
        if text.is_empty() {
            continue;
        }
        if let Some(header) = text.strip_prefix('#') {
            let (key, value) = header
                .split_once('=')
                .ok_or_else(|| perr(format!("expected `# key = value`, got `{text}`")))?;
            let value = value.trim();
            match key.trim() {
                "seed" => seed = Some(value.parse().map_err(|e| perr(format!("seed: {e}")))?),
                "b_per_m" => b = Some(value.parse().map_err(|e| perr(format!("b_per_m: {e}")))?),
                "target" => target = value.parse().map_err(|e| perr(format!("target: {e}")))?,
                "density_per_m2" => {
                    density = Some(value.parse().map_err(|e| perr(format!("density: {e}")))?)
                }
                other => return Err(perr(format!("unknown header key `{other}`"))),
            }
            continue;
        }
        if !seen_columns {
            let cols: Vec<&str> = text.split(',').map(str::trim).collect();
            if cols != ["sensor_id", "x_m", "y_m"] {
                return Err(perr(format!("expected column header `sensor_id, x_m, y_m`, got `{text}`")));
            }
            seen_columns = true;
            continue;
        }
        let cols: Vec<&str> = text.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(perr(format!("expected 3 columns, got {}", cols.len())));
        }
        let id: usize = cols[0].parse().map_err(|e| perr(format!("sensor_id: {e}")))?;
        if id != positions.len() {
            return Err(perr(format!("sensor ids must be consecutive from 0, got {id}")));
        }
        let x = cols[1].parse().map_err(|e| perr(format!("x_m: {e}")))?;
        let y = cols[2].parse().map_err(|e| perr(format!("y_m: {e}")))?;
        positions.push(Position::new(x, y));
    }
    let seed = seed.ok_or_else(|| Error::Parse { line: 0, message: "missing `# seed` header".into() })?;
    let b_per_m = b.ok_or_else(|| Error::Parse { line: 0, message: "missing `# b_per_m` header".into() })?;
    let mut field = SensorField::new(positions, target)?;
    if let Some(d) = density {
        field = field.with_density(d);
    }
    Ok(FieldRecord { field, seed, b_per_m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn source(a: f64, b: f64) -> SourceParams {
        SourceParams::new(1.0, 5.0, a, b).unwrap()
    }

    #[test]
    fn single_sensor_field() {
        let f = place_sensors(1, 10.0, 0.01, 3).unwrap();
        assert_eq!(f.distance_matrix(), vec![vec![0.0]]);
        assert_eq!(
            mssc(&source(2.0, 0.01), &f),
            Err(Error::UndefinedMssc { sensors: 1 })
        );
    }

    #[test]
    fn zero_sensors_rejected() {
        assert!(matches!(place_sensors(0, 10.0, 0.01, 3), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn placement_is_deterministic() {
        let a = place_sensors(5, 10.0, 0.016, 42).unwrap();
        let b = place_sensors(5, 10.0, 0.016, 42).unwrap();
        let c = place_sensors(5, 10.0, 0.016, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.positions().iter().all(|p| p.x_m.abs() <= 10.0 && p.y_m.abs() <= 10.0));
    }

    #[test]
    fn distance_matrix_is_symmetric_with_zero_diagonal() {
        let f = place_sensors(6, 10.0, 0.02, 9).unwrap();
        for i in 0..6 {
            assert_eq!(f.distance(i, i), 0.0);
            assert_eq!(f.spatial_factor(i, i, 0.3), 1.0);
            for j in 0..6 {
                assert_eq!(f.distance(i, j), f.distance(j, i));
                assert!(f.distance(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn correlation_examples() {
        let f = SensorField::new(vec![Position::new(0.0, 0.0), Position::new(100.0, 0.0)], 0).unwrap();
        let q = |i, j, dt| CorrelationQuery { sensor_i: i, sensor_j: j, dt_s: dt };
        assert_eq!(correlation(&source(0.5, 0.01), &f, &q(0, 0, 0.0)).unwrap(), 1.0);
        let e1 = (-1.0f64).exp();
        assert!((correlation(&source(0.5, 0.0), &f, &q(1, 1, 2.0)).unwrap() - e1).abs() < 1e-15);
        assert!((correlation(&source(0.5, 0.01), &f, &q(0, 1, 0.0)).unwrap() - e1).abs() < 1e-15);
        assert!(matches!(
            correlation(&source(0.5, 0.01), &f, &q(0, 1, -1.0)),
            Err(Error::InvalidQuery(_))
        ));
        assert!(matches!(
            correlation(&source(0.5, 0.01), &f, &q(0, 2, 0.0)),
            Err(Error::InvalidQuery(_))
        ));
    }

    #[test]
    fn mssc_examples() {
        let f = place_sensors(5, 10.0, 0.016, 42).unwrap();
        assert_eq!(mssc(&source(2.0, 0.0), &f).unwrap(), 1.0);

        // Four sensors on a circle of radius 7 around the target.
        let mut pos = vec![Position::new(0.0, 0.0)];
        for k in 0..4 {
            let t = k as f64 * std::f64::consts::FRAC_PI_2;
            pos.push(Position::new(7.0 * t.cos(), 7.0 * t.sin()));
        }
        let ring = SensorField::new(pos, 0).unwrap();
        let v = mssc(&source(2.0, 0.05), &ring).unwrap();
        assert!((v - (-2.0 * 0.05 * 7.0f64).exp()).abs() < 1e-14);

        // Independent per-pair summation.
        let b = 0.07;
        let t = f.positions()[0];
        let mut direct = 0.0;
        for p in &f.positions()[1..] {
            let r = ((p.x_m - t.x_m).powi(2) + (p.y_m - t.y_m).powi(2)).sqrt();
            direct += (-b * r).exp() * (-b * r).exp();
        }
        direct /= 4.0;
        assert!((mssc(&source(2.0, b), &f).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn decay_solver_hits_target() {
        let f = place_sensors(5, 10.0, 0.016, 42).unwrap();
        for target in [0.05, 0.3, 0.73, 0.999] {
            let b = decay_for_mssc(&f, target).unwrap();
            assert!((mssc(&source(2.0, b), &f).unwrap() - target).abs() < 1e-12);
        }
        assert_eq!(decay_for_mssc(&f, 1.0).unwrap(), 0.0);
        assert!(decay_for_mssc(&f, 0.0).is_err());
    }

    #[test]
    fn field_file_round_trips_exactly() {
        let f = place_sensors(5, 10.0, 0.0159, 11).unwrap().with_target(2).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &f, 11, 0.01).unwrap();
        let rec = read_field(buf.as_slice()).unwrap();
        assert_eq!(rec.field, f);
        assert_eq!(rec.seed, 11);
        assert_eq!(rec.b_per_m, 0.01);
    }

    #[test]
    fn field_file_reports_line_of_bad_row() {
        let text = "# seed = 1\n# b_per_m = 0.01\nsensor_id, x_m, y_m\n0, 1.0, 2.0\n1, oops, 3.0\n";
        match read_field(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn single_entry_variance() {
        let f = SensorField::colocated(1, 0).unwrap();
        let p = source(2.0, 0.0);
        let law = JointGaussian::new(&p, &f, &[(0, 0.0)]).unwrap();
        let mut rng = rng::stream(5, Purpose::Field, 0, 0);
        let n = 100_000;
        let mut s2 = 0.0;
        for _ in 0..n {
            let y = law.sample(&mut rng).y[0];
            s2 += y * y;
        }
        let var = s2 / n as f64;
        let expect = 1.0 + 1.0 / 5.0;
        assert!((var / expect - 1.0).abs() < 0.02, "var {var}");
    }

    fn empirical_corr(law: &JointGaussian, seed: u64) -> f64 {
        let mut rng = rng::stream(seed, Purpose::Field, 0, 0);
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..100_000 {
            let x = law.sample(&mut rng).x;
            sxy += x[0] * x[1];
            sxx += x[0] * x[0];
            syy += x[1] * x[1];
        }
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn sampled_temporal_and_spatial_correlation() {
        let f = SensorField::new(vec![Position::new(0.0, 0.0), Position::new(30.0, 40.0)], 0).unwrap();
        let p = source(2.0, 0.01);
        let temporal = JointGaussian::new(&p, &f, &[(0, 0.0), (0, 0.2)]).unwrap();
        let c = empirical_corr(&temporal, 1);
        assert!((c / (-0.4f64).exp() - 1.0).abs() < 0.02, "temporal {c}");
        let spatial = JointGaussian::new(&p, &f, &[(0, 0.5), (1, 0.5)]).unwrap();
        let c = empirical_corr(&spatial, 2);
        assert!((c / (-0.5f64).exp() - 1.0).abs() < 0.02, "spatial {c}");
    }

    #[test]
    fn sampled_covariance_converges_entrywise() {
        let f = place_sensors(3, 10.0, 0.01, 8).unwrap();
        let p = source(2.0, 0.05);
        let pts = [(0, 0.0), (1, 0.1), (2, 0.05), (0, 0.3)];
        let law = JointGaussian::new(&p, &f, &pts).unwrap();
        let mut rng = rng::stream(77, Purpose::Field, 0, 0);
        let n = 100_000;
        let k = pts.len();
        let mut acc = vec![0.0; k * k];
        for _ in 0..n {
            let x = law.sample(&mut rng).x;
            for i in 0..k {
                for j in 0..k {
                    acc[i * k + j] += x[i] * x[j];
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                let emp = acc[i * k + j] / n as f64;
                let q = CorrelationQuery { sensor_i: pts[i].0, sensor_j: pts[j].0, dt_s: (pts[i].1 - pts[j].1).abs() };
                let c = correlation(&p, &f, &q).unwrap();
                // Var of X_i X_j for jointly Gaussian pairs is 1 + c^2.
                let se = ((1.0 + c * c) / n as f64).sqrt();
                assert!((emp - c).abs() < 3.0 * se + 1e-12, "({i},{j}) emp {emp} vs {c}");
            }
        }
    }

    #[test]
    fn duplicate_points_survive_jitter() {
        let f = SensorField::colocated(2, 0).unwrap();
        let law = JointGaussian::new(&source(2.0, 0.0), &f, &[(0, 0.0), (1, 0.0)]);
        assert!(law.is_ok());
    }

    proptest! {
        #[test]
        fn correlation_is_separable(dt in 0.0f64..5.0, a in 0.01f64..10.0, b in 0.0f64..0.5, seed in 0u64..1000) {
            let f = place_sensors(4, 10.0, 0.01, seed).unwrap();
            let p = source(a, b);
            for i in 0..4 {
                for j in 0..4 {
                    let full = correlation(&p, &f, &CorrelationQuery { sensor_i: i, sensor_j: j, dt_s: dt }).unwrap();
                    let spatial = correlation(&p, &f, &CorrelationQuery { sensor_i: i, sensor_j: j, dt_s: 0.0 }).unwrap();
                    prop_assert!((full - spatial * (-a * dt).exp()).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn mssc_strictly_decreasing_in_decay(b in 0.0f64..0.5, db in 1e-4f64..0.5, seed in 0u64..1000) {
            let f = place_sensors(5, 10.0, 0.01, seed).unwrap();
            let lo = mssc(&source(2.0, b), &f).unwrap();
            let hi = mssc(&source(2.0, b + db), &f).unwrap();
            prop_assert!(hi < lo);
            prop_assert!(hi > 0.0 && lo <= 1.0);
        }
    }
}
