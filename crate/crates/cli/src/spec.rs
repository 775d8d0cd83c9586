//! Experiment files: TOML with one section per module and an optional list
//! of sweep axes.

use recon_core::analytic::Scheme;
use recon_core::simulate::SuccessModel;
use recon_core::spt::BlepModel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Output {
    Analytic,
    Simulate,
    Optimize,
    Regions,
}

impl Output {
    pub fn name(self) -> &'static str {
        match self {
            Output::Analytic => "analytic",
            Output::Simulate => "simulate",
            Output::Optimize => "optimize",
            Output::Regions => "regions",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    NoInfer,
    SynInfer,
    AsynInfer,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::NoInfer => Scheme::NoInfer,
            SchemeName::SynInfer => Scheme::SynInfer,
            SchemeName::AsynInfer => Scheme::AsynInfer,
        }
    }
}

/// Which optimizer to run per scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Stationarity rules for syn and no-infer, alternating search for asyn.
    Analytic,
    /// Integer scan over the feasible lattice.
    Exhaustive,
    /// Time shift only at the initial blocklength; asyn only.
    TimeShiftOnly,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::Exhaustive => "exhaustive",
            Method::TimeShiftOnly => "time-shift-only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuccessName {
    Segmented,
    Qform,
    Always,
}

impl From<SuccessName> for SuccessModel {
    fn from(s: SuccessName) -> Self {
        match s {
            SuccessName::Segmented => SuccessModel::Segmented,
            SuccessName::Qform => SuccessModel::QForm,
            SuccessName::Always => SuccessModel::AlwaysSucceed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlepName {
    Segmented,
    Simplified,
}

impl From<BlepName> for BlepModel {
    fn from(b: BlepName) -> Self {
        match b {
            BlepName::Segmented => BlepModel::Segmented,
            BlepName::Simplified => BlepModel::Simplified,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub sigma2_x: f64,
    /// Observation SNR, linear.
    pub gamma_o: f64,
    pub a_per_s: f64,
    /// Set at most one of `b_per_m` and `mssc`; the latter solves for `b`
    /// on the placed field.
    pub b_per_m: Option<f64>,
    pub mssc: Option<f64>,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            sigma2_x: 1.0,
            gamma_o: 5.0,
            a_per_s: 2.0,
            b_per_m: None,
            mssc: None,
        }
    }
}

pub const DEFAULT_B_PER_M: f64 = 0.01;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    pub sensors: usize,
    pub half_width_m: f64,
    pub seed: u64,
    /// Defaults to the density whose inscribed disc holds `sensors` points.
    pub density_per_m2: Option<f64>,
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            sensors: 5,
            half_width_m: 10.0,
            seed: 42,
            density_per_m2: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub info_bits: f64,
    pub blocklength: f64,
    pub symbol_duration_s: f64,
    pub mean_snr_db: f64,
    /// Pins the average BLEP instead of deriving it from the link.
    pub eps_bar: Option<f64>,
    pub blep_model: BlepName,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            info_bits: 160.0,
            blocklength: 80.0,
            symbol_duration_s: 1e-4,
            mean_snr_db: 5.0,
            eps_bar: None,
            blep_model: BlepName::Segmented,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub schemes: Vec<SchemeName>,
    pub period_s: f64,
    pub time_shift_s: f64,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            schemes: vec![SchemeName::NoInfer, SchemeName::SynInfer, SchemeName::AsynInfer],
            period_s: 0.15,
            time_shift_s: 0.005,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub periods: u64,
    pub batches: u64,
    pub success: SuccessName,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            periods: 100_000,
            batches: 50,
            success: SuccessName::Segmented,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    pub methods: Vec<Method>,
    pub n_min: f64,
    pub n_max: Option<f64>,
    pub max_iterations: usize,
    pub tol_h: f64,
    pub tol_n: f64,
    pub initial_blocklength: f64,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        let d = recon_core::optimize::OptimizerConfig::default();
        Self {
            methods: vec![Method::Analytic],
            n_min: d.n_min,
            n_max: d.n_max,
            max_iterations: d.max_iterations,
            tol_h: d.tol_h,
            tol_n: d.tol_n,
            initial_blocklength: d.initial_blocklength,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// `[start, stop, count]`, both ends included.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linspace: Option<(f64, f64, usize)>,
}

impl SweepAxis {
    pub fn points(&self) -> Vec<f64> {
        if let Some(v) = &self.values {
            return v.clone();
        }
        let (a, b, n) = self.linspace.unwrap_or((0.0, 0.0, 0));
        match n {
            0 => Vec::new(),
            1 => vec![a],
            _ => (0..n)
                .map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    pub outputs: Vec<Output>,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub field: FieldSection,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
}

fn default_seed() -> u64 {
    1
}

fn default_replicas() -> u64 {
    1
}

/// Parameters a sweep axis may name.
pub const SWEEP_KEYS: &[&str] = &[
    "source.sigma2_x",
    "source.gamma_o",
    "source.a_per_s",
    "source.b_per_m",
    "source.mssc",
    "field.sensors",
    "field.half_width_m",
    "field.seed",
    "field.density_per_m2",
    "link.info_bits",
    "link.blocklength",
    "link.symbol_duration_s",
    "link.mean_snr_db",
    "link.eps_bar",
    "scheme.period_s",
    "scheme.time_shift_s",
    "simulate.periods",
];

fn as_count(key: &str, v: f64) -> std::result::Result<u64, String> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(format!("{key} takes a non-negative integer, got {v}"))
    }
}

impl ExperimentSpec {
    /// Applies one sweep coordinate.
    pub fn set(&mut self, key: &str, v: f64) -> std::result::Result<(), String> {
        match key {
            "source.sigma2_x" => self.source.sigma2_x = v,
            "source.gamma_o" => self.source.gamma_o = v,
            "source.a_per_s" => self.source.a_per_s = v,
            "source.b_per_m" => {
                self.source.b_per_m = Some(v);
                self.source.mssc = None;
            }
            "source.mssc" => {
                self.source.mssc = Some(v);
                self.source.b_per_m = None;
            }
            "field.sensors" => self.field.sensors = as_count(key, v)? as usize,
            "field.half_width_m" => self.field.half_width_m = v,
            "field.seed" => self.field.seed = as_count(key, v)?,
            "field.density_per_m2" => self.field.density_per_m2 = Some(v),
            "link.info_bits" => self.link.info_bits = v,
            "link.blocklength" => self.link.blocklength = v,
            "link.symbol_duration_s" => self.link.symbol_duration_s = v,
            "link.mean_snr_db" => self.link.mean_snr_db = v,
            "link.eps_bar" => self.link.eps_bar = Some(v),
            "scheme.period_s" => self.scheme.period_s = v,
            "scheme.time_shift_s" => self.scheme.time_shift_s = v,
            "simulate.periods" => self.simulate.periods = as_count(key, v)?,
            _ => return Err(format!("unknown sweep parameter `{key}`; expected one of {}", SWEEP_KEYS.join(", "))),
        }
        Ok(())
    }
}

/// First line mentioning `needle`, for pointing at the offending entry.
pub fn line_of(text: &str, needle: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            !l.starts_with('#') && l.contains(needle)
        })
        .map_or(1, |i| i + 1)
}

fn spec_err(origin: &str, line: usize, message: impl Into<String>) -> CliError {
    CliError::Spec {
        origin: origin.to_string(),
        line,
        message: message.into(),
    }
}

/// Parses and checks an experiment file. Errors carry the line they refer to.
pub fn parse(text: &str, origin: &str) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |s| text[..s.start].matches('\n').count() + 1);
        spec_err(origin, line, e.message().trim().to_string())
    })?;
    let at = |needle: &str, msg: String| spec_err(origin, line_of(text, needle), msg);

    if spec.name.is_empty() || !spec.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(at("name", format!("name `{}` must be non-empty [A-Za-z0-9_-]", spec.name)));
    }
    if spec.outputs.is_empty() {
        return Err(at("outputs", "at least one output is required".into()));
    }
    for (i, o) in spec.outputs.iter().enumerate() {
        if spec.outputs[..i].contains(o) {
            return Err(at("outputs", format!("output `{}` listed twice", o.name())));
        }
    }
    if spec.replicas == 0 {
        return Err(at("replicas", "replicas must be at least 1".into()));
    }
    if spec.scheme.schemes.is_empty() {
        return Err(at("schemes", "at least one scheme is required".into()));
    }
    if spec.optimize.methods.is_empty() && spec.outputs.contains(&Output::Optimize) {
        return Err(at("methods", "the optimize output needs at least one method".into()));
    }
    if spec.source.b_per_m.is_some() && spec.source.mssc.is_some() {
        return Err(at("mssc", "set either source.b_per_m or source.mssc, not both".into()));
    }

    let mut seen: Vec<&str> = Vec::new();
    for axis in &spec.sweep {
        let line = line_of(text, &format!("\"{}\"", axis.param));
        let err = |m: String| spec_err(origin, line, m);
        if !SWEEP_KEYS.contains(&axis.param.as_str()) {
            return Err(err(format!(
                "unknown sweep parameter `{}`; expected one of {}",
                axis.param,
                SWEEP_KEYS.join(", ")
            )));
        }
        if seen.contains(&axis.param.as_str()) {
            return Err(err(format!("`{}` is swept twice", axis.param)));
        }
        if (axis.param == "source.b_per_m" && seen.contains(&"source.mssc"))
            || (axis.param == "source.mssc" && seen.contains(&"source.b_per_m"))
        {
            return Err(err("sweep either source.b_per_m or source.mssc, not both".into()));
        }
        seen.push(&axis.param);
        match (&axis.values, &axis.linspace) {
            (Some(v), None) if !v.is_empty() => {}
            (None, Some((_, _, n))) if *n > 0 => {}
            _ => return Err(err(format!("axis `{}` needs a non-empty `values` or `linspace`", axis.param))),
        }
        let mut probe = spec.clone();
        for v in axis.points() {
            if !v.is_finite() {
                return Err(err(format!("axis `{}` has a non-finite value", axis.param)));
            }
            probe.set(&axis.param, v).map_err(&err)?;
        }
    }
    let eps_pinned = spec.link.eps_bar.is_some() || seen.contains(&"link.eps_bar");
    if eps_pinned && spec.outputs.contains(&Output::Optimize) {
        return Err(at(
            "eps_bar",
            "optimize needs the link model; a pinned eps_bar leaves nothing to optimize".into(),
        ));
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_sections() {
        let s = parse("name = \"x\"\noutputs = [\"analytic\"]\n", "t").unwrap();
        assert_eq!(s.field.sensors, 5);
        assert_eq!(s.link.info_bits, 160.0);
        assert_eq!(s.scheme.schemes.len(), 3);
        assert!(s.sweep.is_empty());
    }

    #[test]
    fn unknown_key_points_at_its_line() {
        let text = "name = \"x\"\noutputs = [\"analytic\"]\n\n[link]\nblocklenght = 40\n";
        match parse(text, "t.toml") {
            Err(CliError::Spec { line, message, .. }) => {
                assert_eq!(line, 5);
                assert!(message.contains("blocklenght"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_sweep_axis_is_located() {
        let text = "name = \"x\"\noutputs = [\"analytic\"]\n\n[[sweep]]\nparam = \"link.snr\"\nvalues = [1]\n";
        match parse(text, "t") {
            Err(CliError::Spec { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_empty_outputs_and_fractional_counts() {
        assert!(parse("name = \"x\"\noutputs = []\n", "t").is_err());
        let text = "name = \"x\"\noutputs = [\"analytic\"]\n[[sweep]]\nparam = \"field.sensors\"\nvalues = [2.5]\n";
        assert!(parse(text, "t").is_err());
    }

    #[test]
    fn linspace_hits_both_ends() {
        let a = SweepAxis {
            param: "scheme.period_s".into(),
            values: None,
            linspace: Some((0.1, 0.3, 3)),
        };
        assert_eq!(a.points(), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn pinned_blep_excludes_optimize() {
        let text = "name = \"x\"\noutputs = [\"optimize\"]\n[link]\neps_bar = 0.2\n";
        assert!(parse(text, "t").is_err());
    }
}
