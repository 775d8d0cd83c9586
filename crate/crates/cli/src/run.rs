//! Sweep expansion, evaluation and artifact writing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use recon_core::analytic::{self, BoundAxis, OperatingPoint, Scheme, SchemeConfig, SpatialWeights};
use recon_core::model::{self, SensorField, SourceParams};
use recon_core::optimize::{self, OptResult, OptimizerConfig};
use recon_core::regions::{self, Thresholds};
use recon_core::simulate::{self, SimConfig, SuccessModel};
use recon_core::spt::{self, LinkParams};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bundled;
use crate::error::{CliError, Result};
use crate::spec::{self, ExperimentSpec, Method, Output, SweepAxis, DEFAULT_B_PER_M};

/// A parsed experiment file and where it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub spec: ExperimentSpec,
    pub text: String,
    pub origin: String,
}

/// Reads `arg` as a path, falling back to a bundled spec of that name.
pub fn load(arg: &str) -> Result<Loaded> {
    let path = Path::new(arg);
    let (text, origin) = if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        (text, arg.to_string())
    } else if let Some(b) = bundled::find(arg) {
        (b.text.to_string(), format!("{}.toml", b.name))
    } else {
        return Err(CliError::Config(format!(
            "no spec file `{arg}` and no bundled spec of that name (see `list-specs`)"
        )));
    };
    let spec = spec::parse(&text, &origin)?;
    Ok(Loaded { spec, text, origin })
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub replicas: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// One fully resolved sweep point.
#[derive(Debug, Clone)]
pub struct Point {
    pub index: usize,
    pub coords: Vec<f64>,
    pub spec: ExperimentSpec,
    pub source: SourceParams,
    pub field: SensorField,
    pub weights: SpatialWeights,
    pub mssc: f64,
    pub link: LinkParams,
    pub op: OperatingPoint,
}

impl Point {
    /// Scheme configurations in spec order, with the weights each one uses.
    fn schemes(&self) -> Vec<(SchemeConfig, SpatialWeights)> {
        let s = &self.spec.scheme;
        s.schemes
            .iter()
            .map(|&name| match Scheme::from(name) {
                Scheme::NoInfer => (SchemeConfig::no_infer(s.period_s), SpatialWeights::single()),
                sch => {
                    let h = if sch == Scheme::AsynInfer { s.time_shift_s } else { 0.0 };
                    (SchemeConfig::for_field(sch, s.period_s, h, &self.field), self.weights.clone())
                }
            })
            .collect()
    }

    fn asyn_config(&self) -> SchemeConfig {
        let s = &self.spec.scheme;
        SchemeConfig::for_field(Scheme::AsynInfer, s.period_s, s.time_shift_s, &self.field)
    }

    fn eps_pinned(&self) -> bool {
        self.spec.link.eps_bar.is_some()
    }
}

fn resolve(spec: ExperimentSpec, index: usize, coords: Vec<f64>) -> recon_core::Result<Point> {
    let f = &spec.field;
    if f.sensors < 2 {
        return Err(recon_core::Error::InvalidConfig(
            "field.sensors must be at least 2 so the MSSC is defined".into(),
        ));
    }
    let density = f
        .density_per_m2
        .unwrap_or_else(|| model::inscribed_disc_density(f.sensors, f.half_width_m));
    let field = model::place_sensors(f.sensors, f.half_width_m, density, f.seed)?;
    let src = &spec.source;
    let b = match (src.b_per_m, src.mssc) {
        (Some(b), _) => b,
        (None, Some(m)) => model::decay_for_mssc(&field, m)?,
        (None, None) => DEFAULT_B_PER_M,
    };
    let source = SourceParams::new(src.sigma2_x, src.gamma_o, src.a_per_s, b)?;
    let mssc = model::mssc(&source, &field)?;
    let weights = SpatialWeights::from_field(&field, b);
    let l = &spec.link;
    let link = LinkParams::new(l.info_bits, l.blocklength, l.symbol_duration_s, spt::db_to_linear(l.mean_snr_db))?;
    let op = match l.eps_bar {
        Some(e) if (0.0..=1.0).contains(&e) => OperatingPoint {
            delay_s: link.delay_s(),
            blep: e,
        },
        Some(e) => return Err(recon_core::Error::InvalidConfig(format!("eps_bar must lie in [0, 1], got {e}"))),
        None => OperatingPoint::from_link(&link, l.blep_model.into()),
    };
    let p = Point {
        index,
        coords,
        spec,
        source,
        field,
        weights,
        mssc,
        link,
        op,
    };
    for (sc, _) in p.schemes() {
        sc.validate(&p.link)?;
    }
    if p.spec.outputs.contains(&Output::Regions) {
        p.asyn_config().validate(&p.link)?;
    }
    Ok(p)
}

/// Expands the sweep (first axis outermost) and resolves every point, so
/// infeasible combinations are reported before anything runs.
pub fn plan(loaded: &Loaded) -> Result<Vec<Point>> {
    let spec = &loaded.spec;
    let axes: Vec<Vec<f64>> = spec.sweep.iter().map(SweepAxis::points).collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut points = Vec::with_capacity(total);
    for i in 0..total {
        let mut rem = i;
        let mut coords = vec![0.0; axes.len()];
        for (k, axis) in axes.iter().enumerate().rev() {
            coords[k] = axis[rem % axis.len()];
            rem /= axis.len();
        }
        let mut s = spec.clone();
        for (axis, &v) in spec.sweep.iter().zip(&coords) {
            s.set(&axis.param, v).map_err(CliError::Config)?;
        }
        let p = resolve(s, i, coords.clone()).map_err(|e| {
            let at: Vec<String> = spec.sweep.iter().zip(&coords).map(|(a, v)| format!("{} = {v}", a.param)).collect();
            let line = spec.sweep.first().map_or(1, |a| spec::line_of(&loaded.text, &format!("\"{}\"", a.param)));
            CliError::Spec {
                origin: loaded.origin.clone(),
                line,
                message: if at.is_empty() {
                    e.to_string()
                } else {
                    format!("at {}: {e}", at.join(", "))
                },
            }
        })?;
        points.push(p);
    }
    Ok(points)
}

type Row = Vec<String>;

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

const SCHEMA: [&str; 9] = ["scheme", "T_s", "L", "N", "T", "h", "M", "mssc", "eps_bar"];

fn schema_cells(p: &Point, sc: &SchemeConfig, n: f64, h: f64, eps: f64) -> Row {
    vec![
        sc.scheme.name().to_string(),
        num(p.link.symbol_duration_s),
        num(p.link.info_bits),
        num(n),
        num(sc.period_s),
        num(h),
        p.field.len().to_string(),
        num(p.mssc),
        num(eps),
    ]
}

fn header(extra_front: &[&str], body: &[&str]) -> Vec<String> {
    extra_front.iter().chain(body).map(|s| s.to_string()).collect()
}

fn analytic_header() -> Vec<String> {
    header(&SCHEMA, &["mse_analytic", "mse_lb", "mse_ub"])
}

fn analytic_rows(p: &Point) -> recon_core::Result<Vec<Row>> {
    let mut rows = Vec::new();
    for (sc, w) in p.schemes() {
        let v = analytic::mse_at(&p.source, &w, &sc, p.op)?.value;
        let b = analytic::bounds_for(&p.source, &w, &sc, p.op, BoundAxis::Spatial)?;
        let mut r = schema_cells(p, &sc, p.link.blocklength, sc.time_shift_s, p.op.blep);
        r.extend([num(v), num(b.lower.value), num(b.upper.value)]);
        rows.push(r);
    }
    Ok(rows)
}

fn simulate_header() -> Vec<String> {
    header(&SCHEMA, &["periods", "replicas", "mse_mc", "stderr", "mse_analytic", "z_score"])
}

fn simulate_rows(p: &Point) -> recon_core::Result<Vec<Row>> {
    let s = &p.spec;
    let success = if p.eps_pinned() {
        SuccessModel::Bernoulli(p.op.blep)
    } else {
        s.simulate.success.into()
    };
    let cfg = SimConfig {
        periods: s.simulate.periods,
        replicas: s.replicas,
        seed: s.seed,
        success,
        batches: s.simulate.batches,
    };
    let mut rows = Vec::new();
    for (sc, w) in p.schemes() {
        let exact = analytic::mse_at(&p.source, &w, &sc, p.op)?.value;
        let r = simulate::simulate_event_level(&p.source, &w, &p.link, &sc, &cfg)?;
        let mut row = schema_cells(p, &sc, p.link.blocklength, sc.time_shift_s, p.op.blep);
        row.extend([
            cfg.periods.to_string(),
            cfg.replicas.to_string(),
            num(r.avg_mse),
            num(r.stderr),
            num(exact),
            num(r.z_score(exact)),
        ]);
        rows.push(row);
    }
    Ok(rows)
}

fn optimize_header() -> Vec<String> {
    header(
        &["method"],
        &[&SCHEMA[..], &["mse_analytic", "mse_lb", "mse_ub", "iterations", "converged", "evaluations"]].concat(),
    )
}

fn trace_header() -> Vec<String> {
    header(&["method", "scheme"], &["iter", "h_s", "N", "mse", "residual_h", "residual_N"])
}

fn optimizer_config(p: &Point) -> OptimizerConfig {
    let o = &p.spec.optimize;
    OptimizerConfig {
        n_min: o.n_min,
        n_max: o.n_max,
        max_iterations: o.max_iterations,
        tol_h: o.tol_h,
        tol_n: o.tol_n,
        initial_blocklength: o.initial_blocklength,
        eval_model: p.spec.link.blep_model.into(),
        ..OptimizerConfig::default()
    }
}

fn optimize_rows(p: &Point) -> recon_core::Result<(Vec<Row>, Vec<Row>)> {
    let cfg = optimizer_config(p);
    let (mut rows, mut trace) = (Vec::new(), Vec::new());
    for (sc, w) in p.schemes() {
        for &method in &p.spec.optimize.methods {
            let asyn = sc.scheme == Scheme::AsynInfer;
            let args = (&p.source, &w, &p.link, &sc, &cfg);
            let r: OptResult = match (method, asyn) {
                (Method::Analytic, false) => optimize::optimize_blocklength_syn(args.0, args.1, args.2, args.3, args.4)?,
                (Method::Exhaustive, false) => optimize::exhaustive_blocklength_syn(args.0, args.1, args.2, args.3, args.4)?,
                (Method::Analytic, true) => optimize::jtsbo(args.0, args.1, args.2, args.3, args.4)?,
                (Method::Exhaustive, true) => optimize::exhaustive_search(args.0, args.1, args.2, args.3, args.4)?,
                (Method::TimeShiftOnly, true) => optimize::time_shift_only(args.0, args.1, args.2, args.3, args.4)?,
                (Method::TimeShiftOnly, false) => continue,
            };
            let n = r.n_star as f64;
            let h = r.h_star.unwrap_or(sc.time_shift_s);
            let sc_opt = sc.with_time_shift(h);
            let op = OperatingPoint::from_link(&p.link.with_blocklength(n), cfg.eval_model);
            let b = analytic::bounds_for(&p.source, &w, &sc_opt, op, BoundAxis::Spatial)?;
            let mut row = vec![method.name().to_string()];
            row.extend(schema_cells(p, &sc_opt, n, h, op.blep));
            row.extend([
                num(r.mse_star.value),
                num(b.lower.value),
                num(b.upper.value),
                r.iterations.to_string(),
                r.converged.to_string(),
                r.evaluations.to_string(),
            ]);
            rows.push(row);
            for t in &r.trace {
                trace.push(vec![
                    method.name().to_string(),
                    sc.scheme.name().to_string(),
                    t.iter.to_string(),
                    num(t.h_s),
                    num(t.n),
                    num(t.mse),
                    opt(t.residual_h),
                    opt(t.residual_n),
                ]);
            }
        }
    }
    Ok((rows, trace))
}

fn regions_header() -> Vec<String> {
    header(
        &["T", "gamma_r_bar_dB", "mssc", "thr1", "thr2", "winner"],
        &["gain_infer", "gain_asyn_over_syn"],
    )
}

fn regions_rows(p: &Point) -> recon_core::Result<Vec<Row>> {
    let sc = p.asyn_config();
    let a = p.source.a_per_s;
    let thr1 = regions::threshold_infer_at(a, sc.period_s, p.op.blep);
    let thr2 = match regions::threshold_asyn_over_syn_at(a, &sc, p.op.blep) {
        Ok(v) => v,
        Err(recon_core::Error::RegionDegenerate { asyn_always_superior }) => {
            if asyn_always_superior {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        }
        Err(e) => return Err(e),
    };
    let r = regions::classify(p.mssc, &Thresholds { thr1, thr2 });
    let [no, syn, asyn] = regions::scheme_mses(&p.source, &sc, p.op, p.mssc)?;
    Ok(vec![vec![
        num(sc.period_s),
        num(p.spec.link.mean_snr_db),
        num(p.mssc),
        num(thr1),
        num(thr2),
        r.winner.name().to_string(),
        num(no / syn),
        num(syn / asyn),
    ]])
}

struct Table {
    file: String,
    kind: &'static str,
    header: Vec<String>,
    rows: Vec<Row>,
}

#[derive(Debug, Serialize)]
struct FailureEntry {
    output: &'static str,
    point: usize,
    message: String,
}

#[derive(Debug, Serialize)]
struct FileEntry {
    kind: &'static str,
    file: String,
    rows: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct AxisEntry {
    param: String,
    values: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    name: String,
    spec_file: String,
    spec_sha256: String,
    library_version: &'static str,
    seed: u64,
    replicas: u64,
    points: usize,
    sweep: Vec<AxisEntry>,
    units: BTreeMap<&'static str, &'static str>,
    outputs: Vec<FileEntry>,
    partial: bool,
    failures: Vec<FailureEntry>,
}

fn units() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("T, T_s, h, h_s, period_s, time_shift_s", "seconds"),
        ("N, blocklength", "channel uses"),
        ("L, info_bits", "bits"),
        ("gamma_r_bar_dB, mean_snr_db", "dB in files and tables, converted to linear when the spec is parsed"),
        ("gamma_o", "linear"),
        ("a_per_s", "1/s"),
        ("b_per_m", "1/m"),
        ("mse_*, thr*, mssc, eps_bar", "dimensionless or in units of sigma2_x"),
    ])
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn render(t: &Table, axes: &[String], points: &[Point], owners: &[usize]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["point".to_string()];
    head.extend(axes.iter().cloned());
    head.extend(t.header.iter().cloned());
    w.write_record(&head)?;
    for (row, &pi) in t.rows.iter().zip(owners) {
        let mut rec = vec![pi.to_string()];
        rec.extend(points[pi].coords.iter().map(|&v| num(v)));
        rec.extend(row.iter().cloned());
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<(String, usize)>,
}

/// Runs every requested output over the sweep and writes the CSVs plus
/// `manifest.json` into the output directory.
pub fn run(loaded: &Loaded, opts: &RunOptions) -> Result<RunSummary> {
    let mut loaded = loaded.clone();
    if let Some(seed) = opts.seed {
        loaded.spec.seed = seed;
    }
    if let Some(r) = opts.replicas {
        if r == 0 {
            return Err(CliError::Config("--replicas must be at least 1".into()));
        }
        loaded.spec.replicas = r;
    }
    let spec = &loaded.spec;
    let points = plan(&loaded)?;
    let out_dir = opts.out_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(&spec.name));
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    let axes: Vec<String> = spec.sweep.iter().map(|a| a.param.clone()).collect();

    let mut failures = Vec::new();
    let mut entries = Vec::new();
    let mut files = Vec::new();
    for &output in &spec.outputs {
        info!("{}: {} point(s)", output.name(), points.len());
        let results: Vec<recon_core::Result<(Vec<Row>, Vec<Row>)>> = points
            .par_iter()
            .map(|p| match output {
                Output::Analytic => analytic_rows(p).map(|r| (r, Vec::new())),
                Output::Simulate => simulate_rows(p).map(|r| (r, Vec::new())),
                Output::Optimize => optimize_rows(p),
                Output::Regions => regions_rows(p).map(|r| (r, Vec::new())),
            })
            .collect();
        let (head, extra) = match output {
            Output::Analytic => (analytic_header(), None),
            Output::Simulate => (simulate_header(), None),
            Output::Optimize => (optimize_header(), Some(trace_header())),
            Output::Regions => (regions_header(), None),
        };
        let mut main = Table {
            file: format!("{}.csv", output.name()),
            kind: output.name(),
            header: head,
            rows: Vec::new(),
        };
        let mut side = extra.map(|h| Table {
            file: format!("{}_trace.csv", output.name()),
            kind: "optimize_trace",
            header: h,
            rows: Vec::new(),
        });
        let (mut main_owner, mut side_owner) = (Vec::new(), Vec::new());
        for (p, res) in points.iter().zip(results) {
            match res {
                Ok((rows, trace)) => {
                    main_owner.extend(std::iter::repeat_n(p.index, rows.len()));
                    main.rows.extend(rows);
                    if let Some(s) = side.as_mut() {
                        side_owner.extend(std::iter::repeat_n(p.index, trace.len()));
                        s.rows.extend(trace);
                    }
                }
                Err(e) => failures.push(FailureEntry {
                    output: output.name(),
                    point: p.index,
                    message: e.to_string(),
                }),
            }
        }
        for (t, owners) in std::iter::once((&main, &main_owner)).chain(side.as_ref().map(|s| (s, &side_owner))) {
            let bytes = render(t, &axes, &points, owners)?;
            let path = out_dir.join(&t.file);
            fs::write(&path, &bytes).map_err(|e| CliError::io(&path, e))?;
            entries.push(FileEntry {
                kind: t.kind,
                file: t.file.clone(),
                rows: t.rows.len(),
                sha256: sha256_hex(&bytes),
            });
            files.push((t.file.clone(), t.rows.len()));
        }
    }

    let manifest = Manifest {
        name: spec.name.clone(),
        spec_file: Path::new(&loaded.origin)
            .file_name()
            .map_or_else(|| loaded.origin.clone(), |f| f.to_string_lossy().into_owned()),
        spec_sha256: sha256_hex(loaded.text.as_bytes()),
        library_version: recon_core::VERSION,
        seed: spec.seed,
        replicas: spec.replicas,
        points: points.len(),
        sweep: spec
            .sweep
            .iter()
            .map(|a| AxisEntry {
                param: a.param.clone(),
                values: a.points(),
            })
            .collect(),
        units: units(),
        outputs: entries,
        partial: !failures.is_empty(),
        failures,
    };
    let path = out_dir.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;

    if manifest.partial {
        for f in &manifest.failures {
            log::error!("{} at point {}: {}", f.output, f.point, f.message);
        }
        return Err(CliError::Partial {
            failed: manifest.failures.len(),
            out_dir,
        });
    }
    Ok(RunSummary { out_dir, files })
}
