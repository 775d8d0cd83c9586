//! Row-by-row agreement check between an analytic table and a simulation
//! report.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy)]
pub struct CompareOptions {
    /// Largest accepted relative error.
    pub rel_bound: f64,
    /// Largest accepted |z|.
    pub z_max: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self { rel_bound: 0.01, z_max: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub row: usize,
    pub scheme: String,
    pub mse_analytic: f64,
    pub mse_mc: f64,
    pub stderr: f64,
    pub z_score: f64,
    pub rel_error: f64,
    pub pass: bool,
}

struct Sheet {
    headers: csv::StringRecord,
    rows: Vec<csv::StringRecord>,
}

impl Sheet {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            other => CliError::Config(format!("{}: {other:?}", path.display())),
        })?;
        let headers = r.headers()?.clone();
        let rows = r.records().collect::<std::result::Result<_, _>>()?;
        Ok(Self { headers, rows })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn num(&self, path: &Path, row: usize, col: usize) -> Result<f64> {
        let cell = &self.rows[row][col];
        cell.trim().parse().map_err(|_| {
            CliError::Config(format!(
                "{}: row {row}, column `{}`: `{cell}` is not a number",
                path.display(),
                &self.headers[col]
            ))
        })
    }
}

fn ratio(diff: f64, scale: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Takes the reference from `mse_analytic` in `a` and the estimate from
/// `mse_mc` in `b` (or its `mse_analytic` when it has no Monte Carlo
/// column). Standard errors come from `b`, then `a`, else zero. Rows are
/// paired by position.
pub fn compare(a: &Path, b: &Path, opts: &CompareOptions) -> Result<Vec<CompareRow>> {
    let (sa, sb) = (Sheet::read(a)?, Sheet::read(b)?);
    let need = |s: &Sheet, p: &Path, c: &str| {
        s.col(c)
            .ok_or_else(|| CliError::Config(format!("{}: missing column `{c}`", p.display())))
    };
    let ca = need(&sa, a, "mse_analytic")?;
    let cb = match sb.col("mse_mc") {
        Some(c) => c,
        None => need(&sb, b, "mse_analytic")?,
    };
    if sa.rows.len() != sb.rows.len() {
        return Err(CliError::Config(format!(
            "row counts differ: {} in {}, {} in {}",
            sa.rows.len(),
            a.display(),
            sb.rows.len(),
            b.display()
        )));
    }
    let se_col = sb.col("stderr").map(|c| (&sb, b, c)).or_else(|| sa.col("stderr").map(|c| (&sa, a, c)));
    let schemes = (sa.col("scheme"), sb.col("scheme"));

    let mut out = Vec::with_capacity(sa.rows.len());
    for i in 0..sa.rows.len() {
        let scheme = match schemes {
            (Some(x), Some(y)) => {
                if sa.rows[i][x] != sb.rows[i][y] {
                    return Err(CliError::Config(format!(
                        "row {i}: scheme `{}` does not match `{}`",
                        &sa.rows[i][x], &sb.rows[i][y]
                    )));
                }
                sa.rows[i][x].to_string()
            }
            (Some(x), None) => sa.rows[i][x].to_string(),
            (None, Some(y)) => sb.rows[i][y].to_string(),
            (None, None) => String::new(),
        };
        let exact = sa.num(a, i, ca)?;
        let est = sb.num(b, i, cb)?;
        let se = match se_col {
            Some((s, p, c)) => s.num(p, i, c)?,
            None => 0.0,
        };
        let diff = est - exact;
        let z = ratio(diff, se);
        let rel = ratio(diff.abs(), exact.abs());
        out.push(CompareRow {
            row: i,
            scheme,
            mse_analytic: exact,
            mse_mc: est,
            stderr: se,
            z_score: z,
            rel_error: rel,
            pass: z.abs() <= opts.z_max && rel <= opts.rel_bound,
        });
    }
    Ok(out)
}

pub fn write_rows<W: Write>(w: W, rows: &[CompareRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| CliError::io("<output>", e))?;
    Ok(())
}

/// `Mismatch` listing every failing row, if any.
pub fn verdict(rows: &[CompareRow]) -> Result<()> {
    let bad: Vec<usize> = rows.iter().filter(|r| !r.pass).map(|r| r.row).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Mismatch { rows: bad })
    }
}
