//! `plot-data`: merge scan CSVs into one long table, or gnuplot index
//! blocks, keyed by the run parameters found in each scan's manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use crate::error::CliError;
use crate::scan::{Manifest, COLUMNS};

/// Curves emitted per run, with their error column where one exists.
const SERIES: [(&str, Option<&str>); 5] = [
    ("q_unc", None),
    ("q_ultimate", None),
    ("f_traj", Some("stderr_f")),
    ("q_cond_mean", Some("stderr_q")),
    ("q_eff", None),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlotFormat {
    /// CSV with one row per (run, quantity, t)
    Long,
    /// Blank-line separated blocks, one per (run, quantity)
    Gnuplot,
}

#[derive(Clone, Debug, Args)]
pub struct PlotArgs {
    /// Scan CSVs; each is paired with `<name>.manifest.json` when present
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "long")]
    pub format: PlotFormat,
    /// Output path (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Run identity used to label series.
#[derive(Clone, Debug, PartialEq)]
pub struct RunKey {
    pub source: String,
    pub n: Option<usize>,
    pub eta: String,
    pub unraveling: String,
}

pub struct Point {
    pub t: f64,
    pub value: f64,
    pub stderr: Option<f64>,
}

pub struct Series {
    pub key: RunKey,
    pub quantity: &'static str,
    pub points: Vec<Point>,
}

fn run_key(csv: &Path) -> Result<RunKey, CliError> {
    let source = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let manifest = csv.with_extension("manifest.json");
    if !manifest.exists() {
        return Ok(RunKey { source, n: None, eta: String::new(), unraveling: String::new() });
    }
    let m = Manifest::read(&manifest)?;
    Ok(RunKey {
        source,
        n: Some(m.config.n),
        eta: m.config.eta.label(),
        unraveling: m.config.unraveling.short_name().to_string(),
    })
}

fn parse_cell(path: &Path, line: u64, col: &str, cell: &str) -> Result<Option<f64>, CliError> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse()
        .map(Some)
        .map_err(|_| CliError::Usage(format!("{}:{line}: bad value {cell:?} in column {col}", path.display())))
}

pub fn read_series(csv_path: &Path) -> Result<Vec<Series>, CliError> {
    let key = run_key(csv_path)?;
    let mut reader = csv::Reader::from_path(csv_path).map_err(|e| CliError::io(csv_path, e))?;
    let header = reader.headers().map_err(|e| CliError::io(csv_path, e))?.clone();
    let mut index = std::collections::HashMap::new();
    for col in COLUMNS {
        let i = header
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| CliError::Usage(format!("{}: missing column {col}", csv_path.display())))?;
        index.insert(col, i);
    }

    let mut series: Vec<Series> =
        SERIES.iter().map(|(q, _)| Series { key: key.clone(), quantity: q, points: Vec::new() }).collect();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Usage(format!("{}: {e}", csv_path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |col: &str| parse_cell(csv_path, line, col, record.get(index[col]).unwrap_or(""));
        let t = cell("t")?.ok_or_else(|| CliError::Usage(format!("{}:{line}: empty t", csv_path.display())))?;
        for (s, (q, err_col)) in series.iter_mut().zip(SERIES) {
            if let Some(value) = cell(q)? {
                let stderr = match err_col {
                    Some(c) => cell(c)?,
                    None => None,
                };
                s.points.push(Point { t, value, stderr });
            }
        }
    }
    series.retain(|s| !s.points.is_empty());
    Ok(series)
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn render(series: &[Series], format: PlotFormat) -> String {
    let mut out = String::new();
    match format {
        PlotFormat::Long => {
            out.push_str("source,N,eta,unraveling,quantity,t,value,stderr\n");
            for s in series {
                let k = &s.key;
                for p in &s.points {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{:.16e},{:.16e},{}",
                        k.source,
                        opt(k.n),
                        k.eta,
                        k.unraveling,
                        s.quantity,
                        p.t,
                        p.value,
                        p.stderr.map(|e| format!("{e:.16e}")).unwrap_or_default()
                    );
                }
            }
        }
        PlotFormat::Gnuplot => {
            for (i, s) in series.iter().enumerate() {
                if i > 0 {
                    out.push_str("\n\n");
                }
                let k = &s.key;
                let _ = writeln!(
                    out,
                    "# source={} N={} eta={} unraveling={} quantity={}",
                    k.source,
                    opt(k.n),
                    k.eta,
                    k.unraveling,
                    s.quantity
                );
                for p in &s.points {
                    let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", p.t, p.value, p.stderr.unwrap_or(0.0));
                }
            }
        }
    }
    out
}

pub fn execute(args: &PlotArgs) -> Result<(), CliError> {
    let mut all = Vec::new();
    for path in &args.inputs {
        all.extend(read_series(path)?);
    }
    let text = render(&all, args.format);
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
