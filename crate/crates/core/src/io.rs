//! CSV and JSON artifacts.
//!
//! Every CSV starts with `#` lines holding the run metadata:
//!
//! ```text
//! # tool: srgbm 0.1.0
//! # command: mfpt
//! # seed: 42
//! # config: {"...": "..."}
//! # wall_clock_seconds: 0.012
//! ```
//!
//! JSON artifacts are objects `{"metadata": ..., "data": ...}`. Readers skip
//! the comment lines, and [`read_metadata`] recovers them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{ObservedSeries, ParamSeries};
use crate::mobility::TransitionMatrix;
use crate::simulator::{FptSampleSet, IncomePanel, Snapshot};

/// Row-sum tolerance for matrices read from disk.
pub const MATRIX_FILE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Full configuration of the run that produced the artifact.
    pub config: serde_json::Value,
    pub wall_clock_seconds: f64,
}

impl Metadata {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            tool: "srgbm".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config,
            wall_clock_seconds: 0.0,
        }
    }
}

fn parse_error(line: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column: column.into(),
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_header(w: &mut impl Write, meta: &Metadata, extra: &[(&str, String)]) -> Result<()> {
    writeln!(w, "# tool: {} {}", meta.tool, meta.version)?;
    writeln!(w, "# command: {}", meta.command)?;
    writeln!(w, "# seed: {}", meta.seed)?;
    writeln!(w, "# config: {}", serde_json::to_string(&meta.config)?)?;
    writeln!(w, "# wall_clock_seconds: {}", meta.wall_clock_seconds)?;
    for (k, v) in extra {
        writeln!(w, "# {k}: {v}")?;
    }
    Ok(())
}

/// `key: value` pairs of the leading `#` lines.
fn read_comments(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in BufReader::new(open(path)?).lines() {
        let line = line?;
        let Some(body) = line.strip_prefix('#') else { break };
        if let Some((k, v)) = body.trim_start().split_once(": ") {
            out.insert(k.trim().to_string(), v.to_string());
        }
    }
    Ok(out)
}

/// Metadata of a CSV (comment header) or JSON (`metadata` field) artifact.
pub fn read_metadata(path: &Path) -> Result<Metadata> {
    let mut first = [0u8; 1];
    let is_json = {
        use std::io::Read;
        let mut f = open(path)?;
        f.read(&mut first)? == 1 && first[0] == b'{'
    };
    if is_json {
        #[derive(Deserialize)]
        struct Wrapped {
            metadata: Metadata,
        }
        let w: Wrapped = serde_json::from_reader(BufReader::new(open(path)?))?;
        return Ok(w.metadata);
    }
    let c = read_comments(path)?;
    let get = |k: &str| {
        c.get(k)
            .ok_or_else(|| parse_error(0, k, format!("metadata line `# {k}:` missing")))
    };
    let (tool, version) = get("tool")?
        .split_once(' ')
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .ok_or_else(|| parse_error(1, "tool", "expected `name version`"))?;
    Ok(Metadata {
        tool,
        version,
        command: get("command")?.clone(),
        seed: get("seed")?
            .parse()
            .map_err(|e| parse_error(3, "seed", format!("{e}")))?,
        config: serde_json::from_str(get("config")?)?,
        wall_clock_seconds: get("wall_clock_seconds")?
            .parse()
            .map_err(|e| parse_error(5, "wall_clock_seconds", format!("{e}")))?,
    })
}

fn csv_reader(path: &Path, has_headers: bool) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(has_headers)
        .trim(csv::Trim::All)
        .from_reader(open(path)?))
}

/// Column positions by name.
struct Columns {
    names: Vec<String>,
}

impl Columns {
    fn new(reader: &mut csv::Reader<File>) -> Result<Self> {
        Ok(Self {
            names: reader.headers()?.iter().map(str::to_string).collect(),
        })
    }

    fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.find(name)
            .ok_or_else(|| parse_error(1, name, format!("missing column `{name}`")))
    }
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn cell<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = record
        .get(idx)
        .ok_or_else(|| parse_error(line_of(record), name, "missing value"))?;
    raw.parse()
        .map_err(|e| parse_error(line_of(record), name, format!("`{raw}`: {e}")))
}

fn fmt(v: f64) -> String {
    // Display gives the shortest string that parses back to the same f64.
    format!("{v}")
}

/// Reads `year,top_share[,aux_share],reset_rate`.
pub fn load_observed_series(path: &Path) -> Result<ObservedSeries> {
    let mut reader = csv_reader(path, true)?;
    let cols = Columns::new(&mut reader)?;
    let year_c = cols.require("year")?;
    let top_c = cols.require("top_share")?;
    let reset_c = cols.require("reset_rate")?;
    let aux_c = cols.find("aux_share");
    let (mut years, mut top, mut aux, mut reset) = (vec![], vec![], vec![], vec![]);
    for record in reader.records() {
        let record = record?;
        let line = line_of(&record);
        let year: i32 = cell(&record, year_c, "year")?;
        if years.last().is_some_and(|&last| year <= last) {
            return Err(parse_error(line, "year", format!("{year} does not follow the previous year")));
        }
        let unit = |v: f64, name: &str| {
            if v > 0.0 && v < 1.0 {
                Ok(v)
            } else {
                Err(parse_error(line, name, format!("{v} outside (0, 1)")))
            }
        };
        years.push(year);
        top.push(unit(cell(&record, top_c, "top_share")?, "top_share")?);
        reset.push(unit(cell(&record, reset_c, "reset_rate")?, "reset_rate")?);
        if let Some(c) = aux_c {
            aux.push(unit(cell(&record, c, "aux_share")?, "aux_share")?);
        }
    }
    ObservedSeries::new(years, top, aux_c.map(|_| aux), reset)
}

pub fn write_observed_series(path: &Path, series: &ObservedSeries, meta: &Metadata) -> Result<()> {
    let mut header = vec!["year", "top_share"];
    if series.aux_share.is_some() {
        header.push("aux_share");
    }
    header.push("reset_rate");
    let rows = (0..series.len())
        .map(|i| {
            let mut row = vec![series.years[i].to_string(), fmt(series.top_share[i])];
            if let Some(a) = &series.aux_share {
                row.push(fmt(a[i]));
            }
            row.push(fmt(series.reset_rate[i]));
            row
        })
        .collect::<Vec<_>>();
    write_table(path, meta, &header, &rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub k: usize,
    /// Horizon in years.
    pub delta: f64,
}

/// `matrix.csv` pairs with `matrix.json`.
pub fn sidecar_path(matrix_path: &Path) -> PathBuf {
    matrix_path.with_extension("json")
}

/// Reads a headerless `K x K` CSV and its JSON sidecar. Rows must sum to one
/// within [`MATRIX_FILE_TOLERANCE`] unless `renormalize` is set.
pub fn load_matrix(path: &Path, renormalize: bool) -> Result<TransitionMatrix> {
    let side_path = sidecar_path(path);
    let sidecar: MatrixSidecar = serde_json::from_reader(BufReader::new(open(&side_path)?))?;
    let mut reader = csv_reader(path, false)?;
    let mut values = Vec::with_capacity(sidecar.k * sidecar.k);
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != sidecar.k {
            return Err(parse_error(line, "row", format!("{} columns, sidecar says K = {}", record.len(), sidecar.k)));
        }
        for j in 0..sidecar.k {
            values.push(cell::<f64>(&record, j, &format!("column {}", j + 1))?);
        }
        rows += 1;
    }
    if rows != sidecar.k {
        return Err(parse_error(0, "row", format!("{rows} rows, sidecar says K = {}", sidecar.k)));
    }
    let entries = DMatrix::from_row_slice(sidecar.k, sidecar.k, &values);
    TransitionMatrix::with_tolerance(entries, sidecar.delta, MATRIX_FILE_TOLERANCE, renormalize)
}

pub fn write_matrix(path: &Path, matrix: &TransitionMatrix, meta: &Metadata) -> Result<()> {
    let rows: Vec<Vec<String>> = matrix
        .rows()
        .iter()
        .map(|r| r.iter().map(|&v| fmt(v)).collect())
        .collect();
    let mut w = create(path)?;
    write_header(&mut w, meta, &[])?;
    let mut out = csv::Writer::from_writer(w);
    for row in &rows {
        out.write_record(row)?;
    }
    out.flush()?;
    let sidecar = MatrixSidecar {
        k: matrix.k(),
        delta: matrix.delta,
    };
    let mut side = create(&sidecar_path(path))?;
    serde_json::to_writer_pretty(&mut side, &sidecar)?;
    side.flush()?;
    Ok(())
}

/// One hitting time per line; the summary fields go into the header.
pub fn write_fpt_samples(path: &Path, samples: &FptSampleSet, meta: &Metadata) -> Result<()> {
    let summary = FptSampleSet {
        hitting_times: vec![],
        ..samples.clone()
    };
    let rows: Vec<Vec<String>> = samples.hitting_times.iter().map(|&t| vec![fmt(t)]).collect();
    write_table_with(path, meta, &[("fpt_summary", serde_json::to_string(&summary)?)], &["hitting_time"], &rows)
}

pub fn load_fpt_samples(path: &Path) -> Result<FptSampleSet> {
    let comments = read_comments(path)?;
    let summary = comments
        .get("fpt_summary")
        .ok_or_else(|| parse_error(0, "fpt_summary", "metadata line `# fpt_summary:` missing"))?;
    let mut set: FptSampleSet = serde_json::from_str(summary)?;
    let mut reader = csv_reader(path, true)?;
    let c = Columns::new(&mut reader)?.require("hitting_time")?;
    for record in reader.records() {
        set.hitting_times.push(cell(&record?, c, "hitting_time")?);
    }
    Ok(set)
}

/// Long format `worker_id,time,income`, snapshots in time order.
pub fn write_panel(path: &Path, panel: &IncomePanel, meta: &Metadata) -> Result<()> {
    let mut rows = Vec::with_capacity(panel.snapshots.len() * panel.n_workers());
    for s in &panel.snapshots {
        for (id, x) in panel.worker_ids.iter().zip(&s.incomes) {
            rows.push(vec![id.to_string(), fmt(s.time), fmt(*x)]);
        }
    }
    write_table(path, meta, &["worker_id", "time", "income"], &rows)
}

pub fn load_panel(path: &Path) -> Result<IncomePanel> {
    let mut reader = csv_reader(path, true)?;
    let cols = Columns::new(&mut reader)?;
    let (id_c, time_c, inc_c) = (cols.require("worker_id")?, cols.require("time")?, cols.require("income")?);
    let mut groups: Vec<(f64, Vec<u64>, Vec<f64>, usize)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let id: u64 = cell(&record, id_c, "worker_id")?;
        let time: f64 = cell(&record, time_c, "time")?;
        let income: f64 = cell(&record, inc_c, "income")?;
        match groups.last_mut() {
            Some(g) if g.0.to_bits() == time.to_bits() => {
                g.1.push(id);
                g.2.push(income);
            }
            _ => groups.push((time, vec![id], vec![income], line_of(&record))),
        }
    }
    let ids = groups.first().map(|g| g.1.clone()).unwrap_or_default();
    if let Some(g) = groups.iter().find(|g| g.1 != ids) {
        return Err(parse_error(g.3, "worker_id", format!("snapshot t = {} lists different workers", g.0)));
    }
    let snapshots = groups
        .into_iter()
        .map(|(time, _, incomes, _)| Snapshot { time, incomes })
        .collect();
    IncomePanel::new(ids, snapshots)
}

pub fn write_param_series(path: &Path, series: &ParamSeries, meta: &Metadata) -> Result<()> {
    let rows: Vec<Vec<String>> = (0..series.len())
        .map(|i| {
            vec![
                series.years[i].to_string(),
                fmt(series.mu[i]),
                fmt(series.mu_se[i]),
                fmt(series.sigma2[i]),
                fmt(series.sigma2_se[i]),
                fmt(series.r[i]),
                fmt(series.r_se[i]),
                fmt(series.x_r),
            ]
        })
        .collect();
    let extra = [
        ("reps_succeeded", series.reps_succeeded.to_string()),
        ("reps_failed", series.reps_failed.to_string()),
        ("unconverged_steps", series.unconverged_steps.to_string()),
        ("used_default_tail_ratio", series.used_default_tail_ratio.to_string()),
    ];
    write_table_with(
        path,
        meta,
        &extra,
        &["year", "mu", "mu_se", "sigma2", "sigma2_se", "r", "r_se", "x_r"],
        &rows,
    )
}

pub fn load_param_series(path: &Path) -> Result<ParamSeries> {
    let comments = read_comments(path)?;
    let count = |k: &str| comments.get(k).and_then(|v| v.parse::<usize>().ok()).unwrap_or(0);
    let mut reader = csv_reader(path, true)?;
    let cols = Columns::new(&mut reader)?;
    let names = ["year", "mu", "mu_se", "sigma2", "sigma2_se", "r", "r_se", "x_r"];
    let idx = names.map(|n| cols.require(n));
    let idx: Vec<usize> = idx.into_iter().collect::<Result<_>>()?;
    let mut s = ParamSeries {
        years: vec![],
        mu: vec![],
        sigma2: vec![],
        r: vec![],
        mu_se: vec![],
        sigma2_se: vec![],
        r_se: vec![],
        x_r: 1.0,
        reps_succeeded: count("reps_succeeded"),
        reps_failed: count("reps_failed"),
        unconverged_steps: count("unconverged_steps"),
        used_default_tail_ratio: comments.get("used_default_tail_ratio").is_some_and(|v| v == "true"),
    };
    for record in reader.records() {
        let record = record?;
        s.years.push(cell(&record, idx[0], names[0])?);
        s.mu.push(cell(&record, idx[1], names[1])?);
        s.mu_se.push(cell(&record, idx[2], names[2])?);
        s.sigma2.push(cell(&record, idx[3], names[3])?);
        s.sigma2_se.push(cell(&record, idx[4], names[4])?);
        s.r.push(cell(&record, idx[5], names[5])?);
        s.r_se.push(cell(&record, idx[6], names[6])?);
        s.x_r = cell(&record, idx[7], names[7])?;
    }
    s.validate()?;
    Ok(s)
}

/// Writes a CSV table under the metadata header.
pub fn write_table(path: &Path, meta: &Metadata, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_table_with(path, meta, &[], header, rows)
}

fn write_table_with(
    path: &Path,
    meta: &Metadata,
    extra: &[(&str, String)],
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut w = create(path)?;
    write_header(&mut w, meta, extra)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `{"metadata": meta, "data": data}`.
pub fn write_json<T: Serialize>(path: &Path, meta: &Metadata, data: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Wrapped<'a, T> {
        metadata: &'a Metadata,
        data: &'a T,
    }
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &Wrapped { metadata: meta, data })?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
