//! Run directories: JSON config in, JSONL/CSV/JSON/SVG out.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64 as C;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cluster::BoundaryTrace;
use crate::driver::{extract_driver, statistics, DriverPath, StatsReport};
use crate::error::{AleError, Result};
use crate::sampler::SimParams;
use crate::sim::{simulate, RunOutput, RunRecord};

pub const RUN_FILE: &str = "run.jsonl";
pub const DRIVER_FILE: &str = "driver.csv";
pub const STATS_FILE: &str = "stats.json";
pub const BOUNDARY_FILE: &str = "boundary.svg";
pub const TIMING_FILE: &str = "timing.csv";

/// Reads and validates a JSON config; returns the parameters and any warnings.
pub fn load_params(path: &Path) -> Result<(SimParams, Vec<String>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| AleError::Config(format!("{}: {e}", path.display())))?;
    parse_params(&text)
}

pub fn parse_params(text: &str) -> Result<(SimParams, Vec<String>)> {
    let p: SimParams = serde_json::from_str(text).map_err(|e| AleError::Config(e.to_string()))?;
    let warnings = p.validate()?;
    Ok((p, warnings))
}

fn json_err(e: serde_json::Error) -> AleError {
    AleError::Io(e.to_string())
}

/// Line-oriented JSON writer, flushed after every record.
pub struct JsonlWriter<W: Write> {
    inner: W,
}

impl JsonlWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            inner: BufWriter::new(File::create(path)?),
        })
    }
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn write<T: Serialize>(&mut self, item: &T) -> Result<()> {
        serde_json::to_writer(&mut self.inner, item).map_err(json_err)?;
        self.inner.write_all(b"\n")?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(json_err)?);
        }
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(json_err)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&fs::read_to_string(path)?).map_err(json_err)
}

/// `k,t,xi` with one row per particle; `xi` printed in shortest round-trip form.
pub fn driver_csv(path: &DriverPath) -> String {
    let mut s = String::from("k,t,xi\n");
    for (k, xi) in path.steps.iter().enumerate() {
        let _ = writeln!(s, "{k},{:?},{:?}", path.c * k as f64, xi);
    }
    s
}

/// Parses `driver_csv` output back into the step values.
pub fn parse_driver_csv(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.rsplit(',')
                .next()
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| AleError::Io(format!("bad driver row {l:?}")))
        })
        .collect()
}

pub fn timing_csv(records: &[RunRecord]) -> String {
    let mut s = String::from("step,wall_ms\n");
    for r in records {
        let _ = writeln!(s, "{},{:.3}", r.step, r.wall_ms);
    }
    s
}

fn polyline(points: &[C], stroke: &str, width: f64) -> String {
    let mut d = String::new();
    for (i, p) in points.iter().filter(|p| p.is_finite()).enumerate() {
        let _ = write!(
            d,
            "{}{:.6},{:.6}",
            if i == 0 { "M" } else { " L" },
            p.re,
            -p.im
        );
    }
    format!("<path d=\"{d}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width:.6}\"/>\n")
}

/// SVG of the outline and particles; the empty trace draws the unit circle.
pub fn boundary_svg(trace: &BoundaryTrace) -> String {
    let pts = trace.points();
    let r = pts
        .iter()
        .filter(|p| p.is_finite())
        .map(|p| p.norm())
        .fold(1.0, f64::max)
        * 1.05;
    let stroke = r / 400.0;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{:.6} {:.6} {:.6} {:.6}\" width=\"800\" height=\"800\">\n",
        -r,
        -r,
        2.0 * r,
        2.0 * r
    );
    if trace.particles.is_empty() {
        let _ = writeln!(s, "<circle cx=\"0\" cy=\"0\" r=\"1\" fill=\"none\" stroke=\"black\" stroke-width=\"{stroke:.6}\"/>");
    } else {
        s.push_str(&polyline(&trace.outline, "black", stroke));
        for p in &trace.particles {
            s.push_str(&polyline(p, "firebrick", stroke));
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Contents of `stats.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub params: SimParams,
    pub run_index: u64,
    pub particles: usize,
    pub stats: StatsReport,
    pub driver: DriverPath,
}

/// Summary of a finished run and its statistics.
pub fn run_stats(run: &RunOutput) -> Result<RunStats> {
    let driver = extract_driver(&run.state, run.params.horizon())?;
    let stats = statistics(&driver, &run.state, &run.moments());
    Ok(RunStats {
        params: run.params.clone(),
        run_index: run.run_index,
        particles: run.state.n(),
        stats,
        driver,
    })
}

/// Writes everything except `run.jsonl`, which is streamed while the run is in progress.
pub fn write_run_artifacts(dir: &Path, run: &RunOutput) -> Result<RunStats> {
    let stats = run_stats(run)?;
    fs::write(dir.join(DRIVER_FILE), driver_csv(&stats.driver))?;
    write_json(&dir.join(STATS_FILE), &stats)?;
    fs::write(
        dir.join(BOUNDARY_FILE),
        boundary_svg(&run.state.boundary_trace(16)),
    )?;
    fs::write(dir.join(TIMING_FILE), timing_csv(&run.records))?;
    Ok(stats)
}

/// A run that aborted; `last_good` is the last step written to `run.jsonl`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub error: AleError,
    pub last_good: Option<usize>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.last_good {
            Some(k) => write!(f, "{} (last good record: step {k})", self.error),
            None => write!(f, "{} (no records written)", self.error),
        }
    }
}

/// Runs one simulation into `dir`, streaming `run.jsonl`.
pub fn simulate_to_dir(
    params: &SimParams,
    run_index: u64,
    dir: &Path,
) -> std::result::Result<(RunOutput, RunStats), RunFailure> {
    let fail = |error: AleError, last_good| RunFailure { error, last_good };
    fs::create_dir_all(dir).map_err(|e| fail(e.into(), None))?;
    let mut writer = JsonlWriter::create(&dir.join(RUN_FILE)).map_err(|e| fail(e, None))?;
    let mut last_good = None;
    let mut write_err = None;
    let out = simulate(params, run_index, |r| {
        if write_err.is_none() {
            match writer.write(r) {
                Ok(()) => last_good = Some(r.step),
                Err(e) => write_err = Some(e),
            }
        }
    });
    if let Some(e) = write_err {
        return Err(fail(e, last_good));
    }
    let out = out.map_err(|e| fail(e, last_good))?;
    let stats = write_run_artifacts(dir, &out).map_err(|e| fail(e, last_good))?;
    Ok((out, stats))
}
