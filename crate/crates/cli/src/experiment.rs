//! Experiment files and the data files written for them.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rachlearn_core::{Aggregate, SimConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    DThMs,
    Lambda,
    #[serde(rename = "p_11")]
    P11,
    M,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::DThMs => "d_th_ms",
            SweepParam::Lambda => "lambda",
            SweepParam::P11 => "p_11",
            SweepParam::M => "m",
        }
    }

    /// `base` with this parameter set to `value`, without validation.
    pub fn set(self, base: &SimConfig, value: f64) -> std::result::Result<SimConfig, String> {
        let mut cfg = base.clone();
        match self {
            SweepParam::DThMs => cfg.d_th_ms = value,
            SweepParam::Lambda => cfg.lambda = value,
            SweepParam::P11 => cfg.p_11 = value,
            SweepParam::M => {
                if value.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&value) {
                    return Err("memory must be a whole number of bits".into());
                }
                cfg.m = value as u32;
            }
        }
        Ok(cfg)
    }

    /// Like [`Self::set`] but also rejects invalid configurations.
    pub fn apply(self, base: &SimConfig, value: f64) -> std::result::Result<SimConfig, String> {
        let cfg = self.set(base, value)?;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// A base configuration swept over one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub base: SimConfig,
    pub sweep: Sweep,
    /// Runs per sweep point; falls back to `base.runs`.
    #[serde(default)]
    pub runs: Option<u32>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// One sweep point ready to run.
#[derive(Debug, Clone)]
pub struct Point {
    pub value: f64,
    pub config: SimConfig,
}

impl Point {
    /// File-name tag such as `d_th_ms_0.75`.
    pub fn tag(&self, param: SweepParam) -> String {
        format!("{param}_{}", self.value)
    }
}

impl ExperimentSpec {
    pub fn points(&self) -> Result<Vec<Point>> {
        if self.sweep.values.is_empty() {
            return Err(CliError::Usage(format!(
                "sweep over {} has no values",
                self.sweep.param
            )));
        }
        let mut bad = Vec::new();
        let mut points = Vec::new();
        for &value in &self.sweep.values {
            match self.sweep.param.apply(&self.base, value) {
                Ok(config) => points.push(Point { value, config }),
                Err(why) => bad.push(format!("{} = {value}: {why}", self.sweep.param)),
            }
        }
        if !bad.is_empty() {
            return Err(CliError::Usage(format!(
                "invalid sweep values: {}",
                bad.join("; ")
            )));
        }
        Ok(points)
    }
}

/// Parses JSON; errors carry the line and column.
pub fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        // serde_json appends "at line L column C"
        CliError::Usage(format!("{}: {e}", path.display()))
    })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(CliError::io(path))
}

pub fn write_cdf(path: &Path, agg: &Aggregate) -> Result<()> {
    let mut out = create(path)?;
    let io = CliError::io(path);
    (|| {
        writeln!(out, "delay_ms,cumulative_probability")?;
        for (d, p) in agg.cdf() {
            writeln!(out, "{d},{p:.6}")?;
        }
        out.flush()
    })()
    .map_err(io)
}

pub fn write_learned(path: &Path, agg: &Aggregate) -> Result<()> {
    let mut out = create(path)?;
    let io = CliError::io(path);
    (|| {
        writeln!(out, "time_ms,mean_fraction_correct")?;
        for (i, f) in agg.mean_learned_correct.iter().enumerate() {
            writeln!(out, "{},{f:.6}", (i + 1) as f64 * agg.slot_ms)?;
        }
        out.flush()
    })()
    .map_err(io)
}

#[derive(Debug, Serialize)]
pub struct PointSummary {
    pub value: f64,
    pub d_th_ms: f64,
    /// `None` when every delay was censored.
    pub mean_delay_ms: Option<f64>,
    pub threshold_satisfaction: f64,
    pub censored_fraction: f64,
    pub peak_learned_correct_pct: f64,
    pub critical_messages: usize,
}

impl PointSummary {
    pub fn new(value: f64, agg: &Aggregate) -> Self {
        let mean = agg.mean_delay_ms();
        PointSummary {
            value,
            d_th_ms: agg.d_th_ms,
            mean_delay_ms: mean.is_finite().then_some(mean),
            threshold_satisfaction: agg.threshold_satisfaction(),
            censored_fraction: agg.censored_fraction(),
            peak_learned_correct_pct: agg.peak_learned_correct_pct(),
            critical_messages: agg.samples(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub sweep: SweepParam,
    pub runs: u32,
    pub master_seed: u64,
    pub points: Vec<PointSummary>,
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}
