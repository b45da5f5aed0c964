//! Loading, validating and windowing paired time series.

use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, non-empty sequence of real samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    label: String,
    samples: Vec<f64>,
}

impl TimeSeries {
    pub fn new(label: impl Into<String>, samples: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if samples.is_empty() {
            return Err(Error::InvalidSeries(format!("series '{label}' is empty")));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "series '{label}' has a non-finite sample at index {pos}"
            )));
        }
        Ok(Self { label, samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// Subtracts the global sample mean.
pub fn demean(ts: &TimeSeries) -> TimeSeries {
    let mean = ts.mean();
    TimeSeries {
        label: ts.label.clone(),
        samples: ts.samples.iter().map(|v| v - mean).collect(),
    }
}

/// Number of windows requested by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WindowCount {
    /// As many full windows as fit.
    #[default]
    Auto,
    Fixed(usize),
}

/// Layout of consecutive windows over a series of length `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPlan {
    /// Samples per window.
    pub n_f: usize,
    /// Number of windows.
    pub n_s: usize,
    /// Samples skipped between consecutive windows.
    pub gap: usize,
    /// Subtract the global mean before transforming.
    pub demean: bool,
}

impl WindowPlan {
    /// Samples covered from the first window start to the last window end.
    pub fn span(&self) -> usize {
        self.n_s * self.n_f + self.n_s.saturating_sub(1) * self.gap
    }

    pub fn window(&self, l: usize) -> Range<usize> {
        let start = l * (self.n_f + self.gap);
        start..start + self.n_f
    }

    pub fn windows(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.n_s).map(move |l| self.window(l))
    }

    pub fn with_demean(mut self, demean: bool) -> Self {
        self.demean = demean;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.n_f < 2 {
            return Err(Error::contract(format!("n_f = {} must be >= 2", self.n_f)));
        }
        if self.n_s == 0 {
            return Err(Error::InsufficientData("plan has zero windows".into()));
        }
        if self.span() > n {
            return Err(Error::InsufficientData(format!(
                "{} windows of {} samples with gap {} need {} samples, series has {n}",
                self.n_s,
                self.n_f,
                self.gap,
                self.span()
            )));
        }
        Ok(())
    }
}

/// Lays out windows of `n_f` samples separated by `gap` over `n` samples.
pub fn plan_windows(n: usize, n_f: usize, n_s: WindowCount, gap: usize) -> Result<WindowPlan> {
    if n_f < 2 {
        return Err(Error::contract(format!("n_f = {n_f} must be >= 2")));
    }
    let n_s = match n_s {
        WindowCount::Auto => (n + gap) / (n_f + gap),
        WindowCount::Fixed(v) => v,
    };
    if n_s == 0 {
        return Err(Error::InsufficientData(format!(
            "{n} samples cannot fill a single window of {n_f}"
        )));
    }
    let plan = WindowPlan {
        n_f,
        n_s,
        gap,
        demean: true,
    };
    plan.validate(n)?;
    let trailing = n - plan.span();
    if trailing > gap {
        log::warn!("discarding {trailing} trailing samples that do not fill a window");
    }
    Ok(plan)
}

/// Reads a two-column CSV file. See [`parse_pair_csv`].
pub fn load_pair_csv(path: impl AsRef<Path>) -> Result<(TimeSeries, TimeSeries)> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    parse_pair_csv(&text)
}

/// Parses comma-separated `x,y` rows with an optional single header row.
///
/// Row numbers in errors are 1-based and count the header line.
pub fn parse_pair_csv(text: &str) -> Result<(TimeSeries, TimeSeries)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut labels = ("x".to_string(), "y".to_string());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::Format(format!(
                "row {row} has {} columns, expected 2",
                record.len()
            )));
        }
        let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
        match parsed {
            (Ok(x), Ok(y)) => {
                xs.push(x);
                ys.push(y);
            }
            _ if row == 1 => {
                labels = (record[0].to_string(), record[1].to_string());
            }
            (Err(_), _) => {
                return Err(Error::Parse {
                    row,
                    message: format!("non-numeric cell '{}' in column 1", &record[0]),
                })
            }
            (_, Err(_)) => {
                return Err(Error::Parse {
                    row,
                    message: format!("non-numeric cell '{}' in column 2", &record[1]),
                })
            }
        }
    }
    if xs.is_empty() {
        return Err(Error::Format("no data rows".into()));
    }
    Ok((TimeSeries::new(labels.0, xs)?, TimeSeries::new(labels.1, ys)?))
}

/// Writes the pair in the format accepted by [`parse_pair_csv`].
pub fn write_pair_csv<W: Write>(out: W, x: &TimeSeries, y: &TimeSeries) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::contract("series lengths differ"));
    }
    let mut writer = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::Format(e.to_string());
    writer.write_record([x.label(), y.label()]).map_err(map)?;
    for (a, b) in x.samples().iter().zip(y.samples()) {
        writer
            .write_record([format!("{a:?}"), format!("{b:?}")])
            .map_err(map)?;
    }
    writer.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
