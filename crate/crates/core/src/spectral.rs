//! Windowed DFT samples of the spectral-process increments.
//!
//! Window `l` of a series is transformed with the unnormalized forward DFT
//! `X_l[i] = sum_n x_l[n] exp(-j 2 pi i n / n_f)`. Row `i` of the resulting
//! `n_f x n_s` matrix holds `n_s` samples of the increment at normalized
//! frequency `i / n_f`.

use std::io::Write;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::knn::PointCloud;
use crate::timeseries::{TimeSeries, WindowPlan};

/// Components below this fraction of a window's spectral norm are rounding
/// residue and are set to exactly zero.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralIncrements {
    n_f: usize,
    n_s: usize,
    /// Row-major, `values[i * n_s + l]`.
    values: Vec<Complex64>,
}

impl SpectralIncrements {
    pub fn from_rows(n_f: usize, n_s: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != n_f * n_s {
            return Err(Error::contract(format!(
                "{} values do not fill a {n_f} x {n_s} matrix",
                values.len()
            )));
        }
        Ok(Self { n_f, n_s, values })
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    /// Normalized frequency of row `i`.
    pub fn freq(&self, i: usize) -> f64 {
        i as f64 / self.n_f as f64
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.values[i * self.n_s..(i + 1) * self.n_s]
    }

    pub fn get(&self, i: usize, l: usize) -> Complex64 {
        self.values[i * self.n_s + l]
    }

    pub fn check_row(&self, i: usize) -> Result<()> {
        if i >= self.n_f {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n_f,
            });
        }
        Ok(())
    }

    /// Writes rows as frequency index, columns as windows, cells as `re+imj`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let map = |e: csv::Error| Error::Format(e.to_string());
        let mut header = vec!["freq_index".to_string()];
        header.extend((0..self.n_s).map(|l| format!("w{l}")));
        writer.write_record(&header).map_err(map)?;
        for i in 0..self.n_f {
            let mut record = vec![i.to_string()];
            record.extend(self.row(i).iter().map(|z| format_complex(*z)));
            writer.write_record(&record).map_err(map)?;
        }
        writer.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn format_complex(z: Complex64) -> String {
    if z.im.is_sign_negative() {
        format!("{:?}-{:?}j", z.re, -z.im)
    } else {
        format!("{:?}+{:?}j", z.re, z.im)
    }
}

/// Transforms every window of `ts` described by `plan`.
pub fn spectral_increments(ts: &TimeSeries, plan: &WindowPlan) -> Result<SpectralIncrements> {
    plan.validate(ts.len())?;
    let (n_f, n_s) = (plan.n_f, plan.n_s);
    let offset = if plan.demean { ts.mean() } else { 0.0 };
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_f);

    let mut windows = vec![Complex64::new(0.0, 0.0); n_f * n_s];
    for (l, range) in plan.windows().enumerate() {
        let dst = &mut windows[l * n_f..(l + 1) * n_f];
        for (d, &s) in dst.iter_mut().zip(&ts.samples()[range]) {
            *d = Complex64::new(s - offset, 0.0);
        }
    }
    fft.process(&mut windows);

    let mut values = vec![Complex64::new(0.0, 0.0); n_f * n_s];
    for l in 0..n_s {
        let spectrum = &mut windows[l * n_f..(l + 1) * n_f];
        flush_residue(spectrum);
        for (i, z) in spectrum.iter().enumerate() {
            values[i * n_s + l] = *z;
        }
    }
    Ok(SpectralIncrements { n_f, n_s, values })
}

fn flush_residue(spectrum: &mut [Complex64]) {
    let norm = spectrum.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let floor = NOISE_FLOOR * norm;
    for z in spectrum {
        if z.re.abs() <= floor {
            z.re = 0.0;
        }
        if z.im.abs() <= floor {
            z.im = 0.0;
        }
    }
}

/// Cumulative sum of the increments of window `l` over frequency.
pub fn integrated_spectrum(inc: &SpectralIncrements, l: usize) -> Result<Vec<Complex64>> {
    if l >= inc.n_s {
        return Err(Error::IndexOutOfRange {
            index: l,
            len: inc.n_s,
        });
    }
    let mut acc = Complex64::new(0.0, 0.0);
    Ok((0..inc.n_f)
        .map(|i| {
            acc += inc.get(i, l);
            acc
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    /// Mean over windows of `|X_l[i]|^2`.
    pub power: Vec<f64>,
}

pub fn power_spectrum(inc: &SpectralIncrements) -> PowerSpectrum {
    let power = (0..inc.n_f)
        .map(|i| inc.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>() / inc.n_s as f64)
        .collect();
    PowerSpectrum { power }
}

/// Row `i` as `n_s` points `(re, im)`.
pub fn increment_samples(inc: &SpectralIncrements, i: usize) -> Result<PointCloud> {
    inc.check_row(i)?;
    let coords = inc.row(i).iter().flat_map(|z| [z.re, z.im]).collect();
    PointCloud::new(2, coords)
}
