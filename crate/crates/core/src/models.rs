//! Seeded simulation models and Gaussian reference values.
//!
//! * linear: `y = h * x + w` with white Gaussian `x`, `w`
//! * cosine-squared: `x` is a random-amplitude, random-phase cosine (one or
//!   two tones), `y = x^2 + w`
//!
//! For the linear Gaussian model the MI rate is
//! `int_0^0.5 ln(1 + sx^2 |H|^2 / sw^2) dl` and the same-frequency MI in
//! frequency is `-ln(1 - C)` with `C` the magnitude-squared coherence.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::timeseries::TimeSeries;

/// How the filter output is aligned with its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// `y[n] = sum_m h[m] x[n - m]`.
    #[default]
    Causal,
    /// Output advanced by the group delay `(len - 1) / 2` of a linear-phase
    /// filter, `y[n] = sum_m h[m] x[n + D - m]`.
    ZeroPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModelConfig {
    pub taps: Vec<f64>,
    pub sigma_x: f64,
    pub sigma_w: f64,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub alignment: Alignment,
}

impl LinearModelConfig {
    fn validate(&self) -> Result<()> {
        if self.taps.is_empty() || self.taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::contract("taps must be non-empty and finite"));
        }
        if !(self.sigma_x > 0.0) || !(self.sigma_w >= 0.0) {
            return Err(Error::contract("need sigma_x > 0 and sigma_w >= 0"));
        }
        if self.n_samples == 0 {
            return Err(Error::contract("n_samples must be positive"));
        }
        Ok(())
    }

    fn delay(&self) -> usize {
        match self.alignment {
            Alignment::Causal => 0,
            Alignment::ZeroPhase => (self.taps.len() - 1) / 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineModelConfig {
    /// First tone, cycles per sample.
    pub lambda1: f64,
    /// Optional second tone.
    pub lambda2: Option<f64>,
    pub sigma_w: f64,
    pub n_samples: usize,
    /// Amplitudes and phases are redrawn every `window_len` samples.
    pub window_len: usize,
    pub seed: u64,
}

impl CosineModelConfig {
    fn validate(&self) -> Result<()> {
        let tones = std::iter::once(self.lambda1).chain(self.lambda2);
        for l in tones {
            if !(l > 0.0 && l < 0.5) {
                return Err(Error::contract(format!("frequency {l} outside (0, 0.5)")));
            }
        }
        if !(self.sigma_w >= 0.0) {
            return Err(Error::contract("sigma_w must be >= 0"));
        }
        if self.n_samples == 0 || self.window_len == 0 {
            return Err(Error::contract("n_samples and window_len must be positive"));
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

/// Rayleigh(1) via inverse transform.
pub fn rayleigh(rng: &mut impl Rng) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    (-2.0 * u.ln()).sqrt()
}

/// `y = h * x + w`. Draws `x` (including filter warm-up) first, then `w`.
pub fn gen_linear(cfg: &LinearModelConfig) -> Result<(TimeSeries, TimeSeries)> {
    cfg.validate()?;
    let (n, taps) = (cfg.n_samples, &cfg.taps);
    let warm = taps.len() - 1;
    let delay = cfg.delay();
    let mut rng = rng_for(cfg.seed, &[0x1]);
    let x_ext: Vec<f64> = (0..n + warm + delay)
        .map(|_| normal(&mut rng, cfg.sigma_x))
        .collect();
    let w: Vec<f64> = (0..n).map(|_| normal(&mut rng, cfg.sigma_w)).collect();

    let y: Vec<f64> = (0..n)
        .map(|t| {
            let at = t + warm + delay;
            let filtered: f64 = taps
                .iter()
                .enumerate()
                .map(|(m, h)| h * x_ext[at - m])
                .sum();
            filtered + w[t]
        })
        .collect();
    let x = x_ext[warm..warm + n].to_vec();
    Ok((TimeSeries::new("x", x)?, TimeSeries::new("y", y)?))
}

/// Two-tap lowpass `[beta, 1 - beta]`.
pub fn lowpass_taps(beta: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::contract(format!("beta = {beta} outside [0, 1]")));
    }
    Ok(vec![beta, 1.0 - beta])
}

pub const BANDPASS_LEN: usize = 33;
pub const BANDPASS_EDGES: (f64, f64) = (0.15, 0.35);

/// 33-tap Hamming-windowed sinc bandpass with edges 0.15 and 0.35 cycles
/// per sample, scaled to unit gain at the band center.
pub fn bandpass_taps() -> Vec<f64> {
    let (f1, f2) = BANDPASS_EDGES;
    let mid = (BANDPASS_LEN - 1) as f64 / 2.0;
    let sinc = |x: f64| if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
    let mut taps: Vec<f64> = (0..BANDPASS_LEN)
        .map(|n| {
            let m = n as f64 - mid;
            let ideal = 2.0 * f2 * sinc(2.0 * f2 * m) - 2.0 * f1 * sinc(2.0 * f1 * m);
            let window = 0.54 - 0.46 * (2.0 * PI * n as f64 / (BANDPASS_LEN - 1) as f64).cos();
            ideal * window
        })
        .collect();
    let gain = fir_response(&taps, 0.5 * (f1 + f2)).norm();
    for t in &mut taps {
        *t /= gain;
    }
    // exact symmetry regardless of rounding in the window term
    for n in 0..BANDPASS_LEN / 2 {
        taps[BANDPASS_LEN - 1 - n] = taps[n];
    }
    taps
}

/// `H(l) = sum_n h[n] exp(-j 2 pi l n)`.
pub fn fir_response(taps: &[f64], lambda: f64) -> Complex64 {
    taps.iter()
        .enumerate()
        .map(|(n, &h)| Complex64::from_polar(h, -2.0 * PI * lambda * n as f64))
        .sum()
}

fn cosine_square(cfg: &CosineModelConfig) -> Result<(TimeSeries, TimeSeries)> {
    cfg.validate()?;
    let n = cfg.n_samples;
    let mut rng = rng_for(cfg.seed, &[0x2]);
    let tones: Vec<f64> = std::iter::once(cfg.lambda1).chain(cfg.lambda2).collect();
    let mut x = Vec::with_capacity(n);
    let mut params: Vec<(f64, f64)> = Vec::new();
    for t in 0..n {
        let local = t % cfg.window_len;
        if local == 0 {
            params = tones
                .iter()
                .map(|_| (rayleigh(&mut rng), rng.random_range(0.0..2.0 * PI)))
                .collect();
        }
        let v: f64 = tones
            .iter()
            .zip(&params)
            .map(|(&l, &(a, theta))| a * (2.0 * PI * l * local as f64 + theta).cos())
            .sum();
        x.push(v);
    }
    let y = x
        .iter()
        .map(|v| v * v + normal(&mut rng, cfg.sigma_w))
        .collect();
    Ok((TimeSeries::new("x", x)?, TimeSeries::new("y", y)?))
}

/// Single random cosine `x = A cos(2 pi l' n + theta)`, `y = x^2 + w`, with
/// `A ~ Rayleigh(1)` and `theta ~ U[0, 2 pi)` drawn afresh per window.
pub fn gen_cosine_square(cfg: &CosineModelConfig) -> Result<(TimeSeries, TimeSeries)> {
    if cfg.lambda2.is_some() {
        return Err(Error::contract("single-tone model takes no second frequency"));
    }
    cosine_square(cfg)
}

/// Two independent random cosines at `lambda1`, `lambda2`, `y = x^2 + w`.
pub fn gen_two_cosine_square(cfg: &CosineModelConfig) -> Result<(TimeSeries, TimeSeries)> {
    if cfg.lambda2.is_none() {
        return Err(Error::contract("two-tone model needs lambda2"));
    }
    cosine_square(cfg)
}

/// `(x bin, y bin)` pairs that carry dependence for the two-tone model,
/// given tone bins `a < b`.
pub fn two_cosine_coupled_bins(a: usize, b: usize) -> Vec<(usize, usize)> {
    vec![
        (a, 0),
        (a, b - a),
        (a, 2 * a),
        (a, a + b),
        (b, 0),
        (b, b - a),
        (b, a + b),
        (b, 2 * b),
    ]
}

fn snr(taps: &[f64], sigma_x: f64, sigma_w: f64, lambda: f64) -> f64 {
    sigma_x * sigma_x * fir_response(taps, lambda).norm_sqr() / (sigma_w * sigma_w)
}

/// MI rate (nats per sample) of the linear Gaussian model,
/// `int_0^0.5 ln(1 + sx^2 |H(l)|^2 / sw^2) dl`.
pub fn oracle_mi_gaussian(taps: &[f64], sigma_x: f64, sigma_w: f64) -> Result<f64> {
    if !(sigma_w > 0.0) {
        return Err(Error::Divergent("MI is infinite without observation noise".into()));
    }
    let f = |l: f64| snr(taps, sigma_x, sigma_w, l).ln_1p();
    Ok(adaptive_simpson(&f, 0.0, 0.5, 1e-8))
}

/// Same-frequency MI in frequency for a proper complex Gaussian increment,
/// `-ln(1 - C(l))`.
pub fn oracle_mif_gaussian(taps: &[f64], sigma_x: f64, sigma_w: f64, lambda: f64) -> Result<f64> {
    if !(sigma_w > 0.0) {
        return Err(Error::Divergent("MI is infinite without observation noise".into()));
    }
    // -ln(1 - C) with C = s / (s + 1) is ln(1 + s)
    Ok(snr(taps, sigma_x, sigma_w, lambda).ln_1p())
}

/// Magnitude-squared coherence of the linear model at `lambda`.
pub fn coherence(taps: &[f64], sigma_x: f64, sigma_w: f64, lambda: f64) -> f64 {
    let s = sigma_x * sigma_x * fir_response(taps, lambda).norm_sqr();
    s / (s + sigma_w * sigma_w)
}

/// [`oracle_mif_gaussian`] for DFT bin `i` of an `n_f`-point window. The DC
/// and Nyquist increments of a real series are real-valued, so they carry
/// half the information of a complex bin: `-ln(1 - C) / 2`.
pub fn oracle_mif_gaussian_bin(
    taps: &[f64],
    sigma_x: f64,
    sigma_w: f64,
    i: usize,
    n_f: usize,
) -> Result<f64> {
    let lambda = i as f64 / n_f as f64;
    let full = oracle_mif_gaussian(taps, sigma_x, sigma_w, lambda)?;
    let real_bin = i == 0 || 2 * i == n_f;
    Ok(if real_bin { 0.5 * full } else { full })
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{power_spectrum, spectral_increments};
    use crate::timeseries::{plan_windows, WindowCount};
    use rand::SeedableRng;

    fn variance(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
    }

    /// Composite trapezoid rule on a fine grid.
    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|k| f(a + k as f64 * h)).sum();
        h * (0.5 * (f(a) + f(b)) + inner)
    }

    #[test]
    fn identity_filter_without_noise_copies_input() {
        let cfg = LinearModelConfig {
            taps: vec![1.0],
            sigma_x: 1.0,
            sigma_w: 0.0,
            n_samples: 1000,
            seed: 3,
            alignment: Alignment::Causal,
        };
        let (x, y) = gen_linear(&cfg).unwrap();
        assert_eq!(x.samples(), y.samples());
    }

    #[test]
    fn causal_alignment_uses_past_inputs() {
        let cfg = LinearModelConfig {
            taps: vec![0.0, 1.0],
            sigma_x: 1.0,
            sigma_w: 0.0,
            n_samples: 100,
            seed: 4,
            alignment: Alignment::Causal,
        };
        let (x, y) = gen_linear(&cfg).unwrap();
        assert_eq!(&y.samples()[1..], &x.samples()[..99]);
    }

    #[test]
    fn zero_phase_alignment_centers_the_filter() {
        let mut taps = vec![0.0; 5];
        taps[2] = 1.0;
        let cfg = LinearModelConfig {
            taps,
            sigma_x: 1.0,
            sigma_w: 0.0,
            n_samples: 100,
            seed: 4,
            alignment: Alignment::ZeroPhase,
        };
        let (x, y) = gen_linear(&cfg).unwrap();
        assert_eq!(x.samples(), y.samples());
    }

    #[test]
    fn two_tap_output_variance() {
        let beta = 0.3;
        let cfg = LinearModelConfig {
            taps: lowpass_taps(beta).unwrap(),
            sigma_x: 1.5,
            sigma_w: 0.7,
            n_samples: 100_000,
            seed: 9,
            alignment: Alignment::Causal,
        };
        let (_, y) = gen_linear(&cfg).unwrap();
        let expected = (beta * beta + (1.0 - beta) * (1.0 - beta)) * 1.5 * 1.5 + 0.49;
        assert!((variance(y.samples()) / expected - 1.0).abs() < 0.02);
    }

    #[test]
    fn generators_are_reproducible() {
        let cfg = LinearModelConfig {
            taps: bandpass_taps(),
            sigma_x: 1.0,
            sigma_w: 1.0,
            n_samples: 500,
            seed: 1,
            alignment: Alignment::ZeroPhase,
        };
        assert_eq!(gen_linear(&cfg).unwrap(), gen_linear(&cfg).unwrap());
        let other = LinearModelConfig { seed: 2, ..cfg.clone() };
        assert_ne!(gen_linear(&cfg).unwrap().0, gen_linear(&other).unwrap().0);

        let cos = CosineModelConfig {
            lambda1: 0.125,
            lambda2: Some(0.1875),
            sigma_w: 1.0,
            n_samples: 640,
            window_len: 32,
            seed: 5,
        };
        assert_eq!(
            gen_two_cosine_square(&cos).unwrap(),
            gen_two_cosine_square(&cos).unwrap()
        );
    }

    #[test]
    fn lowpass_taps_examples() {
        assert_eq!(lowpass_taps(0.0).unwrap(), vec![0.0, 1.0]);
        assert_eq!(lowpass_taps(1.0).unwrap(), vec![1.0, 0.0]);
        assert_eq!(lowpass_taps(0.5).unwrap(), vec![0.5, 0.5]);
        assert!(lowpass_taps(1.5).is_err());
        assert!(lowpass_taps(-0.1).is_err());
    }

    #[test]
    fn bandpass_meets_band_edges() {
        let taps = bandpass_taps();
        assert_eq!(taps.len(), 33);
        for i in 0..33 {
            assert_eq!(taps[i], taps[32 - i]);
        }
        let grid: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.5 / 2000.0).collect();
        let mags: Vec<f64> = grid.iter().map(|&l| fir_response(&taps, l).norm()).collect();
        let peak = mags.iter().cloned().fold(0.0, f64::max);
        for (&l, &m) in grid.iter().zip(&mags) {
            if (0.18..=0.32).contains(&l) {
                assert!(m >= 0.9 * peak, "passband dip at {l}: {m}");
            }
            if l <= 0.12 || l >= 0.38 {
                assert!(m <= 0.1 * peak, "stopband leak at {l}: {m}");
            }
        }
        // direct DFT sums at 0 and 0.25
        let dc: f64 = taps.iter().sum();
        assert!(dc.abs() <= 0.1 * peak);
        let quarter: Complex64 = taps
            .iter()
            .enumerate()
            .map(|(n, &h)| Complex64::from_polar(h, -PI * n as f64 / 2.0))
            .sum();
        assert!(quarter.norm() >= 0.9 * peak);
    }

    #[test]
    fn cosine_square_without_noise_is_exact_square() {
        let cfg = CosineModelConfig {
            lambda1: 4.0 / 32.0,
            lambda2: None,
            sigma_w: 0.0,
            n_samples: 32 * 200,
            window_len: 32,
            seed: 7,
        };
        let (x, y) = gen_cosine_square(&cfg).unwrap();
        for (a, b) in x.samples().iter().zip(y.samples()) {
            assert_eq!(a * a, *b);
        }
        let plan = plan_windows(x.len(), 32, WindowCount::Auto, 0)
            .unwrap()
            .with_demean(false);
        let power = power_spectrum(&spectral_increments(&x, &plan).unwrap()).power;
        let total: f64 = power.iter().sum();
        assert!((power[4] + power[28]) / total > 1.0 - 1e-12);
        assert!(gen_two_cosine_square(&cfg).is_err());
    }

    #[test]
    fn two_tone_bins() {
        let pairs = two_cosine_coupled_bins(4, 6);
        let ys: std::collections::BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
        assert_eq!(pairs.len(), 8);
        assert_eq!(ys.into_iter().collect::<Vec<_>>(), vec![0, 2, 8, 10, 12]);
    }

    #[test]
    fn rayleigh_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mean = (0..1_000_000).map(|_| rayleigh(&mut rng)).sum::<f64>() / 1e6;
        assert!((mean / (PI / 2.0).sqrt() - 1.0).abs() < 0.01);
    }

    #[test]
    fn mi_oracle_values() {
        let half_ln2 = 0.5 * 2f64.ln();
        assert!((oracle_mi_gaussian(&[1.0, 0.0], 1.0, 1.0).unwrap() - half_ln2).abs() < 1e-8);
        assert!((half_ln2 - 0.34657).abs() < 1e-5);

        // independent trapezoid quadrature of ln(1 + (1 + cos 2 pi l) / 2)
        let reference = trapezoid(
            |l| (1.0 + 0.5 * (1.0 + (2.0 * PI * l).cos())).ln(),
            0.0,
            0.5,
            200_000,
        );
        let got = oracle_mi_gaussian(&[0.5, 0.5], 1.0, 1.0).unwrap();
        assert!((got - reference).abs() < 1e-8, "{got} vs {reference}");

        // small-SNR expansion: I ~ sx^2 sum(h^2) / (2 sw^2)
        let taps = bandpass_taps();
        let energy: f64 = taps.iter().map(|t| t * t).sum();
        let approx = energy / (2.0 * 100.0 * 100.0);
        let got = oracle_mi_gaussian(&taps, 1.0, 100.0).unwrap();
        assert!((got / approx - 1.0).abs() < 0.05);

        assert!(matches!(
            oracle_mi_gaussian(&taps, 1.0, 0.0),
            Err(Error::Divergent(_))
        ));
    }

    #[test]
    fn mi_oracle_scale_identity() {
        let taps = bandpass_taps();
        let c = 2.0;
        let scaled: Vec<f64> = taps.iter().map(|t| t * c).collect();
        let a = oracle_mi_gaussian(&scaled, 1.0, 1.0).unwrap();
        let b = oracle_mi_gaussian(&taps, 1.0, 1.0 / c).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn mif_oracle_values() {
        // zero response, up to the roundoff of e^{-j pi}
        assert!(oracle_mif_gaussian(&[0.5, 0.5], 1.0, 1.0, 0.5).unwrap() < 1e-30);
        assert!((oracle_mif_gaussian(&[1.0], 1.0, 1.0, 0.3).unwrap() - 2f64.ln()).abs() < 1e-15);
        let c = coherence(&[1.0], 1.0, 1.0, 0.3);
        assert!((-(1.0 - c).ln() - 2f64.ln()).abs() < 1e-15);
        let mut last = 0.0;
        for sw in [2.0, 1.0, 0.5, 0.1, 0.01] {
            let v = oracle_mif_gaussian(&[1.0], 1.0, sw, 0.2).unwrap();
            assert!(v > last);
            last = v;
        }
        assert_eq!(
            oracle_mif_gaussian_bin(&[1.0], 1.0, 1.0, 0, 8).unwrap(),
            0.5 * 2f64.ln()
        );
        assert_eq!(
            oracle_mif_gaussian_bin(&[1.0], 1.0, 1.0, 4, 8).unwrap(),
            0.5 * 2f64.ln()
        );
        assert_eq!(oracle_mif_gaussian_bin(&[1.0], 1.0, 1.0, 3, 8).unwrap(), 2f64.ln());
    }
}
