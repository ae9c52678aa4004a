//! Frequency-domain features of a window's vertical acceleration.
//!
//! The signal is mean-subtracted, transformed at its exact length with a
//! rectangular window, and reduced to a one-sided power spectrum
//! `P(k) = |A(k)|² / N` with interior bins doubled, so that the bins sum to
//! the centred signal energy. Features are taken over bins `k >= 1`.

mod fft;

use std::io::{self, BufRead, Write};

use num_complex::Complex;
use thiserror::Error;

pub(crate) use fft::inverse_unscaled_pow2;
pub use fft::FftPlan;

use crate::geo_segment::SegmentWindow;
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("signal is empty")]
    EmptySignal,
    #[error("sample rate must be positive, got {0}")]
    NonpositiveRate(f64),
    #[error("window has {0} samples, at least 2 are required")]
    TooShort(usize),
    #[error("window has no speed or altitude readings")]
    MissingGps,
    #[error("window spans zero time")]
    ZeroDuration,
    #[error("feature table line {line}: {reason}")]
    BadTable { line: usize, reason: String },
}

/// Forward DFT of a real series at its exact length.
pub fn dft<T: Real>(signal: &[T]) -> Result<Vec<Complex<T>>, SpectralError> {
    if signal.is_empty() {
        return Err(SpectralError::EmptySignal);
    }
    let mut buf: Vec<Complex<T>> = signal.iter().map(|&x| Complex::new(x, T::zero())).collect();
    FftPlan::new(signal.len()).forward(&mut buf);
    Ok(buf)
}

/// One-sided power spectrum, bins `k = 0..=N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    pub freqs: Vec<T>,
    pub power: Vec<T>,
}

impl<T: Real> Spectrum<T> {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn bin_width(&self) -> T {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            T::zero()
        }
    }
}

pub fn power_spectrum<T: Real>(signal: &[T], fs: T) -> Result<Spectrum<T>, SpectralError> {
    if signal.len() < 2 {
        return Err(SpectralError::EmptySignal);
    }
    if !(fs > T::zero()) {
        return Err(SpectralError::NonpositiveRate(fs.as_f64()));
    }
    let n = signal.len();
    let nf = T::of_usize(n);
    let mean = signal.iter().fold(T::zero(), |a, &b| a + b) / nf;
    let centred: Vec<T> = signal.iter().map(|&x| x - mean).collect();
    let a = dft(&centred)?;
    let half = n / 2;
    let two = T::lit(2.0);
    let mut power = Vec::with_capacity(half + 1);
    let mut freqs = Vec::with_capacity(half + 1);
    for (k, ak) in a.iter().take(half + 1).enumerate() {
        let mut p = ak.norm_sqr() / nf;
        let nyquist = n.is_multiple_of(2) && k == half;
        if k != 0 && !nyquist {
            p *= two;
        }
        power.push(p);
        freqs.push(T::of_usize(k) * fs / nf);
    }
    Ok(Spectrum { freqs, power })
}

/// The seven model inputs, in model column order.
pub const FEATURE_NAMES: [&str; 7] = ["auc", "mp", "sdp", "mxp", "df", "mean_speed", "mean_alt"];
pub const N_FEATURES: usize = FEATURE_NAMES.len();

/// Spectral and GPS features for one window plus its geometry.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SegmentFeatures {
    pub index: u64,
    pub auc: f64,
    pub mp: f64,
    pub sdp: f64,
    pub mxp: f64,
    /// Dominant frequency, Hz.
    pub df: f64,
    pub mean_speed: f64,
    pub mean_alt: f64,
    pub n_samples: usize,
    /// Effective sample rate, Hz.
    pub fs: f64,
    pub lat0: f64,
    pub lon0: f64,
    pub lat1: f64,
    pub lon1: f64,
    pub length_mi: f64,
}

impl SegmentFeatures {
    pub fn vector(&self) -> [f64; N_FEATURES] {
        [
            self.auc,
            self.mp,
            self.sdp,
            self.mxp,
            self.df,
            self.mean_speed,
            self.mean_alt,
        ]
    }
}

/// Summary statistics over spectrum bins `k >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSummary<T> {
    pub auc: T,
    pub mean: T,
    pub std: T,
    pub max: T,
    pub dominant_freq: T,
}

pub fn summarize<T: Real>(spec: &Spectrum<T>) -> PowerSummary<T> {
    let bins = &spec.power[1..];
    let freqs = &spec.freqs[1..];
    let n = T::of_usize(bins.len());
    let auc = bins.iter().fold(T::zero(), |a, &b| a + b);
    let mean = auc / n;
    let var = bins.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) / n;
    let mut arg = 0;
    for (i, &p) in bins.iter().enumerate() {
        if p > bins[arg] {
            arg = i;
        }
    }
    PowerSummary {
        auc,
        mean,
        std: var.sqrt(),
        max: bins[arg],
        dominant_freq: freqs[arg],
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn extract_features(window: &SegmentWindow) -> Result<SegmentFeatures, SpectralError> {
    let n = window.az_series.len();
    if n < 2 {
        return Err(SpectralError::TooShort(n));
    }
    if window.speeds.is_empty() || window.alts.is_empty() {
        return Err(SpectralError::MissingGps);
    }
    if window.t_end <= window.t_start {
        return Err(SpectralError::ZeroDuration);
    }
    let span_s = (window.t_end - window.t_start) as f64 / 1000.0;
    let fs = (n - 1) as f64 / span_s;
    let spec = power_spectrum(&window.az_series, fs)?;
    let s = summarize(&spec);
    Ok(SegmentFeatures {
        index: window.index,
        auc: s.auc,
        mp: s.mean,
        sdp: s.std,
        mxp: s.max,
        df: s.dominant_freq,
        mean_speed: mean(&window.speeds),
        mean_alt: mean(&window.alts),
        n_samples: n,
        fs,
        lat0: window.start_lat,
        lon0: window.start_lon,
        lat1: window.end_lat,
        lon1: window.end_lon,
        length_mi: window.length_mi,
    })
}

pub const FEATURE_TABLE_HEADER: &str =
    "index,auc,mp,sdp,mxp,df,mean_speed,mean_alt,n_samples,fs,lat0,lon0,lat1,lon1,length_mi";

pub fn write_feature_table<'a, W: Write>(
    out: &mut W,
    rows: impl IntoIterator<Item = &'a SegmentFeatures>,
) -> io::Result<()> {
    writeln!(out, "{FEATURE_TABLE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.index,
            r.auc,
            r.mp,
            r.sdp,
            r.mxp,
            r.df,
            r.mean_speed,
            r.mean_alt,
            r.n_samples,
            r.fs,
            r.lat0,
            r.lon0,
            r.lat1,
            r.lon1,
            r.length_mi
        )?;
    }
    Ok(())
}

pub fn read_feature_table<R: BufRead>(input: R) -> Result<Vec<SegmentFeatures>, SpectralError> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| SpectralError::BadTable {
            line: line_no,
            reason: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line_no == 1 {
            if line != FEATURE_TABLE_HEADER {
                return Err(SpectralError::BadTable {
                    line: 1,
                    reason: "unexpected header".into(),
                });
            }
            continue;
        }
        let bad = |reason: String| SpectralError::BadTable { line: line_no, reason };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(bad(format!("expected 15 fields, found {}", f.len())));
        }
        let num = |j: usize| -> Result<f64, SpectralError> {
            f[j].trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("field {} not numeric: {:?}", j + 1, f[j])))
        };
        rows.push(SegmentFeatures {
            index: f[0].trim().parse().map_err(|_| bad("index not an integer".into()))?,
            auc: num(1)?,
            mp: num(2)?,
            sdp: num(3)?,
            mxp: num(4)?,
            df: num(5)?,
            mean_speed: num(6)?,
            mean_alt: num(7)?,
            n_samples: f[8]
                .trim()
                .parse()
                .map_err(|_| bad("n_samples not an integer".into()))?,
            fs: num(9)?,
            lat0: num(10)?,
            lon0: num(11)?,
            lat1: num(12)?,
            lon1: num(13)?,
            length_mi: num(14)?,
        });
    }
    Ok(rows)
}
