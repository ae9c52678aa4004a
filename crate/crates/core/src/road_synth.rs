//! Synthetic roads and labelled sensor streams.
//!
//! Profiles are a sum of cosines with displacement PSD
//! `Gd(n) = Gd(n0) (n / n0)^-2` over 0.01..10 cycles/m, evaluated at the
//! harmonics of the (power-of-two) profile period with an inverse FFT.
//! Streams come from driving the quarter car over the profile at the
//! configured travel speeds; labels are the Golden Car IRI of each 0.1-mile
//! slice at the standard speed.

use std::io::{self, BufRead, Write};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geo_segment::{destination, DEFAULT_EARTH_RADIUS_KM, MI_TO_M};
use crate::geo_segment::{GeoConfig, Segmenter};
use crate::ingest::SensorSample;
use crate::quarter_car::{
    compute_iri, integrate_smoothed, smooth_profile, GoldenCarParams, QuarterCarError, RoadProfile, DEFAULT_BASELEN_M,
    M_PER_KM_TO_IN_PER_MI, SETTLE_IN_M,
};
use crate::spectral::{extract_features, inverse_unscaled_pow2, SegmentFeatures};

pub const PROFILE_DX_M: f64 = 0.05;
pub const N0_CYCLES_PER_M: f64 = 0.1;
pub const BAND_CYCLES_PER_M: (f64, f64) = (0.01, 10.0);
pub const GRAVITY: f64 = 9.81;
/// Road ahead of the first window, so every label slice has a settle-in.
pub const LEAD_IN_M: f64 = SETTLE_IN_M;
/// Lateral distance over which two wheel paths become uncorrelated, m.
pub const LATERAL_CORRELATION_M: f64 = 1.0;

/// Segment length used for labels, miles.
const LABEL_SEGMENT_MI: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    QuarterCar(#[from] QuarterCarError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum RoadClass {
    A,
    B,
    C,
    D,
    E,
}

impl RoadClass {
    pub const ALL: [RoadClass; 5] = [RoadClass::A, RoadClass::B, RoadClass::C, RoadClass::D, RoadClass::E];

    /// Displacement PSD at `n0`, m³.
    pub fn gd_n0(self) -> f64 {
        let base = match self {
            RoadClass::A => 16.0,
            RoadClass::B => 64.0,
            RoadClass::C => 256.0,
            RoadClass::D => 1024.0,
            RoadClass::E => 4096.0,
        };
        base * 1e-6
    }
}

impl std::str::FromStr for RoadClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(RoadClass::A),
            "B" => Ok(RoadClass::B),
            "C" => Ok(RoadClass::C),
            "D" => Ok(RoadClass::D),
            "E" => Ok(RoadClass::E),
            other => Err(format!("unknown road class {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub road_class: RoadClass,
    /// Overrides the class PSD level when set, m³.
    pub gd_n0: Option<f64>,
    /// Road surface seed.
    pub seed: u64,
    /// Repetition index; selects the noise and wander streams.
    pub run: u32,
    pub route_len_mi: f64,
    /// Travel speeds, m/s, each held over an equal share of the route.
    pub speeds_mps: Vec<f64>,
    /// Accelerometer noise standard deviation, m/s².
    pub noise_sigma: f64,
    pub fs: f64,
    pub gps_rate: f64,
    /// Lateral wander standard deviation between runs, m.
    pub wander_m: f64,
    pub start_lat: f64,
    pub start_lon: f64,
    pub bearing_deg: f64,
    pub base_alt_m: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            road_class: RoadClass::A,
            gd_n0: None,
            seed: 0,
            run: 0,
            route_len_mi: 1.0,
            speeds_mps: vec![29.06],
            noise_sigma: 0.05,
            fs: 365.0,
            gps_rate: 5.0,
            wander_m: 0.0,
            start_lat: 38.958542,
            start_lon: -92.206479,
            bearing_deg: 100.0,
            base_alt_m: 230.0,
        }
    }
}

impl SynthConfig {
    pub fn gd(&self) -> f64 {
        self.gd_n0.unwrap_or_else(|| self.road_class.gd_n0())
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if !(self.route_len_mi > 0.0) {
            return bad(format!("route_len must be positive, got {}", self.route_len_mi));
        }
        if self.speeds_mps.is_empty() || self.speeds_mps.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return bad(format!("speeds must be positive, got {:?}", self.speeds_mps));
        }
        if !(self.fs > 0.0) {
            return bad(format!("fs must be positive, got {}", self.fs));
        }
        if !(self.gps_rate > 0.0) || self.gps_rate > self.fs {
            return bad(format!("gps_rate must be in (0, fs], got {}", self.gps_rate));
        }
        if !(self.noise_sigma >= 0.0) || !(self.wander_m >= 0.0) {
            return bad("noise_sigma and wander_m must be non-negative".into());
        }
        if let Some(g) = self.gd_n0 {
            if !(g >= 0.0) {
                return bad(format!("gd_n0 must be non-negative, got {g}"));
            }
        }
        if !(-90.0..=90.0).contains(&self.start_lat) || !(-180.0..=180.0).contains(&self.start_lon) {
            return bad("start coordinates out of range".into());
        }
        Ok(())
    }

    pub fn route_len_m(&self) -> f64 {
        self.route_len_mi * MI_TO_M
    }

    /// Trailing road past the route end so the final window boundary is observed.
    pub fn tail_m(&self) -> f64 {
        let vmax = self.speeds_mps.iter().copied().fold(0.0, f64::max);
        (3.0 * vmax / self.gps_rate).max(30.0)
    }

    pub fn n_segments(&self) -> usize {
        (self.route_len_mi / LABEL_SEGMENT_MI + 1e-9).floor() as usize
    }

    /// Travel speed at route distance `s_m` (negative inside the lead-in).
    pub fn speed_at(&self, s_m: f64) -> f64 {
        let k = self.speeds_mps.len();
        let frac = (s_m / self.route_len_m()).clamp(0.0, 1.0);
        let piece = ((frac * k as f64).floor() as usize).min(k - 1);
        self.speeds_mps[piece]
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_ROAD: u64 = 0;
const STREAM_RUN: u64 = 1 << 32;
const STREAM_WANDER_ROAD: u64 = 2 << 32;

/// Sum-of-cosines profile of `n_points` points with PSD level `gd` and phases from `rng`.
pub fn spectral_profile(gd: f64, n_points: usize, rng: &mut impl Rng) -> RoadProfile<f64> {
    let n_points = n_points.max(2);
    let n_fft = n_points.next_power_of_two();
    let period = n_fft as f64 * PROFILE_DX_M;
    let dn = 1.0 / period;
    let mut spec = vec![Complex::new(0.0, 0.0); n_fft];
    for (k, bin) in spec.iter_mut().enumerate().take(n_fft / 2 + 1).skip(1) {
        let n = k as f64 * dn;
        if n < BAND_CYCLES_PER_M.0 || n > BAND_CYCLES_PER_M.1 {
            continue;
        }
        let phase: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
        let psd = gd * (n / N0_CYCLES_PER_M).powi(-2);
        let amp = (2.0 * psd * dn).sqrt();
        *bin = Complex::from_polar(amp, phase);
    }
    inverse_unscaled_pow2(&mut spec);
    let elev = spec.iter().take(n_points).map(|c| c.re).collect();
    RoadProfile { dx: PROFILE_DX_M, elev }
}

/// Road surface for `cfg`: lead-in, route, and tail.
pub fn generate_profile(cfg: &SynthConfig) -> Result<RoadProfile<f64>, SynthError> {
    cfg.validate()?;
    let total = LEAD_IN_M + cfg.route_len_m() + cfg.tail_m() + 1.0;
    let n_points = (total / PROFILE_DX_M).ceil() as usize + 1;
    let mut rng = rng_for(cfg.seed, STREAM_ROAD);
    Ok(spectral_profile(cfg.gd(), n_points, &mut rng))
}

/// Reference label for one 0.1-mile segment.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SegmentLabel {
    pub index: u64,
    pub iri_mkm: f64,
    pub iri_inmi: f64,
}

/// Golden Car IRI of each full segment of the route, at the standard speed.
pub fn segment_labels(profile: &RoadProfile<f64>, cfg: &SynthConfig) -> Result<Vec<SegmentLabel>, SynthError> {
    let seg_m = LABEL_SEGMENT_MI * MI_TO_M;
    let needed = LEAD_IN_M + cfg.route_len_m();
    if profile.length() + 1e-9 < needed {
        return Err(QuarterCarError::ProfileTooShort {
            length_m: profile.length(),
            required_m: needed,
        }
        .into());
    }
    let golden = GoldenCarParams::golden();
    (0..cfg.n_segments())
        .map(|k| {
            let start = LEAD_IN_M + k as f64 * seg_m - SETTLE_IN_M;
            let slice = profile.slice_m(start, LEAD_IN_M + (k + 1) as f64 * seg_m);
            let iri = compute_iri(&slice, &golden)?;
            Ok(SegmentLabel {
                index: k as u64,
                iri_mkm: iri.m_per_km,
                iri_inmi: iri.in_per_mi(),
            })
        })
        .collect()
}

/// Surface actually followed on run `cfg.run`: the base profile blended with
/// an independent one by the lateral offset drawn for this run.
pub fn wandered_profile(base: &RoadProfile<f64>, cfg: &SynthConfig) -> (RoadProfile<f64>, f64) {
    if cfg.wander_m == 0.0 {
        return (base.clone(), 0.0);
    }
    let mut rng = rng_for(
        cfg.seed ^ u64::from(cfg.run).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        STREAM_RUN + 1,
    );
    let offset: f64 = Normal::new(0.0, cfg.wander_m).expect("finite sigma").sample(&mut rng);
    let w = (offset.abs() / LATERAL_CORRELATION_M).min(1.0);
    let mut side_rng = rng_for(cfg.seed, STREAM_WANDER_ROAD + u64::from(cfg.run));
    let other = spectral_profile(cfg.gd(), base.len(), &mut side_rng);
    let keep = (1.0 - w * w).sqrt();
    let elev = base
        .elev
        .iter()
        .zip(&other.elev)
        .map(|(a, b)| keep * a + w * b)
        .collect();
    (RoadProfile { dx: base.dx, elev }, offset)
}

/// Lazily generated 365 Hz sample stream over one traversal.
#[derive(Debug)]
pub struct StreamSynth {
    cfg: SynthConfig,
    accel: Vec<f64>,
    time: Vec<f64>,
    dx: f64,
    t0: f64,
    x_end: f64,
    i: u64,
    cursor: usize,
    noise: Normal<f64>,
    rng: ChaCha8Rng,
    lateral_offset_m: f64,
    alt_phase: f64,
    held: Option<(f64, f64, f64, f64)>,
    done: bool,
}

impl StreamSynth {
    pub fn new(base: &RoadProfile<f64>, cfg: &SynthConfig) -> Result<Self, SynthError> {
        cfg.validate()?;
        let x_end = LEAD_IN_M + cfg.route_len_m() + cfg.tail_m();
        if base.length() + 1e-9 < x_end {
            return Err(QuarterCarError::ProfileTooShort {
                length_m: base.length(),
                required_m: x_end,
            }
            .into());
        }
        let (surface, lateral_offset_m) = wandered_profile(base, cfg);
        let smoothed = smooth_profile(&surface, DEFAULT_BASELEN_M);
        let params = GoldenCarParams::golden();
        let dx = surface.dx;
        let n = surface.len();
        let mut accel = Vec::with_capacity(n);
        let mut time = Vec::with_capacity(n);
        integrate_smoothed(
            &smoothed,
            &params,
            |i| cfg.speed_at(i as f64 * dx - LEAD_IN_M),
            |_, t, s| {
                accel.push(s.sprung_accel(&params));
                time.push(t);
            },
        )?;
        let i_start = (LEAD_IN_M / dx).round() as usize;
        let t0 = time[i_start];
        let mut rng = rng_for(
            cfg.seed ^ u64::from(cfg.run).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            STREAM_RUN,
        );
        let alt_phase = rng.gen::<f64>() * std::f64::consts::TAU;
        Ok(Self {
            noise: Normal::new(0.0, cfg.noise_sigma.max(0.0)).expect("finite sigma"),
            cfg: cfg.clone(),
            accel,
            time,
            dx,
            t0,
            x_end,
            i: 0,
            cursor: i_start,
            rng,
            lateral_offset_m,
            alt_phase,
            held: None,
            done: false,
        })
    }

    /// Lateral offset drawn for this run, m.
    pub fn lateral_offset_m(&self) -> f64 {
        self.lateral_offset_m
    }

    fn fix_position(&self, s_m: f64) -> (f64, f64) {
        let r = DEFAULT_EARTH_RADIUS_KM;
        let (mut lat, mut lon) = (self.cfg.start_lat, self.cfg.start_lon);
        if self.lateral_offset_m != 0.0 {
            let side = if self.lateral_offset_m > 0.0 { 90.0 } else { -90.0 };
            (lat, lon) = destination(
                lat,
                lon,
                self.cfg.bearing_deg + side,
                self.lateral_offset_m.abs() / 1000.0,
                r,
            );
        }
        destination(lat, lon, self.cfg.bearing_deg, s_m / 1000.0, r)
    }
}

impl Iterator for StreamSynth {
    type Item = SensorSample;

    fn next(&mut self) -> Option<SensorSample> {
        if self.done {
            return None;
        }
        let t_rel = self.i as f64 / self.cfg.fs;
        let t = self.t0 + t_rel;
        while self.cursor + 1 < self.time.len() && self.time[self.cursor + 1] <= t {
            self.cursor += 1;
        }
        let j = self.cursor;
        if j + 1 >= self.time.len() {
            self.done = true;
            return None;
        }
        let frac = (t - self.time[j]) / (self.time[j + 1] - self.time[j]);
        let x = (j as f64 + frac) * self.dx;
        if x > self.x_end {
            self.done = true;
            return None;
        }
        let a = self.accel[j] + frac * (self.accel[j + 1] - self.accel[j]);
        let s_m = x - LEAD_IN_M;

        let prev_slot = if self.i == 0 {
            None
        } else {
            Some(((self.i - 1) as f64 * self.cfg.gps_rate / self.cfg.fs).floor() as u64)
        };
        let slot = (self.i as f64 * self.cfg.gps_rate / self.cfg.fs).floor() as u64;
        let fresh = prev_slot != Some(slot);
        if fresh {
            let (lat, lon) = self.fix_position(s_m);
            let speed = self.cfg.speed_at(s_m);
            let alt = self.cfg.base_alt_m + 15.0 * (std::f64::consts::TAU * s_m / 4000.0 + self.alt_phase).sin();
            self.held = Some((lat, lon, speed, alt));
        }
        let (lat, lon, speed, alt) = self.held.expect("first sample is a fix");
        let noise = if self.cfg.noise_sigma > 0.0 {
            self.noise.sample(&mut self.rng)
        } else {
            0.0
        };
        let sample = SensorSample {
            t: (t_rel * 1000.0).round() as u64,
            az: a + GRAVITY + noise,
            lat,
            lon,
            speed,
            alt,
            gps_fresh: fresh,
        };
        self.i += 1;
        Some(sample)
    }
}

/// One synthesized traversal and its reference labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRun {
    pub samples: Vec<SensorSample>,
    pub labels: Vec<SegmentLabel>,
}

pub fn synthesize_stream(profile: &RoadProfile<f64>, cfg: &SynthConfig) -> Result<SynthRun, SynthError> {
    let labels = segment_labels(profile, cfg)?;
    let samples = StreamSynth::new(profile, cfg)?.collect();
    Ok(SynthRun { samples, labels })
}

/// Feature rows joined with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<SegmentFeatures>,
    /// IRI, in/mi, row-aligned with `features`.
    pub labels: Vec<f64>,
    pub provenance: Vec<SynthConfig>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn extend(&mut self, other: LabeledDataset) {
        self.features.extend(other.features);
        self.labels.extend(other.labels);
        self.provenance.extend(other.provenance);
    }

    pub fn empty() -> Self {
        Self {
            features: Vec::new(),
            labels: Vec::new(),
            provenance: Vec::new(),
        }
    }
}

/// Synthesize one route, segment it, and join full windows to labels.
pub fn labeled_dataset(cfg: &SynthConfig) -> Result<LabeledDataset, SynthError> {
    let profile = generate_profile(cfg)?;
    let labels = segment_labels(&profile, cfg)?;
    let mut seg = Segmenter::new(GeoConfig::default());
    let mut features = Vec::with_capacity(labels.len());
    let mut ys = Vec::with_capacity(labels.len());
    for s in StreamSynth::new(&profile, cfg)? {
        if let Some(w) = seg.push(&s) {
            if w.partial {
                continue;
            }
            if let Some(label) = labels.get(w.index as usize) {
                let f = extract_features(&w).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
                features.push(f);
                ys.push(label.iri_inmi);
            }
        }
    }
    let n = ys.len();
    Ok(LabeledDataset {
        features,
        labels: ys,
        provenance: vec![cfg.clone(); n],
    })
}

pub const LABELS_HEADER: &str = "segment_index,iri_mkm,iri_inmi";

pub fn write_labels_csv<'a, W: Write>(
    out: &mut W,
    labels: impl IntoIterator<Item = &'a SegmentLabel>,
) -> io::Result<()> {
    writeln!(out, "{LABELS_HEADER}")?;
    for l in labels {
        writeln!(out, "{},{},{}", l.index, l.iri_mkm, l.iri_inmi)?;
    }
    Ok(())
}

pub fn read_labels_csv<R: BufRead>(input: R) -> Result<Vec<SegmentLabel>, String> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| format!("line {line_no}: {e}"))?;
        let line = line.trim();
        if line.is_empty() || (line_no == 1 && line.starts_with("segment_index")) {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(format!("line {line_no}: expected 3 fields, found {}", f.len()));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| format!("line {line_no}: not a number: {s:?}"))
        };
        out.push(SegmentLabel {
            index: f[0]
                .parse()
                .map_err(|_| format!("line {line_no}: bad index {:?}", f[0]))?,
            iri_mkm: num(f[1])?,
            iri_inmi: num(f[2])?,
        });
    }
    Ok(out)
}

/// Convert m/km to in/mi.
pub fn mkm_to_inmi(x: f64) -> f64 {
    x * M_PER_KM_TO_IN_PER_MI
}
