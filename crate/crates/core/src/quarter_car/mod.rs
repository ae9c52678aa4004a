//! Golden Car quarter-car simulation and reference IRI.
//!
//! The profile is first smoothed with a 250 mm moving average, then the
//! two-mass model is driven by the elevation (linear between profile points)
//! and advanced with the exact interval update from [`discretize`]. IRI is
//! the mean absolute suspension rate `|zs' - zu'|` divided by the simulation
//! speed, accumulated after an 11 m settle-in, in m/km.

mod discretize;

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::scalar::Real;
use discretize::StepMap;

/// 1 m/km expressed in in/mi.
pub const M_PER_KM_TO_IN_PER_MI: f64 = 63.36;
/// Distance excluded from the IRI accumulator, m.
pub const SETTLE_IN_M: f64 = 11.0;
/// Span used for the initial slope, m.
pub const INIT_SLOPE_SPAN_M: f64 = 0.5;
pub const DEFAULT_BASELEN_M: f64 = 0.25;

#[derive(Debug, Error, PartialEq)]
pub enum QuarterCarError {
    #[error("profile is {length_m:.3} m long, at least {required_m} m is required")]
    ProfileTooShort { length_m: f64, required_m: f64 },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid quarter-car parameters: {0}")]
    InvalidParams(String),
    #[error("profile file line {line}: {reason}")]
    BadFile { line: usize, reason: String },
}

/// Uniformly spaced longitudinal elevation.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadProfile<T> {
    /// Spacing, m.
    pub dx: T,
    /// Elevation, m.
    pub elev: Vec<T>,
}

impl<T: Real> RoadProfile<T> {
    pub fn new(dx: T, elev: Vec<T>) -> Result<Self, QuarterCarError> {
        if !(dx > T::zero()) || !dx.is_finite() {
            return Err(QuarterCarError::InvalidProfile(format!(
                "dx must be positive, got {dx}"
            )));
        }
        if elev.len() < 2 {
            return Err(QuarterCarError::InvalidProfile(format!(
                "need at least 2 points, got {}",
                elev.len()
            )));
        }
        if elev.iter().any(|v| !v.is_finite()) {
            return Err(QuarterCarError::InvalidProfile("non-finite elevation".into()));
        }
        Ok(Self { dx, elev })
    }

    pub fn len(&self) -> usize {
        self.elev.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elev.is_empty()
    }

    /// Length in metres, `(count - 1) * dx`.
    pub fn length(&self) -> T {
        T::of_usize(self.elev.len().saturating_sub(1)) * self.dx
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self {
            dx: self.dx,
            elev: self.elev.iter().map(|&e| e * alpha).collect(),
        }
    }

    /// Points with `start_m <= x <= end_m`, clamped to the profile.
    pub fn slice_m(&self, start_m: T, end_m: T) -> Self {
        let n = self.elev.len();
        let i0 = (start_m / self.dx)
            .ceil()
            .max(T::zero())
            .to_usize()
            .unwrap_or(0)
            .min(n - 1);
        let i1 = (end_m / self.dx + T::lit(1e-9))
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(n - 1);
        Self {
            dx: self.dx,
            elev: self.elev[i0..=i1.max(i0)].to_vec(),
        }
    }
}

/// Read the `x_m,elev_m` profile format; spacing must be uniform to 1e-6 m.
pub fn read_profile_csv<R: BufRead>(input: R) -> Result<RoadProfile<f64>, QuarterCarError> {
    let mut xs = Vec::new();
    let mut elev = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let bad = |reason: String| QuarterCarError::BadFile { line: line_no, reason };
        let line = line.map_err(|e| bad(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || (line_no == 1 && line.starts_with("x_m")) {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(x), Some(z), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad("expected 2 fields".into()));
        };
        xs.push(x.trim().parse::<f64>().map_err(|_| bad(format!("bad x {x:?}")))?);
        elev.push(
            z.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("bad elevation {z:?}")))?,
        );
    }
    if xs.len() < 2 {
        return Err(QuarterCarError::InvalidProfile("need at least 2 points".into()));
    }
    let dx = xs[1] - xs[0];
    for (i, x) in xs.iter().enumerate() {
        let expect = xs[0] + dx * i as f64;
        if (x - expect).abs() > 1e-6 {
            return Err(QuarterCarError::BadFile {
                line: i + 2,
                reason: format!("non-uniform spacing at x = {x}"),
            });
        }
    }
    RoadProfile::new(dx, elev)
}

pub fn write_profile_csv<W: Write>(out: &mut W, profile: &RoadProfile<f64>) -> io::Result<()> {
    writeln!(out, "x_m,elev_m")?;
    for (i, z) in profile.elev.iter().enumerate() {
        writeln!(out, "{},{}", i as f64 * profile.dx, z)?;
    }
    Ok(())
}

/// Quarter-car constants normalised by the sprung mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenCarParams<T> {
    /// Tire spring rate, 1/s².
    pub k1: T,
    /// Suspension spring rate, 1/s².
    pub k2: T,
    /// Suspension damping, 1/s.
    pub c: T,
    /// Unsprung / sprung mass ratio.
    pub mu: T,
    /// Simulation speed, m/s.
    pub v_sim: T,
}

impl<T: Real> GoldenCarParams<T> {
    /// The standard Golden Car at 80 km/h.
    pub fn golden() -> Self {
        Self {
            k1: T::lit(653.0),
            k2: T::lit(63.3),
            c: T::lit(6.0),
            mu: T::lit(0.15),
            v_sim: T::lit(80.0 / 3.6),
        }
    }

    pub fn with_speed(self, v_sim: T) -> Self {
        Self { v_sim, ..self }
    }

    pub fn validate(&self) -> Result<(), QuarterCarError> {
        let all = [self.k1, self.k2, self.c, self.mu, self.v_sim];
        if all.iter().all(|v| *v > T::zero() && v.is_finite()) {
            Ok(())
        } else {
            Err(QuarterCarError::InvalidParams(format!("{self:?}")))
        }
    }
}

impl<T: Real> Default for GoldenCarParams<T> {
    fn default() -> Self {
        Self::golden()
    }
}

/// Sprung/unsprung displacement and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QcState<T> {
    pub zs: T,
    pub zu: T,
    pub zs_dot: T,
    pub zu_dot: T,
}

impl<T: Real> QcState<T> {
    fn from_array(x: [T; 4]) -> Self {
        Self {
            zs: x[0],
            zs_dot: x[1],
            zu: x[2],
            zu_dot: x[3],
        }
    }

    fn to_array(self) -> [T; 4] {
        [self.zs, self.zs_dot, self.zu, self.zu_dot]
    }

    /// Sprung-mass acceleration implied by this state, m/s².
    pub fn sprung_accel(&self, params: &GoldenCarParams<T>) -> T {
        -params.k2 * (self.zs - self.zu) - params.c * (self.zs_dot - self.zu_dot)
    }

    pub fn suspension_rate(&self) -> T {
        self.zs_dot - self.zu_dot
    }
}

/// States and sprung acceleration at each profile point.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation<T> {
    pub states: Vec<QcState<T>>,
    pub sprung_accel: Vec<T>,
    /// Time at each profile point, s.
    pub time: Vec<T>,
}

/// Centred moving average over `baselen`, same point count; edges average
/// over the available span. The window is `round(baselen / dx)` points,
/// bumped to the next odd count.
pub fn smooth_profile<T: Real>(profile: &RoadProfile<T>, baselen: T) -> RoadProfile<T> {
    let k = (baselen / profile.dx).round().to_usize().unwrap_or(1).max(1);
    let half = k / 2;
    if half == 0 {
        return profile.clone();
    }
    let n = profile.elev.len();
    let elev = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            // offsets from the centre point keep a level stretch exactly level
            let c = profile.elev[i];
            let sum = profile.elev[lo..=hi].iter().fold(T::zero(), |a, &b| a + (b - c));
            c + sum / T::of_usize(hi - lo + 1)
        })
        .collect();
    RoadProfile { dx: profile.dx, elev }
}

fn initial_state<T: Real>(profile: &RoadProfile<T>, v0: T) -> QcState<T> {
    let n = profile.elev.len();
    let k = (T::lit(INIT_SLOPE_SPAN_M) / profile.dx)
        .round()
        .to_usize()
        .unwrap_or(1)
        .clamp(1, n - 1);
    let slope = (profile.elev[k] - profile.elev[0]) / (T::of_usize(k) * profile.dx);
    QcState {
        zs: profile.elev[0],
        zu: profile.elev[0],
        zs_dot: slope * v0,
        zu_dot: slope * v0,
    }
}

/// Advance the model over an already-smoothed profile, calling `visit` with
/// the time and state at every profile point. `speed_at(i)` is the travel
/// speed over interval `i -> i + 1`.
pub fn integrate_smoothed<T: Real>(
    smoothed: &RoadProfile<T>,
    params: &GoldenCarParams<T>,
    mut speed_at: impl FnMut(usize) -> T,
    mut visit: impl FnMut(usize, T, &QcState<T>),
) -> Result<(), QuarterCarError> {
    params.validate()?;
    let n = smoothed.elev.len();
    if n < 2 {
        return Err(QuarterCarError::InvalidProfile("need at least 2 points".into()));
    }
    let mut maps: Vec<StepMap<T>> = Vec::new();
    let mut state = initial_state(smoothed, speed_at(0));
    let mut t = T::zero();
    visit(0, t, &state);
    for i in 0..n - 1 {
        let v = speed_at(i);
        if !(v > T::zero()) || !v.is_finite() {
            return Err(QuarterCarError::InvalidParams(format!("speed {v} at interval {i}")));
        }
        let dt = smoothed.dx / v;
        let idx = match maps.iter().position(|m| m.dt == dt) {
            Some(j) => j,
            None => {
                maps.push(StepMap::new(params, dt));
                maps.len() - 1
            }
        };
        let rate = (smoothed.elev[i + 1] - smoothed.elev[i]) / dt;
        state = QcState::from_array(maps[idx].apply(state.to_array(), smoothed.elev[i], rate));
        t += dt;
        visit(i + 1, t, &state);
    }
    Ok(())
}

/// [`integrate_smoothed`] collecting every state.
pub fn simulate_smoothed<T: Real>(
    smoothed: &RoadProfile<T>,
    params: &GoldenCarParams<T>,
    speed_at: impl FnMut(usize) -> T,
) -> Result<Simulation<T>, QuarterCarError> {
    let n = smoothed.elev.len();
    let mut sim = Simulation {
        states: Vec::with_capacity(n),
        sprung_accel: Vec::with_capacity(n),
        time: Vec::with_capacity(n),
    };
    integrate_smoothed(smoothed, params, speed_at, |_, t, s| {
        sim.states.push(*s);
        sim.sprung_accel.push(s.sprung_accel(params));
        sim.time.push(t);
    })?;
    Ok(sim)
}

fn check_length<T: Real>(profile: &RoadProfile<T>) -> Result<(), QuarterCarError> {
    let length = profile.length().as_f64();
    if length + 1e-9 < SETTLE_IN_M {
        return Err(QuarterCarError::ProfileTooShort {
            length_m: length,
            required_m: SETTLE_IN_M,
        });
    }
    Ok(())
}

/// Smooth the profile and simulate at `params.v_sim`.
pub fn simulate_quarter_car<T: Real>(
    profile: &RoadProfile<T>,
    params: &GoldenCarParams<T>,
) -> Result<Simulation<T>, QuarterCarError> {
    check_length(profile)?;
    let smoothed = smooth_profile(profile, T::lit(DEFAULT_BASELEN_M));
    simulate_smoothed(&smoothed, params, |_| params.v_sim)
}

/// Reference roughness for one profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Iri<T> {
    pub m_per_km: T,
}

impl<T: Real> Iri<T> {
    pub fn in_per_mi(&self) -> T {
        self.m_per_km * T::lit(M_PER_KM_TO_IN_PER_MI)
    }
}

/// First profile index included in the IRI accumulator.
pub fn settle_index<T: Real>(dx: T) -> usize {
    (T::lit(SETTLE_IN_M) / dx - T::lit(1e-9)).ceil().to_usize().unwrap_or(0)
}

/// Mean rectified suspension rate after settle-in, as a slope in m/km.
pub fn iri_from_simulation<T: Real>(sim: &Simulation<T>, dx: T, v_sim: T) -> Iri<T> {
    let i0 = settle_index(dx).min(sim.states.len() - 1);
    let tail = &sim.states[i0..];
    let sum = tail.iter().fold(T::zero(), |a, s| a + s.suspension_rate().abs());
    let mean = sum / T::of_usize(tail.len());
    Iri {
        m_per_km: mean / v_sim * T::lit(1000.0),
    }
}

pub fn compute_iri<T: Real>(profile: &RoadProfile<T>, params: &GoldenCarParams<T>) -> Result<Iri<T>, QuarterCarError> {
    let sim = simulate_quarter_car(profile, params)?;
    Ok(iri_from_simulation(&sim, profile.dx, params.v_sim))
}
