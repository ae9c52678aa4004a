//! Great-circle distance and fixed-distance windowing of sample streams.
//!
//! Windows tile the route from a common origin: window `k` closes at the
//! first fresh fix whose cumulative path distance reaches `(k + 1) * d_thr`.
//! Distance only accrues between consecutive fresh GPS fixes, so held
//! (sample-and-hold) rows carry signal but never add length.

use crate::ingest::SensorSample;
use crate::scalar::Real;

pub const KM_TO_MI: f64 = 0.621371;
pub const MI_TO_M: f64 = 1000.0 / KM_TO_MI;
pub const DEFAULT_EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GeoConfig {
    /// Window length, miles.
    pub d_thr_mi: f64,
    pub earth_radius_km: f64,
    /// Fix-to-fix gap that closes the open window as partial, milliseconds.
    pub max_fix_gap_ms: u64,
}

impl Default for GeoConfig {
    fn default() -> Self {
        Self {
            d_thr_mi: 0.1,
            earth_radius_km: DEFAULT_EARTH_RADIUS_KM,
            max_fix_gap_ms: 5_000,
        }
    }
}

impl GeoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.d_thr_mi > 0.0) {
            return Err(format!("d_thr must be positive, got {}", self.d_thr_mi));
        }
        if !(self.earth_radius_km > 0.0) {
            return Err(format!("earth radius must be positive, got {}", self.earth_radius_km));
        }
        Ok(())
    }
}

/// Haversine great-circle distance in the units of `radius`.
pub fn haversine<T: Real>(lat1: T, lon1: T, lat2: T, lon2: T, radius: T) -> T {
    let two = T::lit(2.0);
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = p2 - p1;
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / two).sin().powi(2) + p1.cos() * p2.cos() * (dlambda / two).sin().powi(2);
    // rounding can push `a` a hair above 1 near antipodes
    two * radius * a.sqrt().min(T::one()).asin()
}

/// Point reached from `(lat, lon)` after `dist` along initial bearing
/// `bearing_deg` on a sphere of `radius` (same length units as `dist`).
pub fn destination<T: Real>(lat: T, lon: T, bearing_deg: T, dist: T, radius: T) -> (T, T) {
    let delta = dist / radius;
    let theta = bearing_deg.to_radians();
    let p1 = lat.to_radians();
    let l1 = lon.to_radians();
    let sin_p2 = p1.sin() * delta.cos() + p1.cos() * delta.sin() * theta.cos();
    let p2 = sin_p2.max(-T::one()).min(T::one()).asin();
    let l2 = l1 + (theta.sin() * delta.sin() * p1.cos()).atan2(delta.cos() - p1.sin() * sin_p2);
    let mut lon2 = l2.to_degrees();
    let full = T::lit(360.0);
    let half = T::lit(180.0);
    lon2 = ((lon2 + half) % full + full) % full - half;
    (p2.to_degrees(), lon2)
}

/// Samples accumulated over one distance window.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentWindow {
    pub index: u64,
    pub start_lat: f64,
    pub start_lon: f64,
    pub end_lat: f64,
    pub end_lon: f64,
    /// Path length covered by the window's fixes, miles.
    pub length_mi: f64,
    pub az_series: Vec<f64>,
    pub speeds: Vec<f64>,
    pub alts: Vec<f64>,
    pub t_start: u64,
    pub t_end: u64,
    /// Closed by end of stream or a GPS outage rather than by distance.
    pub partial: bool,
}

impl SegmentWindow {
    pub fn n_samples(&self) -> usize {
        self.az_series.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct Fix {
    t: u64,
    lat: f64,
    lon: f64,
}

#[derive(Debug)]
struct OpenWindow {
    start: Fix,
    start_dist_mi: f64,
    az: Vec<f64>,
    speeds: Vec<f64>,
    alts: Vec<f64>,
    t_start: u64,
    t_end: u64,
}

/// Streaming distance segmenter. One instance per stream.
#[derive(Debug)]
pub struct Segmenter {
    cfg: GeoConfig,
    next_index: u64,
    last_fix: Option<Fix>,
    /// Cumulative path length since the current origin, miles.
    route_mi: f64,
    boundaries_passed: u64,
    open: Option<OpenWindow>,
    skipped_before_fix: u64,
    peak_buffered: usize,
    capacity_hint: usize,
}

impl Segmenter {
    pub fn new(cfg: GeoConfig) -> Self {
        Self {
            cfg,
            next_index: 0,
            last_fix: None,
            route_mi: 0.0,
            boundaries_passed: 0,
            open: None,
            skipped_before_fix: 0,
            peak_buffered: 0,
            capacity_hint: 0,
        }
    }

    pub fn config(&self) -> &GeoConfig {
        &self.cfg
    }

    /// Samples currently held in the open window.
    pub fn buffered(&self) -> usize {
        self.open.as_ref().map_or(0, |w| w.az.len())
    }

    /// High-water mark of [`Self::buffered`] over the stream so far.
    pub fn peak_buffered(&self) -> usize {
        self.peak_buffered
    }

    /// Rows dropped because no GPS fix had been seen yet.
    pub fn skipped_before_fix(&self) -> u64 {
        self.skipped_before_fix
    }

    /// Total path length accumulated since the current origin, miles.
    pub fn route_miles(&self) -> f64 {
        self.route_mi
    }

    fn open_at(&mut self, fix: Fix, t: u64) {
        self.open = Some(OpenWindow {
            start: fix,
            start_dist_mi: self.route_mi,
            az: Vec::with_capacity(self.capacity_hint),
            speeds: Vec::with_capacity(self.capacity_hint),
            alts: Vec::with_capacity(self.capacity_hint),
            t_start: t,
            t_end: t,
        });
    }

    fn close(&mut self, end: Fix, partial: bool) -> Option<SegmentWindow> {
        let w = self.open.take()?;
        if w.az.is_empty() {
            return None;
        }
        self.capacity_hint = self.capacity_hint.max(w.az.len());
        let index = self.next_index;
        self.next_index += 1;
        Some(SegmentWindow {
            index,
            start_lat: w.start.lat,
            start_lon: w.start.lon,
            end_lat: end.lat,
            end_lon: end.lon,
            length_mi: self.route_mi - w.start_dist_mi,
            az_series: w.az,
            speeds: w.speeds,
            alts: w.alts,
            t_start: w.t_start,
            t_end: w.t_end,
            partial,
        })
    }

    fn append(&mut self, s: &SensorSample) {
        let w = self.open.as_mut().expect("window open after first fix");
        if w.az.is_empty() {
            w.t_start = s.t;
        }
        w.az.push(s.az);
        w.speeds.push(s.speed);
        w.alts.push(s.alt);
        w.t_end = s.t;
        let n = w.az.len();
        self.peak_buffered = self.peak_buffered.max(n);
    }

    /// Feed one sample; returns a window when this sample closes one.
    pub fn push(&mut self, s: &SensorSample) -> Option<SegmentWindow> {
        let fix = Fix {
            t: s.t,
            lat: s.lat,
            lon: s.lon,
        };
        let Some(last) = self.last_fix else {
            if !s.gps_fresh {
                self.skipped_before_fix += 1;
                return None;
            }
            self.last_fix = Some(fix);
            self.open_at(fix, s.t);
            self.append(s);
            return None;
        };

        if s.gps_fresh {
            if s.t.saturating_sub(last.t) > self.cfg.max_fix_gap_ms {
                let out = self.close(last, true);
                self.route_mi = 0.0;
                self.boundaries_passed = 0;
                self.last_fix = Some(fix);
                self.open_at(fix, s.t);
                self.append(s);
                return out;
            }
            let d_km = haversine(last.lat, last.lon, s.lat, s.lon, self.cfg.earth_radius_km);
            self.route_mi += d_km * KM_TO_MI;
            self.last_fix = Some(fix);
        }

        self.append(s);

        if s.gps_fresh {
            let boundary = (self.boundaries_passed + 1) as f64 * self.cfg.d_thr_mi;
            if self.route_mi >= boundary {
                // a single long hop may pass several boundaries; tiles stay contiguous
                self.boundaries_passed = (self.route_mi / self.cfg.d_thr_mi).floor() as u64;
                if (self.boundaries_passed as f64) * self.cfg.d_thr_mi > self.route_mi {
                    self.boundaries_passed -= 1;
                }
                let out = self.close(fix, false);
                // the next window starts here so the following hop counts toward it
                self.open_at(fix, s.t);
                return out;
            }
        }
        None
    }

    /// End of stream: the open window, if it holds any samples, as partial.
    pub fn finalize(&mut self) -> Option<SegmentWindow> {
        let end = self.last_fix?;
        self.close(end, true)
    }
}

/// Batch segmentation of a whole stream, partial windows included.
pub fn segment_all<'a>(samples: impl IntoIterator<Item = &'a SensorSample>, cfg: GeoConfig) -> Vec<SegmentWindow> {
    let mut seg = Segmenter::new(cfg);
    let mut out: Vec<SegmentWindow> = samples.into_iter().filter_map(|s| seg.push(s)).collect();
    out.extend(seg.finalize());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: u64, lat: f64, lon: f64, fresh: bool) -> SensorSample {
        SensorSample {
            t,
            az: 9.81,
            lat,
            lon,
            speed: 10.0,
            alt: 200.0,
            gps_fresh: fresh,
        }
    }

    #[test]
    fn haversine_zero_and_antipode() {
        assert_eq!(haversine(38.9, -92.2, 38.9, -92.2, 6371.0), 0.0);
        let d = haversine(0.0, 0.0, 0.0, 180.0, 6371.0);
        assert!((d - std::f64::consts::PI * 6371.0).abs() < 1e-9);
        assert!((d - 20015.09).abs() < 0.01);
        let d32 = haversine(0.0_f32, 0.0, 0.0, 180.0, 6371.0);
        assert!((d32 as f64 - d).abs() < 0.01);
    }

    #[test]
    fn destination_then_haversine_recovers_distance() {
        let (lat, lon) = destination(38.9_f64, -92.2, 73.0, 12.5, 6371.0);
        let d = haversine(38.9, -92.2, lat, lon, 6371.0);
        assert!((d - 12.5).abs() < 1e-9);
    }

    #[test]
    fn single_sample_yields_one_partial() {
        let mut seg = Segmenter::new(GeoConfig::default());
        assert!(seg.push(&sample(0, 38.0, -92.0, true)).is_none());
        let w = seg.finalize().unwrap();
        assert!(w.partial);
        assert_eq!(w.n_samples(), 1);
        assert_eq!(w.length_mi, 0.0);
    }

    #[test]
    fn empty_stream_finalizes_to_nothing() {
        let mut seg = Segmenter::new(GeoConfig::default());
        assert!(seg.finalize().is_none());
    }

    #[test]
    fn stationary_stream_never_emits() {
        let mut seg = Segmenter::new(GeoConfig::default());
        for i in 0..10_000 {
            assert!(seg.push(&sample(i * 3, 38.0, -92.0, i % 73 == 0)).is_none());
        }
        assert_eq!(seg.route_miles(), 0.0);
    }

    #[test]
    fn rows_before_first_fix_are_dropped() {
        let mut seg = Segmenter::new(GeoConfig::default());
        seg.push(&sample(0, 0.0, 0.0, false));
        seg.push(&sample(1, 0.0, 0.0, false));
        seg.push(&sample(2, 38.0, -92.0, true));
        assert_eq!(seg.skipped_before_fix(), 2);
        assert_eq!(seg.buffered(), 1);
    }

    #[test]
    fn outage_closes_partial_and_restarts() {
        let mut seg = Segmenter::new(GeoConfig::default());
        seg.push(&sample(0, 38.0, -92.0, true));
        seg.push(&sample(1000, 38.0001, -92.0, true));
        let w = seg.push(&sample(7000, 38.0002, -92.0, true)).unwrap();
        assert!(w.partial);
        assert_eq!(w.n_samples(), 2);
        assert_eq!(seg.route_miles(), 0.0);
        assert_eq!(seg.buffered(), 1);
    }

    #[test]
    fn exactly_one_full_window_then_nothing() {
        // two fixes 0.1 mi apart: the second closes the window, nothing remains
        let d_km = 0.1 / KM_TO_MI;
        let (lat, lon) = destination(38.0, -92.0, 90.0, d_km * (1.0 + 1e-12), 6371.0);
        let mut seg = Segmenter::new(GeoConfig::default());
        assert!(seg.push(&sample(0, 38.0, -92.0, true)).is_none());
        let w = seg.push(&sample(1000, lat, lon, true)).unwrap();
        assert!(!w.partial);
        assert_eq!(w.n_samples(), 2);
        assert!(seg.finalize().is_none());
    }

    #[test]
    fn hop_after_closing_fix_counts_toward_next_window() {
        let d_km = 0.1 / KM_TO_MI * (1.0 + 1e-9);
        let (lat1, lon1) = destination(38.0, -92.0, 90.0, d_km, 6371.0);
        let (lat2, lon2) = destination(lat1, lon1, 90.0, 0.01, 6371.0);
        let mut seg = Segmenter::new(GeoConfig::default());
        seg.push(&sample(0, 38.0, -92.0, true));
        seg.push(&sample(1000, lat1, lon1, true)).unwrap();
        seg.push(&sample(2000, lat2, lon2, true));
        let w = seg.finalize().unwrap();
        assert!((w.length_mi - 0.01 * KM_TO_MI).abs() < 1e-12);
        assert_eq!((w.start_lat, w.start_lon), (lat1, lon1));
    }
}
