//! Device log parsing and canonical CSV output.
//!
//! Log rows are `t_ms,ax,ay,az,lat,lon,speed_mps,alt_m,fix`. Acceleration is
//! stored as raw counts and multiplied by [`StreamMeta::accel_scale`] on
//! load; `ax`/`ay` are parsed for validation and then dropped. GPS fields on
//! rows with `fix = 0` repeat the last fix (sample-and-hold).

use std::io::{self, BufRead, Write};

use thiserror::Error;

pub const CSV_HEADER: &str = "t_ms,ax,ay,az,lat,lon,speed_mps,alt_m,fix";
const FIELD_COUNT: usize = 9;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("stream contains no valid GPS fix")]
    NoGpsFix,
    #[error("invalid stream metadata: {0}")]
    InvalidMeta(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One row of vertical acceleration plus GPS state.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SensorSample {
    /// Milliseconds since stream start.
    pub t: u64,
    /// Vertical acceleration, m/s², gravity included.
    pub az: f64,
    pub lat: f64,
    pub lon: f64,
    /// Ground speed, m/s.
    pub speed: f64,
    /// Altitude, m.
    pub alt: f64,
    /// True when this row carries a new GPS fix.
    pub gps_fresh: bool,
}

impl SensorSample {
    pub fn validate(&self) -> Result<(), String> {
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(format!("latitude {} out of range", self.lat));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(format!("longitude {} out of range", self.lon));
        }
        if !(self.speed >= 0.0) || !self.speed.is_finite() {
            return Err(format!("speed {} must be finite and non-negative", self.speed));
        }
        if !self.az.is_finite() {
            return Err("acceleration is not finite".into());
        }
        if !self.alt.is_finite() {
            return Err("altitude is not finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StreamMeta {
    pub sample_rate_hz: f64,
    /// Raw counts to m/s².
    pub accel_scale: f64,
    pub source_id: String,
}

impl Default for StreamMeta {
    fn default() -> Self {
        Self {
            sample_rate_hz: 365.0,
            accel_scale: 1.0,
            source_id: String::new(),
        }
    }
}

impl StreamMeta {
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.sample_rate_hz > 0.0) {
            return Err(IngestError::InvalidMeta(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if !(self.accel_scale > 0.0) {
            return Err(IngestError::InvalidMeta(format!(
                "accel_scale must be positive, got {}",
                self.accel_scale
            )));
        }
        Ok(())
    }
}

/// Row accounting for one parsed stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub rows: usize,
    pub emitted: usize,
    /// Line numbers (1-based) of rows dropped in lenient mode.
    pub skipped_lines: Vec<usize>,
    pub fixes: usize,
}

/// Streaming reader over a device log or canonical CSV.
pub struct DeviceLogReader<R> {
    input: R,
    meta: StreamMeta,
    lenient: bool,
    line_no: usize,
    buf: String,
    last_t: Option<u64>,
    seen_fix: bool,
    stats: IngestStats,
}

impl<R: BufRead> DeviceLogReader<R> {
    pub fn new(input: R, meta: StreamMeta, lenient: bool) -> Result<Self, IngestError> {
        meta.validate()?;
        Ok(Self {
            input,
            meta,
            lenient,
            line_no: 0,
            buf: String::new(),
            last_t: None,
            seen_fix: false,
            stats: IngestStats::default(),
        })
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    /// Close the stream; fails with [`IngestError::NoGpsFix`] if no row ever had a fix.
    pub fn finish(self) -> Result<IngestStats, IngestError> {
        if !self.seen_fix {
            return Err(IngestError::NoGpsFix);
        }
        Ok(self.stats)
    }

    fn parse_row(&mut self, line: &str) -> Result<SensorSample, String> {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != FIELD_COUNT {
            return Err(format!("expected {FIELD_COUNT} fields, found {}", fields.len()));
        }
        let num = |i: usize, name: &str| -> Result<f64, String> {
            let raw = fields[i].replace('\u{2212}', "-");
            let v: f64 = raw
                .parse()
                .map_err(|_| format!("{name}: cannot parse {:?}", fields[i]))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("{name}: non-finite value"))
            }
        };
        let t: u64 = fields[0]
            .parse()
            .map_err(|_| format!("t_ms: cannot parse {:?}", fields[0]))?;
        num(1, "ax")?;
        num(2, "ay")?;
        let az = num(3, "az")? * self.meta.accel_scale;
        let mut lat = num(4, "lat")?;
        let mut lon = num(5, "lon")?;
        let speed = num(6, "speed_mps")?;
        let alt = num(7, "alt_m")?;
        let fix = match fields[8] {
            "1" => true,
            "0" => false,
            other => return Err(format!("fix: expected 0 or 1, found {other:?}")),
        };
        if let Some(prev) = self.last_t {
            if t < prev {
                return Err(format!("timestamp went backwards ({t} < {prev})"));
            }
        }
        if !fix && !self.seen_fix {
            lat = 0.0;
            lon = 0.0;
        }
        let sample = SensorSample {
            t,
            az,
            lat,
            lon,
            speed,
            alt,
            gps_fresh: fix,
        };
        sample.validate()?;
        Ok(sample)
    }
}

impl<R: BufRead> Iterator for DeviceLogReader<R> {
    type Item = Result<SensorSample, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            let line = std::mem::take(&mut self.buf);
            let trimmed = line.trim();
            if trimmed.is_empty() || (self.line_no == 1 && trimmed.starts_with("t_ms")) {
                self.buf = line;
                continue;
            }
            self.stats.rows += 1;
            let parsed = self.parse_row(trimmed);
            self.buf = line;
            match parsed {
                Ok(s) => {
                    self.last_t = Some(s.t);
                    if s.gps_fresh {
                        self.seen_fix = true;
                        self.stats.fixes += 1;
                    }
                    self.stats.emitted += 1;
                    return Some(Ok(s));
                }
                Err(reason) if self.lenient => {
                    let _ = reason;
                    self.stats.skipped_lines.push(self.line_no);
                }
                Err(reason) => {
                    return Some(Err(IngestError::MalformedLine {
                        line: self.line_no,
                        reason,
                    }))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog {
    pub samples: Vec<SensorSample>,
    pub stats: IngestStats,
}

/// Parse a whole log held in memory.
pub fn parse_device_log(bytes: &[u8], meta: &StreamMeta, lenient: bool) -> Result<ParsedLog, IngestError> {
    let mut reader = DeviceLogReader::new(bytes, meta.clone(), lenient)?;
    let samples = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    let stats = reader.finish()?;
    Ok(ParsedLog { samples, stats })
}

/// Write the canonical CSV (header plus one row per sample). Acceleration is
/// written back in raw counts so parsing with the same `meta` round-trips.
pub fn write_canonical_csv<'a, W: Write>(
    out: &mut W,
    samples: impl IntoIterator<Item = &'a SensorSample>,
    meta: &StreamMeta,
) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for s in samples {
        write_row(out, s, meta)?;
    }
    Ok(())
}

pub fn write_row<W: Write>(out: &mut W, s: &SensorSample, meta: &StreamMeta) -> io::Result<()> {
    writeln!(
        out,
        "{},0,0,{},{},{},{},{},{}",
        s.t,
        s.az / meta.accel_scale,
        s.lat,
        s.lon,
        s.speed,
        s.alt,
        u8::from(s.gps_fresh)
    )
}
