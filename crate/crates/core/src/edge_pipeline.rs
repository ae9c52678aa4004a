//! Single-pass ingest → segment → features → predict → classify, emitting
//! one NDJSON record per closed segment.
//!
//! Memory is bounded by the open window: the segmenter holds at most one
//! segment of samples and records leave through the sink as soon as they
//! are produced.

use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::{classify, ClassThresholds, RideClass};
use crate::geo_segment::{GeoConfig, SegmentWindow, Segmenter};
use crate::ingest::{IngestError, SensorSample};
use crate::spectral::{extract_features, SpectralError};
use crate::tree_ensemble::{EnsembleModel, TreeError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("sample {index}: {source}")]
    Ingest {
        index: u64,
        #[source]
        source: IngestError,
    },
    #[error("sample {index}: timestamp {t} precedes {prev}")]
    OutOfOrder { index: u64, t: u64, prev: u64 },
    #[error("segment {segment}: {source}")]
    Features {
        segment: u64,
        #[source]
        source: SpectralError,
    },
    #[error("model: {0}")]
    Model(#[from] TreeError),
    #[error("sink closed: {0}")]
    SinkClosed(String),
    #[error("invalid pipeline config: {0}")]
    Config(String),
}

/// One telemetry record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPrediction {
    pub idx: u64,
    pub lat0: f64,
    pub lon0: f64,
    pub lat1: f64,
    pub lon1: f64,
    pub len_mi: f64,
    /// Predicted IRI, in/mi.
    pub iri: f64,
    pub class: RideClass,
    pub n: usize,
    /// Mean speed, m/s.
    pub speed: f64,
    /// Feature extraction plus prediction time, microseconds.
    pub lat_us: u64,
    pub partial: bool,
}

impl SegmentPrediction {
    /// Copy with the timing field cleared, for comparing outputs across runs.
    pub fn without_latency(&self) -> Self {
        Self {
            lat_us: 0,
            ..self.clone()
        }
    }

    pub fn to_ndjson(&self) -> String {
        let mut s = serde_json::to_string(self).expect("record serializes");
        s.push('\n');
        s
    }

    pub fn from_ndjson(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line.trim_end())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "addr")]
pub enum EmitTarget {
    Stdout,
    File(PathBuf),
    /// `host:port` of a TCP listener.
    Tcp(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub geo: GeoConfig,
    pub thresholds: ClassThresholds,
    pub include_partial: bool,
    pub emit: EmitTarget,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            geo: GeoConfig::default(),
            thresholds: ClassThresholds::default(),
            include_partial: false,
            emit: EmitTarget::Stdout,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.geo.validate().map_err(PipelineError::Config)?;
        self.thresholds
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }
}

/// Features, prediction and class for one closed window. Shared by the
/// streaming and batch paths so their outputs agree bit for bit.
pub fn predict_window(
    window: &SegmentWindow,
    model: &EnsembleModel,
    th: &ClassThresholds,
) -> Result<SegmentPrediction, PipelineError> {
    let started = Instant::now();
    let f = extract_features(window).map_err(|source| PipelineError::Features {
        segment: window.index,
        source,
    })?;
    let iri = model.predict(&f)?.max(0.0);
    let class = classify(iri, th);
    let lat_us = started.elapsed().as_micros() as u64;
    Ok(SegmentPrediction {
        idx: window.index,
        lat0: window.start_lat,
        lon0: window.start_lon,
        lat1: window.end_lat,
        lon1: window.end_lon,
        len_mi: window.length_mi,
        iri,
        class,
        n: f.n_samples,
        speed: f.mean_speed,
        lat_us,
        partial: window.partial,
    })
}

/// Totals written as the stats epilogue.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub segments: u64,
    pub samples: u64,
    pub partial_dropped: u64,
    pub skipped_before_fix: u64,
    /// High-water mark of samples held in the open window.
    pub peak_buffered: usize,
    /// Largest sample count of any emitted segment.
    pub max_segment_samples: usize,
    pub p50_lat_us: u64,
    pub p95_lat_us: u64,
    pub total_lat_us: u64,
    pub wall_us: u64,
}

/// Nearest-rank percentile of an unsorted slice.
pub fn percentile(values: &[u64], p: f64) -> u64 {
    if values.is_empty() {
        return 0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

/// Push-driven streaming stage.
pub struct Pipeline<'m> {
    model: &'m EnsembleModel,
    cfg: PipelineConfig,
    seg: Segmenter,
    samples: u64,
    last_t: Option<u64>,
    latencies: Vec<u64>,
    stats: PipelineStats,
    started: Instant,
}

impl<'m> Pipeline<'m> {
    pub fn new(model: &'m EnsembleModel, cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        if model.trees.is_empty() {
            return Err(TreeError::ModelEmpty.into());
        }
        Ok(Self {
            model,
            seg: Segmenter::new(cfg.geo),
            cfg,
            samples: 0,
            last_t: None,
            latencies: Vec::new(),
            stats: PipelineStats::default(),
            started: Instant::now(),
        })
    }

    pub fn buffered(&self) -> usize {
        self.seg.buffered()
    }

    fn finish_window(&mut self, w: SegmentWindow) -> Result<Option<SegmentPrediction>, PipelineError> {
        if w.partial && !self.cfg.include_partial {
            self.stats.partial_dropped += 1;
            return Ok(None);
        }
        let rec = predict_window(&w, self.model, &self.cfg.thresholds)?;
        self.latencies.push(rec.lat_us);
        self.stats.segments += 1;
        self.stats.max_segment_samples = self.stats.max_segment_samples.max(rec.n);
        Ok(Some(rec))
    }

    pub fn push(&mut self, s: &SensorSample) -> Result<Option<SegmentPrediction>, PipelineError> {
        let index = self.samples;
        if let Some(prev) = self.last_t {
            if s.t < prev {
                return Err(PipelineError::OutOfOrder { index, t: s.t, prev });
            }
        }
        self.last_t = Some(s.t);
        self.samples += 1;
        match self.seg.push(s) {
            Some(w) => self.finish_window(w),
            None => Ok(None),
        }
    }

    /// End of stream: the trailing window (if configured) and run totals.
    pub fn finish(mut self) -> Result<(Option<SegmentPrediction>, PipelineStats), PipelineError> {
        let last = match self.seg.finalize() {
            Some(w) => self.finish_window(w)?,
            None => None,
        };
        let mut stats = self.stats;
        stats.samples = self.samples;
        stats.skipped_before_fix = self.seg.skipped_before_fix();
        stats.peak_buffered = self.seg.peak_buffered();
        stats.p50_lat_us = percentile(&self.latencies, 50.0);
        stats.p95_lat_us = percentile(&self.latencies, 95.0);
        stats.total_lat_us = self.latencies.iter().sum();
        stats.wall_us = self.started.elapsed().as_micros() as u64;
        Ok((last, stats))
    }
}

/// Destination for records, called once per record in segment order.
pub trait RecordSink {
    fn emit(&mut self, rec: &SegmentPrediction) -> Result<(), PipelineError>;
}

impl RecordSink for Vec<SegmentPrediction> {
    fn emit(&mut self, rec: &SegmentPrediction) -> Result<(), PipelineError> {
        self.push(rec.clone());
        Ok(())
    }
}

impl<S: RecordSink + ?Sized> RecordSink for &mut S {
    fn emit(&mut self, rec: &SegmentPrediction) -> Result<(), PipelineError> {
        (**self).emit(rec)
    }
}

impl<S: RecordSink + ?Sized> RecordSink for Box<S> {
    fn emit(&mut self, rec: &SegmentPrediction) -> Result<(), PipelineError> {
        (**self).emit(rec)
    }
}

/// Newline-delimited JSON, flushed after every record.
pub struct NdjsonSink<W: Write> {
    out: W,
    written: u64,
}

impl<W: Write> NdjsonSink<W> {
    pub fn new(out: W) -> Self {
        Self { out, written: 0 }
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

fn write_line<W: Write>(out: &mut W, line: &[u8]) -> io::Result<()> {
    out.write_all(line)?;
    out.flush()
}

impl<W: Write> RecordSink for NdjsonSink<W> {
    fn emit(&mut self, rec: &SegmentPrediction) -> Result<(), PipelineError> {
        write_line(&mut self.out, rec.to_ndjson().as_bytes()).map_err(|e| PipelineError::SinkClosed(e.to_string()))?;
        self.written += 1;
        Ok(())
    }
}

/// NDJSON over a connection that may drop. A record whose write fails is
/// re-sent in full on a fresh connection, so the receiver sees every record
/// exactly once as long as it discards an unterminated trailing line from a
/// dropped connection.
pub struct ReconnectingSink<W, F> {
    connect: F,
    conn: Option<W>,
    max_attempts: usize,
    reconnects: u64,
    written: u64,
}

impl<W: Write, F: FnMut() -> io::Result<W>> ReconnectingSink<W, F> {
    pub fn new(connect: F, max_attempts: usize) -> Self {
        Self {
            connect,
            conn: None,
            max_attempts: max_attempts.max(1),
            reconnects: 0,
            written: 0,
        }
    }

    pub fn reconnects(&self) -> u64 {
        self.reconnects
    }

    pub fn written(&self) -> u64 {
        self.written
    }
}

impl<W: Write, F: FnMut() -> io::Result<W>> RecordSink for ReconnectingSink<W, F> {
    fn emit(&mut self, rec: &SegmentPrediction) -> Result<(), PipelineError> {
        let line = rec.to_ndjson();
        let mut last_err = String::new();
        for attempt in 0..self.max_attempts {
            if self.conn.is_none() {
                match (self.connect)() {
                    Ok(c) => {
                        if attempt > 0 || self.written > 0 {
                            self.reconnects += 1;
                        }
                        self.conn = Some(c);
                    }
                    Err(e) => {
                        last_err = e.to_string();
                        continue;
                    }
                }
            }
            let conn = self.conn.as_mut().expect("connected");
            match write_line(conn, line.as_bytes()) {
                Ok(()) => {
                    self.written += 1;
                    return Ok(());
                }
                Err(e) => {
                    last_err = e.to_string();
                    self.conn = None;
                }
            }
        }
        Err(PipelineError::SinkClosed(format!(
            "record {} undeliverable after {} attempts: {last_err}",
            rec.idx, self.max_attempts
        )))
    }
}

/// Open the configured target as an NDJSON sink.
pub fn open_sink(target: &EmitTarget) -> Result<Box<dyn RecordSink>, PipelineError> {
    let closed = |e: io::Error| PipelineError::SinkClosed(e.to_string());
    Ok(match target {
        EmitTarget::Stdout => Box::new(NdjsonSink::new(io::stdout())),
        EmitTarget::File(p) => Box::new(NdjsonSink::new(io::BufWriter::new(
            std::fs::File::create(p).map_err(closed)?,
        ))),
        EmitTarget::Tcp(addr) => {
            let addr = addr.clone();
            Box::new(ReconnectingSink::new(move || std::net::TcpStream::connect(&addr), 5))
        }
    })
}

/// Drive a whole stream through the pipeline into `sink`.
pub fn run_pipeline<I, S>(
    samples: I,
    model: &EnsembleModel,
    cfg: &PipelineConfig,
    mut sink: S,
) -> Result<PipelineStats, PipelineError>
where
    I: IntoIterator<Item = Result<SensorSample, IngestError>>,
    S: RecordSink,
{
    let mut p = Pipeline::new(model, cfg.clone())?;
    for (i, s) in samples.into_iter().enumerate() {
        let s = s.map_err(|source| PipelineError::Ingest {
            index: i as u64,
            source,
        })?;
        if let Some(rec) = p.push(&s)? {
            sink.emit(&rec)?;
        }
    }
    let (last, stats) = p.finish()?;
    if let Some(rec) = last {
        sink.emit(&rec)?;
    }
    Ok(stats)
}

/// Non-streaming reference: segment everything, then predict each window.
pub fn predict_batch(
    samples: &[SensorSample],
    model: &EnsembleModel,
    cfg: &PipelineConfig,
) -> Result<Vec<SegmentPrediction>, PipelineError> {
    cfg.validate()?;
    crate::geo_segment::segment_all(samples, cfg.geo)
        .iter()
        .filter(|w| cfg.include_partial || !w.partial)
        .map(|w| predict_window(w, model, &cfg.thresholds))
        .collect()
}
