use std::cell::RefCell;
use std::io::{self, Write};
use std::rc::Rc;

use iri_edge_core::edge_pipeline::{
    predict_batch, run_pipeline, NdjsonSink, PipelineConfig, ReconnectingSink, RecordSink, SegmentPrediction,
};
use iri_edge_core::evaluate::RideClass;
use iri_edge_core::harness::{dataset_matrix, generate_dataset, RouteMix};
use iri_edge_core::road_synth::{generate_profile, StreamSynth, SynthConfig};
use iri_edge_core::tree_ensemble::{fit_boosted, EnsembleModel, FitConfig};

fn record(i: u64) -> SegmentPrediction {
    let f = i as f64;
    SegmentPrediction {
        idx: i,
        lat0: 38.0 + f * 1e-4,
        lon0: -92.0 - f * 1.3e-4,
        lat1: 38.0 + (f + 1.0) * 1e-4,
        lon1: -92.0 - (f + 1.0) * 1.3e-4,
        len_mi: 0.1 + f.sin() * 1e-3,
        iri: 40.0 + (f * 0.37).cos() * 35.0 + 1.0 / (f + 3.0),
        class: RideClass::ALL[(i % 3) as usize],
        n: 2000 + i as usize % 97,
        speed: 29.06 + f / 1e4,
        lat_us: i * 7 % 1000,
        partial: i % 1000 == 999,
    }
}

/// A connection that accepts `budget` bytes and then fails mid-write.
struct FlakyConn {
    received: Rc<RefCell<Vec<Vec<u8>>>>,
    budget: usize,
}

impl Write for FlakyConn {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if self.budget == 0 {
            return Err(io::Error::new(io::ErrorKind::BrokenPipe, "peer reset"));
        }
        let n = buf.len().min(self.budget);
        self.budget -= n;
        self.received
            .borrow_mut()
            .last_mut()
            .unwrap()
            .extend_from_slice(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

#[test]
fn reconnecting_sink_delivers_every_record_once() {
    let received: Rc<RefCell<Vec<Vec<u8>>>> = Rc::new(RefCell::new(Vec::new()));
    let mut attempts = 0u64;
    let rx = received.clone();
    let connect = move || {
        attempts += 1;
        if attempts.is_multiple_of(4) {
            return Err(io::Error::new(io::ErrorKind::ConnectionRefused, "refused"));
        }
        rx.borrow_mut().push(Vec::new());
        Ok(FlakyConn {
            received: rx.clone(),
            budget: 1500 + (attempts as usize * 977) % 4000,
        })
    };
    let mut sink = ReconnectingSink::new(connect, 5);
    let sent: Vec<SegmentPrediction> = (0..2000).map(record).collect();
    for r in &sent {
        sink.emit(r).unwrap();
    }
    assert_eq!(sink.written(), 2000);
    assert!(sink.reconnects() > 50, "only {} reconnects", sink.reconnects());

    // receiver side: drop the unterminated tail of each connection
    let mut got = Vec::new();
    for conn in received.borrow().iter() {
        let text = String::from_utf8_lossy(conn);
        let complete = match text.rfind('\n') {
            Some(end) => &text[..=end],
            None => "",
        };
        got.extend(complete.lines().map(|l| SegmentPrediction::from_ndjson(l).unwrap()));
    }
    assert_eq!(got, sent);
}

#[test]
fn reconnecting_sink_gives_up_after_max_attempts() {
    let mut sink = ReconnectingSink::new(
        || -> io::Result<Vec<u8>> { Err(io::ErrorKind::ConnectionRefused.into()) },
        3,
    );
    let err = sink.emit(&record(7)).unwrap_err().to_string();
    assert!(err.contains("record 7") && err.contains("3 attempts"), "{err}");
}

#[test]
fn ndjson_ten_thousand_records_round_trip() {
    let recs: Vec<SegmentPrediction> = (0..10_000).map(record).collect();
    let mut sink = NdjsonSink::new(Vec::new());
    for r in &recs {
        sink.emit(r).unwrap();
    }
    assert_eq!(sink.written(), 10_000);
    let bytes = sink.into_inner();
    let text = String::from_utf8(bytes).unwrap();
    let back: Vec<SegmentPrediction> = text
        .lines()
        .map(|l| SegmentPrediction::from_ndjson(l).unwrap())
        .collect();
    assert_eq!(back.len(), recs.len());
    for (a, b) in recs.iter().zip(&back) {
        assert_eq!(a, b);
        assert_eq!(a.iri.to_bits(), b.iri.to_bits());
        assert_eq!(a.lat1.to_bits(), b.lat1.to_bits());
    }
}

fn small_model() -> EnsembleModel {
    let mix = RouteMix {
        route_len_mi: 1.0,
        ..RouteMix::mixed()
    };
    let d = generate_dataset(&mix, 120, 5).unwrap();
    let rows: Vec<usize> = (0..d.len()).collect();
    let (x, y) = dataset_matrix(&d, &rows).unwrap();
    fit_boosted(
        &x,
        &y,
        &FitConfig {
            n_trees: 40,
            ..FitConfig::boosted()
        },
    )
    .unwrap()
}

#[test]
fn streamed_records_equal_batch_with_speed_changes_and_partial_tail() {
    let model = small_model();
    let cfg = SynthConfig {
        route_len_mi: 2.35,
        speeds_mps: vec![15.6, 31.3, 22.4],
        gd_n0: Some(12e-6),
        seed: 77,
        ..SynthConfig::default()
    };
    let profile = generate_profile(&cfg).unwrap();
    let samples: Vec<_> = StreamSynth::new(&profile, &cfg).unwrap().collect();
    for include_partial in [false, true] {
        let pcfg = PipelineConfig {
            include_partial,
            ..PipelineConfig::default()
        };
        let mut streamed: Vec<SegmentPrediction> = Vec::new();
        let stats = run_pipeline(samples.iter().copied().map(Ok), &model, &pcfg, &mut streamed).unwrap();
        let batch = predict_batch(&samples, &model, &pcfg).unwrap();
        let a: Vec<_> = streamed.iter().map(SegmentPrediction::without_latency).collect();
        let b: Vec<_> = batch.iter().map(SegmentPrediction::without_latency).collect();
        assert_eq!(a, b);
        assert_eq!(stats.segments as usize, streamed.len());
        assert_eq!(streamed.len(), if include_partial { 24 } else { 23 });
        let lat_sum: u64 = streamed.iter().map(|r| r.lat_us).sum();
        assert!(lat_sum <= stats.wall_us.max(stats.total_lat_us));
        assert!(stats.total_lat_us <= stats.wall_us);
    }
}
