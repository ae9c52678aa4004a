use iri_edge_core::evaluate::{classify, metrics, repeatability, ClassThresholds, RideClass};
use iri_edge_core::geo_segment::{destination, haversine, segment_all, GeoConfig, KM_TO_MI};
use iri_edge_core::ingest::{parse_device_log, write_canonical_csv, SensorSample, StreamMeta};
use iri_edge_core::quarter_car::{compute_iri, GoldenCarParams, RoadProfile};
use iri_edge_core::spectral::{dft, power_spectrum};
use iri_edge_core::tree_ensemble::{fit_bagged, fit_tree, load_model, save_model, FitConfig, Matrix, TreeParams};
use num_complex::Complex;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const R_KM: f64 = 6371.0;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn sample_strategy() -> impl Strategy<Value = (u64, f64, f64, f64, f64, f64, bool)> {
    (
        0u64..50,
        -30.0..30.0f64,
        -89.9..89.9f64,
        -179.9..179.9f64,
        0.0..60.0f64,
        -400.0..4000.0f64,
        any::<bool>(),
    )
}

fn track_strategy() -> impl Strategy<Value = Vec<(u64, f64, f64)>> {
    // (dt_ms, bearing, step_m) per fix
    prop::collection::vec((100u64..1500, 0.0..360.0f64, 0.0..80.0f64), 1..300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ingest_round_trip(rows in prop::collection::vec(sample_strategy(), 1..200), scale in 0.01..4.0f64) {
        let meta = StreamMeta { accel_scale: scale, ..StreamMeta::default() };
        let mut t = 0;
        let samples: Vec<SensorSample> = rows
            .iter()
            .enumerate()
            .map(|(i, &(dt, az, lat, lon, speed, alt, fresh))| {
                t += dt;
                SensorSample { t, az, lat, lon, speed, alt, gps_fresh: fresh || i == 0 }
            })
            .collect();
        let mut buf = Vec::new();
        write_canonical_csv(&mut buf, &samples, &meta).unwrap();
        let parsed = parse_device_log(&buf, &meta, false).unwrap();
        prop_assert_eq!(parsed.samples.len(), samples.len());
        for (a, b) in samples.iter().zip(&parsed.samples) {
            prop_assert_eq!(a.t, b.t);
            prop_assert_eq!(a.gps_fresh, b.gps_fresh);
            for (x, y) in [(a.az, b.az), (a.lat, b.lat), (a.lon, b.lon), (a.speed, b.speed), (a.alt, b.alt)] {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn haversine_is_a_bounded_symmetric_metric(
        a in (-90.0..90.0f64, -180.0..180.0f64),
        b in (-90.0..90.0f64, -180.0..180.0f64),
        c in (-90.0..90.0f64, -180.0..180.0f64),
    ) {
        let ab = haversine(a.0, a.1, b.0, b.1, R_KM);
        let ba = haversine(b.0, b.1, a.0, a.1, R_KM);
        prop_assert!((ab - ba).abs() <= 1e-9);
        prop_assert!((0.0..=std::f64::consts::PI * R_KM + 1e-9).contains(&ab));
        let ac = haversine(a.0, a.1, c.0, c.1, R_KM);
        let cb = haversine(c.0, c.1, b.0, b.1, R_KM);
        prop_assert!(ab <= ac + cb + 1e-6);
    }

    #[test]
    fn windows_partition_samples_and_distance(track in track_strategy(), held in 0usize..4) {
        let (mut lat, mut lon, mut t) = (38.9, -92.2, 0u64);
        let mut samples = Vec::new();
        let mut path_mi = 0.0;
        for (i, &(dt, bearing, step_m)) in track.iter().enumerate() {
            if i > 0 {
                let (la, lo) = destination(lat, lon, bearing, step_m / 1000.0, R_KM);
                path_mi += haversine(lat, lon, la, lo, R_KM) * KM_TO_MI;
                lat = la;
                lon = lo;
                t += dt;
            }
            samples.push(SensorSample { t, az: 9.81, lat, lon, speed: 10.0, alt: 200.0, gps_fresh: true });
            for h in 0..held {
                samples.push(SensorSample { t: t + 1 + h as u64, gps_fresh: false, ..samples[samples.len() - 1] });
            }
            t += held as u64;
        }
        let windows = segment_all(&samples, GeoConfig::default());
        let n: usize = windows.iter().map(|w| w.n_samples()).sum();
        prop_assert_eq!(n, samples.len());
        let total: f64 = windows.iter().map(|w| w.length_mi).sum();
        prop_assert!((total - path_mi).abs() <= 1e-9, "{} vs {}", total, path_mi);
        for (i, w) in windows.iter().enumerate() {
            prop_assert_eq!(w.index, i as u64);
            if i + 1 < windows.len() {
                prop_assert!(!w.partial);
            }
        }
    }

    #[test]
    fn dft_matches_definition(x in prop::collection::vec(-1e3..1e3f64, 1..160)) {
        let fast = dft(&x).unwrap();
        let n = x.len();
        let scale = x.iter().map(|v| v.abs()).sum::<f64>().max(1e-12);
        for (k, f) in fast.iter().enumerate() {
            let mut acc = Complex::new(0.0, 0.0);
            for (j, &v) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
                acc += Complex::new(v * ang.cos(), v * ang.sin());
            }
            prop_assert!((f - acc).norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn power_scales_with_amplitude_squared(x in prop::collection::vec(-5.0..5.0f64, 2..300), alpha in 0.1..10.0f64) {
        let p = power_spectrum(&x, 100.0).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v * alpha).collect();
        let q = power_spectrum(&xs, 100.0).unwrap();
        let peak = p.power.iter().cloned().fold(0.0, f64::max);
        for (a, b) in p.power.iter().zip(&q.power) {
            prop_assert!((a * alpha * alpha - b).abs() <= 1e-9 * (peak * alpha * alpha).max(1e-12));
        }
        // Parseval on the mean-removed signal
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let energy: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let total: f64 = p.power.iter().sum();
        prop_assert!((total - energy).abs() <= 1e-6 * energy.max(1e-12));
    }

    #[test]
    fn iri_is_homogeneous(
        elev in prop::collection::vec(-0.01..0.01f64, 260..400),
        alpha in 0.05..20.0f64,
    ) {
        let p = RoadProfile::new(0.05, elev).unwrap();
        let car = GoldenCarParams::golden();
        let base = compute_iri(&p, &car).unwrap().m_per_km;
        let scaled = compute_iri(&p.scaled(alpha), &car).unwrap().m_per_km;
        prop_assert!(base >= 0.0);
        prop_assert!(close(scaled, alpha * base, 1e-9), "{} vs {}", scaled, alpha * base);
    }

    #[test]
    fn cart_ignores_row_order(
        rows in prop::collection::vec((prop::array::uniform3(-5.0..5.0f64), -50.0..50.0f64), 12..80),
        perm_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let xs: Vec<[f64; 3]> = rows.iter().map(|r| r.0).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let params = TreeParams { max_depth: 4, min_samples_leaf: 2, feature_subsample: 1.0 };
        let t1 = fit_tree(&Matrix::from_rows(&xs).unwrap(), &ys, &params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let xp: Vec<[f64; 3]> = order.iter().map(|&i| xs[i]).collect();
        let yp: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
        let t2 = fit_tree(&Matrix::from_rows(&xp).unwrap(), &yp, &params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        prop_assert_eq!(t1, t2);
    }

    #[test]
    fn bagged_predictions_stay_within_label_range(
        rows in prop::collection::vec((prop::array::uniform2(-5.0..5.0f64), 0.0..300.0f64), 20..60),
        probes in prop::collection::vec(prop::array::uniform2(-50.0..50.0f64), 1..20),
        seed in any::<u64>(),
    ) {
        let xs: Vec<[f64; 2]> = rows.iter().map(|r| r.0).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let cfg = FitConfig { n_trees: 15, ..FitConfig::bagged() }.with_seed(seed);
        let model = fit_bagged(&Matrix::from_rows(&xs).unwrap(), &ys, &cfg).unwrap();
        let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let reloaded = load_model(&save_model(&model)).unwrap();
        for p in &probes {
            let y = model.predict_row(p).unwrap();
            prop_assert!(y >= lo - 1e-9 && y <= hi + 1e-9);
            prop_assert_eq!(y.to_bits(), reloaded.predict_row(p).unwrap().to_bits());
        }
    }

    #[test]
    fn classification_is_monotone(a in 0.0..400.0f64, b in 0.0..400.0f64) {
        let th = ClassThresholds::default();
        let rank = |c: RideClass| RideClass::ALL.iter().position(|k| *k == c).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(rank(classify(lo, &th)) <= rank(classify(hi, &th)));
    }

    #[test]
    fn cv_is_scale_invariant(
        runs in prop::collection::vec(prop::collection::vec(1.0..300.0f64, 5), 2..6),
        alpha in 0.01..100.0f64,
    ) {
        let a = repeatability(&runs).unwrap();
        let scaled: Vec<Vec<f64>> = runs.iter().map(|r| r.iter().map(|v| v * alpha).collect()).collect();
        let b = repeatability(&scaled).unwrap();
        prop_assert!(close(a.mean_cv, b.mean_cv, 1e-9));
        prop_assert_eq!(a.count_cv_over_20, b.count_cv_over_20);
    }

    #[test]
    fn metric_invariants(pairs in prop::collection::vec((0.0..300.0f64, 1.0..300.0f64), 1..100)) {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = metrics(&p, &t).unwrap();
        prop_assert!(m.rmse >= 0.0);
        prop_assert!(m.mape.unwrap() >= 0.0);
        if let Some(r2) = m.r2 {
            prop_assert!(r2 <= 1.0 + 1e-12);
        }
        let exact = metrics(&t, &t).unwrap();
        prop_assert_eq!(exact.rmse, 0.0);
    }
}
