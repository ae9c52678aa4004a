use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use iri_edge_core::edge_pipeline::{run_pipeline, EmitTarget, PipelineConfig, PipelineStats, RecordSink};
use iri_edge_core::evaluate::{
    classification_accuracy, classify, confusion_matrix, format_metrics, metrics, repeatability, write_metrics_csv,
    write_repeatability_csv, ClassThresholds, RideClass,
};
use iri_edge_core::geo_segment::Segmenter;
use iri_edge_core::harness::{random_split, run_all, run_repeatability, BenchmarkSpec, RepeatSpec, ShiftSpec};
use iri_edge_core::ingest::{write_row, DeviceLogReader, StreamMeta, CSV_HEADER};
use iri_edge_core::quarter_car::write_profile_csv;
use iri_edge_core::road_synth::{
    generate_profile, segment_labels, write_labels_csv, RoadClass, StreamSynth, SynthConfig,
};
use iri_edge_core::spectral::{extract_features, read_feature_table, write_feature_table, SegmentFeatures};
use iri_edge_core::tree_ensemble::{
    fit_bagged, fit_boosted, fit_single_tree, load_model, save_model, EnsembleModel, FitConfig, Matrix, SplitMode,
};

use crate::config::FileConfig;
use crate::io_util::{create, join, open, read_series};
use crate::manifest::ManifestBuilder;
use crate::{
    BenchmarkArgs, Cli, Command, Common, EvaluateArgs, FeaturesArgs, IngestArgs, ModelKind, PipelineArgs, PlotDataArgs,
    PlotKind, PredictArgs, RepeatabilityArgs, SimulateArgs, TrainArgs,
};

pub fn run(cli: Cli) -> Result<ExitCode> {
    let file = FileConfig::load(cli.common.config.as_deref())?;
    let c = &cli.common;
    match cli.cmd {
        Command::Simulate(a) => simulate(c, &a, &file),
        Command::Ingest(a) => ingest(c, &a, &file),
        Command::Features(a) => features(c, &a, &file),
        Command::Train(a) => train(c, &a, &file),
        Command::Predict(a) => predict(c, &a, &file),
        Command::Evaluate(a) => evaluate(c, &a, &file),
        Command::Repeatability(a) => repeat(c, &a, &file),
        Command::Pipeline(a) => pipeline(c, &a, &file),
        Command::PlotData(a) => plot_data(c, &a, &file),
        Command::Benchmark(a) => benchmark(c, &a, &file),
    }
}

fn finish(m: ManifestBuilder, c: &Common, file: &FileConfig, resolved: serde_json::Value) -> Result<ExitCode> {
    let cfg = json!({ "file": file.raw(), "resolved": resolved });
    m.finish(&c.out_dir, cfg, c.seed)?;
    Ok(ExitCode::SUCCESS)
}

fn flush<W: Write>(mut w: W, path: &Path) -> Result<()> {
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn simulate(c: &Common, a: &SimulateArgs, file: &FileConfig) -> Result<ExitCode> {
    let mut cfg = file.section("synth", SynthConfig::default())?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(cls) = &a.class {
        cfg.road_class = cls.parse::<RoadClass>().map_err(|e| anyhow!(e))?;
        cfg.gd_n0 = None;
    }
    if a.gd_n0.is_some() {
        cfg.gd_n0 = a.gd_n0;
    }
    if let Some(v) = a.route_mi {
        cfg.route_len_mi = v;
    }
    if !a.speed_mph.is_empty() {
        cfg.speeds_mps = a
            .speed_mph
            .iter()
            .map(|v| v * iri_edge_core::harness::MPH_TO_MPS)
            .collect();
    }
    if let Some(v) = a.run {
        cfg.run = v;
    }
    if let Some(v) = a.wander_m {
        cfg.wander_m = v;
    }
    if let Some(v) = a.noise_sigma {
        cfg.noise_sigma = v;
    }
    cfg.validate().context("simulate")?;
    let mut m = ManifestBuilder::new("simulate");
    let name = |base: &str| a.tag.as_ref().map_or(base.to_string(), |t| format!("{t}_{base}"));

    let profile = generate_profile(&cfg).context("simulate: profile")?;
    let labels = segment_labels(&profile, &cfg).context("simulate: labels")?;

    let meta = StreamMeta::default();
    let (path, mut w) = create(&c.out_dir, &name("stream.csv"))?;
    writeln!(w, "{CSV_HEADER}")?;
    let mut n = 0usize;
    for s in StreamSynth::new(&profile, &cfg).context("simulate: stream")? {
        write_row(&mut w, &s, &meta)?;
        n += 1;
    }
    flush(w, &path)?;
    m.output(&path);

    let (path, mut w) = create(&c.out_dir, &name("labels.csv"))?;
    write_labels_csv(&mut w, &labels)?;
    flush(w, &path)?;
    m.output(&path);

    if a.profile {
        let (path, mut w) = create(&c.out_dir, &name("profile.csv"))?;
        write_profile_csv(&mut w, &profile)?;
        flush(w, &path)?;
        m.output(&path);
    }
    let mean = labels.iter().map(|l| l.iri_inmi).sum::<f64>() / labels.len().max(1) as f64;
    eprintln!(
        "simulate: {n} samples, {} labelled segments, mean IRI {mean:.1} in/mi",
        labels.len()
    );
    finish(m, c, file, serde_json::to_value(&cfg)?)
}

fn stream_meta(c: &Common, file: &FileConfig) -> Result<StreamMeta> {
    let _ = c;
    file.section("ingest", StreamMeta::default())
}

fn reader_for(path: &Path) -> Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        Ok(Box::new(io::stdin().lock()))
    } else {
        Ok(Box::new(open(path)?))
    }
}

fn ingest(c: &Common, a: &IngestArgs, file: &FileConfig) -> Result<ExitCode> {
    let mut meta = stream_meta(c, file)?;
    if let Some(v) = a.sample_rate {
        meta.sample_rate_hz = v;
    }
    if let Some(v) = a.accel_scale {
        meta.accel_scale = v;
    }
    let mut m = ManifestBuilder::new("ingest");
    m.input(&a.input);
    let ctx = || format!("ingest: {}", a.input.display());
    let mut reader = DeviceLogReader::new(reader_for(&a.input)?, meta.clone(), c.lenient).with_context(ctx)?;
    let (path, mut w) = create(&c.out_dir, &a.output)?;
    writeln!(w, "{CSV_HEADER}")?;
    let canonical = StreamMeta {
        accel_scale: 1.0,
        ..meta.clone()
    };
    for s in reader.by_ref() {
        write_row(&mut w, &s.with_context(ctx)?, &canonical)?;
    }
    let stats = reader.finish().with_context(ctx)?;
    flush(w, &path)?;
    m.output(&path);
    eprintln!(
        "ingest: {} rows, {} emitted, {} skipped, {} fixes",
        stats.rows,
        stats.emitted,
        stats.skipped_lines.len(),
        stats.fixes
    );
    finish(
        m,
        c,
        file,
        json!({ "meta": meta, "lenient": c.lenient, "skipped_lines": stats.skipped_lines }),
    )
}

fn pipeline_config(file: &FileConfig) -> Result<PipelineConfig> {
    let mut cfg = file.section("pipeline", PipelineConfig::default())?;
    cfg.thresholds = file.section("thresholds", cfg.thresholds)?;
    Ok(cfg)
}

fn features(c: &Common, a: &FeaturesArgs, file: &FileConfig) -> Result<ExitCode> {
    let meta = stream_meta(c, file)?;
    let geo = pipeline_config(file)?.geo;
    let mut m = ManifestBuilder::new("features");
    m.input(&a.input);
    let ctx = || format!("features: {}", a.input.display());
    let mut reader = DeviceLogReader::new(reader_for(&a.input)?, meta.clone(), c.lenient).with_context(ctx)?;
    let mut seg = Segmenter::new(geo);
    let mut rows: Vec<SegmentFeatures> = Vec::new();
    for s in reader.by_ref() {
        let s = s.with_context(ctx)?;
        if let Some(w) = seg.push(&s) {
            if !w.partial {
                rows.push(extract_features(&w).with_context(|| format!("features: segment {}", w.index))?);
            }
        }
    }
    reader.finish().with_context(ctx)?;
    if rows.is_empty() {
        bail!("features: {}: no complete segment in input", a.input.display());
    }
    let (path, mut w) = create(&c.out_dir, &a.output)?;
    write_feature_table(&mut w, &rows)?;
    flush(w, &path)?;
    m.output(&path);
    eprintln!("features: {} segments", rows.len());
    finish(m, c, file, json!({ "meta": meta, "geo": geo }))
}

struct Joined {
    features: Vec<SegmentFeatures>,
    labels: Vec<f64>,
    group: Vec<usize>,
}

fn load_training(a: &TrainArgs, m: &mut ManifestBuilder) -> Result<Joined> {
    if a.features.len() != a.labels.len() {
        bail!(
            "train: {} feature tables but {} label tables; pass them in pairs",
            a.features.len(),
            a.labels.len()
        );
    }
    let mut j = Joined {
        features: Vec::new(),
        labels: Vec::new(),
        group: Vec::new(),
    };
    for (g, (fp, lp)) in a.features.iter().zip(&a.labels).enumerate() {
        m.input(fp);
        m.input(lp);
        let feats = read_feature_table(open(fp)?).with_context(|| format!("train: {}", fp.display()))?;
        let labels = iri_edge_core::road_synth::read_labels_csv(open(lp)?)
            .map_err(|e| anyhow!("train: {}: {e}", lp.display()))?;
        let by_index: BTreeMap<u64, f64> = labels.iter().map(|l| (l.index, l.iri_inmi)).collect();
        for f in feats {
            let Some(&y) = by_index.get(&f.index) else {
                bail!(
                    "train: join mismatch: segment {} of {} has no label in {}",
                    f.index,
                    fp.display(),
                    lp.display()
                );
            };
            j.features.push(f);
            j.labels.push(y);
            j.group.push(g);
        }
    }
    Ok(j)
}

fn block_split(group: &[usize], train_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n = group.len();
    let mut groups: Vec<usize> = group.to_vec();
    groups.dedup();
    if groups.len() < 2 {
        let n_train = ((train_frac * n as f64).round() as usize).clamp(1, n - 1);
        return ((0..n_train).collect(), (n_train..n).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let k = ((train_frac * groups.len() as f64).round() as usize).clamp(1, groups.len() - 1);
    let train_groups = &groups[..k];
    (0..n).partition(|&i| train_groups.contains(&group[i]))
}

fn fit(kind: ModelKind, x: &Matrix, y: &[f64], cfg: &FitConfig) -> Result<EnsembleModel> {
    Ok(match kind {
        ModelKind::Single => fit_single_tree(x, y, cfg),
        ModelKind::Bagged => fit_bagged(x, y, cfg),
        ModelKind::Boosted => fit_boosted(x, y, cfg),
    }?)
}

fn train(c: &Common, a: &TrainArgs, file: &FileConfig) -> Result<ExitCode> {
    let mut m = ManifestBuilder::new("train");
    let data = load_training(a, &mut m)?;
    let n = data.labels.len();
    if n < 20 {
        bail!("train: degenerate data: need at least 20 joined rows, found {n}");
    }
    if !(a.train_frac > 0.0 && a.train_frac < 1.0) {
        bail!("train: --train-frac must be in (0, 1)");
    }
    let seed = c.seed.unwrap_or(0);
    let base = match a.mode {
        ModelKind::Single => FitConfig::single_tree(),
        ModelKind::Bagged => FitConfig::bagged(),
        ModelKind::Boosted => FitConfig::boosted(),
    };
    let mut cfg = file.section("fit", base)?;
    if let Some(v) = a.n_trees {
        cfg.n_trees = v;
    }
    if let Some(v) = a.max_depth {
        cfg.max_depth = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(b) = a.bins {
        cfg.split_mode = SplitMode::Histogram { max_bins: b };
    }
    cfg.seed = seed;
    let thresholds = file.section("thresholds", ClassThresholds::default())?;

    let (tr, te) = if c.block_split {
        block_split(&data.group, a.train_frac, seed)
    } else {
        random_split(n, a.train_frac, seed)
    };
    if tr.is_empty() || te.is_empty() {
        bail!(
            "train: split left an empty side ({} train, {} test)",
            tr.len(),
            te.len()
        );
    }
    let pick = |idx: &[usize]| -> Result<(Matrix, Vec<f64>)> {
        let f: Vec<SegmentFeatures> = idx.iter().map(|&i| data.features[i].clone()).collect();
        Ok((
            Matrix::from_features(&f)?,
            idx.iter().map(|&i| data.labels[i]).collect(),
        ))
    };
    let (xtr, ytr) = pick(&tr)?;
    let (xte, yte) = pick(&te)?;
    let model = fit(a.mode, &xtr, &ytr, &cfg).context("train")?;
    let pred = model.predict_matrix(&xte)?;
    let report = metrics(&pred, &yte)?;
    let acc = classification_accuracy(&pred, &yte, &thresholds)?;

    let mode = a.mode.name();
    let (path, mut w) = create(&c.out_dir, &format!("model-{mode}.txt"))?;
    w.write_all(save_model(&model).as_bytes())?;
    flush(w, &path)?;
    m.output(&path);
    let (path, mut w) = create(&c.out_dir, &format!("train-{mode}-metrics.csv"))?;
    write_metrics_csv(&mut w, &report, Some(acc))?;
    flush(w, &path)?;
    m.output(&path);
    let (path, mut w) = create(&c.out_dir, &format!("train-{mode}-metrics.json"))?;
    let summary = json!({
        "mode": mode,
        "split": if c.block_split { "block" } else { "random" },
        "n_train": tr.len(),
        "n_test": te.len(),
        "metrics": report,
        "class_accuracy": acc,
    });
    writeln!(w, "{}", serde_json::to_string_pretty(&summary)?)?;
    flush(w, &path)?;
    m.output(&path);
    eprint!(
        "train ({mode}, {} train / {} held out)\n{}",
        tr.len(),
        te.len(),
        format_metrics(&report)
    );
    eprintln!("class accuracy {acc:.2} %");
    finish(
        m,
        c,
        file,
        json!({ "fit": cfg, "thresholds": thresholds, "train_frac": a.train_frac, "block_split": c.block_split }),
    )
}

fn load_model_file(path: &Path) -> Result<EnsembleModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    load_model(&text).with_context(|| format!("loading model {}", path.display()))
}

fn predict(c: &Common, a: &PredictArgs, file: &FileConfig) -> Result<ExitCode> {
    let thresholds = file.section("thresholds", ClassThresholds::default())?;
    let mut m = ManifestBuilder::new("predict");
    m.input(&a.model);
    m.input(&a.features);
    let model = load_model_file(&a.model)?;
    let rows = read_feature_table(open(&a.features)?).with_context(|| format!("predict: {}", a.features.display()))?;
    let (path, mut w) = create(&c.out_dir, &a.output)?;
    writeln!(w, "index,iri,class")?;
    for f in &rows {
        let iri = model
            .predict(f)
            .with_context(|| format!("predict: segment {}", f.index))?
            .max(0.0);
        writeln!(w, "{},{},{}", f.index, iri, classify(iri, &thresholds))?;
    }
    flush(w, &path)?;
    m.output(&path);
    eprintln!("predict: {} segments", rows.len());
    finish(m, c, file, json!({ "thresholds": thresholds }))
}

fn evaluate(c: &Common, a: &EvaluateArgs, file: &FileConfig) -> Result<ExitCode> {
    let thresholds = file.section("thresholds", ClassThresholds::default())?;
    thresholds.validate()?;
    let mut m = ManifestBuilder::new("evaluate");
    m.input(&a.pred);
    m.input(&a.truth);
    let (_, pred, truth) = join(&read_series(&a.pred)?, &read_series(&a.truth)?)?;
    let report = metrics(&pred, &truth)?;
    let acc = classification_accuracy(&pred, &truth, &thresholds)?;
    let cm = confusion_matrix(&pred, &truth, &thresholds)?;
    let (path, mut w) = create(&c.out_dir, "evaluate-metrics.csv")?;
    write_metrics_csv(&mut w, &report, Some(acc))?;
    flush(w, &path)?;
    m.output(&path);
    let (path, mut w) = create(&c.out_dir, "evaluate-metrics.json")?;
    let summary = json!({ "metrics": report, "class_accuracy": acc, "confusion_truth_by_pred": cm });
    writeln!(w, "{}", serde_json::to_string_pretty(&summary)?)?;
    flush(w, &path)?;
    m.output(&path);
    print!("{}", format_metrics(&report));
    println!("Class accuracy  {acc:.2} %");
    finish(m, c, file, json!({ "thresholds": thresholds }))
}

fn load_runs(paths: &[std::path::PathBuf]) -> Result<Vec<Vec<f64>>> {
    if paths.len() < 2 {
        bail!("repeatability needs at least two --runs files");
    }
    let series: Vec<BTreeMap<u64, f64>> = paths.iter().map(|p| read_series(p)).collect::<Result<_>>()?;
    let keys: Vec<u64> = series[0].keys().copied().collect();
    for (p, s) in paths.iter().zip(&series) {
        if s.keys().copied().ne(keys.iter().copied()) {
            bail!("{}: segment indices differ from {}", p.display(), paths[0].display());
        }
    }
    Ok(series.into_iter().map(|s| s.into_values().collect()).collect())
}

fn repeat(c: &Common, a: &RepeatabilityArgs, file: &FileConfig) -> Result<ExitCode> {
    let mut m = ManifestBuilder::new("repeatability");
    let (runs, resolved) = if !a.runs.is_empty() {
        for p in &a.runs {
            m.input(p);
        }
        (load_runs(&a.runs)?, json!({ "runs": a.runs }))
    } else {
        let Some(model_path) = &a.model else {
            bail!("repeatability: pass --runs files, or --model to synthesize wander runs");
        };
        m.input(model_path);
        let model = load_model_file(model_path)?;
        let mut spec = file.section("repeat", RepeatSpec::default())?;
        spec.route = file.section("synth", spec.route)?;
        if let Some(s) = c.seed {
            spec.route.seed = s;
        }
        if let Some(w) = a.wander_m {
            spec.route.wander_m = w;
        }
        spec.runs = a.n_runs;
        let out = run_repeatability(&spec, &model)?;
        let (path, mut w) = create(&c.out_dir, "repeatability-runs.csv")?;
        let head: Vec<String> = (0..out.runs.len()).map(|r| format!("run{r}")).collect();
        writeln!(w, "index,{}", head.join(","))?;
        for i in 0..out.report.segments.len() {
            let vals: Vec<String> = out.runs.iter().map(|r| r[i].to_string()).collect();
            writeln!(w, "{i},{}", vals.join(","))?;
        }
        flush(w, &path)?;
        m.output(&path);
        (out.runs, serde_json::to_value(&spec)?)
    };
    let report = repeatability(&runs)?;
    let (path, mut w) = create(&c.out_dir, "repeatability.csv")?;
    write_repeatability_csv(&mut w, &report)?;
    flush(w, &path)?;
    m.output(&path);
    let (path, mut w) = create(&c.out_dir, "repeatability.json")?;
    let summary = json!({
        "n_runs": report.n_runs,
        "n_segments": report.segments.len(),
        "mean_cv": report.mean_cv,
        "count_cv_over_20": report.count_cv_over_20,
    });
    writeln!(w, "{}", serde_json::to_string_pretty(&summary)?)?;
    flush(w, &path)?;
    m.output(&path);
    println!(
        "mean CV {:.2} % over {} segments, {} above 20 %",
        report.mean_cv,
        report.segments.len(),
        report.count_cv_over_20
    );
    finish(m, c, file, resolved)
}

fn parse_emit(s: &str, out_dir: &Path) -> Result<EmitTarget> {
    if s == "stdout" || s == "-" {
        Ok(EmitTarget::Stdout)
    } else if let Some(p) = s.strip_prefix("file:") {
        Ok(EmitTarget::File(out_dir.join(p)))
    } else if let Some(addr) = s.strip_prefix("tcp:") {
        Ok(EmitTarget::Tcp(addr.to_string()))
    } else {
        bail!("--emit must be stdout, file:PATH or tcp:HOST:PORT, got {s:?}")
    }
}

fn pipeline(c: &Common, a: &PipelineArgs, file: &FileConfig) -> Result<ExitCode> {
    let meta = stream_meta(c, file)?;
    let mut cfg = pipeline_config(file)?;
    if let Some(e) = &a.emit {
        cfg.emit = parse_emit(e, &c.out_dir)?;
    } else if let EmitTarget::File(p) = &cfg.emit {
        cfg.emit = EmitTarget::File(c.out_dir.join(p));
    }
    if a.include_partial {
        cfg.include_partial = true;
    }
    let mut m = ManifestBuilder::new("pipeline");
    m.input(&a.model);
    m.input(&a.input);
    let model = load_model_file(&a.model)?;
    if let EmitTarget::File(p) = &cfg.emit {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        m.output(p);
    }
    let sink: Box<dyn RecordSink> = iri_edge_core::edge_pipeline::open_sink(&cfg.emit)?;
    let ctx = || format!("pipeline: {}", a.input.display());
    let mut reader = DeviceLogReader::new(reader_for(&a.input)?, meta.clone(), c.lenient).with_context(ctx)?;
    let stats: PipelineStats = run_pipeline(reader.by_ref(), &model, &cfg, sink).with_context(ctx)?;
    reader.finish().with_context(ctx)?;
    let (path, mut w) = create(&c.out_dir, "pipeline-stats.json")?;
    writeln!(w, "{}", serde_json::to_string(&stats)?)?;
    flush(w, &path)?;
    m.output(&path);
    if a.stats {
        eprintln!("{}", serde_json::to_string(&stats)?);
    }
    finish(m, c, file, json!({ "pipeline": cfg, "meta": meta }))
}

fn plot_data(c: &Common, a: &PlotDataArgs, file: &FileConfig) -> Result<ExitCode> {
    let thresholds = file.section("thresholds", ClassThresholds::default())?;
    let d_thr = pipeline_config(file)?.geo.d_thr_mi;
    let mut m = ManifestBuilder::new("plot-data");
    let name = a
        .output
        .clone()
        .unwrap_or_else(|| format!("plot-{}.csv", kind_name(a.kind)));
    let need = |p: &Option<std::path::PathBuf>, what: &str| -> Result<BTreeMap<u64, f64>> {
        let p = p
            .as_ref()
            .ok_or_else(|| anyhow!("plot-data {}: --{what} is required", kind_name(a.kind)))?;
        read_series(p)
    };
    for p in a.pred.iter().chain(&a.truth).chain(&a.runs) {
        m.input(p);
    }
    let mut w: Vec<u8> = Vec::new();
    let mut rows = 0usize;
    match a.kind {
        PlotKind::Scatter | PlotKind::Line => {
            let (idx, pred, truth) = join(&need(&a.pred, "pred")?, &need(&a.truth, "truth")?)?;
            if a.kind == PlotKind::Scatter {
                writeln!(w, "index,truth,pred")?;
            } else {
                writeln!(w, "index,distance_mi,truth,pred")?;
            }
            for ((i, p), t) in idx.iter().zip(&pred).zip(&truth) {
                if a.kind == PlotKind::Scatter {
                    writeln!(w, "{i},{t},{p}")?;
                } else {
                    writeln!(w, "{i},{},{t},{p}", (*i as f64 + 0.5) * d_thr)?;
                }
                rows += 1;
            }
        }
        PlotKind::Pie => {
            let pred = need(&a.pred, "pred")?;
            let truth = a.truth.as_ref().map(|p| read_series(p)).transpose()?;
            let count =
                |s: &BTreeMap<u64, f64>, k: RideClass| s.values().filter(|v| classify(**v, &thresholds) == k).count();
            writeln!(w, "class,pred_count,truth_count")?;
            for k in RideClass::ALL {
                let t = truth.as_ref().map_or(String::new(), |t| count(t, k).to_string());
                writeln!(w, "{k},{},{t}", count(&pred, k))?;
                rows += 1;
            }
        }
        PlotKind::Repeatability => {
            let report = repeatability(&load_runs(&a.runs)?)?;
            write_repeatability_csv(&mut w, &report)?;
            rows = report.segments.len();
        }
    }
    let (path, mut out) = create(&c.out_dir, &name)?;
    out.write_all(&w)?;
    flush(out, &path)?;
    m.output(&path);
    eprintln!("plot-data: {rows} rows to {}", path.display());
    finish(
        m,
        c,
        file,
        json!({ "kind": kind_name(a.kind), "thresholds": thresholds }),
    )
}

fn kind_name(k: PlotKind) -> &'static str {
    match k {
        PlotKind::Scatter => "scatter",
        PlotKind::Line => "line",
        PlotKind::Pie => "pie",
        PlotKind::Repeatability => "repeatability",
    }
}

fn benchmark(c: &Common, a: &BenchmarkArgs, file: &FileConfig) -> Result<ExitCode> {
    let mut bench = file.section("benchmark", BenchmarkSpec::default())?;
    let base = c.seed.unwrap_or(1);
    if let Some(n) = a.seeds {
        bench.seeds = (base..base + n as u64).collect();
    } else if c.seed.is_some() {
        bench.seeds = (base..base + bench.seeds.len() as u64).collect();
    }
    if let Some(s) = a.segments {
        bench.segments_per_seed = s;
    }
    if c.block_split {
        bench.block_split = true;
    }
    let mut shift = file.section("shift", ShiftSpec::default())?;
    let repeat = file.section("repeat", RepeatSpec::default())?;
    if let Some(s) = c.seed {
        shift.seed = s;
    }
    let mut m = ManifestBuilder::new("benchmark");
    let report = run_all(&bench, &shift, &repeat)?;

    let (path, mut w) = create(&c.out_dir, "benchmark.csv")?;
    report.benchmark.write_csv(&mut w)?;
    flush(w, &path)?;
    m.output(&path);
    let (path, mut w) = create(&c.out_dir, "harness-report.json")?;
    writeln!(w, "{}", report.to_json())?;
    flush(w, &path)?;
    m.output(&path);

    let b = &report.benchmark;
    println!(
        "benchmark: boosted R2 >= {} on {}/{} seeds; ranking boosted <= bagged <= single on {}/{}",
        b.targets.r2_min,
        b.r2_passes,
        b.seeds.len(),
        b.rank_passes,
        b.seeds.len()
    );
    println!(
        "shift: in-distribution accuracy {:.2} %, shifted {:.2} %, drop {:.2} points",
        report.shift.in_accuracy,
        report.shift.out_accuracy,
        report.shift.drop()
    );
    println!(
        "repeatability: mean CV {:.2} %, {} of {} segments above 20 %",
        report.repeatability.report.mean_cv,
        report.repeatability.report.count_cv_over_20,
        report.repeatability.report.segments.len()
    );
    finish(
        m,
        c,
        file,
        json!({ "benchmark": bench, "shift": shift, "repeat": repeat }),
    )?;
    let failures = report.failures();
    if failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for f in failures {
            eprintln!("FAIL {f}");
        }
        Ok(ExitCode::from(2))
    }
}
