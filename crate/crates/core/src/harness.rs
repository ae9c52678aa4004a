//! Seeded end-to-end experiments: model benchmark across seeds, the
//! train-smooth/test-rough distribution-shift demo and the wander
//! repeatability run. Each returns a report with explicit pass/fail.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge_pipeline::{run_pipeline, PipelineConfig, PipelineError};
use crate::evaluate::{
    classification_accuracy, metrics, repeatability, ClassThresholds, EvalError, MetricReport, RepeatabilityReport,
};
use crate::road_synth::{generate_profile, labeled_dataset, LabeledDataset, StreamSynth, SynthConfig, SynthError};
use crate::tree_ensemble::{fit_bagged, fit_boosted, fit_single_tree, EnsembleModel, FitConfig, Matrix, TreeError};

pub const MPH_TO_MPS: f64 = 0.44704;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("invalid harness spec: {0}")]
    InvalidSpec(String),
    #[error("acceptance failed: {}", .0.join("; "))]
    AssertionFailure(Vec<String>),
}

/// Population of synthetic routes a dataset is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouteMix {
    /// PSD level range, m³; drawn log-uniformly per route.
    pub gd_min: f64,
    pub gd_max: f64,
    /// Candidate travel speeds, mph; one drawn per route.
    pub speeds_mph: Vec<f64>,
    pub route_len_mi: f64,
    pub noise_sigma: f64,
    /// Lateral offset spread between the probe path and the labelled path, m.
    pub wander_m: f64,
}

impl Default for RouteMix {
    fn default() -> Self {
        Self::mixed()
    }
}

impl RouteMix {
    /// Smooth through rough surfaces at highway and arterial speeds.
    pub fn mixed() -> Self {
        Self {
            gd_min: 1e-6,
            gd_max: 40e-6,
            speeds_mph: vec![45.0, 50.0, 65.0, 70.0],
            route_len_mi: 5.0,
            noise_sigma: 0.05,
            wander_m: 0.0,
        }
    }

    /// Well-kept high-speed routes, almost all in the Good band.
    pub fn interstate() -> Self {
        Self {
            gd_min: 1e-6,
            gd_max: 4e-6,
            speeds_mph: vec![65.0, 70.0],
            ..Self::mixed()
        }
    }

    /// Rougher, slower urban routes.
    pub fn arterial() -> Self {
        Self {
            gd_min: 2e-6,
            gd_max: 60e-6,
            speeds_mph: vec![35.0, 45.0],
            ..Self::mixed()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.gd_min > 0.0 && self.gd_min <= self.gd_max) {
            return Err(HarnessError::InvalidSpec("need 0 < gd_min <= gd_max".into()));
        }
        if self.speeds_mph.is_empty() || self.speeds_mph.iter().any(|v| !(*v > 0.0)) {
            return Err(HarnessError::InvalidSpec("speeds must be positive".into()));
        }
        if !(self.route_len_mi >= 0.1) {
            return Err(HarnessError::InvalidSpec("route_len_mi must be at least 0.1".into()));
        }
        Ok(())
    }

    /// Route `r` of dataset `seed`.
    pub fn route(&self, seed: u64, r: u64) -> SynthConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r);
        let gd = (self.gd_min.ln() + rng.gen::<f64>() * (self.gd_max / self.gd_min).ln()).exp();
        let mph = *self.speeds_mph.choose(&mut rng).expect("non-empty speeds");
        SynthConfig {
            gd_n0: Some(gd),
            seed: rng.gen(),
            route_len_mi: self.route_len_mi,
            speeds_mps: vec![mph * MPH_TO_MPS],
            noise_sigma: self.noise_sigma,
            wander_m: self.wander_m,
            bearing_deg: rng.gen_range(0.0..360.0),
            ..SynthConfig::default()
        }
    }
}

/// At least `n_segments` labelled rows drawn from `mix`; routes synthesized in parallel.
pub fn generate_dataset(mix: &RouteMix, n_segments: usize, seed: u64) -> Result<LabeledDataset, HarnessError> {
    mix.validate()?;
    let per_route = ((mix.route_len_mi / 0.1) + 1e-9).floor().max(1.0) as usize;
    let n_routes = n_segments.div_ceil(per_route).max(1);
    let parts: Vec<LabeledDataset> = (0..n_routes as u64)
        .into_par_iter()
        .map(|r| labeled_dataset(&mix.route(seed, r)))
        .collect::<Result<_, _>>()?;
    let mut all = LabeledDataset::empty();
    for p in parts {
        all.extend(p);
    }
    Ok(all)
}

/// Seeded random train/test partition of `0..n`.
pub fn random_split(n: usize, train_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    idx.shuffle(&mut rng);
    let n_train = ((train_frac * n as f64).round() as usize).min(n);
    let test = idx.split_off(n_train);
    (idx, test)
}

/// Train/test partition by route: whole routes go to one side, no route is split.
pub fn block_split(provenance: &[SynthConfig], train_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut keys: Vec<u64> = provenance.iter().map(|c| c.seed).collect();
    keys.sort_unstable();
    keys.dedup();
    let (train_keys, _) = random_split(keys.len(), train_frac, seed);
    let train_set: std::collections::HashSet<u64> = train_keys.iter().map(|&i| keys[i]).collect();
    (0..provenance.len()).partition(|&i| train_set.contains(&provenance[i].seed))
}

pub fn dataset_matrix(d: &LabeledDataset, rows: &[usize]) -> Result<(Matrix, Vec<f64>), HarnessError> {
    let feats: Vec<_> = rows.iter().map(|&i| d.features[i].clone()).collect();
    Ok((
        Matrix::from_features(&feats)?,
        rows.iter().map(|&i| d.labels[i]).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkTargets {
    pub r2_min: f64,
    /// Seeds that must reach `r2_min` with the boosted model.
    pub r2_quorum: usize,
    /// Seeds that must rank boosted <= bagged <= single by held-out RMSE.
    pub rank_quorum: usize,
}

impl Default for BenchmarkTargets {
    fn default() -> Self {
        Self {
            r2_min: 0.6,
            r2_quorum: 8,
            rank_quorum: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    pub seeds: Vec<u64>,
    pub segments_per_seed: usize,
    pub mix: RouteMix,
    pub train_frac: f64,
    pub block_split: bool,
    pub single: FitConfig,
    pub bagged: FitConfig,
    pub boosted: FitConfig,
    pub targets: BenchmarkTargets,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            seeds: (1..=10).collect(),
            segments_per_seed: 500,
            mix: RouteMix::mixed(),
            train_frac: 0.8,
            block_split: false,
            single: FitConfig::single_tree(),
            bagged: FitConfig::bagged(),
            boosted: FitConfig::boosted(),
            targets: BenchmarkTargets::default(),
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.len() < 5 {
            return Err(HarnessError::InvalidSpec("at least 5 seeds required".into()));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(HarnessError::InvalidSpec("train_frac must be in (0, 1)".into()));
        }
        self.mix.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub single: MetricReport,
    pub bagged: MetricReport,
    pub boosted: MetricReport,
}

impl SeedResult {
    pub fn ranking_holds(&self) -> bool {
        self.boosted.rmse <= self.bagged.rmse && self.bagged.rmse <= self.single.rmse
    }

    pub fn boosted_r2(&self) -> f64 {
        self.boosted.r2.unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub seeds: Vec<SeedResult>,
    pub r2_passes: usize,
    pub rank_passes: usize,
    pub targets: BenchmarkTargets,
}

impl BenchmarkReport {
    pub fn failures(&self) -> Vec<String> {
        let mut f = Vec::new();
        if self.r2_passes < self.targets.r2_quorum {
            f.push(format!(
                "boosted R2 >= {} on {}/{} seeds (need {})",
                self.targets.r2_min,
                self.r2_passes,
                self.seeds.len(),
                self.targets.r2_quorum
            ));
        }
        if self.rank_passes < self.targets.rank_quorum {
            f.push(format!(
                "RMSE ranking held on {}/{} seeds (need {})",
                self.rank_passes,
                self.seeds.len(),
                self.targets.rank_quorum
            ));
        }
        f
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "seed,n_train,n_test,single_rmse,bagged_rmse,boosted_rmse,single_r2,bagged_r2,boosted_r2,boosted_mape,ranking"
        )?;
        let r2 = |m: &MetricReport| m.r2.map_or(String::new(), |v| v.to_string());
        for s in &self.seeds {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                s.seed,
                s.n_train,
                s.n_test,
                s.single.rmse,
                s.bagged.rmse,
                s.boosted.rmse,
                r2(&s.single),
                r2(&s.bagged),
                r2(&s.boosted),
                s.boosted.mape.map_or(String::new(), |v| v.to_string()),
                s.ranking_holds()
            )?;
        }
        Ok(())
    }
}

fn held_out(model: &EnsembleModel, x: &Matrix, y: &[f64]) -> Result<MetricReport, HarnessError> {
    Ok(metrics(&model.predict_matrix(x)?, y)?)
}

/// One seed of the benchmark: generate, split, fit all three models, score.
pub fn run_seed(spec: &BenchmarkSpec, seed: u64) -> Result<SeedResult, HarnessError> {
    let data = generate_dataset(&spec.mix, spec.segments_per_seed, seed)?;
    let (train, test) = if spec.block_split {
        block_split(&data.provenance, spec.train_frac, seed)
    } else {
        random_split(data.len(), spec.train_frac, seed)
    };
    let (xtr, ytr) = dataset_matrix(&data, &train)?;
    let (xte, yte) = dataset_matrix(&data, &test)?;
    let single = fit_single_tree(&xtr, &ytr, &spec.single.clone().with_seed(seed))?;
    let bagged = fit_bagged(&xtr, &ytr, &spec.bagged.clone().with_seed(seed))?;
    let boosted = fit_boosted(&xtr, &ytr, &spec.boosted.clone().with_seed(seed))?;
    Ok(SeedResult {
        seed,
        n_train: train.len(),
        n_test: test.len(),
        single: held_out(&single, &xte, &yte)?,
        bagged: held_out(&bagged, &xte, &yte)?,
        boosted: held_out(&boosted, &xte, &yte)?,
    })
}

pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkReport, HarnessError> {
    spec.validate()?;
    let seeds: Vec<SeedResult> = spec
        .seeds
        .par_iter()
        .map(|&s| run_seed(spec, s))
        .collect::<Result<_, _>>()?;
    Ok(BenchmarkReport {
        r2_passes: seeds.iter().filter(|s| s.boosted_r2() >= spec.targets.r2_min).count(),
        rank_passes: seeds.iter().filter(|s| s.ranking_holds()).count(),
        seeds,
        targets: spec.targets.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShiftSpec {
    pub seed: u64,
    pub train_mix: RouteMix,
    pub test_mix: RouteMix,
    pub segments: usize,
    pub train_frac: f64,
    pub fit: FitConfig,
    pub thresholds: ClassThresholds,
    pub min_in_accuracy: f64,
    pub min_drop: f64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            train_mix: RouteMix::interstate(),
            test_mix: RouteMix::arterial(),
            segments: 500,
            train_frac: 0.8,
            fit: FitConfig::boosted(),
            thresholds: ClassThresholds::default(),
            min_in_accuracy: 90.0,
            min_drop: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    /// Held-out accuracy on routes like the training routes, percent.
    pub in_accuracy: f64,
    /// Accuracy on routes from the shifted mix, percent.
    pub out_accuracy: f64,
    pub in_metrics: MetricReport,
    pub out_metrics: MetricReport,
    pub min_in_accuracy: f64,
    pub min_drop: f64,
}

impl ShiftReport {
    pub fn drop(&self) -> f64 {
        self.in_accuracy - self.out_accuracy
    }

    pub fn passed(&self) -> bool {
        self.in_accuracy >= self.min_in_accuracy && self.drop() >= self.min_drop
    }
}

/// Train on one route population, test both in-distribution (held-out
/// routes of the same population) and on a shifted population.
pub fn run_shift(spec: &ShiftSpec) -> Result<ShiftReport, HarnessError> {
    let data = generate_dataset(&spec.train_mix, spec.segments, spec.seed)?;
    let (train, test) = random_split(data.len(), spec.train_frac, spec.seed);
    let (xtr, ytr) = dataset_matrix(&data, &train)?;
    let (xte, yte) = dataset_matrix(&data, &test)?;
    let model = fit_boosted(&xtr, &ytr, &spec.fit.clone().with_seed(spec.seed))?;
    let shifted = generate_dataset(&spec.test_mix, spec.segments, spec.seed.wrapping_add(1 << 20))?;
    let all: Vec<usize> = (0..shifted.len()).collect();
    let (xo, yo) = dataset_matrix(&shifted, &all)?;
    let pin = model.predict_matrix(&xte)?;
    let pout = model.predict_matrix(&xo)?;
    Ok(ShiftReport {
        in_accuracy: classification_accuracy(&pin, &yte, &spec.thresholds)?,
        out_accuracy: classification_accuracy(&pout, &yo, &spec.thresholds)?,
        in_metrics: metrics(&pin, &yte)?,
        out_metrics: metrics(&pout, &yo)?,
        min_in_accuracy: spec.min_in_accuracy,
        min_drop: spec.min_drop,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepeatSpec {
    pub route: SynthConfig,
    pub runs: u32,
    pub max_mean_cv: f64,
    pub max_frac_over_20: f64,
}

impl Default for RepeatSpec {
    fn default() -> Self {
        Self {
            route: SynthConfig {
                gd_n0: Some(6e-6),
                seed: 8,
                route_len_mi: 3.2,
                speeds_mps: vec![65.0 * MPH_TO_MPS],
                wander_m: 0.3,
                ..SynthConfig::default()
            },
            runs: 4,
            max_mean_cv: 15.0,
            max_frac_over_20: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatOutcome {
    pub report: RepeatabilityReport,
    /// Predicted IRI per run, aligned by segment index.
    pub runs: Vec<Vec<f64>>,
    pub max_mean_cv: f64,
    pub max_frac_over_20: f64,
}

impl RepeatOutcome {
    pub fn passed(&self) -> bool {
        self.report.mean_cv < self.max_mean_cv && self.report.fraction_cv_over_20() <= self.max_frac_over_20
    }
}

/// Drive `runs` wander-perturbed passes over one surface through the
/// streaming pipeline and score run-to-run spread of the predictions.
pub fn run_repeatability(spec: &RepeatSpec, model: &EnsembleModel) -> Result<RepeatOutcome, HarnessError> {
    if spec.runs < 2 {
        return Err(HarnessError::InvalidSpec("need at least two runs".into()));
    }
    let profile = generate_profile(&spec.route)?;
    let cfg = PipelineConfig::default();
    let runs: Vec<Vec<f64>> = (0..spec.runs)
        .into_par_iter()
        .map(|run| {
            let rc = SynthConfig {
                run,
                ..spec.route.clone()
            };
            let mut recs = Vec::new();
            run_pipeline(StreamSynth::new(&profile, &rc)?.map(Ok), model, &cfg, &mut recs)?;
            Ok(recs.into_iter().map(|r| r.iri).collect())
        })
        .collect::<Result<_, HarnessError>>()?;
    let n = runs
        .iter()
        .map(Vec::len)
        .min()
        .unwrap_or(0)
        .min(spec.route.n_segments());
    let runs: Vec<Vec<f64>> = runs
        .into_iter()
        .map(|mut r| {
            r.truncate(n);
            r
        })
        .collect();
    Ok(RepeatOutcome {
        report: repeatability(&runs)?,
        runs,
        max_mean_cv: spec.max_mean_cv,
        max_frac_over_20: spec.max_frac_over_20,
    })
}

/// Consolidated outcome of the three experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub benchmark: BenchmarkReport,
    pub shift: ShiftReport,
    pub repeatability: RepeatOutcome,
}

impl HarnessReport {
    pub fn failures(&self) -> Vec<String> {
        let mut f = self.benchmark.failures();
        if !self.shift.passed() {
            f.push(format!(
                "shift: in-distribution {:.2}% (need >= {}), drop {:.2} points (need >= {})",
                self.shift.in_accuracy,
                self.shift.min_in_accuracy,
                self.shift.drop(),
                self.shift.min_drop
            ));
        }
        if !self.repeatability.passed() {
            f.push(format!(
                "repeatability: mean CV {:.2}% (need < {}), {} of {} segments above 20%",
                self.repeatability.report.mean_cv,
                self.repeatability.max_mean_cv,
                self.repeatability.report.count_cv_over_20,
                self.repeatability.report.segments.len()
            ));
        }
        f
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl HarnessReport {
    /// `AssertionFailure` listing every missed target with measured values.
    pub fn check(&self) -> Result<(), HarnessError> {
        let failures = self.failures();
        if failures.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::AssertionFailure(failures))
        }
    }
}

/// Boosted model trained on a fresh draw from the benchmark mix, used to
/// score the repeatability runs.
pub fn reference_model(bench: &BenchmarkSpec, seed: u64) -> Result<EnsembleModel, HarnessError> {
    let data = generate_dataset(&bench.mix, bench.segments_per_seed, seed)?;
    let all: Vec<usize> = (0..data.len()).collect();
    let (x, y) = dataset_matrix(&data, &all)?;
    Ok(fit_boosted(&x, &y, &bench.boosted.clone().with_seed(seed))?)
}

/// Run all three experiments. Targets are reported, not enforced; see
/// [`HarnessReport::check`].
pub fn run_all(bench: &BenchmarkSpec, shift: &ShiftSpec, repeat: &RepeatSpec) -> Result<HarnessReport, HarnessError> {
    let benchmark = run_benchmark(bench)?;
    let shift = run_shift(shift)?;
    let model = reference_model(bench, repeat.route.seed.wrapping_add(1 << 21))?;
    let repeatability = run_repeatability(repeat, &model)?;
    Ok(HarnessReport {
        benchmark,
        shift,
        repeatability,
    })
}
