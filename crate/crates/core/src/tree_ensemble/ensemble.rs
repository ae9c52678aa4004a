//! Bagged forests and least-squares gradient boosting over [`fit_tree_rows`].

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::cart::{check_data, fit_tree_rows, BinnedMatrix};
use super::{
    default_feature_names, fingerprint, EnsembleMode, EnsembleModel, FitConfig, Matrix, SplitMode, TrainingMeta,
    TreeError, TreeNode,
};

/// Per-iteration training diagnostics of a boosted fit.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostTrace {
    /// Training RMSE of `F_0 .. F_M`; length `n_trees + 1`.
    pub train_rmse: Vec<f64>,
    /// Final training-set predictions accumulated during the fit.
    pub train_pred: Vec<f64>,
}

/// Independent generator for tree `t`; identical whether trees are fit in
/// parallel or one after another.
fn tree_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

fn draw_rows<R: Rng>(n: usize, cfg: &FitConfig, rng: &mut R) -> Vec<usize> {
    let m = ((cfg.row_subsample * n as f64).round() as usize).clamp(1, n);
    if cfg.bootstrap {
        (0..m).map(|_| rng.gen_range(0..n)).collect()
    } else if m == n {
        (0..n).collect()
    } else {
        sample(rng, n, m).into_vec()
    }
}

fn prepare(x: &Matrix, y: &[f64], cfg: &FitConfig) -> Result<Option<BinnedMatrix>, TreeError> {
    cfg.validate()?;
    check_data(x, y, cfg.min_samples_leaf)?;
    Ok(match cfg.split_mode {
        SplitMode::Exact => None,
        SplitMode::Histogram { max_bins } => Some(BinnedMatrix::new(x, max_bins)),
    })
}

fn meta(x: &Matrix, y: &[f64], cfg: &FitConfig) -> TrainingMeta {
    TrainingMeta {
        config: cfg.clone(),
        n_rows: x.n_rows(),
        fingerprint: fingerprint(x, y),
    }
}

/// Mean of `n_trees` trees, each on its own row resample.
pub fn fit_bagged(x: &Matrix, y: &[f64], cfg: &FitConfig) -> Result<EnsembleModel, TreeError> {
    let binned = prepare(x, y, cfg)?;
    let params = cfg.tree_params();
    let trees: Vec<TreeNode> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(cfg.seed, t);
            let rows = draw_rows(x.n_rows(), cfg, &mut rng);
            fit_tree_rows(x, y, &rows, &params, binned.as_ref(), &mut rng)
        })
        .collect();
    Ok(EnsembleModel {
        mode: EnsembleMode::Bagged,
        trees,
        learning_rate: cfg.learning_rate,
        base_score: 0.0,
        feature_names: default_feature_names(x.n_cols()),
        training_meta: meta(x, y, cfg),
    })
}

/// One CART on every row and feature, stored as a bagged model of one tree.
pub fn fit_single_tree(x: &Matrix, y: &[f64], cfg: &FitConfig) -> Result<EnsembleModel, TreeError> {
    let cfg = FitConfig {
        n_trees: 1,
        feature_subsample: 1.0,
        row_subsample: 1.0,
        bootstrap: false,
        ..cfg.clone()
    };
    fit_bagged(x, y, &cfg)
}

pub fn fit_boosted(x: &Matrix, y: &[f64], cfg: &FitConfig) -> Result<EnsembleModel, TreeError> {
    fit_boosted_traced(x, y, cfg).map(|(m, _)| m)
}

fn rmse(y: &[f64], f: &[f64]) -> f64 {
    let s: f64 = y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum();
    (s / y.len() as f64).sqrt()
}

/// Gradient boosting on squared error: each tree fits the current residuals.
pub fn fit_boosted_traced(x: &Matrix, y: &[f64], cfg: &FitConfig) -> Result<(EnsembleModel, BoostTrace), TreeError> {
    let binned = prepare(x, y, cfg)?;
    let params = cfg.tree_params();
    let n = x.n_rows();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut f = vec![base; n];
    let mut sum_trees = vec![0.0; n];
    let mut train_rmse = vec![rmse(y, &f)];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut resid = vec![0.0; n];
    for t in 0..cfg.n_trees {
        for i in 0..n {
            resid[i] = y[i] - f[i];
        }
        let mut rng = tree_rng(cfg.seed, t);
        let rows = draw_rows(n, cfg, &mut rng);
        let tree = fit_tree_rows(x, &resid, &rows, &params, binned.as_ref(), &mut rng);
        // Same accumulation order as EnsembleModel::predict_row.
        for i in 0..n {
            sum_trees[i] += tree.predict(x.row(i));
            f[i] = base + cfg.learning_rate * sum_trees[i];
        }
        train_rmse.push(rmse(y, &f));
        trees.push(tree);
    }
    let model = EnsembleModel {
        mode: EnsembleMode::Boosted,
        trees,
        learning_rate: cfg.learning_rate,
        base_score: base,
        feature_names: default_feature_names(x.n_cols()),
        training_meta: meta(x, y, cfg),
    };
    Ok((
        model,
        BoostTrace {
            train_rmse,
            train_pred: f,
        },
    ))
}
