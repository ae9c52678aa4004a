//! Greedy CART regression tree with squared-error splits.
//!
//! Rows are put in a canonical order (lexicographic on features, then label)
//! before anything is summed, so the fitted tree does not depend on the
//! order rows were supplied in. Equal-gain splits resolve to the lowest
//! feature index, then the lowest threshold.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::Rng;

use super::{Matrix, TreeError, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub feature_subsample: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 6,
            min_samples_leaf: 5,
            feature_subsample: 1.0,
        }
    }
}

/// Up to `max_bins` split thresholds for one feature column: every midpoint
/// when the column has few distinct values, quantile midpoints otherwise.
pub fn split_candidates(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut uniq: Vec<f64> = values.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    if uniq.len() < 2 {
        return Vec::new();
    }
    let gaps = uniq.len() - 1;
    let picks: Vec<usize> = if gaps <= max_bins {
        (0..gaps).collect()
    } else {
        let mut p: Vec<usize> = (1..=max_bins).map(|q| q * gaps / (max_bins + 1)).collect();
        p.dedup();
        p
    };
    picks.into_iter().map(|i| midpoint(uniq[i], uniq[i + 1])).collect()
}

/// Threshold strictly above `a` and at most `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if t <= a {
        b
    } else {
        t
    }
}

/// Feature columns quantised against fixed thresholds.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    thresholds: Vec<Vec<f64>>,
    /// Row-major bin codes; code `b` means exactly `b` thresholds are `<= value`.
    codes: Vec<u16>,
    n_cols: usize,
}

impl BinnedMatrix {
    pub fn new(x: &Matrix, max_bins: usize) -> Self {
        let n_cols = x.n_cols();
        let thresholds: Vec<Vec<f64>> = (0..n_cols)
            .map(|j| {
                let col: Vec<f64> = (0..x.n_rows()).map(|i| x.get(i, j)).collect();
                split_candidates(&col, max_bins)
            })
            .collect();
        let mut codes = Vec::with_capacity(x.n_rows() * n_cols);
        for i in 0..x.n_rows() {
            for (j, th) in thresholds.iter().enumerate() {
                let v = x.get(i, j);
                codes.push(th.partition_point(|t| *t <= v) as u16);
            }
        }
        Self {
            thresholds,
            codes,
            n_cols,
        }
    }

    #[inline]
    fn code(&self, i: usize, j: usize) -> usize {
        self.codes[i * self.n_cols + j] as usize
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Builder<'a, R> {
    x: &'a Matrix,
    y: &'a [f64],
    params: &'a TreeParams,
    binned: Option<&'a BinnedMatrix>,
    rng: &'a mut R,
}

fn canonical_cmp(x: &Matrix, y: &[f64], a: usize, b: usize) -> Ordering {
    for (va, vb) in x.row(a).iter().zip(x.row(b)) {
        match va.total_cmp(vb) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    y[a].total_cmp(&y[b]).then(a.cmp(&b))
}

impl<R: Rng> Builder<'_, R> {
    fn leaf(&self, rows: &[usize]) -> TreeNode {
        let sum: f64 = rows.iter().map(|&i| self.y[i]).sum();
        TreeNode::Leaf {
            value: sum / rows.len() as f64,
        }
    }

    fn features_for_split(&mut self) -> Vec<usize> {
        let p = self.x.n_cols();
        let m = ((self.params.feature_subsample * p as f64).round() as usize).clamp(1, p);
        if m == p {
            return (0..p).collect();
        }
        let mut f = sample(self.rng, p, m).into_vec();
        f.sort_unstable();
        f
    }

    fn best_exact(&self, rows: &[usize], feature: usize, resid: &[f64], total: f64, best: &mut Option<Candidate>) {
        let n = rows.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.x.get(rows[a], feature).total_cmp(&self.x.get(rows[b], feature)));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += resid[order[k]];
            let n_left = k + 1;
            let n_right = n - n_left;
            if n_left < min_leaf {
                continue;
            }
            if n_right < min_leaf {
                break;
            }
            let a = self.x.get(rows[order[k]], feature);
            let b = self.x.get(rows[order[k + 1]], feature);
            if a >= b {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64;
            if best.is_none_or(|c| gain > c.gain) {
                *best = Some(Candidate {
                    feature,
                    threshold: midpoint(a, b),
                    gain,
                });
            }
        }
    }

    fn best_binned(
        &self,
        binned: &BinnedMatrix,
        rows: &[usize],
        feature: usize,
        resid: &[f64],
        total: f64,
        best: &mut Option<Candidate>,
    ) {
        let th = &binned.thresholds[feature];
        if th.is_empty() {
            return;
        }
        let n = rows.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut counts = vec![0usize; th.len() + 1];
        let mut sums = vec![0.0; th.len() + 1];
        for (k, &i) in rows.iter().enumerate() {
            let b = binned.code(i, feature);
            counts[b] += 1;
            sums[b] += resid[k];
        }
        let (mut n_left, mut left_sum) = (0usize, 0.0);
        for (j, &t) in th.iter().enumerate() {
            n_left += counts[j];
            left_sum += sums[j];
            let n_right = n - n_left;
            if n_left < min_leaf || counts[j] == 0 {
                continue;
            }
            if n_right < min_leaf {
                break;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64;
            if best.is_none_or(|c| gain > c.gain) {
                *best = Some(Candidate {
                    feature,
                    threshold: t,
                    gain,
                });
            }
        }
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> TreeNode {
        let n = rows.len();
        if depth >= self.params.max_depth || n < 2 * self.params.min_samples_leaf {
            return self.leaf(&rows);
        }
        let mean = rows.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        let resid: Vec<f64> = rows.iter().map(|&i| self.y[i] - mean).collect();
        let sse: f64 = resid.iter().map(|r| r * r).sum();
        if sse == 0.0 || rows.iter().all(|&i| self.y[i] == self.y[rows[0]]) {
            return self.leaf(&rows);
        }
        let total: f64 = resid.iter().sum();
        let mut best = None;
        for f in self.features_for_split() {
            match self.binned {
                Some(b) => self.best_binned(b, &rows, f, &resid, total, &mut best),
                None => self.best_exact(&rows, f, &resid, total, &mut best),
            }
        }
        let Some(split) = best else {
            return self.leaf(&rows);
        };
        // gain over the unsplit node: sse reduction = split.gain - total^2 / n
        if split.gain - total * total / n as f64 <= sse * 1e-12 {
            return self.leaf(&rows);
        }
        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.x.get(i, split.feature) < split.threshold);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.build(left, depth + 1)),
            right: Box::new(self.build(right, depth + 1)),
        }
    }
}

pub(crate) fn fit_tree_rows<R: Rng>(
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    params: &TreeParams,
    binned: Option<&BinnedMatrix>,
    rng: &mut R,
) -> TreeNode {
    let mut rows = rows.to_vec();
    rows.sort_by(|&a, &b| canonical_cmp(x, y, a, b));
    let mut builder = Builder {
        x,
        y,
        params,
        binned,
        rng,
    };
    builder.build(rows, 0)
}

pub(crate) fn check_data(x: &Matrix, y: &[f64], min_samples_leaf: usize) -> Result<(), TreeError> {
    if x.n_rows() != y.len() {
        return Err(TreeError::DimensionMismatch {
            expected: x.n_rows(),
            found: y.len(),
        });
    }
    if x.n_rows() < 2 * min_samples_leaf.max(1) {
        return Err(TreeError::DegenerateData(format!(
            "{} rows, need at least {}",
            x.n_rows(),
            2 * min_samples_leaf.max(1)
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(TreeError::DegenerateData("non-finite label".into()));
    }
    Ok(())
}

/// Fit one exact-split tree on all rows.
pub fn fit_tree<R: Rng>(x: &Matrix, y: &[f64], params: &TreeParams, rng: &mut R) -> Result<TreeNode, TreeError> {
    check_data(x, y, params.min_samples_leaf)?;
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    Ok(fit_tree_rows(x, y, &rows, params, None, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    fn padded(xs: &[f64]) -> Matrix {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn constant_labels_give_single_leaf() {
        let x = padded(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        let t = fit_tree(&x, &[4.5; 10], &TreeParams::default(), &mut rng()).unwrap();
        assert_eq!(t, TreeNode::Leaf { value: 4.5 });
    }

    #[test]
    fn separable_step() {
        let xs = [-5.0, -4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = xs.iter().map(|&v| if v < 0.0 { 10.0 } else { 20.0 }).collect();
        let t = fit_tree(&padded(&xs), &y, &TreeParams::default(), &mut rng()).unwrap();
        match &t {
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > -1.0 && *threshold < 1.0);
                assert_eq!(**left, TreeNode::Leaf { value: 10.0 });
                assert_eq!(**right, TreeNode::Leaf { value: 20.0 });
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn too_few_rows_is_degenerate() {
        let x = padded(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            fit_tree(&x, &[1.0, 2.0, 3.0], &TreeParams::default(), &mut rng()),
            Err(TreeError::DegenerateData(_))
        ));
    }

    #[test]
    fn candidates_cover_all_gaps_when_few() {
        assert_eq!(split_candidates(&[3.0, 1.0, 2.0, 2.0], 256), vec![1.5, 2.5]);
        assert!(split_candidates(&[1.0, 1.0], 256).is_empty());
        let many: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
        let c = split_candidates(&many, 256);
        assert!(c.len() <= 256 && c.len() > 200);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn midpoint_of_adjacent_floats() {
        let a = 1.0_f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let t = midpoint(a, b);
        assert!(a < t && t <= b);
    }

    #[test]
    fn histogram_equals_exact_with_few_values() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|_| (0..3).map(|_| (r.gen_range(0..20)) as f64).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|v| v[0] * 2.0 + v[1] - v[2] * 0.5 + r.gen::<f64>())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let params = TreeParams {
            max_depth: 4,
            min_samples_leaf: 3,
            feature_subsample: 1.0,
        };
        let idx: Vec<usize> = (0..120).collect();
        let exact = fit_tree_rows(&x, &y, &idx, &params, None, &mut rng());
        let binned = BinnedMatrix::new(&x, 256);
        let hist = fit_tree_rows(&x, &y, &idx, &params, Some(&binned), &mut rng());
        for i in 0..120 {
            assert!((exact.predict(x.row(i)) - hist.predict(x.row(i))).abs() < 1e-9);
        }
    }
}
