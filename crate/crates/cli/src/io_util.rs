use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use iri_edge_core::edge_pipeline::SegmentPrediction;

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn create(out_dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let path = out_dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((path, BufWriter::new(f)))
}

const INDEX_COLS: [&str; 3] = ["index", "idx", "segment_index"];
const VALUE_COLS: [&str; 3] = ["iri", "iri_inmi", "iri_pred"];

/// Per-segment IRI (in/mi) keyed by segment index, from a CSV with an
/// index column and an IRI column, or from pipeline NDJSON.
pub fn read_series(path: &Path) -> Result<BTreeMap<u64, f64>> {
    let reader = open(path)?;
    let mut out = BTreeMap::new();
    let mut cols: Option<(usize, usize)> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.with_context(|| format!("{}:{line_no}", path.display()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('{') {
            let rec = SegmentPrediction::from_ndjson(line).map_err(|e| anyhow!("{}:{line_no}: {e}", path.display()))?;
            out.insert(rec.idx, rec.iri);
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Some((ci, cv)) = cols else {
            let find = |names: &[&str]| fields.iter().position(|f| names.contains(f));
            match (find(&INDEX_COLS), find(&VALUE_COLS)) {
                (Some(a), Some(b)) => cols = Some((a, b)),
                _ => bail!(
                    "{}:{line_no}: header needs an index column ({}) and an IRI column ({})",
                    path.display(),
                    INDEX_COLS.join("/"),
                    VALUE_COLS.join("/")
                ),
            }
            continue;
        };
        let get = |j: usize| {
            fields
                .get(j)
                .copied()
                .ok_or_else(|| anyhow!("{}:{line_no}: missing column", path.display()))
        };
        let idx: u64 = get(ci)?
            .parse()
            .map_err(|_| anyhow!("{}:{line_no}: bad segment index", path.display()))?;
        let v: f64 = get(cv)?
            .parse()
            .map_err(|_| anyhow!("{}:{line_no}: bad IRI value", path.display()))?;
        if out.insert(idx, v).is_some() {
            bail!("{}:{line_no}: duplicate segment index {idx}", path.display());
        }
    }
    if out.is_empty() {
        bail!("{}: no rows", path.display());
    }
    Ok(out)
}

/// Predictions and truth aligned on segment index; every predicted index
/// must have a label.
pub fn join(pred: &BTreeMap<u64, f64>, truth: &BTreeMap<u64, f64>) -> Result<(Vec<u64>, Vec<f64>, Vec<f64>)> {
    let mut idx = Vec::with_capacity(pred.len());
    let mut p = Vec::with_capacity(pred.len());
    let mut t = Vec::with_capacity(pred.len());
    for (&k, &v) in pred {
        let Some(&tv) = truth.get(&k) else {
            bail!("join mismatch: segment {k} has a prediction but no label");
        };
        idx.push(k);
        p.push(v);
        t.push(tv);
    }
    Ok((idx, p, t))
}
