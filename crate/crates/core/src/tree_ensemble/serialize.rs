//! Versioned line-oriented text format for [`EnsembleModel`].
//!
//! ```text
//! iri-edge-model v1
//! mode boosted
//! learning_rate 0.1
//! base_score 97.25
//! features auc mp sdp mxp df mean_speed mean_alt
//! meta {"config":{...},"n_rows":400,"fingerprint":"..."}
//! trees 2
//! (S 0 0.5 (L -1.0) (L 2.5))
//! (L 0.0)
//! end
//! ```
//!
//! Floats are written in shortest round-trip form, so a reloaded model
//! predicts bit-identically.

use std::fmt::Write as _;

use super::{EnsembleMode, EnsembleModel, TrainingMeta, TreeError, TreeNode};

pub const MODEL_MAGIC: &str = "iri-edge-model";
pub const MODEL_VERSION: &str = "v1";

const MAX_NESTING: usize = 256;

fn write_node(out: &mut String, node: &TreeNode) {
    match node {
        TreeNode::Leaf { value } => {
            let _ = write!(out, "(L {value:?})");
        }
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let _ = write!(out, "(S {feature} {threshold:?} ");
            write_node(out, left);
            out.push(' ');
            write_node(out, right);
            out.push(')');
        }
    }
}

pub fn save_model(model: &EnsembleModel) -> String {
    let mut out = String::new();
    let meta = serde_json::to_string(&model.training_meta).expect("training meta serializes");
    let _ = writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}");
    let _ = writeln!(out, "mode {}", model.mode);
    let _ = writeln!(out, "learning_rate {:?}", model.learning_rate);
    let _ = writeln!(out, "base_score {:?}", model.base_score);
    let _ = writeln!(out, "features {}", model.feature_names.join(" "));
    let _ = writeln!(out, "meta {meta}");
    let _ = writeln!(out, "trees {}", model.trees.len());
    for t in &model.trees {
        write_node(&mut out, t);
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

fn corrupt(msg: impl Into<String>) -> TreeError {
    TreeError::CorruptModel(msg.into())
}

struct Tokens<'a> {
    s: &'a str,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Option<&'a str> {
        self.s = self.s.trim_start();
        let first = self.s.chars().next()?;
        let len = if first == '(' || first == ')' {
            1
        } else {
            self.s
                .find(|c: char| c.is_whitespace() || c == '(' || c == ')')
                .unwrap_or(self.s.len())
        };
        let (tok, rest) = self.s.split_at(len);
        self.s = rest;
        Some(tok)
    }

    fn expect(&mut self, want: &str) -> Result<(), TreeError> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(corrupt(format!("expected {want:?}, found {other:?}"))),
        }
    }

    fn float(&mut self) -> Result<f64, TreeError> {
        let t = self.next().ok_or_else(|| corrupt("truncated tree"))?;
        let v: f64 = t.parse().map_err(|_| corrupt(format!("bad number {t:?}")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(corrupt("non-finite value"))
        }
    }
}

fn parse_node(tok: &mut Tokens, n_features: usize, depth: usize) -> Result<TreeNode, TreeError> {
    if depth > MAX_NESTING {
        return Err(corrupt("tree nesting too deep"));
    }
    tok.expect("(")?;
    let node = match tok.next() {
        Some("L") => TreeNode::Leaf { value: tok.float()? },
        Some("S") => {
            let f = tok.next().ok_or_else(|| corrupt("truncated split"))?;
            let feature: usize = f.parse().map_err(|_| corrupt(format!("bad feature index {f:?}")))?;
            if feature >= n_features {
                return Err(corrupt(format!("feature index {feature} out of range")));
            }
            let threshold = tok.float()?;
            let left = Box::new(parse_node(tok, n_features, depth + 1)?);
            let right = Box::new(parse_node(tok, n_features, depth + 1)?);
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            }
        }
        other => return Err(corrupt(format!("unknown node tag {other:?}"))),
    };
    tok.expect(")")?;
    Ok(node)
}

fn field<'a>(lines: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<&'a str, TreeError> {
    let line = lines.next().ok_or_else(|| corrupt(format!("missing {key} line")))?;
    match line.split_once(' ') {
        Some((k, v)) if k == key => Ok(v),
        _ if line == key => Ok(""),
        _ => Err(corrupt(format!("expected {key} line, found {line:?}"))),
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64, TreeError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| corrupt(format!("bad {what}: {s:?}")))
}

pub fn load_model(text: &str) -> Result<EnsembleModel, TreeError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| corrupt("empty model file"))?;
    match header.split_once(' ') {
        Some((MODEL_MAGIC, MODEL_VERSION)) => {}
        Some((MODEL_MAGIC, v)) => {
            return Err(TreeError::SchemaVersionMismatch {
                found: v.to_string(),
                expected: MODEL_VERSION.to_string(),
            })
        }
        _ => return Err(corrupt("missing model header")),
    }
    let mode = match field(&mut lines, "mode")? {
        "bagged" => EnsembleMode::Bagged,
        "boosted" => EnsembleMode::Boosted,
        m => return Err(corrupt(format!("unknown mode {m:?}"))),
    };
    let learning_rate = parse_f64(field(&mut lines, "learning_rate")?, "learning_rate")?;
    let base_score = parse_f64(field(&mut lines, "base_score")?, "base_score")?;
    let feature_names: Vec<String> = field(&mut lines, "features")?
        .split_whitespace()
        .map(String::from)
        .collect();
    if feature_names.is_empty() {
        return Err(corrupt("no feature names"));
    }
    let training_meta: TrainingMeta =
        serde_json::from_str(field(&mut lines, "meta")?).map_err(|e| corrupt(format!("bad meta: {e}")))?;
    let n_trees: usize = field(&mut lines, "trees")?
        .trim()
        .parse()
        .map_err(|_| corrupt("bad tree count"))?;
    let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
    for i in 0..n_trees {
        let line = lines
            .next()
            .ok_or_else(|| corrupt(format!("truncated after {i} trees")))?;
        let mut tok = Tokens { s: line };
        trees.push(parse_node(&mut tok, feature_names.len(), 0)?);
        if tok.next().is_some() {
            return Err(corrupt(format!("trailing tokens on tree {i}")));
        }
    }
    if lines.next() != Some("end") {
        return Err(corrupt("missing end marker"));
    }
    if trees.is_empty() {
        return Err(TreeError::ModelEmpty);
    }
    Ok(EnsembleModel {
        mode,
        trees,
        learning_rate,
        base_score,
        feature_names,
        training_meta,
    })
}
