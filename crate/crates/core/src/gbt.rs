//! CART regression trees and least-squares gradient boosting.
//!
//! Splits are found by exact greedy search: for each feature the node's rows
//! are sorted and every midpoint between consecutive distinct values is
//! scored by its SSE reduction `n_l * n_r / n * (mean_l - mean_r)^2`. Ties
//! go to the lowest feature index, then the smallest threshold. Row sums are
//! always taken in a canonical sorted order, so permuting the training rows
//! produces a bit-identical model.
//!
//! Trees render to a line-oriented text form, one node per line in preorder,
//! two spaces of indent per level:
//!
//! ```text
//! close-1 <= 3.5
//!   leaf 1.25 (n=4)
//!   leaf 7 (n=6)
//! ```
//!
//! Numbers use the shortest representation that parses back to the same
//! `f64`, which keeps saved models bit-exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::Regressor;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Rows with `feature <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
        n_samples: usize,
    },
}

impl TreeNode {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Text rendering; see the module docs for the grammar.
    pub fn render(&self, feature_names: &[String]) -> String {
        let mut out = String::new();
        self.render_into(feature_names, 0, &mut out);
        out
    }

    fn render_into(&self, names: &[String], depth: usize, out: &mut String) {
        out.push_str(&"  ".repeat(depth));
        match self {
            TreeNode::Leaf { value, n_samples } => {
                out.push_str(&format!("leaf {value} (n={n_samples})\n"));
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                out.push_str(&format!("{} <= {threshold}\n", names[*feature]));
                left.render_into(names, depth + 1, out);
                right.render_into(names, depth + 1, out);
            }
        }
    }

    /// Inverse of [`TreeNode::render`].
    pub fn parse(text: &str, feature_names: &[String]) -> Result<TreeNode> {
        let lines: Vec<(usize, usize, &str)> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(no, l)| {
                let body = l.trim_start_matches(' ');
                (no + 1, (l.len() - body.len()) / 2, body.trim_end())
            })
            .collect();
        let mut pos = 0;
        let tree = parse_node(&lines, &mut pos, 0, feature_names)?;
        if pos != lines.len() {
            return Err(Error::argument(format!(
                "tree dump line {}: trailing content",
                lines[pos].0
            )));
        }
        Ok(tree)
    }
}

fn parse_node(
    lines: &[(usize, usize, &str)],
    pos: &mut usize,
    depth: usize,
    names: &[String],
) -> Result<TreeNode> {
    let &(line_no, indent, body) = lines
        .get(*pos)
        .ok_or_else(|| Error::argument("tree dump ended early"))?;
    let bad = |msg: &str| Error::argument(format!("tree dump line {line_no}: {msg}"));
    if indent != depth {
        return Err(bad("unexpected indentation"));
    }
    *pos += 1;
    if let Some(rest) = body.strip_prefix("leaf ") {
        let (value, n) = rest
            .strip_suffix(')')
            .and_then(|r| r.split_once(" (n="))
            .ok_or_else(|| bad("malformed leaf"))?;
        return Ok(TreeNode::Leaf {
            value: value.parse().map_err(|_| bad("bad leaf value"))?,
            n_samples: n.parse().map_err(|_| bad("bad leaf count"))?,
        });
    }
    let (name, threshold) = body.rsplit_once(" <= ").ok_or_else(|| bad("malformed split"))?;
    let feature = names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| bad("unknown feature"))?;
    let threshold = threshold.parse().map_err(|_| bad("bad threshold"))?;
    let left = parse_node(lines, pos, depth + 1, names)?;
    let right = parse_node(lines, pos, depth + 1, names)?;
    Ok(TreeNode::Split {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    })
}

fn check_finite(features: &Matrix, targets: &[f64]) -> Result<()> {
    if features.rows() != targets.len() {
        return Err(Error::argument(format!(
            "{} feature rows but {} targets",
            features.rows(),
            targets.len()
        )));
    }
    if let Some((row, col)) = features.first_non_finite() {
        return Err(Error::argument(format!("non-finite feature at row {row}, column {col}")));
    }
    if let Some(row) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::argument(format!("non-finite target at row {row}")));
    }
    Ok(())
}

/// Sum of values in ascending total order; independent of input order.
fn canonical_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct TreeBuilder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
}

impl TreeBuilder<'_> {
    fn leaf(&self, rows: &[usize]) -> TreeNode {
        let mut ys: Vec<f64> = rows.iter().map(|&i| self.y[i]).collect();
        let value = canonical_sum(&mut ys) / rows.len() as f64;
        TreeNode::Leaf {
            value,
            n_samples: rows.len(),
        }
    }

    fn best_split(&self, rows: &[usize]) -> Option<SplitChoice> {
        let n = rows.len();
        let first = self.y[rows[0]];
        if rows.iter().all(|&i| self.y[i] == first) {
            return None;
        }
        let mut best: Option<SplitChoice> = None;
        let mut order = rows.to_vec();
        for j in 0..self.x.cols() {
            order.sort_by(|&a, &b| {
                self.x
                    .get(a, j)
                    .total_cmp(&self.x.get(b, j))
                    .then_with(|| self.y[a].total_cmp(&self.y[b]))
            });
            let total: f64 = order.iter().map(|&i| self.y[i]).sum();
            let mut left_sum = 0.0;
            for k in 1..n {
                left_sum += self.y[order[k - 1]];
                let (lo, hi) = (self.x.get(order[k - 1], j), self.x.get(order[k], j));
                if lo == hi || k < self.min_leaf || n - k < self.min_leaf {
                    continue;
                }
                let (nl, nr) = (k as f64, (n - k) as f64);
                let diff = left_sum / nl - (total - left_sum) / nr;
                let gain = nl * nr / n as f64 * diff * diff;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(SplitChoice {
                        feature: j,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn build(&self, rows: Vec<usize>, depth: usize) -> TreeNode {
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            return self.leaf(&rows);
        }
        let Some(split) = self.best_split(&rows) else {
            return self.leaf(&rows);
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.x.get(i, split.feature) <= split.threshold);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.build(left, depth + 1)),
            right: Box::new(self.build(right, depth + 1)),
        }
    }
}

/// Fits one regression tree. `max_depth = usize::MAX` leaves depth unbounded.
pub fn fit_tree(
    features: &Matrix,
    targets: &[f64],
    max_depth: usize,
    min_leaf: usize,
) -> Result<TreeNode> {
    if targets.is_empty() {
        return Err(Error::argument("cannot fit a tree to zero rows"));
    }
    if min_leaf == 0 {
        return Err(Error::argument("min_leaf must be positive"));
    }
    check_finite(features, targets)?;
    let builder = TreeBuilder {
        x: features,
        y: targets,
        max_depth,
        min_leaf,
    };
    Ok(builder.build((0..targets.len()).collect(), 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbtParams {
    pub n_trees: usize,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_trees: 500,
            shrinkage: 0.1,
            max_depth: 5,
            min_leaf: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GbtFile", into = "GbtFile")]
pub struct GbtModel {
    pub init_value: f64,
    pub trees: Vec<TreeNode>,
    pub params: GbtParams,
    pub feature_names: Vec<String>,
    /// Training SSE after each stage; index 0 is the constant model.
    pub stage_sse: Vec<f64>,
    pub training_rows: usize,
}

/// Rows `features`, residual-fitting stages as configured in `params`.
pub fn fit_gbt(
    features: &Matrix,
    targets: &[f64],
    feature_names: &[String],
    params: GbtParams,
) -> Result<GbtModel> {
    check_finite(features, targets)?;
    if feature_names.len() != features.cols() {
        return Err(Error::argument("feature name count differs from column count"));
    }
    if !(params.shrinkage > 0.0 && params.shrinkage <= 1.0) {
        return Err(Error::argument(format!(
            "shrinkage must lie in (0,1], got {}",
            params.shrinkage
        )));
    }
    if params.min_leaf == 0 {
        return Err(Error::argument("min_leaf must be positive"));
    }
    let n = targets.len();
    if n == 0 || n < 2 * params.min_leaf {
        return Err(Error::InsufficientData {
            what: "training rows for boosting",
            needed: (2 * params.min_leaf).max(1),
            got: n,
        });
    }
    let init_value = canonical_sum(&mut targets.to_vec()) / n as f64;
    let mut fitted = vec![init_value; n];
    let sse = |fitted: &[f64]| -> f64 {
        targets
            .iter()
            .zip(fitted)
            .map(|(y, f)| (y - f) * (y - f))
            .sum()
    };
    let mut stage_sse = Vec::with_capacity(params.n_trees + 1);
    stage_sse.push(sse(&fitted));
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut residuals = vec![0.0; n];
    for _ in 0..params.n_trees {
        for ((r, y), f) in residuals.iter_mut().zip(targets).zip(&fitted) {
            *r = y - f;
        }
        let tree = fit_tree(features, &residuals, params.max_depth, params.min_leaf)?;
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += params.shrinkage * tree.predict(features.row(i));
        }
        stage_sse.push(sse(&fitted));
        trees.push(tree);
    }
    Ok(GbtModel {
        init_value,
        trees,
        params,
        feature_names: feature_names.to_vec(),
        stage_sse,
        training_rows: n,
    })
}

impl GbtModel {
    pub fn stage_rmse(&self) -> Vec<f64> {
        let n = self.training_rows.max(1) as f64;
        self.stage_sse.iter().map(|s| (s / n).sqrt()).collect()
    }

    /// Text rendering of one tree.
    pub fn dump(&self, tree_index: usize) -> Result<String> {
        let tree = self.trees.get(tree_index).ok_or_else(|| {
            Error::argument(format!(
                "tree index {tree_index} out of range (model has {} trees)",
                self.trees.len()
            ))
        })?;
        Ok(tree.render(&self.feature_names))
    }
}

impl Regressor for GbtModel {
    fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// `init_value + shrinkage * tree_m(row)`, accumulated stage by stage
    /// exactly as during training.
    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        self.check_row(row)?;
        Ok(self
            .trees
            .iter()
            .fold(self.init_value, |acc, t| acc + self.params.shrinkage * t.predict(row)))
    }
}

const GBT_FORMAT: &str = "gbt-tree-dump/1";

/// On-disk form: hyperparameters, initial value, and each tree in dump grammar.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GbtFile {
    format: String,
    params: GbtParams,
    init_value: f64,
    feature_names: Vec<String>,
    stage_sse: Vec<f64>,
    training_rows: usize,
    trees: Vec<String>,
}

impl From<GbtModel> for GbtFile {
    fn from(m: GbtModel) -> Self {
        GbtFile {
            format: GBT_FORMAT.into(),
            trees: m.trees.iter().map(|t| t.render(&m.feature_names)).collect(),
            params: m.params,
            init_value: m.init_value,
            feature_names: m.feature_names,
            stage_sse: m.stage_sse,
            training_rows: m.training_rows,
        }
    }
}

impl TryFrom<GbtFile> for GbtModel {
    type Error = Error;

    fn try_from(f: GbtFile) -> Result<Self> {
        if f.format != GBT_FORMAT {
            return Err(Error::argument(format!("unsupported model format `{}`", f.format)));
        }
        let trees = f
            .trees
            .iter()
            .map(|t| TreeNode::parse(t, &f.feature_names))
            .collect::<Result<Vec<_>>>()?;
        if trees.len() != f.params.n_trees {
            return Err(Error::argument("tree count differs from n_trees"));
        }
        Ok(GbtModel {
            init_value: f.init_value,
            trees,
            params: f.params,
            feature_names: f.feature_names,
            stage_sse: f.stage_sse,
            training_rows: f.training_rows,
        })
    }
}
