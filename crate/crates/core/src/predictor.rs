//! Gaussian-kernel weighting of tree distances: conditional means and
//! weighted-ECDF quantiles.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::distance::{distances_from_leaves, DistanceKind, MrcaIndex};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, Forest, ForestParams, LeafIndex, LeafMatrix};
use crate::par::map_indices;
use crate::rng::SeedSpec;

pub const DEFAULT_BANDWIDTH: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionConfig {
    pub kind: DistanceKind,
    pub bandwidth: f64,
}

impl PredictionConfig {
    pub fn new(kind: DistanceKind, bandwidth: f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        Ok(PredictionConfig { kind, bandwidth })
    }

    pub fn dino(bandwidth: f64) -> Result<Self> {
        Self::new(DistanceKind::Mrca, bandwidth)
    }

    pub fn ranbu(bandwidth: f64) -> Result<Self> {
        Self::new(DistanceKind::Breiman, bandwidth)
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "bandwidth must be a positive finite number, got {h}"
        )))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "quantile level must lie in (0, 1), got {alpha}"
        )))
    }
}

/// Shifted kernel exponents `(d_i^2 - min_j d_j^2) / h^2`; the weights are
/// `exp(-e_i)` normalised. At least one exponent is exactly zero.
pub fn kernel_exponents(distances: &[f64], h: f64) -> Result<Vec<f64>> {
    check_bandwidth(h)?;
    if distances.is_empty() {
        return Err(Error::invalid("distance vector is empty"));
    }
    if let Some(i) = distances.iter().position(|d| !d.is_finite()) {
        return Err(Error::NonFinite {
            what: "distances",
            row: i,
        });
    }
    let min_sq = distances.iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
    let h2 = h * h;
    Ok(distances.iter().map(|d| (d * d - min_sq) / h2).collect())
}

/// `w_i = exp(-(d_i/h)^2) / sum_j exp(-(d_j/h)^2)`.
pub fn kernel_weights(distances: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut w = kernel_exponents(distances, h)?;
    let mut total = 0.0;
    for v in w.iter_mut() {
        *v = (-*v).exp();
        total += *v;
    }
    for v in w.iter_mut() {
        *v /= total;
    }
    Ok(w)
}

/// Quantile-regression-forest weights: each tree spreads mass 1/B evenly
/// over the training rows sharing the query's leaf.
pub fn leaf_share_weights(index: &LeafIndex, query: &[u32], n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    let mut used = 0usize;
    for (groups, &q) in index.per_tree.iter().zip(query) {
        let rows = &groups[q as usize];
        if rows.is_empty() {
            continue;
        }
        used += 1;
        let share = 1.0 / rows.len() as f64;
        for &r in rows {
            w[r as usize] += share;
        }
    }
    if used > 0 {
        let scale = 1.0 / used as f64;
        w.iter_mut().for_each(|v| *v *= scale);
    }
    w
}

/// Ascending-response permutation.
pub fn sort_order(y: &[f64]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..y.len() as u32).collect();
    order.sort_by(|&a, &b| y[a as usize].total_cmp(&y[b as usize]).then(a.cmp(&b)));
    order
}

/// Responses and their ascending order, shared by every weighted estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable {
    values: Vec<f64>,
    order: Vec<u32>,
    min: f64,
    max: f64,
}

impl ResponseTable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let order = sort_order(&values);
        Self::with_order(values, order)
    }

    pub fn with_order(values: Vec<f64>, order: Vec<u32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "responses",
                row: i,
            });
        }
        if order.len() != values.len() {
            return Err(Error::invalid("response order is not a permutation"));
        }
        let mut seen = vec![false; values.len()];
        for &o in &order {
            match seen.get_mut(o as usize) {
                Some(s) if !*s => *s = true,
                _ => return Err(Error::invalid("response order is not a permutation")),
            }
        }
        if order
            .windows(2)
            .any(|w| values[w[0] as usize] > values[w[1] as usize])
        {
            return Err(Error::invalid("response order does not sort the responses"));
        }
        let min = values[order[0] as usize];
        let max = values[*order.last().unwrap() as usize];
        Ok(ResponseTable {
            values,
            order,
            min,
            max,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Weighted mean, clamped to the response range.
    pub fn weighted_mean(&self, w: &[f64]) -> f64 {
        let s: f64 = w.iter().zip(&self.values).map(|(w, y)| w * y).sum();
        s.clamp(self.min, self.max)
    }

    /// `sum_i w_i 1{Y_i <= y}`, accumulated in ascending-response order.
    pub fn weighted_cdf(&self, w: &[f64], y: f64) -> f64 {
        let mut cum = 0.0;
        for &i in &self.order {
            if self.values[i as usize] > y {
                break;
            }
            cum += w[i as usize];
        }
        cum.min(1.0)
    }

    /// `inf { y : F(y) >= alpha }`; always an observed response.
    pub fn quantile(&self, w: &[f64], alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        let mut out = [0.0];
        self.quantiles_sorted(w, &[(alpha, 0)], &mut out);
        Ok(out[0])
    }

    /// Quantiles for several levels in one pass over the responses.
    pub fn quantiles(&self, w: &[f64], alphas: &[f64]) -> Result<Vec<f64>> {
        for &a in alphas {
            check_alpha(a)?;
        }
        let mut levels: Vec<(f64, usize)> = alphas.iter().copied().zip(0..).collect();
        levels.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = vec![0.0; alphas.len()];
        self.quantiles_sorted(w, &levels, &mut out);
        Ok(out)
    }

    fn quantiles_sorted(&self, w: &[f64], levels: &[(f64, usize)], out: &mut [f64]) {
        let mut next = 0;
        let mut cum = 0.0;
        for &i in &self.order {
            cum += w[i as usize];
            while next < levels.len() && cum >= levels[next].0 {
                out[levels[next].1] = self.values[i as usize];
                next += 1;
            }
            if next == levels.len() {
                return;
            }
        }
        // Rounding left the total mass just short of a level.
        for &(_, slot) in &levels[next..] {
            out[slot] = self.max;
        }
    }
}

/// A shallow forest plus everything needed to weight training responses:
/// the training leaf assignments, the responses and the MRCA lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    forest: Forest,
    leaf_matrix: LeafMatrix,
    responses: ResponseTable,
    default_bandwidth: f64,
    mrca: MrcaIndex,
}

impl FittedModel {
    pub fn fit(data: &Dataset, params: &ForestParams, seed: SeedSpec, bandwidth: f64) -> Result<Self> {
        let (forest, leaves) = fit_forest(data, params, seed)?;
        Self::from_parts(
            forest,
            leaves,
            ResponseTable::new(data.responses().to_vec())?,
            bandwidth,
        )
    }

    pub fn from_parts(
        forest: Forest,
        leaf_matrix: LeafMatrix,
        responses: ResponseTable,
        default_bandwidth: f64,
    ) -> Result<Self> {
        check_bandwidth(default_bandwidth)?;
        if leaf_matrix.rows() != responses.len() {
            return Err(Error::Dimension {
                expected: leaf_matrix.rows(),
                got: responses.len(),
            });
        }
        if leaf_matrix.trees() != forest.tree_count() {
            return Err(Error::Dimension {
                expected: forest.tree_count(),
                got: leaf_matrix.trees(),
            });
        }
        for (b, tree) in forest.trees.iter().enumerate() {
            let l = tree.leaf_count() as u32;
            if let Some(&bad) = leaf_matrix.tree_column(b).iter().find(|&&v| v >= l) {
                return Err(Error::InvalidLeaf {
                    tree: b,
                    leaf: bad,
                    leaf_count: l as usize,
                });
            }
        }
        let mrca = MrcaIndex::new(&forest);
        Ok(FittedModel {
            forest,
            leaf_matrix,
            responses,
            default_bandwidth,
            mrca,
        })
    }

    /// Same trees and leaf assignments, different response vector.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.responses.len() {
            return Err(Error::Dimension {
                expected: self.responses.len(),
                got: y.len(),
            });
        }
        let mut m = self.clone();
        m.responses = ResponseTable::new(y)?;
        Ok(m)
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn leaf_matrix(&self) -> &LeafMatrix {
        &self.leaf_matrix
    }

    pub fn responses(&self) -> &ResponseTable {
        &self.responses
    }

    pub fn default_bandwidth(&self) -> f64 {
        self.default_bandwidth
    }

    pub fn default_config(&self, kind: DistanceKind) -> PredictionConfig {
        PredictionConfig {
            kind,
            bandwidth: self.default_bandwidth,
        }
    }

    pub fn mrca_index(&self) -> &MrcaIndex {
        &self.mrca
    }

    pub fn n_features(&self) -> usize {
        self.forest.n_features
    }

    pub fn n_train(&self) -> usize {
        self.responses.len()
    }

    pub fn distance_vector(&self, x: &[f64], kind: DistanceKind) -> Result<Vec<f64>> {
        let q = self.forest.leaf_row(x)?;
        distances_from_leaves(&self.mrca, &self.leaf_matrix, &q, kind)
    }

    pub fn weights(&self, x: &[f64], cfg: &PredictionConfig) -> Result<Vec<f64>> {
        kernel_weights(&self.distance_vector(x, cfg.kind)?, cfg.bandwidth)
    }

    pub fn predict_mean(&self, x: &[f64], cfg: &PredictionConfig) -> Result<f64> {
        Ok(self.responses.weighted_mean(&self.weights(x, cfg)?))
    }

    pub fn weighted_cdf(&self, x: &[f64], cfg: &PredictionConfig, y: f64) -> Result<f64> {
        Ok(self.responses.weighted_cdf(&self.weights(x, cfg)?, y))
    }

    pub fn predict_quantile(&self, x: &[f64], cfg: &PredictionConfig, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        self.responses.quantile(&self.weights(x, cfg)?, alpha)
    }

    pub fn predict_means(&self, queries: &[&[f64]], cfg: &PredictionConfig) -> Result<Vec<f64>> {
        map_indices(queries.len(), |i| self.predict_mean(queries[i], cfg))
    }

    /// `m x |alphas|` matrix; weights are computed once per query.
    pub fn predict_quantiles_batch(
        &self,
        queries: &[&[f64]],
        cfg: &PredictionConfig,
        alphas: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        for &a in alphas {
            check_alpha(a)?;
        }
        map_indices(queries.len(), |i| {
            self.responses.quantiles(&self.weights(queries[i], cfg)?, alphas)
        })
    }
}

pub fn predict_mean(model: &FittedModel, x: &[f64], cfg: &PredictionConfig) -> Result<f64> {
    model.predict_mean(x, cfg)
}

pub fn weighted_cdf(model: &FittedModel, x: &[f64], cfg: &PredictionConfig, y: f64) -> Result<f64> {
    model.weighted_cdf(x, cfg, y)
}

pub fn predict_quantile(model: &FittedModel, x: &[f64], cfg: &PredictionConfig, alpha: f64) -> Result<f64> {
    model.predict_quantile(x, cfg, alpha)
}

pub fn predict_quantiles_batch(
    model: &FittedModel,
    queries: &[&[f64]],
    cfg: &PredictionConfig,
    alphas: &[f64],
) -> Result<Vec<Vec<f64>>> {
    model.predict_quantiles_batch(queries, cfg, alphas)
}

/// The evaluation grid 0.01, 0.02, ..., 0.99.
pub fn alpha_grid() -> Vec<f64> {
    (1..=99).map(|k| k as f64 / 100.0).collect()
}
