//! Browser demo on one-dimensional toy data. The `Toy` type does the work
//! and is plain Rust; `Demo` is the thin wasm-bindgen wrapper the page uses.

use kernelforest::distance::pairwise_matrix;
use kernelforest::rng::{open_uniform, standard_normal, tag};
use kernelforest::{Dataset, DistanceKind, FittedModel, ForestParams, PredictionConfig, Result, SeedSpec};
use wasm_bindgen::prelude::*;

/// Signal of the toy problem.
pub fn toy_mean(x: f64) -> f64 {
    2.0 * (std::f64::consts::TAU * x).sin() + 3.0 * x
}

/// Noise scale grows with x so the quantile bands widen to the right.
pub fn toy_sd(x: f64) -> f64 {
    0.2 + 0.8 * x
}

pub struct Toy {
    pub model: FittedModel,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Toy {
    pub fn new(n: usize, trees: usize, max_depth: u32, seed: u64) -> Result<Toy> {
        let seed = SeedSpec::new(seed);
        let mut rng = seed.stream(tag::DATA, 0);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let xi = open_uniform(&mut rng, 0.0, 1.0);
            x.push(xi);
            y.push(toy_mean(xi) + toy_sd(xi) * standard_normal(&mut rng));
        }
        let data = Dataset::new(x.clone(), y.clone(), 1)?;
        let params = ForestParams {
            tree_count: trees,
            max_depth: Some(max_depth),
            min_node_size: 3,
            ..Default::default()
        };
        let model = FittedModel::fit(&data, &params, seed.child(tag::TREE, 0), 0.2)?;
        Ok(Toy { model, x, y })
    }

    /// Evenly spaced points on `[0, 1]`.
    pub fn grid(points: usize) -> Vec<f64> {
        match points {
            0 => Vec::new(),
            1 => vec![0.5],
            _ => (0..points).map(|i| i as f64 / (points - 1) as f64).collect(),
        }
    }

    /// Rows `[dino, ranbu, forest]` per grid point, flattened.
    pub fn curves(&self, h: f64, points: usize) -> Result<Vec<f64>> {
        let dino = PredictionConfig::dino(h)?;
        let ranbu = PredictionConfig::ranbu(h)?;
        let mut out = Vec::with_capacity(3 * points);
        for x in Self::grid(points) {
            out.push(self.model.predict_mean(&[x], &dino)?);
            out.push(self.model.predict_mean(&[x], &ranbu)?);
            out.push(self.model.forest().predict_mean(&[x])?);
        }
        Ok(out)
    }

    /// Rows `[q_lo, median, q_hi]` per grid point, flattened.
    pub fn bands(&self, kind: DistanceKind, h: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
        let cfg = PredictionConfig::new(kind, h)?;
        let mut out = Vec::with_capacity(3 * points);
        for x in Self::grid(points) {
            let w = self.model.weights(&[x], &cfg)?;
            out.extend(self.model.responses().quantiles(&w, &[lo, 0.5, hi])?);
        }
        Ok(out)
    }

    /// Row-major `m x m` distances between `m` training points spread
    /// evenly through the x order, so the heatmap shows the partition.
    pub fn distance_matrix(&self, kind: DistanceKind, m: usize) -> Result<Vec<f64>> {
        let mut order: Vec<usize> = (0..self.x.len()).collect();
        order.sort_by(|&a, &b| self.x[a].total_cmp(&self.x[b]));
        let m = m.min(order.len());
        let rows = (0..m)
            .map(|i| self.model.leaf_matrix().row(order[i * order.len() / m.max(1)]))
            .collect::<Vec<_>>();
        pairwise_matrix(self.model.mrca_index(), &rows, kind)
    }
}

fn js(e: kernelforest::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn kind(name: &str) -> std::result::Result<DistanceKind, JsError> {
    name.parse().map_err(js)
}

#[wasm_bindgen]
pub struct Demo {
    toy: Toy,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, trees: usize, max_depth: u32, seed: u32) -> std::result::Result<Demo, JsError> {
        Ok(Demo {
            toy: Toy::new(n, trees, max_depth, seed.into()).map_err(js)?,
        })
    }

    pub fn train_x(&self) -> Vec<f64> {
        self.toy.x.clone()
    }

    pub fn train_y(&self) -> Vec<f64> {
        self.toy.y.clone()
    }

    pub fn grid(&self, points: usize) -> Vec<f64> {
        Toy::grid(points)
    }

    pub fn curves(&self, h: f64, points: usize) -> std::result::Result<Vec<f64>, JsError> {
        self.toy.curves(h, points).map_err(js)
    }

    pub fn bands(
        &self,
        kind_name: &str,
        h: f64,
        lo: f64,
        hi: f64,
        points: usize,
    ) -> std::result::Result<Vec<f64>, JsError> {
        self.toy.bands(kind(kind_name)?, h, lo, hi, points).map_err(js)
    }

    pub fn distance_matrix(&self, kind_name: &str, m: usize) -> std::result::Result<Vec<f64>, JsError> {
        self.toy.distance_matrix(kind(kind_name)?, m).map_err(js)
    }
}
