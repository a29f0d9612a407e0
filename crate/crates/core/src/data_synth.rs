//! Synthetic regression scenarios with appended irrelevant predictors.
//!
//! Draw order is part of the reproducibility contract: rows are generated
//! in order, and within a row every column is drawn left to right (for the
//! rectangular design, the interval coin precedes the uniform), followed by
//! the response noise. All draws come from `SeedSpec::stream(tag::DATA, 0)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{bernoulli_half, open_uniform, standard_normal, tag, SeedSpec, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// Piecewise-constant signal on axis-aligned rectangles.
    Rectangular,
    Friedman1,
    Linear,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::Rectangular,
        ScenarioKind::Friedman1,
        ScenarioKind::Linear,
    ];

    pub fn informative(self) -> usize {
        match self {
            ScenarioKind::Rectangular => 4,
            ScenarioKind::Friedman1 | ScenarioKind::Linear => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Rectangular => "rectangular",
            ScenarioKind::Friedman1 => "friedman1",
            ScenarioKind::Linear => "linear",
        }
    }

    fn draw_informative(self, rng: &mut Stream) -> f64 {
        match self {
            ScenarioKind::Rectangular => {
                if bernoulli_half(rng) {
                    open_uniform(rng, 5.0, 10.0)
                } else {
                    open_uniform(rng, 0.0, 5.0)
                }
            }
            ScenarioKind::Friedman1 => open_uniform(rng, 0.0, 1.0),
            ScenarioKind::Linear => standard_normal(rng),
        }
    }

    fn draw_noise(self, rng: &mut Stream) -> f64 {
        match self {
            ScenarioKind::Rectangular => open_uniform(rng, 0.0, 10.0),
            ScenarioKind::Friedman1 => open_uniform(rng, 0.0, 1.0),
            ScenarioKind::Linear => standard_normal(rng),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rectangular" | "rect" => Ok(ScenarioKind::Rectangular),
            "friedman1" | "friedman" => Ok(ScenarioKind::Friedman1),
            "linear" => Ok(ScenarioKind::Linear),
            other => Err(Error::invalid(format!(
                "unknown scenario `{other}` (expected rectangular, friedman1 or linear)"
            ))),
        }
    }
}

/// Noiseless conditional mean. Coordinates past the informative ones are ignored.
pub fn scenario_mean(kind: ScenarioKind, x: &[f64]) -> Result<f64> {
    let k = kind.informative();
    if x.len() < k {
        return Err(Error::Dimension {
            expected: k,
            got: x.len(),
        });
    }
    Ok(match kind {
        ScenarioKind::Rectangular => -2.5 * x[0] - 2.0 * x[1] + 3.0 * x[2] - 4.0 * x[3],
        ScenarioKind::Friedman1 => {
            10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
        }
        ScenarioKind::Linear => x[0] + 3.0 * x[1] - 1.5 * x[2] - 2.0 * x[3] + 0.7 * x[4],
    })
}

/// Draws `n` rows with `noise_count` irrelevant columns appended after the
/// informative ones, and N(0, 1) response noise.
pub fn generate(kind: ScenarioKind, n: usize, noise_count: usize, seed: SeedSpec) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let k = kind.informative();
    let p = k + noise_count;
    let mut rng = seed.stream(tag::DATA, 0);
    let mut features = Vec::with_capacity(n * p);
    let mut responses = Vec::with_capacity(n);
    for _ in 0..n {
        let start = features.len();
        for _ in 0..k {
            features.push(kind.draw_informative(&mut rng));
        }
        for _ in 0..noise_count {
            features.push(kind.draw_noise(&mut rng));
        }
        let mean = scenario_mean(kind, &features[start..])?;
        responses.push(mean + standard_normal(&mut rng));
    }
    Dataset::with_layout(features, responses, p, k, noise_count)
}
