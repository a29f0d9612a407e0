//! Replicated simulation benchmark.
//!
//! Replication `r` draws its training set from `master.child(BENCH_TRAIN, r)`,
//! its test set from `master.child(BENCH_TEST, r)` and fits every forest with
//! `master.child(BENCH_FOREST, r)`, where `master = SeedSpec(master_seed)`.
//! All methods in a replication share those bytes. Timed sections cover
//! fitting (including distance precomputation) plus one prediction; data
//! generation and evaluation are not timed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data_synth::{generate, ScenarioKind};
use crate::dataset::Dataset;
use crate::distance::DistanceKind;
use crate::error::{Error, Result};
use crate::forest::{Forest, ForestParams, LeafIndex};
use crate::metrics::{mean_pinball_grid, mse};
use crate::par::map_indices;
use crate::predictor::{alpha_grid, leaf_share_weights, FittedModel, PredictionConfig, ResponseTable};
use crate::rng::{tag, SeedSpec};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(alias = "dino")]
    DiNo,
    #[serde(alias = "ranbu")]
    RanBu,
    #[serde(alias = "reducedrf", alias = "reduced_rf")]
    ReducedRF,
    #[serde(alias = "fullrf", alias = "full_rf")]
    FullRF,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::DiNo, Method::RanBu, Method::ReducedRF, Method::FullRF];

    pub fn name(self) -> &'static str {
        match self {
            Method::DiNo => "DiNo",
            Method::RanBu => "RanBu",
            Method::ReducedRF => "ReducedRF",
            Method::FullRF => "FullRF",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['_', '-'], "");
        Method::ALL
            .into_iter()
            .find(|m| m.name().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scenario: ScenarioKind,
    pub n_train: usize,
    #[serde(default = "defaults::n_test")]
    pub n_test: usize,
    pub noise_count: usize,
    pub replications: usize,
    #[serde(default = "defaults::methods")]
    pub methods: Vec<Method>,
    #[serde(default = "defaults::bandwidth")]
    pub bandwidth: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "defaults::trees")]
    pub trees: usize,
    /// A positive depth or the string `"unlimited"`.
    #[serde(default = "defaults::max_depth", with = "depth_serde")]
    pub max_depth: Option<u32>,
    #[serde(default = "defaults::full_rf_trees")]
    pub full_rf_trees: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mtry: Option<usize>,
    #[serde(default = "defaults::min_node_size")]
    pub min_node_size: usize,
    #[serde(default = "defaults::bootstrap")]
    pub bootstrap: bool,
}

mod defaults {
    use super::Method;

    pub fn n_test() -> usize {
        1000
    }
    pub fn methods() -> Vec<Method> {
        Method::ALL.to_vec()
    }
    pub fn bandwidth() -> f64 {
        0.2
    }
    pub fn trees() -> usize {
        50
    }
    pub fn max_depth() -> Option<u32> {
        Some(5)
    }
    pub fn full_rf_trees() -> usize {
        500
    }
    pub fn min_node_size() -> usize {
        5
    }
    pub fn bootstrap() -> bool {
        true
    }
}

mod depth_serde {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Depth(u32),
        Word(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<u32>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(d) => s.serialize_u32(*d),
            None => s.serialize_str("unlimited"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<u32>, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Depth(v) => Ok(Some(v)),
            Raw::Word(w) if w == "unlimited" => Ok(None),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "max_depth must be an integer or \"unlimited\", got \"{w}\""
            ))),
        }
    }
}

const CONFIG_KEYS: [&str; 14] = [
    "scenario",
    "n_train",
    "n_test",
    "noise_count",
    "replications",
    "methods",
    "bandwidth",
    "master_seed",
    "trees",
    "max_depth",
    "full_rf_trees",
    "mtry",
    "min_node_size",
    "bootstrap",
];

impl BenchConfig {
    /// Defaults everywhere except the required fields.
    pub fn new(scenario: ScenarioKind, n_train: usize, noise_count: usize, replications: usize) -> Self {
        BenchConfig {
            scenario,
            n_train,
            n_test: defaults::n_test(),
            noise_count,
            replications,
            methods: defaults::methods(),
            bandwidth: defaults::bandwidth(),
            master_seed: 0,
            trees: defaults::trees(),
            max_depth: defaults::max_depth(),
            full_rf_trees: defaults::full_rf_trees(),
            mtry: None,
            min_node_size: defaults::min_node_size(),
            bootstrap: defaults::bootstrap(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let unknown: Vec<&str> = table
            .keys()
            .map(String::as_str)
            .filter(|k| !CONFIG_KEYS.contains(k))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        let cfg: BenchConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.replications == 0 {
            return fail("replications must be at least 1".into());
        }
        if self.methods.is_empty() {
            return fail("methods must not be empty".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return fail(format!("method {m} listed twice"));
            }
        }
        if self.n_train < 2 || self.n_test == 0 {
            return fail("n_train must be at least 2 and n_test at least 1".into());
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return fail(format!(
                "bandwidth must be positive and finite, got {}",
                self.bandwidth
            ));
        }
        if self.max_depth.is_none() && self.methods.contains(&Method::DiNo) {
            return fail("DiNo needs a finite max_depth; the MRCA distance is normalized by it".into());
        }
        self.reduced_params()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.full_params()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn reduced_params(&self) -> ForestParams {
        ForestParams {
            tree_count: self.trees,
            max_depth: self.max_depth,
            mtry: self.mtry,
            min_node_size: self.min_node_size,
            bootstrap: self.bootstrap,
        }
    }

    pub fn full_params(&self) -> ForestParams {
        ForestParams {
            tree_count: self.full_rf_trees,
            max_depth: None,
            ..self.reduced_params()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(replications)`; 0 for one replication.
    pub se: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let se = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        } else {
            0.0
        };
        Stat { mean, se }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub mse: f64,
    pub pinball: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub mse: Stat,
    pub pinball: Stat,
    pub time_s: Stat,
}

/// `table[row][col]` compares method `row` against method `col`.
pub type RatioTable<T> = BTreeMap<Method, BTreeMap<Method, T>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ratios<T> {
    pub loss: RatioTable<T>,
    pub pinball: RatioTable<T>,
    pub time: RatioTable<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub replication: usize,
    pub per_method: BTreeMap<Method, Measure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub config: BenchConfig,
    pub per_method: BTreeMap<Method, MethodSummary>,
    /// Ratios of the replication means.
    pub ratios: Ratios<f64>,
    /// Mean and standard error of the per-replication ratios.
    pub replication_ratios: Ratios<Stat>,
    pub replications: Vec<Replication>,
}

impl BenchReport {
    fn from_replications(config: BenchConfig, replications: Vec<Replication>) -> BenchReport {
        let methods = config.methods.clone();
        let column = |m: Method, f: fn(&Measure) -> f64| -> Vec<f64> {
            replications.iter().map(|r| f(&r.per_method[&m])).collect()
        };
        let metric: [fn(&Measure) -> f64; 3] = [|m| m.mse, |m| m.pinball, |m| m.time_s];

        let per_method: BTreeMap<Method, MethodSummary> = methods
            .iter()
            .map(|&m| {
                let s = metric.map(|f| Stat::of(&column(m, f)));
                (
                    m,
                    MethodSummary {
                        mse: s[0],
                        pinball: s[1],
                        time_s: s[2],
                    },
                )
            })
            .collect();

        let of_means = |f: fn(&MethodSummary) -> f64| -> RatioTable<f64> {
            table(&methods, |a, b| f(&per_method[&a]) / f(&per_method[&b]))
        };
        let of_reps = |f: fn(&Measure) -> f64| -> RatioTable<Stat> {
            table(&methods, |a, b| {
                let r: Vec<f64> = column(a, f)
                    .iter()
                    .zip(column(b, f))
                    .map(|(x, y)| x / y)
                    .collect();
                Stat::of(&r)
            })
        };

        BenchReport {
            schema_version: REPORT_SCHEMA_VERSION,
            ratios: Ratios {
                loss: of_means(|s| s.mse.mean),
                pinball: of_means(|s| s.pinball.mean),
                time: of_means(|s| s.time_s.mean),
            },
            replication_ratios: Ratios {
                loss: of_reps(metric[0]),
                pinball: of_reps(metric[1]),
                time: of_reps(metric[2]),
            },
            per_method,
            config,
            replications,
        }
    }

    /// Copy with every timing-derived field zeroed, for determinism checks.
    pub fn without_timing(&self) -> BenchReport {
        let mut r = self.clone();
        for s in r.per_method.values_mut() {
            s.time_s = Stat { mean: 0.0, se: 0.0 };
        }
        for row in r.ratios.time.values_mut() {
            row.values_mut().for_each(|v| *v = 0.0);
        }
        for row in r.replication_ratios.time.values_mut() {
            row.values_mut().for_each(|v| *v = Stat { mean: 0.0, se: 0.0 });
        }
        for rep in &mut r.replications {
            rep.per_method.values_mut().for_each(|m| m.time_s = 0.0);
        }
        r
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: BenchReport = serde_json::from_str(text).map_err(|e| Error::Report(e.to_string()))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::VersionMismatch {
                found: r.schema_version,
                supported: REPORT_SCHEMA_VERSION,
            });
        }
        Ok(r)
    }

    /// Long-format rows `(method, replication, metric, value)`.
    pub fn long_rows(&self) -> Vec<(Method, usize, &'static str, f64)> {
        let mut rows = Vec::new();
        for rep in &self.replications {
            for (&m, v) in &rep.per_method {
                rows.push((m, rep.replication, "mse", v.mse));
                rows.push((m, rep.replication, "pinball", v.pinball));
                rows.push((m, rep.replication, "time_s", v.time_s));
            }
        }
        rows
    }
}

fn table<T>(methods: &[Method], f: impl Fn(Method, Method) -> T) -> RatioTable<T> {
    methods
        .iter()
        .map(|&a| (a, methods.iter().map(|&b| (b, f(a, b))).collect()))
        .collect()
}

/// Writes the JSON report to `path` and the long CSV next to it (same stem,
/// `.csv` extension). Returns the CSV path.
pub fn emit_report(report: &BenchReport, path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    let mut json = report.to_json()?;
    json.push('\n');
    fs::write(path, json)?;

    let csv_path = path.with_extension("csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Report(e.to_string());
    w.write_record(["method", "replication", "metric", "value"])
        .map_err(csv_err)?;
    for (m, r, metric, v) in report.long_rows() {
        w.write_record([m.name(), &r.to_string(), metric, &v.to_string()])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
    fs::File::create(&csv_path)?.write_all(&bytes)?;
    Ok(csv_path)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<BenchReport> {
    BenchReport::from_json(&fs::read_to_string(path)?)
}

/// Fitted state of one method, ready for evaluation.
pub enum Fitted {
    Kernel(FittedModel, PredictionConfig),
    Forest {
        forest: Forest,
        responses: ResponseTable,
        index: LeafIndex,
    },
}

impl Fitted {
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        match self {
            Fitted::Kernel(m, cfg) => m.predict_mean(x, cfg),
            Fitted::Forest { forest, .. } => forest.predict_mean(x),
        }
    }

    /// Mean and the 99 grid quantiles from one weight computation.
    pub fn predict_all(&self, x: &[f64], grid: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            Fitted::Kernel(m, cfg) => {
                let w = m.weights(x, cfg)?;
                Ok((
                    m.responses().weighted_mean(&w),
                    m.responses().quantiles(&w, grid)?,
                ))
            }
            Fitted::Forest {
                forest,
                responses,
                index,
            } => {
                let leaves = forest.leaf_row(x)?;
                let w = leaf_share_weights(index, &leaves, responses.len());
                Ok((forest.predict_mean(x)?, responses.quantiles(&w, grid)?))
            }
        }
    }
}

/// Fits `method` on `train` and predicts at `query`. The returned seconds
/// cover exactly those two steps.
pub fn time_train_predict(
    method: Method,
    train: &Dataset,
    query: &[f64],
    cfg: &BenchConfig,
    seed: SeedSpec,
) -> Result<(f64, f64, Fitted)> {
    let kind = match method {
        Method::DiNo => Some(DistanceKind::Mrca),
        Method::RanBu => Some(DistanceKind::Breiman),
        Method::ReducedRF | Method::FullRF => None,
    };
    let start = Instant::now();
    if let Some(kind) = kind {
        let model = FittedModel::fit(train, &cfg.reduced_params(), seed, cfg.bandwidth)?;
        let pc = PredictionConfig::new(kind, cfg.bandwidth)?;
        let prediction = model.predict_mean(query, &pc)?;
        let elapsed = start.elapsed().as_secs_f64();
        return Ok((elapsed, prediction, Fitted::Kernel(model, pc)));
    }
    let params = if method == Method::ReducedRF {
        cfg.reduced_params()
    } else {
        cfg.full_params()
    };
    let forest = Forest::fit(train, &params, seed)?;
    let prediction = forest.predict_mean(query)?;
    let elapsed = start.elapsed().as_secs_f64();

    // leaf groups for the quantile baseline are built after the clock stops
    let fitted = Fitted::Forest {
        index: forest.leaf_matrix(train)?.inverted(&forest),
        responses: ResponseTable::new(train.responses().to_vec())?,
        forest,
    };
    Ok((elapsed, prediction, fitted))
}

fn evaluate(fitted: &Fitted, test: &Dataset) -> Result<(f64, f64)> {
    let grid = alpha_grid();
    let preds = map_indices(test.n(), |i| fitted.predict_all(test.row(i), &grid))?;
    let (means, quantiles): (Vec<f64>, Vec<Vec<f64>>) = preds.into_iter().unzip();
    Ok((
        mse(test.responses(), &means)?,
        mean_pinball_grid(test.responses(), &quantiles)?,
    ))
}

fn run_replication(cfg: &BenchConfig, r: usize) -> Result<Replication> {
    let master = SeedSpec::new(cfg.master_seed);
    let r64 = r as u64;
    let train = generate(
        cfg.scenario,
        cfg.n_train,
        cfg.noise_count,
        master.child(tag::BENCH_TRAIN, r64),
    )?;
    let test = generate(
        cfg.scenario,
        cfg.n_test,
        cfg.noise_count,
        master.child(tag::BENCH_TEST, r64),
    )?;
    let forest_seed = master.child(tag::BENCH_FOREST, r64);

    let mut per_method = BTreeMap::new();
    for &m in &cfg.methods {
        let (time_s, _, fitted) = time_train_predict(m, &train, test.row(0), cfg, forest_seed)?;
        let (mse, pinball) = evaluate(&fitted, &test)?;
        per_method.insert(m, Measure { mse, pinball, time_s });
    }
    Ok(Replication {
        replication: r,
        per_method,
    })
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let reps = map_indices(cfg.replications, |r| run_replication(cfg, r))?;
    Ok(BenchReport::from_replications(cfg.clone(), reps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(methods: Vec<Method>) -> BenchConfig {
        BenchConfig {
            n_test: 60,
            trees: 5,
            full_rf_trees: 8,
            methods,
            master_seed: 11,
            ..BenchConfig::new(ScenarioKind::Friedman1, 80, 2, 2)
        }
    }

    #[test]
    fn toml_defaults_and_unknown_keys() {
        let cfg = BenchConfig::from_toml_str(
            "scenario = \"friedman1\"\nn_train = 500\nnoise_count = 50\nreplications = 20\n",
        )
        .unwrap();
        assert_eq!(cfg.n_test, 1000);
        assert_eq!(cfg.methods, Method::ALL);
        assert_eq!(cfg.bandwidth, 0.2);
        assert_eq!(cfg.max_depth, Some(5));
        assert_eq!(cfg.trees, 50);

        let err = BenchConfig::from_toml_str(
            "scenario = \"linear\"\nn_train = 5\nnoise_count = 0\nreplications = 1\nbandwith = 0.3\nrepeats = 2\n",
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("bandwith") && err.contains("repeats"), "{err}");

        let back = BenchConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_errors() {
        let base = "scenario = \"linear\"\nn_train = 50\nnoise_count = 0\n";
        assert!(BenchConfig::from_toml_str(&format!("{base}replications = 0\n")).is_err());
        assert!(BenchConfig::from_toml_str(&format!("{base}replications = 1\nmethods = []\n")).is_err());
        let err = BenchConfig::from_toml_str(&format!(
            "{base}replications = 1\nmax_depth = \"unlimited\"\nmethods = [\"DiNo\"]\n"
        ))
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let ok = BenchConfig::from_toml_str(&format!(
            "{base}replications = 1\nmax_depth = \"unlimited\"\nmethods = [\"RanBu\", \"fullrf\"]\n"
        ))
        .unwrap();
        assert_eq!(ok.max_depth, None);
        assert_eq!(ok.methods, [Method::RanBu, Method::FullRF]);
    }

    #[test]
    fn single_method_ratio_is_one() {
        let report = run_bench(&BenchConfig {
            replications: 1,
            ..small(vec![Method::ReducedRF])
        })
        .unwrap();
        assert_eq!(report.replications.len(), 1);
        assert_eq!(report.ratios.loss[&Method::ReducedRF][&Method::ReducedRF], 1.0);
        assert_eq!(report.per_method[&Method::ReducedRF].mse.se, 0.0);
    }

    #[test]
    fn deterministic_and_consistent() {
        let cfg = small(Method::ALL.to_vec());
        let a = run_bench(&cfg).unwrap();
        let b = run_bench(&cfg).unwrap();
        assert_eq!(
            a.without_timing().to_json().unwrap(),
            b.without_timing().to_json().unwrap()
        );
        for &x in &Method::ALL {
            for &y in &Method::ALL {
                let r = a.ratios.loss[&x][&y];
                assert!((r - 1.0 / a.ratios.loss[&y][&x]).abs() < 1e-12);
                let expect = a.per_method[&x].mse.mean / a.per_method[&y].mse.mean;
                assert_eq!(r, expect);
            }
        }
        let s = a.per_method[&Method::RanBu].mse;
        let vals: Vec<f64> = a
            .replications
            .iter()
            .map(|r| r.per_method[&Method::RanBu].mse)
            .collect();
        assert_eq!(s, Stat::of(&vals));
    }

    #[test]
    fn emit_and_parse() {
        let report = run_bench(&small(vec![Method::RanBu, Method::ReducedRF])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let csv_path = emit_report(&report, &path).unwrap();
        assert_eq!(read_report(&path).unwrap(), report);
        let text = fs::read_to_string(csv_path).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 2 * 3);
        assert!(text.starts_with("method,replication,metric,value\n"));
        assert!(emit_report(&report, dir.path().join("missing/report.json")).is_err());
    }

    #[test]
    fn stat_examples() {
        let s = Stat::of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.se - 1.0).abs() < 1e-15);
        assert_eq!(Stat::of(&[4.0]).se, 0.0);
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("reduced_rf".parse::<Method>().unwrap(), Method::ReducedRF);
        assert!("grf".parse::<Method>().is_err());
    }
}
