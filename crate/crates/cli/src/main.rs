use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use kernelforest::bench::{emit_report, run_bench, BenchConfig};
use kernelforest::dataset::read_queries;
use kernelforest::distance::pairwise_matrix;
use kernelforest::{
    generate, model_io, Dataset, DistanceKind, FittedModel, ForestParams, PredictionConfig, ScenarioKind,
    SeedSpec,
};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] kernelforest::Error),
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.into())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Shallow random forests as distance-weighted mean and quantile regressors.
#[derive(Parser)]
#[command(name = "kforest", version)]
struct Cli {
    /// Worker threads; 0 uses every core, 1 runs serially
    #[arg(long, global = true, env = "KFOREST_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset and write it as CSV (x1..xp,y)
    Generate {
        /// rectangular, friedman1 or linear
        #[arg(long)]
        scenario: ScenarioKind,
        /// Number of rows
        #[arg(long)]
        n: usize,
        /// Pure-noise columns appended after the informative ones
        #[arg(long, default_value_t = 0)]
        noise: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a shallow forest and store it in a binary model archive
    Fit {
        /// Training CSV with a header row
        #[arg(long)]
        data: PathBuf,
        /// Response column; every other column is a feature
        #[arg(long, default_value = "y")]
        target: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        forest: ForestArgs,
        /// Default kernel bandwidth stored with the model
        #[arg(long, default_value_t = kernelforest::DEFAULT_BANDWIDTH)]
        bandwidth: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Conditional-mean predictions, one per query row
    Predict {
        #[command(flatten)]
        query: QueryArgs,
    },
    /// Conditional quantiles, one column per level
    Quantile {
        #[command(flatten)]
        query: QueryArgs,
        /// Comma-separated levels in (0, 1)
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,0.9")]
        alpha: Vec<f64>,
    },
    /// Pairwise distance matrix between the rows of a CSV (9 significant digits)
    Distances {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Dropped from the features when present
        #[arg(long, default_value = "y")]
        target: String,
        /// dino (MRCA) or ranbu (Breiman)
        #[arg(long, default_value = "ranbu")]
        kind: DistanceKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a replicated benchmark described by a TOML file
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// JSON report; the long CSV is written next to it with a .csv extension
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ForestArgs {
    #[arg(long, default_value_t = 50)]
    trees: usize,
    /// Depth cap, or "unlimited"
    #[arg(long, default_value = "5")]
    max_depth: Depth,
    /// Features tried per split [default: max(1, p/3)]
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long, default_value_t = 5)]
    min_node_size: usize,
    /// Grow every tree on the full sample instead of a bootstrap draw
    #[arg(long)]
    no_bootstrap: bool,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    model: PathBuf,
    /// Query CSV with a header row
    #[arg(long)]
    data: PathBuf,
    /// Dropped from the features when present
    #[arg(long, default_value = "y")]
    target: String,
    /// dino (MRCA) or ranbu (Breiman)
    #[arg(long, default_value = "ranbu")]
    kind: DistanceKind,
    /// Kernel bandwidth [default: the one stored in the model]
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy)]
struct Depth(Option<u32>);

impl FromStr for Depth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("unlimited") {
            return Ok(Depth(None));
        }
        s.parse()
            .map(|d| Depth(Some(d)))
            .map_err(|_| format!("expected a depth or \"unlimited\", got `{s}`"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(match e {
                CliError::Usage(_) => 1,
                CliError::Data(_) => 2,
            })
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    match cli.command {
        Command::Generate {
            scenario,
            n,
            noise,
            seed,
            out,
        } => {
            let data = generate(scenario, n, noise, SeedSpec::new(seed))?;
            data.write_csv(output(out.as_deref())?)?;
        }
        Command::Fit {
            data,
            target,
            out,
            forest,
            bandwidth,
            seed,
        } => {
            let train = Dataset::read_csv(open(&data)?, &target)?;
            let params = ForestParams {
                tree_count: forest.trees,
                max_depth: forest.max_depth.0,
                mtry: forest.mtry,
                min_node_size: forest.min_node_size,
                bootstrap: !forest.no_bootstrap,
            };
            let model = FittedModel::fit(&train, &params, SeedSpec::new(seed), bandwidth)?;
            model_io::save(&model, out)?;
        }
        Command::Predict { query } => {
            let (model, cfg, rows) = load_query(&query)?;
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let preds = model.predict_means(&refs, &cfg)?;
            let mut w = output(query.out.as_deref())?;
            writeln!(w, "prediction")?;
            for p in preds {
                writeln!(w, "{p}")?;
            }
            w.flush()?;
        }
        Command::Quantile { query, alpha } => {
            if alpha.is_empty() {
                return Err(CliError::Usage("--alpha needs at least one level".into()));
            }
            if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
                return Err(CliError::Usage(format!(
                    "--alpha levels must lie in (0, 1), got {a}"
                )));
            }
            let (model, cfg, rows) = load_query(&query)?;
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let table = model.predict_quantiles_batch(&refs, &cfg, &alpha)?;
            let mut w = output(query.out.as_deref())?;
            let header: Vec<String> = alpha.iter().map(|a| format!("q{a}")).collect();
            writeln!(w, "{}", header.join(","))?;
            for row in table {
                let cells: Vec<String> = row.iter().map(f64::to_string).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
            w.flush()?;
        }
        Command::Distances {
            model,
            data,
            target,
            kind,
            out,
        } => {
            let model = load_model(&model)?;
            let rows = read_queries(open(&data)?, &target)?;
            let leaves = rows
                .iter()
                .map(|x| model.forest().leaf_row(x))
                .collect::<Result<Vec<_>, _>>()?;
            let matrix = pairwise_matrix(model.mrca_index(), &leaves, kind)?;
            let mut w = output(out.as_deref())?;
            for row in matrix.chunks(rows.len().max(1)) {
                let cells: Vec<String> = row.iter().map(|&v| sig9(v)).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
            w.flush()?;
        }
        Command::Bench { config, out } => {
            let cfg = BenchConfig::from_path(config)?;
            let report = run_bench(&cfg)?;
            let csv = emit_report(&report, &out)?;
            eprintln!("wrote {} and {}", out.display(), csv.display());
        }
    }
    Ok(())
}

fn load_query(q: &QueryArgs) -> CliResult<(FittedModel, PredictionConfig, Vec<Vec<f64>>)> {
    let model = load_model(&q.model)?;
    let cfg = match q.bandwidth {
        Some(h) => PredictionConfig::new(q.kind, h).map_err(|e| CliError::Usage(e.to_string()))?,
        None => model.default_config(q.kind),
    };
    let rows = read_queries(open(&q.data)?, &q.target)?;
    Ok((model, cfg, rows))
}

fn with_path(path: &Path, e: io::Error) -> CliError {
    CliError::Data(kernelforest::Error::Io(io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    )))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| with_path(path, e))
}

fn load_model(path: &Path) -> CliResult<FittedModel> {
    model_io::load(path).map_err(|e| match e {
        kernelforest::Error::Io(e) => with_path(path, e),
        e => e.into(),
    })
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| with_path(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Rounds to 9 significant digits and prints the shortest form of the result.
fn sig9(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    rounded.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(0.4), "0.4");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(2.0 / 3.0), "0.666666667");
    }

    #[test]
    fn depth_parsing() {
        assert_eq!("7".parse::<Depth>().unwrap().0, Some(7));
        assert_eq!("unlimited".parse::<Depth>().unwrap().0, None);
        assert!("-1".parse::<Depth>().is_err());
    }
}
