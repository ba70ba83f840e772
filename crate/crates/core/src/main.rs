use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use forestmix::affinity::{affinity_heatmap, order_by_labels, AffinityMatrix};
use forestmix::data::load_csv;
use forestmix::error::{Error, Result};
use forestmix::forest::{forest_density, Forest};
use forestmix::gmm::{mixture_density, GaussianMixture};
use forestmix::pipeline::{
    evaluate, generate_synthetic, prepare, read_labels, run, run_dir_name, run_spectral_only,
    write_artifacts, Method, SynthSpec,
};
use forestmix::PipelineConfig;

#[derive(Parser)]
#[command(name = "forestmix", version, about = "Forest affinity clustering and forest-seeded Gaussian mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample labelled Gaussian clusters to CSV.
    Synth(SynthArgs),
    /// Run a clustering method and write its artifacts to a run directory.
    Fit(FitArgs),
    /// Compare predicted labels against true labels.
    Eval(EvalArgs),
    /// Render an affinity matrix as a PGM image.
    Heatmap(HeatmapArgs),
    /// Evaluate a saved forest or mixture at query points.
    Density(DensityArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples per cluster, e.g. 175,250,375.
    #[arg(long, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
    /// Cluster means separated by ';', coordinates by ',', e.g. "0,0;4,0".
    #[arg(long)]
    means: Option<String>,
    /// Row-major covariances separated by ';', e.g. "1,0,0,1;2,0,0,2".
    #[arg(long)]
    covariances: Option<String>,
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV of features (labels in the last column with --labeled).
    data: Option<PathBuf>,
    #[arg(long, default_value = "drfgmm")]
    method: Method,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Parent of the run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Skip the first line of the input.
    #[arg(long)]
    header: bool,
    /// Use features as given instead of min-max scaling them.
    #[arg(long)]
    no_scale: bool,
    /// The last input column holds true class labels.
    #[arg(long)]
    labeled: bool,
    /// Precomputed affinity for spectral-only (no forest is trained).
    #[arg(long)]
    affinity: Option<PathBuf>,
    /// True labels for spectral-only runs on a precomputed affinity.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted labels (last column of each row).
    pred: PathBuf,
    /// True labels (last column of each row).
    truth: PathBuf,
    #[arg(long)]
    header: bool,
    /// Write the metrics JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HeatmapArgs {
    /// Affinity binary file.
    affinity: PathBuf,
    /// Labels CSV; rows are grouped by label when given.
    #[arg(long)]
    order: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct DensityArgs {
    /// Forest JSON or mixture JSON.
    model: PathBuf,
    /// CSV of query points.
    query: PathBuf,
    #[arg(long)]
    header: bool,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Heatmap(a) => heatmap(a),
        Command::Density(a) => density(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Seeding { .. } = e {
                eprintln!("hint: lower `threshold` or `min_component` in the config so more samples link up");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn io_error(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_groups(text: &str, what: &str) -> Result<Vec<Vec<f64>>> {
    text.split(';')
        .map(|group| {
            group
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("{what}: cannot parse {v:?}")))
                })
                .collect()
        })
        .collect()
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = SynthSpec::default();
    if let Some(counts) = a.counts {
        spec.counts = counts;
    }
    if let Some(means) = &a.means {
        spec.means = parse_groups(means, "means")?;
    }
    if let Some(covs) = &a.covariances {
        spec.covariances = parse_groups(covs, "covariances")?;
    }
    let ds = generate_synthetic(&spec, a.seed)?;
    match &a.out {
        Some(path) => ds.save_csv(path),
        None => {
            let labels = ds.labels().expect("synthetic data is labelled");
            let mut w = output(None)?;
            let write = |w: &mut dyn Write| -> io::Result<()> {
                for (row, l) in ds.rows().zip(labels) {
                    for v in row {
                        write!(w, "{v},")?;
                    }
                    writeln!(w, "{l}")?;
                }
                w.flush()
            };
            write(&mut *w).map_err(|e| io_error(Path::new("<stdout>"), e))
        }
    }
}

fn fit(a: FitArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    config.validate()?;

    let out = if let (Method::SpectralOnly, Some(aff)) = (a.method, &a.affinity) {
        let affinity = AffinityMatrix::load(aff, config.affinity_mode)?;
        let truth = a.truth.as_ref().map(|p| read_labels(p, a.header)).transpose()?;
        run_spectral_only(&affinity, &config, truth.as_deref())?
    } else {
        let data = a
            .data
            .as_ref()
            .ok_or_else(|| Error::Config("an input CSV is required".into()))?;
        let raw = load_csv(data, a.labeled, a.header)?;
        let ds = prepare(&raw, !a.no_scale);
        run(&ds, a.method, &config, !a.no_scale)?
    };

    let dir = a.out.join(run_dir_name(a.method, &config, &out.report.data_digest)?);
    write_artifacts(&out, &dir)?;
    println!("{}", dir.display());
    if let Some(m) = out.report.metrics {
        eprintln!("{}: ACC {:.2}%  NMI {:.4}", a.method, m.acc, m.nmi);
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let pred = read_labels(&a.pred, a.header)?;
    let truth = read_labels(&a.truth, a.header)?;
    let metrics = evaluate(&pred, &truth)?;
    let mut w = output(a.out.as_deref())?;
    let path = a.out.clone().unwrap_or_else(|| "<stdout>".into());
    serde_json::to_writer(&mut w, &metrics)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_error(&path, e))
}

fn heatmap(a: HeatmapArgs) -> Result<()> {
    let affinity = AffinityMatrix::load(&a.affinity, forestmix::AffinityMode::Uniform)?;
    let order = match &a.order {
        Some(p) => {
            let labels = read_labels(p, a.header)?;
            if labels.len() != affinity.n() {
                return Err(Error::DimensionMismatch {
                    expected: affinity.n(),
                    got: labels.len(),
                });
            }
            Some(order_by_labels(&labels))
        }
        None => None,
    };
    affinity_heatmap(&affinity, order.as_deref())?.save_pgm(&a.out)
}

enum Model {
    Forest(Forest),
    Mixture(GaussianMixture),
}

fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("trees").is_some() {
        Forest::load_json(path).map(Model::Forest)
    } else {
        GaussianMixture::load_json(path).map(Model::Mixture)
    }
}

fn density(a: DensityArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let query = load_csv(&a.query, false, a.header)?;
    let values = query
        .rows()
        .map(|x| match &model {
            Model::Forest(f) => forest_density(f, x),
            Model::Mixture(gm) => {
                if x.len() != gm.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: gm.dim(),
                        got: x.len(),
                    });
                }
                mixture_density(gm, x)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let path = a.out.clone().unwrap_or_else(|| "<stdout>".into());
    let mut w = output(a.out.as_deref())?;
    values
        .iter()
        .try_for_each(|v| writeln!(w, "{v:e}"))
        .and_then(|_| w.flush())
        .map_err(|e| io_error(&path, e))
}

