//! The `ctxdiff` command line.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::baselines::grf_harmonic;
use crate::data::{self, contiguous_classes, DataSource, Dataset, Manifest};
use crate::diffusion::{self, DiffusionConfig, Mode, Variant};
use crate::eval::{self, GridSpec, Method};
use crate::graph::knn_graph;
use crate::io::{self, DistanceFormat};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "ctxdiff",
    version,
    about = "Context-guided diffusion for label propagation on kNN graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (features, labels, manifest)
    Synth(SynthArgs),
    /// Build the kNN graph and export its edges as `i j w` lines
    BuildGraph(GraphArgs),
    /// Propagate labels by (an)isotropic diffusion
    Propagate(PropagateArgs),
    /// Propagate labels with the Gaussian-random-field harmonic solution
    Grf(GrfArgs),
    /// Compare methods with validation-set model selection over several seeds
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Source {
    /// Feature file, one point per line
    #[arg(long)]
    features: Option<PathBuf>,
    /// Distance file, dense n x n or `i j dist` triplets
    #[arg(long)]
    distances: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DataArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum, default_value_t = DistanceFormatArg::Auto)]
    distance_format: DistanceFormatArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DistanceFormatArg {
    Auto,
    Dense,
    Triplet,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SynthKind {
    TwoMoons,
    Blobs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long)]
    n: usize,
    /// Coordinate noise standard deviation (two-moons)
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of clusters (blobs)
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Distance between consecutive cluster centres (blobs)
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    /// Feature dimension (blobs)
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GraphArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long = "K", default_value_t = 10)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Iso,
    Plain,
    Smooth,
    Match,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Iso => Variant::Isotropic,
            VariantArg::Plain => Variant::Plain,
            VariantArg::Smooth => Variant::Smooth,
            VariantArg::Match => Variant::LocalMatch,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Linear,
    Nonlinear,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Linear => Mode::Linear,
            ModeArg::Nonlinear => Mode::Nonlinear,
        }
    }
}

#[derive(Args, Debug)]
struct PropagateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Training labels, `index class` lines
    #[arg(long)]
    labels: PathBuf,
    /// Ground truth for every node; enables the test-error line
    #[arg(long)]
    truth: Option<PathBuf>,
    /// `key = value` file with any of: K, sigma-f, delta, T, warm-start,
    /// variant, mode, clamp-labels. Flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    sigma_f: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long = "T")]
    steps: Option<usize>,
    #[arg(long)]
    warm_start: Option<usize>,
    #[arg(long)]
    clamp_labels: bool,
    /// Predictions file, `index class` lines
    #[arg(long)]
    out: PathBuf,
    /// Energy trace as `t,energy` CSV
    #[arg(long)]
    energy_out: Option<PathBuf>,
    /// Final function values, one row per node
    #[arg(long)]
    f_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GrfArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long = "K", default_value_t = 10)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Ground truth for every node
    #[arg(long)]
    truth: PathBuf,
    /// Comma-separated subset of I, A_lin, A_nlin, A_S, A_LM, GRF
    #[arg(long, value_delimiter = ',', value_parser = parse_method,
          default_value = "I,A_lin,A_nlin,A_S,A_LM,GRF")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8,9")]
    seeds: Vec<u64>,
    /// Training labels per split (the validation set has the same size);
    /// defaults to two per class
    #[arg(long)]
    num_labels: Option<usize>,
    #[arg(long = "K-values", value_delimiter = ',', default_value = "5,10,20")]
    k_values: Vec<usize>,
    #[arg(
        long = "T-values",
        value_delimiter = ',',
        default_value = "10,50,100,200"
    )]
    t_values: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.5,1")]
    sigma_f_values: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 20)]
    warm_start: usize,
    /// Output directory for report.txt, report.kv and timing.txt
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(clap::Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(Cli::command().error(ErrorKind::ValueValidation, msg))
}

fn require_file(path: &Path, what: &str) -> std::result::Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!(
            "{what} file '{}' does not exist",
            path.display()
        )))
    }
}

/// Parses the process arguments and runs the chosen subcommand.
pub fn main() -> ExitCode {
    run(std::env::args_os())
}

pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Synth(a) => synth(a),
        Command::BuildGraph(a) => build_graph(a),
        Command::Propagate(a) => propagate(a),
        Command::Grf(a) => grf(a),
        Command::Benchmark(a) => benchmark(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            let _ = e.print();
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn synth(a: SynthArgs) -> CmdResult {
    let ds = match a.kind {
        SynthKind::TwoMoons => {
            if a.n < 4 || !a.n.is_multiple_of(2) {
                return Err(usage(format!(
                    "two-moons needs an even --n >= 4, got {}",
                    a.n
                )));
            }
            data::two_moons(a.n, a.noise, a.seed)?
        }
        SynthKind::Blobs => {
            if a.classes < 2 || a.n < a.classes || a.dim == 0 {
                return Err(usage("blobs need --n >= --classes >= 2 and --dim >= 1"));
            }
            data::gaussian_blobs(a.n, a.classes, a.separation, a.dim, a.seed)?
        }
    };
    data::write_dataset(&ds, &a.out)?;
    Ok(())
}

fn load_source(d: &DataArgs) -> std::result::Result<DataSource, Failure> {
    let format = match d.distance_format {
        DistanceFormatArg::Auto => DistanceFormat::Auto,
        DistanceFormatArg::Dense => DistanceFormat::Dense,
        DistanceFormatArg::Triplet => DistanceFormat::Triplet,
    };
    match (&d.source.features, &d.source.distances) {
        (Some(p), _) => {
            require_file(p, "features")?;
            Ok(DataSource::Features(io::read_features(p)?))
        }
        (_, Some(p)) => {
            require_file(p, "distances")?;
            Ok(DataSource::Distances(io::read_distances(p, format)?))
        }
        _ => Err(usage("one of --features or --distances is required")),
    }
}

fn source_path(d: &DataArgs) -> &Path {
    d.source
        .features
        .as_deref()
        .or(d.source.distances.as_deref())
        .expect("clap enforces one source")
}

fn build_graph(a: GraphArgs) -> CmdResult {
    let source = load_source(&a.data)?;
    let g = knn_graph(&source.distances(), a.k)?;
    io::write_file(&a.out, |w| g.write_triplets(w))?;
    Ok(())
}

/// Ground truth (optional) and training labels mapped to contiguous classes.
struct Labels {
    train: Vec<(usize, usize)>,
    truth: Option<Vec<usize>>,
    class_ids: Vec<i64>,
}

fn load_labels(
    n: usize,
    labels: &Path,
    truth: Option<&Path>,
) -> std::result::Result<Labels, Failure> {
    require_file(labels, "labels")?;
    let raw = io::read_index_class(labels)?;
    let (map, truth) = match truth {
        Some(path) => {
            require_file(path, "truth")?;
            let t = io::read_index_class(path)?;
            let map = contiguous_classes(t.iter().map(|&(_, c)| c));
            let mut truth = vec![usize::MAX; n];
            for &(i, c) in &t {
                if i >= n || truth[i] != usize::MAX {
                    return Err(Error::Input(format!(
                        "{}: index {i} out of range or repeated",
                        path.display()
                    ))
                    .into());
                }
                truth[i] = map[&c];
            }
            if let Some(i) = truth.iter().position(|&c| c == usize::MAX) {
                return Err(
                    Error::Input(format!("{}: node {i} has no class", path.display())).into(),
                );
            }
            (map, Some(truth))
        }
        None => (contiguous_classes(raw.iter().map(|&(_, c)| c)), None),
    };
    let train = raw
        .iter()
        .map(|&(i, c)| {
            map.get(&c).map(|&k| (i, k)).ok_or_else(|| {
                Error::Input(format!(
                    "training class {c} of node {i} is not in the ground truth"
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Labels {
        train,
        truth,
        class_ids: map.keys().copied().collect(),
    })
}

fn report_predictions(pred: &[usize], labels: &Labels, out: &Path) -> CmdResult {
    let pairs: Vec<(usize, i64)> = pred
        .iter()
        .enumerate()
        .map(|(i, &k)| (i, labels.class_ids[k]))
        .collect();
    io::write_file(out, |w| io::write_index_class(&pairs, w))?;
    if let Some(truth) = &labels.truth {
        let mut is_train = vec![false; pred.len()];
        labels.train.iter().for_each(|&(i, _)| is_train[i] = true);
        let eval: Vec<usize> = (0..pred.len()).filter(|&i| !is_train[i]).collect();
        if !eval.is_empty() {
            let e = eval::error_rate(pred, truth, &eval)?;
            println!("test_error_percent={e:.4} n_test={}", eval.len());
        }
    }
    Ok(())
}

fn config_from(a: &PropagateArgs) -> std::result::Result<DiffusionConfig, Failure> {
    let file: BTreeMap<String, String> = match &a.config {
        Some(p) => {
            require_file(p, "config")?;
            data::parse_key_values(&io::read_text(p)?)?
        }
        None => BTreeMap::new(),
    };
    const KEYS: [&str; 8] = [
        "K",
        "sigma-f",
        "delta",
        "T",
        "warm-start",
        "variant",
        "mode",
        "clamp-labels",
    ];
    if let Some(k) = file.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(usage(format!("unknown config key '{k}'")));
    }
    fn from_file<T: std::str::FromStr>(
        file: &BTreeMap<String, String>,
        key: &str,
    ) -> std::result::Result<Option<T>, Failure> {
        file.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| usage(format!("bad value '{v}' for config key '{key}'")))
            })
            .transpose()
    }
    let d = DiffusionConfig::default();
    let variant = match a.variant {
        Some(v) => v.into(),
        None => from_file::<Variant>(&file, "variant")?.unwrap_or(d.variant),
    };
    let mode = match a.mode {
        Some(m) => m.into(),
        None => from_file::<Mode>(&file, "mode")?.unwrap_or(d.mode),
    };
    let cfg = DiffusionConfig {
        k: a.k.or(from_file(&file, "K")?).unwrap_or(d.k),
        sigma_f: a
            .sigma_f
            .or(from_file(&file, "sigma-f")?)
            .unwrap_or(d.sigma_f),
        delta: a.delta.or(from_file(&file, "delta")?).unwrap_or(d.delta),
        steps: a.steps.or(from_file(&file, "T")?).unwrap_or(d.steps),
        warm_start_steps: a
            .warm_start
            .or(from_file(&file, "warm-start")?)
            .unwrap_or(d.warm_start_steps),
        variant,
        mode,
        clamp_labels: a.clamp_labels || from_file(&file, "clamp-labels")?.unwrap_or(false),
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn propagate(a: PropagateArgs) -> CmdResult {
    let cfg = config_from(&a)?;
    let source = load_source(&a.data)?;
    let labels = load_labels(source.n(), &a.labels, a.truth.as_deref())?;
    let g = knn_graph(&source.distances(), cfg.k)?;
    let state = diffusion::init_labels(&labels.train, g.n(), labels.class_ids.len())?;
    let out = diffusion::run_diffusion(&cfg, &g, &state)?;
    if let Some(p) = &a.energy_out {
        io::write_file(p, |w| diffusion::write_energy_csv(&out.energy, w))?;
    }
    if let Some(p) = &a.f_out {
        io::write_file(p, |w| io::write_matrix(out.f.view(), w))?;
    }
    report_predictions(&diffusion::decode_labels(out.f.view()), &labels, &a.out)
}

fn grf(a: GrfArgs) -> CmdResult {
    let source = load_source(&a.data)?;
    let labels = load_labels(source.n(), &a.labels, a.truth.as_deref())?;
    let g = knn_graph(&source.distances(), a.k)?;
    let state = diffusion::init_labels(&labels.train, g.n(), labels.class_ids.len())?;
    let h = grf_harmonic(&g, &state)?;
    report_predictions(&diffusion::decode_labels(h.f.view()), &labels, &a.out)
}

fn benchmark(a: BenchmarkArgs) -> CmdResult {
    let source = load_source(&a.data)?;
    let labels = load_labels(source.n(), &a.truth, Some(&a.truth))?;
    let name = source_path(&a.data)
        .parent()
        .map(|dir| dir.join("manifest.txt"))
        .filter(|m| m.is_file())
        .and_then(|m| io::read_text(&m).ok())
        .and_then(|t| t.parse::<Manifest>().ok())
        .map_or_else(|| "dataset".to_string(), |m| m.name);
    let mut ds = Dataset::new(name, source, labels.truth.expect("truth given"))?;
    ds.class_ids = labels.class_ids;
    let grid = GridSpec {
        k_values: a.k_values,
        t_values: a.t_values,
        sigma_f_values: a.sigma_f_values,
        method: a.methods[0],
        delta: a.delta,
        warm_start_steps: a.warm_start,
    };
    for &m in &a.methods {
        grid.with_method(m).validate().map_err(usage)?;
    }
    let num_labels = a.num_labels.unwrap_or(2 * ds.classes);
    let report = eval::benchmark(&ds, &a.methods, &a.seeds, &grid, num_labels)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let table = report.to_table();
    io::write_file(&a.out.join("report.txt"), |w| w.write_all(table.as_bytes()))?;
    io::write_file(&a.out.join("report.kv"), |w| {
        w.write_all(report.to_kv().as_bytes())
    })?;
    io::write_file(&a.out.join("timing.txt"), |w| {
        w.write_all(report.timing().as_bytes())
    })?;
    print!("{table}");
    Ok(())
}

use std::io::Write as _;
