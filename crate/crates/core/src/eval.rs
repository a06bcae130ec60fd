//! Error rates, validation-set model selection and the method comparison.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use crate::baselines::grf_harmonic;
use crate::data::{split_labels, Dataset, SplitSpec};
use crate::diffusion::{decode_labels, init_labels, DiffusionConfig, Mode, Propagator, Variant};
use crate::exec::Execution;
use crate::graph::{knn_graph_with, Graph};
use crate::io::fmt_f64;
use crate::{Error, Result};

pub const DEFAULT_K_VALUES: [usize; 3] = [5, 10, 20];
pub const DEFAULT_T_VALUES: [usize; 4] = [10, 50, 100, 200];
pub const DEFAULT_SIGMA_F_VALUES: [f64; 5] = [0.05, 0.1, 0.2, 0.5, 1.0];

/// The compared propagation methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Isotropic diffusion.
    Isotropic,
    /// Gaussian diffusivity frozen after the warm start.
    LinearAnisotropic,
    /// Gaussian diffusivity recomputed every step.
    NonlinearAnisotropic,
    Smooth,
    LocalMatch,
    /// Harmonic solution of the Gaussian random field.
    Grf,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Isotropic,
        Method::LinearAnisotropic,
        Method::NonlinearAnisotropic,
        Method::Smooth,
        Method::LocalMatch,
        Method::Grf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Isotropic => "I",
            Method::LinearAnisotropic => "A_lin",
            Method::NonlinearAnisotropic => "A_nlin",
            Method::Smooth => "A_S",
            Method::LocalMatch => "A_LM",
            Method::Grf => "GRF",
        }
    }

    /// Diffusion variant and mode, `None` for GRF.
    pub fn diffusion(self) -> Option<(Variant, Mode)> {
        match self {
            Method::Isotropic => Some((Variant::Isotropic, Mode::Linear)),
            Method::LinearAnisotropic => Some((Variant::Plain, Mode::Linear)),
            Method::NonlinearAnisotropic => Some((Variant::Plain, Mode::Nonlinear)),
            Method::Smooth => Some((Variant::Smooth, Mode::Nonlinear)),
            Method::LocalMatch => Some((Variant::LocalMatch, Mode::Nonlinear)),
            Method::Grf => None,
        }
    }

    pub fn uses_steps(self) -> bool {
        self != Method::Grf
    }

    pub fn uses_sigma_f(self) -> bool {
        !matches!(self, Method::Isotropic | Method::Grf)
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
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::Parameter(format!(
                    "unknown method '{s}' (valid: {})",
                    names.join(", ")
                ))
            })
    }
}

/// Hyper-parameter grid for one method.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub k_values: Vec<usize>,
    pub t_values: Vec<usize>,
    pub sigma_f_values: Vec<f64>,
    pub method: Method,
    pub delta: f64,
    pub warm_start_steps: usize,
}

impl GridSpec {
    pub fn new(method: Method) -> Self {
        Self {
            k_values: DEFAULT_K_VALUES.to_vec(),
            t_values: DEFAULT_T_VALUES.to_vec(),
            sigma_f_values: DEFAULT_SIGMA_F_VALUES.to_vec(),
            method,
            delta: 1.0,
            warm_start_steps: 20,
        }
    }

    pub fn with_method(&self, method: Method) -> Self {
        Self {
            method,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::Parameter(
                "K values must be a nonempty list of positive counts".into(),
            ));
        }
        if self.method.uses_steps() && self.t_values.is_empty() {
            return Err(Error::Parameter("T values must be nonempty".into()));
        }
        if self.method.uses_sigma_f()
            && (self.sigma_f_values.is_empty() || self.sigma_f_values.iter().any(|s| !(*s > 0.0)))
        {
            return Err(Error::Parameter(
                "sigma_f values must be a nonempty list of positive reals".into(),
            ));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Parameter(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Number of distinct configurations the method actually distinguishes.
    pub fn cell_count(&self) -> usize {
        let t = if self.method.uses_steps() {
            self.t_values.len()
        } else {
            1
        };
        let s = if self.method.uses_sigma_f() {
            self.sigma_f_values.len()
        } else {
            1
        };
        self.k_values.len() * t * s
    }
}

/// One grid cell and its validation error in percent.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub k: usize,
    pub steps: Option<usize>,
    pub sigma_f: Option<f64>,
    pub validation_error: f64,
    /// Set when the run failed; the cell then scores 100%.
    pub failure: Option<String>,
}

impl Cell {
    /// Lexicographic selection key: error, then T, then K, then σ_f.
    fn better_than(&self, other: &Cell) -> bool {
        self.validation_error
            .total_cmp(&other.validation_error)
            .then(self.steps.unwrap_or(0).cmp(&other.steps.unwrap_or(0)))
            .then(self.k.cmp(&other.k))
            .then(
                self.sigma_f
                    .unwrap_or(0.0)
                    .total_cmp(&other.sigma_f.unwrap_or(0.0)),
            )
            .is_lt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub method: Method,
    pub k: usize,
    pub steps: Option<usize>,
    pub sigma_f: Option<f64>,
    pub validation_error: f64,
}

impl Selection {
    /// Diffusion configuration of the selected cell, `None` for GRF.
    pub fn config(&self, grid: &GridSpec) -> Option<DiffusionConfig> {
        let (variant, mode) = self.method.diffusion()?;
        Some(DiffusionConfig {
            k: self.k,
            sigma_f: self.sigma_f.unwrap_or(1.0),
            delta: grid.delta,
            steps: self.steps.unwrap_or(0),
            warm_start_steps: grid.warm_start_steps,
            variant,
            mode,
            clamp_labels: false,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSearchResult {
    pub best: Selection,
    pub cells: Vec<Cell>,
}

/// `100 × mismatches / |eval|` over the given indices.
pub fn error_rate(predicted: &[usize], truth: &[usize], eval: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape {
            expected: format!("{} predictions", truth.len()),
            actual: format!("{}", predicted.len()),
        });
    }
    if eval.is_empty() {
        return Err(Error::Input("cannot score an empty index set".into()));
    }
    let mut wrong = 0usize;
    for &i in eval {
        if i >= truth.len() {
            return Err(Error::Input(format!("evaluation index {i} out of range")));
        }
        if predicted[i] != truth[i] {
            wrong += 1;
        }
    }
    Ok(100.0 * wrong as f64 / eval.len() as f64)
}

/// kNN graphs of one dataset for several K, built once and shared.
pub struct GraphCache {
    graphs: Vec<(usize, std::result::Result<Graph, String>)>,
}

impl GraphCache {
    pub fn build(dataset: &Dataset, k_values: &[usize], exec: Execution) -> Self {
        let dist = dataset.source.distances();
        let mut ks = k_values.to_vec();
        ks.sort_unstable();
        ks.dedup();
        let graphs = ks
            .into_iter()
            .map(|k| (k, knn_graph_with(exec, &dist, k).map_err(|e| e.to_string())))
            .collect();
        Self { graphs }
    }

    pub fn get(&self, k: usize) -> Result<&Graph> {
        match self.graphs.iter().find(|(kk, _)| *kk == k) {
            Some((_, Ok(g))) => Ok(g),
            Some((_, Err(e))) => Err(Error::Input(format!("graph for K = {k}: {e}"))),
            None => Err(Error::Internal(format!("no graph built for K = {k}"))),
        }
    }
}

/// Predictions of `method` on `graph` from the given training labels.
pub fn predict(
    method: Method,
    config: Option<&DiffusionConfig>,
    graph: &Graph,
    labels: &[(usize, usize)],
    classes: usize,
) -> Result<Vec<usize>> {
    let state = init_labels(labels, graph.n(), classes)?;
    match config {
        Some(cfg) if method != Method::Grf => {
            let mut p = Propagator::new(cfg, graph, &state)?;
            p.advance_to(cfg.steps)?;
            Ok(decode_labels(p.f()))
        }
        _ => Ok(decode_labels(grf_harmonic(graph, &state)?.f.view())),
    }
}

/// Selects the cell with the lowest validation error.
pub fn grid_search(
    grid: &GridSpec,
    dataset: &Dataset,
    split: &SplitSpec,
) -> Result<GridSearchResult> {
    grid.validate()?;
    let graphs = GraphCache::build(dataset, &grid.k_values, Execution::default());
    grid_search_with(grid, &graphs, dataset, split)
}

/// [`grid_search`] on prebuilt graphs.
///
/// Each `(K, σ_f)` pair is diffused once to the largest T, and every T of the
/// grid is scored at its checkpoint along the way; the trajectory does not
/// depend on where it stops.
pub fn grid_search_with(
    grid: &GridSpec,
    graphs: &GraphCache,
    dataset: &Dataset,
    split: &SplitSpec,
) -> Result<GridSearchResult> {
    grid.validate()?;
    if split.validation.is_empty() {
        return Err(Error::Input("validation set is empty".into()));
    }
    let method = grid.method;
    let sigmas: Vec<Option<f64>> = if method.uses_sigma_f() {
        grid.sigma_f_values.iter().map(|&s| Some(s)).collect()
    } else {
        vec![None]
    };
    let mut t_values: Vec<usize> = grid.t_values.clone();
    t_values.sort_unstable();
    t_values.dedup();
    let groups: Vec<(usize, Option<f64>)> = grid
        .k_values
        .iter()
        .flat_map(|&k| sigmas.iter().map(move |&s| (k, s)))
        .collect();
    let labels = split.train_labels(&dataset.truth);
    let exec = Execution::default();
    let per_group = exec.map_range(groups.len(), |g| {
        let (k, sigma_f) = groups[g];
        evaluate_group(grid, graphs, dataset, split, &labels, k, sigma_f, &t_values)
    });
    let cells: Vec<Cell> = per_group.into_iter().flatten().collect();
    let best = cells
        .iter()
        .fold(None::<&Cell>, |acc, c| match acc {
            Some(b) if !c.better_than(b) => Some(b),
            _ => Some(c),
        })
        .expect("grid has at least one cell");
    for c in cells.iter().filter(|c| c.failure.is_some()) {
        log::warn!(
            "{method} cell K={} T={:?} sigma_f={:?} failed: {}",
            c.k,
            c.steps,
            c.sigma_f,
            c.failure.as_deref().unwrap_or_default()
        );
    }
    Ok(GridSearchResult {
        best: Selection {
            method,
            k: best.k,
            steps: best.steps,
            sigma_f: best.sigma_f,
            validation_error: best.validation_error,
        },
        cells,
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_group(
    grid: &GridSpec,
    graphs: &GraphCache,
    dataset: &Dataset,
    split: &SplitSpec,
    labels: &[(usize, usize)],
    k: usize,
    sigma_f: Option<f64>,
    t_values: &[usize],
) -> Vec<Cell> {
    let method = grid.method;
    let steps: Vec<Option<usize>> = if method.uses_steps() {
        t_values.iter().map(|&t| Some(t)).collect()
    } else {
        vec![None]
    };
    let cell = |t: Option<usize>, outcome: Result<f64>| match outcome {
        Ok(e) => Cell {
            k,
            steps: t,
            sigma_f,
            validation_error: e,
            failure: None,
        },
        Err(e) => Cell {
            k,
            steps: t,
            sigma_f,
            validation_error: 100.0,
            failure: Some(e.to_string()),
        },
    };
    let graph = match graphs.get(k) {
        Ok(g) => g,
        Err(e) => {
            let msg = e.to_string();
            return steps
                .into_iter()
                .map(|t| cell(t, Err(Error::Input(msg.clone()))))
                .collect();
        }
    };
    let score = |pred: &[usize]| error_rate(pred, &dataset.truth, &split.validation);

    let Some((variant, mode)) = method.diffusion() else {
        let outcome = predict(method, None, graph, labels, dataset.classes).and_then(|p| score(&p));
        return vec![cell(None, outcome)];
    };
    let config = DiffusionConfig {
        k,
        sigma_f: sigma_f.unwrap_or(1.0),
        delta: grid.delta,
        steps: t_values.last().copied().unwrap_or(0),
        warm_start_steps: grid.warm_start_steps,
        variant,
        mode,
        clamp_labels: false,
    };
    let mut out = Vec::with_capacity(steps.len());
    let mut propagator = init_labels(labels, graph.n(), dataset.classes)
        .and_then(|state| Propagator::new(&config, graph, &state));
    for &t in t_values {
        let outcome = match propagator.as_mut() {
            Ok(p) => p.advance_to(t).and_then(|_| score(&decode_labels(p.f()))),
            Err(e) => Err(Error::Input(e.to_string())),
        };
        if let Err(e) = &outcome {
            // A diverged trajectory fails every later checkpoint too.
            if propagator.is_ok() {
                propagator = Err(Error::Input(e.to_string()));
            }
        }
        out.push(cell(Some(t), outcome));
    }
    out
}

/// Results of one method over all seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkRow {
    pub method: Method,
    /// Test error in percent, one per seed.
    pub errors: Vec<f64>,
    pub selections: Vec<Selection>,
    pub mean_error: f64,
    pub sd_error: f64,
    /// Wall-clock seconds spent diffusing; not part of the serialized report.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    pub dataset: String,
    pub n: usize,
    pub classes: usize,
    pub num_labels: usize,
    pub seeds: Vec<u64>,
    pub rows: Vec<BenchmarkRow>,
}

/// Grid-selects every method on validation labels and reports test errors.
///
/// For each seed a fresh stratified split of `num_labels` training and as
/// many validation labels is drawn. The selected configuration is then run
/// with the training labels alone and scored on the remaining nodes.
pub fn benchmark(
    dataset: &Dataset,
    methods: &[Method],
    seeds: &[u64],
    grid: &GridSpec,
    num_labels: usize,
) -> Result<BenchmarkReport> {
    if methods.is_empty() || seeds.is_empty() {
        return Err(Error::Input(
            "benchmark needs at least one method and one seed".into(),
        ));
    }
    for &m in methods {
        grid.with_method(m).validate()?;
    }
    let graphs = GraphCache::build(dataset, &grid.k_values, Execution::default());
    let splits: Vec<SplitSpec> = seeds
        .iter()
        .map(|&s| split_labels(dataset, num_labels, s))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let grid = grid.with_method(method);
        let start = Instant::now();
        let mut errors = Vec::with_capacity(seeds.len());
        let mut selections = Vec::with_capacity(seeds.len());
        for split in &splits {
            let found = grid_search_with(&grid, &graphs, dataset, split)?;
            let best = found.best;
            let labels = split.train_labels(&dataset.truth);
            let err = graphs
                .get(best.k)
                .and_then(|g| {
                    predict(
                        method,
                        best.config(&grid).as_ref(),
                        g,
                        &labels,
                        dataset.classes,
                    )
                })
                .and_then(|pred| error_rate(&pred, &dataset.truth, &split.test))
                .unwrap_or_else(|e| {
                    log::warn!("{method} seed {}: {e}", split.seed);
                    100.0
                });
            errors.push(err);
            selections.push(best);
        }
        let seconds = start.elapsed().as_secs_f64();
        let (mean_error, sd_error) = mean_sd(&errors);
        rows.push(BenchmarkRow {
            method,
            errors,
            selections,
            mean_error,
            sd_error,
            seconds,
        });
    }
    Ok(BenchmarkReport {
        dataset: dataset.name.clone(),
        n: dataset.n(),
        classes: dataset.classes,
        num_labels,
        seeds: seeds.to_vec(),
        rows,
    })
}

/// Mean and sample standard deviation (0 for a single value).
fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn opt_usize(v: Option<usize>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), fmt_f64)
}

fn join<T>(xs: &[T], f: impl Fn(&T) -> String) -> String {
    xs.iter().map(f).collect::<Vec<_>>().join(",")
}

impl BenchmarkReport {
    pub fn row(&self, method: Method) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Aligned human-readable table. Timing is left out so the output is
    /// reproducible; see [`BenchmarkReport::timing`].
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "dataset {} (n = {}, c = {}, {} training labels, {} seeds)",
            self.dataset,
            self.n,
            self.classes,
            self.num_labels,
            self.seeds.len()
        );
        let _ = writeln!(
            s,
            "{:<8} {:>10} {:>8} {:>8} {:>8}   selected K/T/sigma_f per seed",
            "method", "error %", "sd", "min", "max"
        );
        for r in &self.rows {
            let min = r.errors.iter().copied().fold(f64::INFINITY, f64::min);
            let max = r.errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sel = join(&r.selections, |s| {
                format!(
                    "{}/{}/{}",
                    s.k,
                    opt_usize(s.steps),
                    s.sigma_f.map_or("-".to_string(), |v| format!("{v}"))
                )
            });
            let _ = writeln!(
                s,
                "{:<8} {:>10.2} {:>8.2} {:>8.2} {:>8.2}   {}",
                r.method.name(),
                r.mean_error,
                r.sd_error,
                min,
                max,
                sel.replace(',', " ")
            );
        }
        let _ = writeln!(s, "FLAP, LNP: not implemented");
        s
    }

    /// `method seconds` lines.
    pub fn timing(&self) -> String {
        self.rows
            .iter()
            .map(|r| format!("{} {:.6}\n", r.method, r.seconds))
            .collect()
    }

    /// One header line and one `key=value` line per method.
    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "dataset={} n={} classes={} labels={} seeds={}\n",
            self.dataset,
            self.n,
            self.classes,
            self.num_labels,
            join(&self.seeds, |x| x.to_string())
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "method={} mean_error={} sd_error={} errors={} K={} T={} sigma_f={} validation_error={}",
                r.method,
                fmt_f64(r.mean_error),
                fmt_f64(r.sd_error),
                join(&r.errors, |e| fmt_f64(*e)),
                join(&r.selections, |x| x.k.to_string()),
                join(&r.selections, |x| opt_usize(x.steps)),
                join(&r.selections, |x| opt_f64(x.sigma_f)),
                join(&r.selections, |x| fmt_f64(x.validation_error)),
            );
        }
        s
    }

    /// Parses [`BenchmarkReport::to_kv`] output. Timing reads back as zero.
    pub fn from_kv(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Input(format!("benchmark report: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = fields(lines.next().ok_or_else(|| bad("empty"))?)?;
        let get = |m: &std::collections::BTreeMap<String, String>, k: &str| {
            m.get(k)
                .cloned()
                .ok_or_else(|| bad(&format!("missing '{k}'")))
        };
        let num = |s: String| s.parse::<usize>().map_err(|_| bad("bad count"));
        let list = |s: &str| -> Vec<String> {
            if s.is_empty() {
                Vec::new()
            } else {
                s.split(',').map(str::to_string).collect()
            }
        };
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let seeds = list(&get(&header, "seeds")?)
            .iter()
            .map(|s| s.parse::<u64>().map_err(|_| bad("bad seed")))
            .collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::new();
        for line in lines {
            let f = fields(line)?;
            let method: Method = get(&f, "method")?.parse()?;
            let errors = list(&get(&f, "errors")?)
                .iter()
                .map(|s| real(s))
                .collect::<Result<Vec<_>>>()?;
            let ks = list(&get(&f, "K")?);
            let ts = list(&get(&f, "T")?);
            let ss = list(&get(&f, "sigma_f")?);
            let vs = list(&get(&f, "validation_error")?);
            if [ks.len(), ts.len(), ss.len(), vs.len()]
                .iter()
                .any(|&l| l != errors.len())
            {
                return Err(bad("per-seed lists differ in length"));
            }
            let mut selections = Vec::with_capacity(errors.len());
            for s in 0..errors.len() {
                selections.push(Selection {
                    method,
                    k: num(ks[s].clone())?,
                    steps: if ts[s] == "-" {
                        None
                    } else {
                        Some(num(ts[s].clone())?)
                    },
                    sigma_f: if ss[s] == "-" {
                        None
                    } else {
                        Some(real(&ss[s])?)
                    },
                    validation_error: real(&vs[s])?,
                });
            }
            rows.push(BenchmarkRow {
                method,
                errors,
                selections,
                mean_error: real(&get(&f, "mean_error")?)?,
                sd_error: real(&get(&f, "sd_error")?)?,
                seconds: 0.0,
            });
        }
        Ok(BenchmarkReport {
            dataset: get(&header, "dataset")?,
            n: num(get(&header, "n")?)?,
            classes: num(get(&header, "classes")?)?,
            num_labels: num(get(&header, "labels")?)?,
            seeds,
            rows,
        })
    }
}

fn fields(line: &str) -> Result<std::collections::BTreeMap<String, String>> {
    line.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Input(format!("benchmark report: bad field '{tok}'")))
        })
        .collect()
}
