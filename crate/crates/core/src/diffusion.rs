//! Label propagation by explicit-Euler diffusion.
//!
//! Labels start as one-hot rows (zeros for unlabeled nodes), are smoothed by
//! a few isotropic warm-start steps, and then diffused for `T` steps with
//! `f ← f − δ L^D f`. In nonlinear mode the edge weights are rebuilt from the
//! current `f` before every step; in linear mode they are built once from the
//! warm-started `f` and frozen.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};

use crate::diffusivity::{
    gaussian_diffusivity, local_match_weights, plain_weights, smooth_weights, AnisotropicWeights,
};
use crate::graph::Graph;
use crate::laplacian::{self, LaplacianOperator};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Isotropic,
    Plain,
    Smooth,
    LocalMatch,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Isotropic,
        Variant::Plain,
        Variant::Smooth,
        Variant::LocalMatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Isotropic => "iso",
            Variant::Plain => "plain",
            Variant::Smooth => "smooth",
            Variant::LocalMatch => "match",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::Parameter(format!("unknown variant '{s}' (iso, plain, smooth, match)"))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Linear,
    Nonlinear,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Linear => "linear",
            Mode::Nonlinear => "nonlinear",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Mode::Linear),
            "nonlinear" => Ok(Mode::Nonlinear),
            _ => Err(Error::Parameter(format!(
                "unknown mode '{s}' (linear, nonlinear)"
            ))),
        }
    }
}

/// Hyper-parameters of one propagation run.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionConfig {
    /// Neighborhood size used to build the graph.
    pub k: usize,
    pub sigma_f: f64,
    pub delta: f64,
    /// Number of anisotropic steps `T`.
    pub steps: usize,
    pub warm_start_steps: usize,
    pub variant: Variant,
    pub mode: Mode,
    pub clamp_labels: bool,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            k: 10,
            sigma_f: 0.2,
            delta: 1.0,
            steps: 50,
            warm_start_steps: 20,
            variant: Variant::LocalMatch,
            mode: Mode::Nonlinear,
            clamp_labels: false,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Parameter("K must be positive".into()));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::Parameter(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if self.variant != Variant::Isotropic && (!(self.sigma_f > 0.0) || self.sigma_f.is_nan()) {
            return Err(Error::Parameter(format!(
                "sigma_f must be positive, got {}",
                self.sigma_f
            )));
        }
        Ok(())
    }
}

/// Function values `f` (`n × c`) together with the labels that seeded them.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelState {
    f: Array2<f64>,
    labeled: Vec<bool>,
    labels: Vec<(usize, usize)>,
}

impl LabelState {
    pub fn f(&self) -> ArrayView2<'_, f64> {
        self.f.view()
    }

    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    pub fn classes(&self) -> usize {
        self.f.ncols()
    }

    pub fn labeled_mask(&self) -> &[bool] {
        &self.labeled
    }

    /// `(node, class)` pairs, sorted by node.
    pub fn labels(&self) -> &[(usize, usize)] {
        &self.labels
    }

    pub fn num_labeled(&self) -> usize {
        self.labels.len()
    }

    fn clamp(&self, f: &mut Array2<f64>) {
        for &(i, class) in &self.labels {
            let mut row = f.row_mut(i);
            row.fill(0.0);
            row[class] = 1.0;
        }
    }
}

/// One-hot initial state for `n` nodes and `c` classes.
pub fn init_labels(labels: &[(usize, usize)], n: usize, c: usize) -> Result<LabelState> {
    if c == 0 {
        return Err(Error::Input("need at least one class".into()));
    }
    let mut f = Array2::zeros((n, c));
    let mut labeled = vec![false; n];
    for &(i, class) in labels {
        if i >= n {
            return Err(Error::Input(format!(
                "label index {i} out of range for n = {n}"
            )));
        }
        if class >= c {
            return Err(Error::Input(format!(
                "class {class} of node {i} out of range for c = {c}"
            )));
        }
        if labeled[i] {
            return Err(Error::Input(format!("node {i} is labeled more than once")));
        }
        labeled[i] = true;
        f[[i, class]] = 1.0;
    }
    let mut labels = labels.to_vec();
    labels.sort_unstable();
    Ok(LabelState { f, labeled, labels })
}

/// Per-row argmax; ties go to the lowest class index.
pub fn decode_labels(f: ArrayView2<'_, f64>) -> Vec<usize> {
    f.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// `f − δ L f`, or `f − δ L^D f` when weights are given.
pub fn euler_step(
    graph: &Graph,
    weights: Option<&AnisotropicWeights>,
    f: ArrayView2<'_, f64>,
    delta: f64,
) -> Result<Array2<f64>> {
    let op = match weights {
        Some(w) => LaplacianOperator::anisotropic(graph, w),
        None => LaplacianOperator::isotropic(graph),
    };
    let lf = op.apply(f)?;
    let out = &f - &(lf * delta);
    check_finite(&out, 0, delta)?;
    Ok(out)
}

/// Isotropic diffusion for `steps` steps.
pub fn warm_start(
    graph: &Graph,
    f0: ArrayView2<'_, f64>,
    steps: usize,
    delta: f64,
) -> Result<Array2<f64>> {
    if f0.nrows() != graph.n() {
        return Err(Error::Shape {
            expected: format!("{} rows", graph.n()),
            actual: format!("{} rows", f0.nrows()),
        });
    }
    let mut f = f0.to_owned();
    let mut scratch = Array2::zeros(f.raw_dim());
    for t in 0..steps {
        step_in_place(graph, graph.weights(), &mut f, &mut scratch, delta, t)?;
    }
    Ok(f)
}

fn step_in_place(
    graph: &Graph,
    edges: &[f64],
    f: &mut Array2<f64>,
    scratch: &mut Array2<f64>,
    delta: f64,
    t: usize,
) -> Result<()> {
    laplacian::apply_into(graph, edges, f.view(), scratch);
    f.zip_mut_with(scratch, |x, &l| *x -= delta * l);
    check_finite(f, t, delta)
}

fn check_finite(f: &Array2<f64>, step: usize, delta: f64) -> Result<()> {
    if f.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { step, delta })
    }
}

/// Anisotropic weights of `variant` for the current `f`. `None` for isotropic.
pub fn variant_weights(
    graph: &Graph,
    f: ArrayView2<'_, f64>,
    variant: Variant,
    sigma_f: f64,
) -> Result<Option<AnisotropicWeights>> {
    if variant == Variant::Isotropic {
        return Ok(None);
    }
    let q = gaussian_diffusivity(graph, f, sigma_f)?;
    let w = match variant {
        Variant::Plain => plain_weights(graph, &q)?,
        Variant::Smooth => smooth_weights(graph, &q)?,
        Variant::LocalMatch => local_match_weights(graph, &q, f, sigma_f)?,
        Variant::Isotropic => unreachable!(),
    };
    Ok(Some(w))
}

/// Final state of a run and the energy of each visited `f^t`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionOutcome {
    pub f: Array2<f64>,
    /// `energy[t]` is the regularizer energy of `f^t` under the weights used
    /// for step `t`; the last entry uses the weights of the final step.
    pub energy: Vec<f64>,
}

/// Step-by-step driver of the anisotropic phase, after the warm start.
pub struct Propagator<'g> {
    graph: &'g Graph,
    config: DiffusionConfig,
    state: LabelState,
    f: Array2<f64>,
    scratch: Array2<f64>,
    weights: Option<AnisotropicWeights>,
    weights_ready: bool,
    t: usize,
    energy: Vec<f64>,
}

impl<'g> Propagator<'g> {
    /// Validates inputs and runs the isotropic warm start.
    pub fn new(config: &DiffusionConfig, graph: &'g Graph, state: &LabelState) -> Result<Self> {
        config.validate()?;
        if state.n() != graph.n() {
            return Err(Error::Shape {
                expected: format!("{} nodes", graph.n()),
                actual: format!("{} nodes", state.n()),
            });
        }
        if state.num_labeled() == 0 {
            log::warn!("no labeled nodes; every prediction will be class 0");
        }
        let f = warm_start(graph, state.f(), config.warm_start_steps, config.delta)?;
        Ok(Self {
            graph,
            config: config.clone(),
            state: state.clone(),
            scratch: Array2::zeros(f.raw_dim()),
            f,
            weights: None,
            weights_ready: false,
            t: 0,
            energy: Vec::new(),
        })
    }

    /// Anisotropic steps taken so far.
    pub fn steps_taken(&self) -> usize {
        self.t
    }

    pub fn f(&self) -> ArrayView2<'_, f64> {
        self.f.view()
    }

    pub fn step(&mut self) -> Result<()> {
        let refresh = !self.weights_ready || self.config.mode == Mode::Nonlinear;
        if refresh {
            self.weights = variant_weights(
                self.graph,
                self.f.view(),
                self.config.variant,
                self.config.sigma_f,
            )?;
            self.weights_ready = true;
        }
        let graph = self.graph;
        let edges = self
            .weights
            .as_ref()
            .map_or(graph.weights(), |w| w.values());
        self.energy
            .push(laplacian::energy(graph, edges, self.f.view()));
        step_in_place(
            self.graph,
            edges,
            &mut self.f,
            &mut self.scratch,
            self.config.delta,
            self.config.warm_start_steps + self.t,
        )?;
        if self.config.clamp_labels {
            self.state.clamp(&mut self.f);
        }
        self.t += 1;
        Ok(())
    }

    /// Steps until `steps_taken() == t`.
    pub fn advance_to(&mut self, t: usize) -> Result<()> {
        while self.t < t {
            self.step()?;
        }
        Ok(())
    }

    fn edge_values(&self) -> &[f64] {
        self.weights
            .as_ref()
            .map_or(self.graph.weights(), |w| w.values())
    }

    pub fn finish(mut self) -> Result<DiffusionOutcome> {
        if !self.weights_ready {
            self.weights = variant_weights(
                self.graph,
                self.f.view(),
                self.config.variant,
                self.config.sigma_f,
            )?;
        }
        let e = laplacian::energy(self.graph, self.edge_values(), self.f.view());
        self.energy.push(e);
        Ok(DiffusionOutcome {
            f: self.f,
            energy: self.energy,
        })
    }
}

/// Warm start followed by `config.steps` steps of the configured diffusion.
pub fn run_diffusion(
    config: &DiffusionConfig,
    graph: &Graph,
    state: &LabelState,
) -> Result<DiffusionOutcome> {
    let mut p = Propagator::new(config, graph, state)?;
    p.advance_to(config.steps)?;
    p.finish()
}

/// Writes the energy trace as `t,energy` lines.
pub fn write_energy_csv<W: std::io::Write>(energy: &[f64], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,energy")?;
    for (t, e) in energy.iter().enumerate() {
        writeln!(out, "{t},{}", crate::io::fmt_f64(*e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusivity::WeightVariant;
    use ndarray::array;

    #[test]
    fn init_examples() {
        let s = init_labels(&[(0, 1)], 3, 2).unwrap();
        assert_eq!(s.f(), array![[0.0, 1.0], [0.0, 0.0], [0.0, 0.0]]);
        assert_eq!(s.labeled_mask(), &[true, false, false]);

        let s = init_labels(&[], 3, 2).unwrap();
        assert!(s.f().iter().all(|&v| v == 0.0));
        assert_eq!(s.num_labeled(), 0);

        let s = init_labels(&[(2, 0), (0, 1), (1, 1)], 3, 2).unwrap();
        assert!(s.f().rows().into_iter().all(|r| r.sum() == 1.0));
        assert_eq!(s.labels(), &[(0, 1), (1, 1), (2, 0)]);

        assert!(init_labels(&[(0, 1), (0, 0)], 3, 2).is_err());
        assert!(init_labels(&[(0, 2)], 3, 2).is_err());
        assert!(init_labels(&[(3, 0)], 3, 2).is_err());
    }

    #[test]
    fn decode_examples() {
        let f = array![[0.2, 0.8], [0.5, 0.5], [0.0, 0.0], [-1.0, -2.0]];
        assert_eq!(decode_labels(f.view()), vec![1, 0, 0, 0]);
    }

    #[test]
    fn two_node_step() {
        let g = Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let w = AnisotropicWeights::from_values(&g, vec![1.0, 1.0], WeightVariant::Plain).unwrap();
        let f = array![[1.0], [0.0]];
        let out = euler_step(&g, Some(&w), f.view(), 1.0).unwrap();
        assert_eq!(out, array![[0.0], [1.0]]);
        let c = array![[2.0], [2.0]];
        assert_eq!(euler_step(&g, Some(&w), c.view(), 1.0).unwrap(), c);
    }

    #[test]
    fn divergence_is_reported() {
        let g = Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let f = array![[1.0], [0.0]];
        let mut x = f.clone();
        let err = (|| -> Result<()> {
            for _ in 0..2000 {
                x = euler_step(&g, None, x.view(), 1e100)?;
            }
            Ok(())
        })()
        .unwrap_err();
        match err {
            Error::Divergence { delta, .. } => assert_eq!(delta, 1e100),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn warm_start_examples() {
        let g = Graph::from_edges(3, &[(0, 1, 0.5), (1, 2, 0.7)]).unwrap();
        let f = array![[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]];
        assert_eq!(warm_start(&g, f.view(), 0, 1.0).unwrap(), f);
        let c = array![[0.25], [0.25], [0.25]];
        assert_eq!(warm_start(&g, c.view(), 20, 1.0).unwrap(), c);
    }

    #[test]
    fn trivial_run_returns_initial_state() {
        let g = Graph::from_edges(3, &[(0, 1, 0.5), (1, 2, 0.7)]).unwrap();
        let s = init_labels(&[(0, 1)], 3, 2).unwrap();
        let cfg = DiffusionConfig {
            variant: Variant::Isotropic,
            steps: 0,
            warm_start_steps: 0,
            ..Default::default()
        };
        let out = run_diffusion(&cfg, &g, &s).unwrap();
        assert_eq!(out.f, s.f());
        assert_eq!(out.energy.len(), 1);
        assert_eq!(decode_labels(out.f.view()), vec![1, 0, 0]);
    }

    #[test]
    fn clamping_restores_labels() {
        let g = Graph::from_edges(3, &[(0, 1, 0.5), (1, 2, 0.7)]).unwrap();
        let s = init_labels(&[(0, 1), (2, 0)], 3, 2).unwrap();
        let cfg = DiffusionConfig {
            variant: Variant::Plain,
            sigma_f: 0.5,
            steps: 5,
            clamp_labels: true,
            ..Default::default()
        };
        let out = run_diffusion(&cfg, &g, &s).unwrap();
        assert_eq!(out.f.row(0).to_vec(), vec![0.0, 1.0]);
        assert_eq!(out.f.row(2).to_vec(), vec![1.0, 0.0]);
        assert_eq!(out.energy.len(), 6);
    }

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("fast".parse::<Variant>().is_err());
        assert_eq!("linear".parse::<Mode>().unwrap(), Mode::Linear);
    }

    #[test]
    fn config_validation() {
        let bad = DiffusionConfig {
            delta: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let iso = DiffusionConfig {
            variant: Variant::Isotropic,
            sigma_f: 0.0,
            ..Default::default()
        };
        assert!(iso.validate().is_ok());
    }
}
