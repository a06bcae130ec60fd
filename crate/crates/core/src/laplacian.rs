//! Matrix-free isotropic and anisotropic graph Laplacians.
//!
//! Both operators are normalized by the isotropic degrees `d_i`:
//!
//! ```text
//! [L f](i)   = (1/d_i) Σ_j w_ij  (f(i) − f(j))
//! [L^D f](i) = (1/d_i) Σ_j wD_ij (f(i) − f(j))
//! ```
//!
//! The difference form makes constants an exact null space.

use ndarray::{Array2, ArrayView2};

use crate::diffusivity::AnisotropicWeights;
use crate::graph::Graph;
use crate::{Error, Result};

/// A Laplacian on `graph`, isotropic unless anisotropic weights are attached.
#[derive(Clone, Copy, Debug)]
pub struct LaplacianOperator<'a> {
    graph: &'a Graph,
    weights: Option<&'a AnisotropicWeights>,
}

impl<'a> LaplacianOperator<'a> {
    pub fn isotropic(graph: &'a Graph) -> Self {
        Self {
            graph,
            weights: None,
        }
    }

    pub fn anisotropic(graph: &'a Graph, weights: &'a AnisotropicWeights) -> Self {
        Self {
            graph,
            weights: Some(weights),
        }
    }

    pub(crate) fn edge_values(&self) -> &'a [f64] {
        self.weights.map_or(self.graph.weights(), |w| w.values())
    }

    pub fn apply(&self, f: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_shape(self.graph, f, self.edge_values())?;
        let mut out = Array2::zeros(f.raw_dim());
        apply_into(self.graph, self.edge_values(), f, &mut out);
        Ok(out)
    }

    /// `Σ_{i<j} wD_ij ‖f(i) − f(j)‖²`.
    pub fn energy(&self, f: ArrayView2<'_, f64>) -> Result<f64> {
        check_shape(self.graph, f, self.edge_values())?;
        Ok(energy(self.graph, self.edge_values(), f))
    }
}

/// Isotropic normalized Laplacian `L f`.
pub fn apply_isotropic(graph: &Graph, f: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    LaplacianOperator::isotropic(graph).apply(f)
}

/// Anisotropic Laplacian `L^D f`, still normalized by the isotropic degrees.
pub fn apply_anisotropic(
    graph: &Graph,
    weights: &AnisotropicWeights,
    f: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    LaplacianOperator::anisotropic(graph, weights).apply(f)
}

/// `Σ_{i<j} wD_ij ‖f(i) − f(j)‖²`, i.e. `fᵀ Diag(d) L^D f` summed over columns.
pub fn regularizer_energy(
    graph: &Graph,
    weights: &AnisotropicWeights,
    f: ArrayView2<'_, f64>,
) -> Result<f64> {
    LaplacianOperator::anisotropic(graph, weights).energy(f)
}

fn check_shape(graph: &Graph, f: ArrayView2<'_, f64>, edges: &[f64]) -> Result<()> {
    if f.nrows() != graph.n() {
        return Err(Error::Shape {
            expected: format!("{} rows", graph.n()),
            actual: format!("{} rows", f.nrows()),
        });
    }
    if edges.len() != graph.nnz() {
        return Err(Error::Shape {
            expected: format!("{} edge weights", graph.nnz()),
            actual: format!("{}", edges.len()),
        });
    }
    Ok(())
}

/// Writes `L f` for the given CSR-aligned edge weights into `out`.
pub(crate) fn apply_into(
    graph: &Graph,
    edges: &[f64],
    f: ArrayView2<'_, f64>,
    out: &mut Array2<f64>,
) {
    let f = f.as_standard_layout();
    let c = f.ncols();
    let src = f.as_slice().expect("standard layout");
    let cols = graph.cols();
    let degrees = graph.degrees();
    let dst = out.as_slice_mut().expect("output is standard layout");
    graph.execution().for_each_chunk(dst, c.max(1), |i, acc| {
        if c == 0 {
            return;
        }
        acc.fill(0.0);
        let fi = &src[i * c..(i + 1) * c];
        for p in graph.row_range(i) {
            let w = edges[p];
            let fj = &src[cols[p] * c..(cols[p] + 1) * c];
            for ((a, x), y) in acc.iter_mut().zip(fi).zip(fj) {
                *a += w * (x - y);
            }
        }
        let d = degrees[i];
        for a in acc.iter_mut() {
            *a /= d;
        }
    });
}

pub(crate) fn energy(graph: &Graph, edges: &[f64], f: ArrayView2<'_, f64>) -> f64 {
    let f = f.as_standard_layout();
    let c = f.ncols();
    let src = f.as_slice().expect("standard layout");
    let cols = graph.cols();
    let per_row = graph.execution().map_range(graph.n(), |i| {
        let fi = &src[i * c..(i + 1) * c];
        graph
            .row_range(i)
            .filter(|&p| cols[p] > i)
            .map(|p| {
                let fj = &src[cols[p] * c..(cols[p] + 1) * c];
                let d2: f64 = fi.iter().zip(fj).map(|(x, y)| (x - y) * (x - y)).sum();
                edges[p] * d2
            })
            .sum::<f64>()
    });
    per_row.into_iter().sum()
}
