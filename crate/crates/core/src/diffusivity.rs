//! Edge diffusivities and the anisotropic edge weights built from them.
//!
//! All fields are stored aligned with the graph's CSR slots, so `q[p]` and
//! `wD[p]` belong to the edge `(graph.row_of(p), graph.cols()[p])`.

use std::io::Write;

use ndarray::ArrayView2;

use crate::graph::{gaussian_kernel, Graph, Neighborhoods};
use crate::{Error, Result};

/// Per-edge eigenvalues `q_ij` of the diffusivity operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusivityField {
    q: Vec<f64>,
    sigma_f: f64,
}

impl DiffusivityField {
    /// Wraps explicit values; they must be positive, at most one and symmetric.
    pub fn from_values(graph: &Graph, q: Vec<f64>, sigma_f: f64) -> Result<Self> {
        check_aligned(graph, &q)?;
        if let Some(p) = q.iter().position(|&v| !(v > 0.0 && v <= 1.0)) {
            return Err(Error::Input(format!("q[{p}] = {} not in (0, 1]", q[p])));
        }
        if let Some(p) = (0..q.len()).find(|&p| q[p] != q[graph.mirror()[p]]) {
            return Err(Error::Input(format!("q is not symmetric at slot {p}")));
        }
        Ok(Self { q, sigma_f })
    }

    /// `q ≡ 1`, the isotropic diffusivity.
    pub fn unit(graph: &Graph) -> Self {
        Self {
            q: vec![1.0; graph.nnz()],
            sigma_f: f64::INFINITY,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    pub fn sigma_f(&self) -> f64 {
        self.sigma_f
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WeightVariant {
    Plain,
    Smooth,
    LocalMatch,
}

/// Reweighted edges `wD_ij` defining the anisotropic Laplacian.
#[derive(Clone, Debug, PartialEq)]
pub struct AnisotropicWeights {
    values: Vec<f64>,
    variant: WeightVariant,
}

impl AnisotropicWeights {
    /// Wraps explicit values; they must be strictly positive. Symmetry is not
    /// checked here, see [`symmetrize`].
    pub fn from_values(graph: &Graph, values: Vec<f64>, variant: WeightVariant) -> Result<Self> {
        check_aligned(graph, &values)?;
        if let Some(p) = values.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Input(format!(
                "anisotropic weight at slot {p} is {} (must be positive)",
                values[p]
            )));
        }
        Ok(Self { values, variant })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn variant(&self) -> WeightVariant {
        self.variant
    }

    /// Largest `|wD_ij − wD_ji|` over all edges.
    pub fn max_asymmetry(&self, graph: &Graph) -> f64 {
        let m = graph.mirror();
        (0..self.values.len())
            .map(|p| (self.values[p] - self.values[m[p]]).abs())
            .fold(0.0, f64::max)
    }
}

fn check_aligned(graph: &Graph, values: &[f64]) -> Result<()> {
    if values.len() != graph.nnz() {
        return Err(Error::Shape {
            expected: format!("{} edge slots", graph.nnz()),
            actual: format!("{}", values.len()),
        });
    }
    Ok(())
}

fn check_f(graph: &Graph, f: ArrayView2<'_, f64>) -> Result<()> {
    if f.nrows() != graph.n() {
        return Err(Error::Shape {
            expected: format!("{} rows", graph.n()),
            actual: format!("{} rows", f.nrows()),
        });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("function values must be finite".into()));
    }
    Ok(())
}

fn check_sigma(sigma_f: f64) -> Result<()> {
    if !(sigma_f > 0.0) || sigma_f.is_nan() {
        return Err(Error::Parameter(format!(
            "sigma_f must be positive, got {sigma_f}"
        )));
    }
    Ok(())
}

fn neighborhoods(graph: &Graph) -> Result<&Neighborhoods> {
    graph.neighborhoods().ok_or_else(|| {
        Error::Input("context-guided weights need the graph's K-neighbor lists".into())
    })
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Gaussian diffusivity `q_ij = exp(−w_ij‖f(j) − f(i)‖² / σ_f²)`.
pub fn gaussian_diffusivity(
    graph: &Graph,
    f: ArrayView2<'_, f64>,
    sigma_f: f64,
) -> Result<DiffusivityField> {
    check_f(graph, f)?;
    check_sigma(sigma_f)?;
    let f = f.as_standard_layout();
    let c = f.ncols();
    let rows = f.as_slice().expect("standard layout");
    let scale = sigma_f * sigma_f;
    let mut q = vec![0.0; graph.nnz()];
    fill_rows(graph, &mut q, |i, p, j| {
        let d2 = squared_distance(&rows[i * c..(i + 1) * c], &rows[j * c..(j + 1) * c]);
        gaussian_kernel(graph.weights()[p] * d2, scale)
    });
    Ok(DiffusivityField { q, sigma_f })
}

/// Fills a CSR-aligned vector row by row with `value(row, slot, col)`.
fn fill_rows<F>(graph: &Graph, out: &mut [f64], value: F)
where
    F: Fn(usize, usize, usize) -> f64 + Sync + Send,
{
    let rows = graph.execution().map_range(graph.n(), |i| {
        graph
            .row_range(i)
            .map(|p| value(i, p, graph.cols()[p]))
            .collect::<Vec<_>>()
    });
    for (i, row) in rows.into_iter().enumerate() {
        out[graph.row_range(i)].copy_from_slice(&row);
    }
}

/// `wD_ij = w_ij · q_ij`.
pub fn plain_weights(graph: &Graph, q: &DiffusivityField) -> Result<AnisotropicWeights> {
    check_aligned(graph, &q.q)?;
    let values = graph
        .weights()
        .iter()
        .zip(&q.q)
        .map(|(w, q)| w * q)
        .collect();
    Ok(AnisotropicWeights {
        values,
        variant: WeightVariant::Plain,
    })
}

/// Smooth diffusivity over the mutual neighborhood `N_K(i) ∩ N_K(j)`:
///
/// `wD_ij = Σ_k w_ij (q_ij + q_ik q_kj) / (s_i + s_j)`, `s_i = Σ_{k ∈ N_K(i)} q_ik`.
///
/// Edges whose endpoints share no neighbor fall back to `w_ij q_ij`.
pub fn smooth_weights(graph: &Graph, q: &DiffusivityField) -> Result<AnisotropicWeights> {
    check_aligned(graph, &q.q)?;
    let nbhd = neighborhoods(graph)?;
    let k = nbhd.k();
    let n = graph.n();
    let exec = graph.execution();
    let qv = &q.q;

    // CSR slots of each node's neighbors, in index order.
    let sorted_slots: Vec<Vec<usize>> = exec.map_range(n, |i| {
        nbhd.sorted(i)
            .iter()
            .map(|&j| graph.slot(i, j).expect("neighbors are adjacent"))
            .collect()
    });
    let s: Vec<f64> = exec.map_range(n, |i| {
        nbhd.get(i)
            .iter()
            .map(|&j| qv[graph.slot(i, j).expect("neighbors are adjacent")])
            .sum()
    });

    let mut raw = vec![0.0; graph.nnz()];
    fill_rows(graph, &mut raw, |i, p, j| {
        let (a, b) = (nbhd.sorted(i), nbhd.sorted(j));
        let (sa, sb) = (&sorted_slots[i], &sorted_slots[j]);
        let (mut x, mut y) = (0, 0);
        let mut acc = 0.0;
        let mut shared = 0;
        while x < k && y < k {
            match a[x].cmp(&b[y]) {
                std::cmp::Ordering::Less => x += 1,
                std::cmp::Ordering::Greater => y += 1,
                std::cmp::Ordering::Equal => {
                    acc += qv[p] + qv[sa[x]] * qv[sb[y]];
                    shared += 1;
                    x += 1;
                    y += 1;
                }
            }
        }
        let w = graph.weights()[p];
        if shared == 0 {
            return w * qv[p];
        }
        let denom = s[i] + s[j];
        if !(denom > 0.0) {
            return f64::NAN;
        }
        w * acc / denom
    });
    if let Some(p) = raw.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Internal(format!(
            "smooth diffusivity produced a non-positive weight at slot {p}"
        )));
    }
    Ok(symmetrize(
        graph,
        AnisotropicWeights {
            values: raw,
            variant: WeightVariant::Smooth,
        },
    ))
}

/// Local-match diffusivity:
///
/// `wD_ij = w_ij q_ij Σ_{k ∈ N_K(i)} (1 + q*_kj) / (K + 1)` with
/// `q*_kj = max_{l ∈ N_K(j)} exp(−‖f(k) − f(l)‖² / σ_f²)`,
/// averaged with the `(j, i)` evaluation.
pub fn local_match_weights(
    graph: &Graph,
    q: &DiffusivityField,
    f: ArrayView2<'_, f64>,
    sigma_f: f64,
) -> Result<AnisotropicWeights> {
    check_aligned(graph, &q.q)?;
    check_f(graph, f)?;
    check_sigma(sigma_f)?;
    let nbhd = neighborhoods(graph)?;
    let k = nbhd.k();
    let f = f.as_standard_layout();
    let c = f.ncols();
    let rows = f.as_slice().expect("standard layout");
    let row = |i: usize| &rows[i * c..(i + 1) * c];
    let scale = sigma_f * sigma_f;
    let norm = (k + 1) as f64;

    // Row j of `raw` holds the evaluations for the edges (i, j), i adjacent to j.
    // q*_kj only depends on (k, j), so it is computed once per candidate k.
    let by_target = graph.execution().map_range(graph.n(), |j| {
        let targets = nbhd.get(j);
        let mut candidates: Vec<usize> = graph
            .neighbors(j)
            .iter()
            .flat_map(|&i| nbhd.get(i).iter().copied())
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        let best: Vec<f64> = candidates
            .iter()
            .map(|&kk| {
                if nbhd.contains(j, kk) {
                    // l = k is among the targets.
                    return gaussian_kernel(0.0, scale);
                }
                let fk = row(kk);
                let d2 = targets
                    .iter()
                    .map(|&l| squared_distance(fk, row(l)))
                    .fold(f64::INFINITY, f64::min);
                gaussian_kernel(d2, scale)
            })
            .collect();
        graph
            .row_range(j)
            .map(|p| {
                let i = graph.cols()[p];
                let support: f64 = nbhd
                    .get(i)
                    .iter()
                    .map(|kk| {
                        let at = candidates.binary_search(kk).expect("candidate present");
                        1.0 + best[at]
                    })
                    .sum();
                graph.weights()[p] * q.q[p] * support / norm
            })
            .collect::<Vec<_>>()
    });
    let mut raw = vec![0.0; graph.nnz()];
    for (j, vals) in by_target.into_iter().enumerate() {
        raw[graph.row_range(j)].copy_from_slice(&vals);
    }
    // The slot (j, i) holds the (i, j) evaluation; averaging with the mirror
    // slot is the symmetrization step either way.
    Ok(symmetrize(
        graph,
        AnisotropicWeights {
            values: raw,
            variant: WeightVariant::LocalMatch,
        },
    ))
}

/// Replaces `wD_ij` and `wD_ji` by their mean. The result is exactly symmetric.
pub fn symmetrize(graph: &Graph, mut weights: AnisotropicWeights) -> AnisotropicWeights {
    let mirror = graph.mirror();
    let v = &weights.values;
    let values = (0..v.len())
        .map(|p| {
            let (a, b) = (v[p], v[mirror[p]]);
            if a == b {
                a
            } else {
                0.5 * (a + b)
            }
        })
        .collect();
    weights.values = values;
    weights
}

/// Writes `i j q_ij wD_ij` lines for `i < j`.
pub fn write_dump<W: Write>(
    graph: &Graph,
    q: &DiffusivityField,
    weights: &AnisotropicWeights,
    mut out: W,
) -> std::io::Result<()> {
    for i in 0..graph.n() {
        for p in graph.row_range(i) {
            let j = graph.cols()[p];
            if j > i {
                writeln!(
                    out,
                    "{i} {j} {} {}",
                    crate::io::fmt_f64(q.q[p]),
                    crate::io::fmt_f64(weights.values[p])
                )?;
            }
        }
    }
    Ok(())
}
