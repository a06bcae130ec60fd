//! Gaussian-random-field harmonic solution.
//!
//! Labeled rows are fixed at their one-hot values; unlabeled rows solve
//! `(D_uu − W_uu) f_u = W_ul f_l` with the combinatorial Laplacian of the
//! graph weights. The system matrix is symmetric positive definite whenever
//! every connected component carries a label.

use ndarray::{Array2, ArrayView2};

use crate::diffusion::LabelState;
use crate::graph::Graph;
use crate::{Error, Result};

/// Below this many unlabeled nodes the system is factored densely.
pub const DENSE_LIMIT: usize = 200;
/// Relative residual at which conjugate gradients stop.
pub const CG_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GrfSolver {
    #[default]
    Auto,
    Dense,
    ConjugateGradient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicSolution {
    pub f: Array2<f64>,
}

pub fn grf_harmonic(graph: &Graph, state: &LabelState) -> Result<HarmonicSolution> {
    grf_harmonic_with(graph, state, GrfSolver::Auto)
}

pub fn grf_harmonic_with(
    graph: &Graph,
    state: &LabelState,
    solver: GrfSolver,
) -> Result<HarmonicSolution> {
    let n = graph.n();
    if state.n() != n {
        return Err(Error::Shape {
            expected: format!("{n} nodes"),
            actual: format!("{} nodes", state.n()),
        });
    }
    let labeled = state.labeled_mask();
    let mut has_label = vec![false; graph.component_count()];
    for i in (0..n).filter(|&i| labeled[i]) {
        has_label[graph.components()[i]] = true;
    }
    if let Some(comp) = has_label.iter().position(|&h| !h) {
        let nodes = (0..n).filter(|&i| graph.components()[i] == comp).collect();
        return Err(Error::UnlabeledComponent { nodes });
    }

    let unlabeled: Vec<usize> = (0..n).filter(|&i| !labeled[i]).collect();
    let mut f = state.f().to_owned();
    if unlabeled.is_empty() {
        return Ok(HarmonicSolution { f });
    }
    let system = System::new(graph, &unlabeled);
    let rhs = system.rhs(graph, state.f());
    let use_dense = match solver {
        GrfSolver::Auto => unlabeled.len() < DENSE_LIMIT,
        GrfSolver::Dense => true,
        GrfSolver::ConjugateGradient => false,
    };
    let solution = if use_dense {
        system.solve_dense(graph, &rhs)?
    } else {
        system.solve_cg(graph, &rhs)?
    };
    for (r, &i) in unlabeled.iter().enumerate() {
        f.row_mut(i).assign(&solution.row(r));
    }
    Ok(HarmonicSolution { f })
}

/// The unlabeled block of the combinatorial Laplacian.
struct System<'a> {
    unlabeled: &'a [usize],
    /// Position of each node in `unlabeled`, `usize::MAX` when labeled.
    position: Vec<usize>,
}

impl<'a> System<'a> {
    fn new(graph: &Graph, unlabeled: &'a [usize]) -> Self {
        let mut position = vec![usize::MAX; graph.n()];
        for (r, &i) in unlabeled.iter().enumerate() {
            position[i] = r;
        }
        Self {
            unlabeled,
            position,
        }
    }

    fn size(&self) -> usize {
        self.unlabeled.len()
    }

    /// `W_ul f_l`.
    fn rhs(&self, graph: &Graph, f: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut b = Array2::zeros((self.size(), f.ncols()));
        for (r, &i) in self.unlabeled.iter().enumerate() {
            for p in graph.row_range(i) {
                let j = graph.cols()[p];
                if self.position[j] == usize::MAX {
                    let w = graph.weights()[p];
                    b.row_mut(r).scaled_add(w, &f.row(j));
                }
            }
        }
        b
    }

    /// `(D_uu − W_uu) x` for one column.
    fn apply(&self, graph: &Graph, x: &[f64], out: &mut [f64]) {
        for (r, &i) in self.unlabeled.iter().enumerate() {
            let mut acc = graph.degree(i) * x[r];
            for p in graph.row_range(i) {
                let s = self.position[graph.cols()[p]];
                if s != usize::MAX {
                    acc -= graph.weights()[p] * x[s];
                }
            }
            out[r] = acc;
        }
    }

    fn solve_dense(&self, graph: &Graph, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        let m = self.size();
        let mut a = vec![0.0; m * m];
        for (r, &i) in self.unlabeled.iter().enumerate() {
            a[r * m + r] = graph.degree(i);
            for p in graph.row_range(i) {
                let s = self.position[graph.cols()[p]];
                if s != usize::MAX {
                    a[r * m + s] -= graph.weights()[p];
                }
            }
        }
        let chol = cholesky(&mut a, m)?;
        let mut x = rhs.clone();
        for mut col in x.columns_mut() {
            let mut v = col.to_vec();
            chol.solve_in_place(&mut v);
            col.assign(&ndarray::ArrayView1::from(&v));
        }
        Ok(x)
    }

    fn solve_cg(&self, graph: &Graph, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        let m = self.size();
        let precond: Vec<f64> = self
            .unlabeled
            .iter()
            .map(|&i| 1.0 / graph.degree(i))
            .collect();
        let cols: Vec<Vec<f64>> = graph.execution().map_range(rhs.ncols(), |k| {
            let b = rhs.column(k).to_vec();
            self.conjugate_gradient(graph, &b, &precond)
        });
        let mut x = Array2::zeros((m, rhs.ncols()));
        for (k, col) in cols.into_iter().enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::Internal(
                    "conjugate gradients did not converge".into(),
                ));
            }
            x.column_mut(k).assign(&ndarray::ArrayView1::from(&col));
        }
        Ok(x)
    }

    /// Jacobi-preconditioned conjugate gradients for one right-hand side.
    fn conjugate_gradient(&self, graph: &Graph, b: &[f64], precond: &[f64]) -> Vec<f64> {
        let m = b.len();
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let b_norm = dot(b, b).sqrt();
        let mut x = vec![0.0; m];
        if b_norm == 0.0 {
            return x;
        }
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(precond).map(|(r, p)| r * p).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; m];
        let mut rz = dot(&r, &z);
        for _ in 0..(10 * m).max(100) {
            self.apply(graph, &p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for k in 0..m {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            if dot(&r, &r).sqrt() <= CG_TOLERANCE * b_norm {
                return x;
            }
            for k in 0..m {
                z[k] = r[k] * precond[k];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..m {
                p[k] = z[k] + beta * p[k];
            }
        }
        log::warn!("conjugate gradients hit the iteration limit");
        x
    }
}

/// Lower-triangular Cholesky factor stored row-major.
struct Cholesky {
    l: Vec<f64>,
    m: usize,
}

fn cholesky(a: &mut [f64], m: usize) -> Result<Cholesky> {
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= a[j * m + k] * a[j * m + k];
        }
        if !(d > 0.0) {
            return Err(Error::Internal(
                "harmonic system is not positive definite".into(),
            ));
        }
        let d = d.sqrt();
        a[j * m + j] = d;
        for i in (j + 1)..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k];
            }
            a[i * m + j] = s / d;
        }
    }
    Ok(Cholesky { l: a.to_vec(), m })
}

impl Cholesky {
    fn solve_in_place(&self, b: &mut [f64]) {
        let (l, m) = (&self.l, self.m);
        for i in 0..m {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * m + k] * b[k];
            }
            b[i] = s / l[i * m + i];
        }
        for i in (0..m).rev() {
            let mut s = b[i];
            for k in (i + 1)..m {
                s -= l[k * m + i] * b[k];
            }
            b[i] = s / l[i * m + i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::init_labels;

    #[test]
    fn path_midpoint() {
        let g = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let s = init_labels(&[(0, 0), (2, 1)], 3, 2).unwrap();
        for solver in [GrfSolver::Dense, GrfSolver::ConjugateGradient] {
            let h = grf_harmonic_with(&g, &s, solver).unwrap();
            assert!((h.f[[1, 1]] - 0.5).abs() <= 1e-12);
            assert!((h.f[[1, 0]] - 0.5).abs() <= 1e-12);
        }
    }

    #[test]
    fn all_labeled_passes_through() {
        let g = Graph::from_edges(3, &[(0, 1, 0.3), (1, 2, 1.0)]).unwrap();
        let s = init_labels(&[(0, 0), (1, 1), (2, 0)], 3, 2).unwrap();
        assert_eq!(grf_harmonic(&g, &s).unwrap().f, s.f());
    }

    #[test]
    fn unlabeled_component_is_an_error() {
        let g = Graph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let s = init_labels(&[(0, 0)], 4, 1).unwrap();
        match grf_harmonic(&g, &s) {
            Err(Error::UnlabeledComponent { nodes }) => assert_eq!(nodes, vec![2, 3]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
