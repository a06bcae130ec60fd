//! Dense brute-force reference implementations, written directly from the
//! formulas with plain loops over `n × n` matrices. They share no code with
//! the sparse implementations under test.
#![allow(dead_code, clippy::needless_range_loop)]

use ctxdiff::graph::{knn_graph, FeatureMatrix};
use ctxdiff::Graph;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FLOOR: f64 = 1e-150;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>())
}

/// A dense kNN graph: weights, neighbor lists and degrees.
pub struct Dense {
    pub n: usize,
    pub w: Vec<f64>,
    pub nbhd: Vec<Vec<usize>>,
    pub degree: Vec<f64>,
    pub sigma_x: f64,
}

impl Dense {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }
}

pub fn euclidean(x: &Array2<f64>, i: usize, j: usize) -> f64 {
    let mut s = 0.0;
    for t in 0..x.ncols() {
        s += (x[[i, t]] - x[[j, t]]).powi(2);
    }
    s.sqrt()
}

/// kNN by full sort, σ_x from mean neighbor distance, Gaussian weights on the
/// symmetric union of neighbor relations.
pub fn dense_knn(x: &Array2<f64>, k: usize) -> Dense {
    let n = x.nrows();
    let mut nbhd = Vec::with_capacity(n);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| {
            euclidean(x, i, a)
                .partial_cmp(&euclidean(x, i, b))
                .unwrap()
                .then(a.cmp(&b))
        });
        order.truncate(k);
        nbhd.push(order);
    }
    let mut total = 0.0;
    for i in 0..n {
        for &j in &nbhd[i] {
            total += euclidean(x, i, j);
        }
    }
    let mean = total / (n * k) as f64;
    let sigma_x = mean * mean;
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for &j in &nbhd[i] {
            let d = euclidean(x, i, j);
            let v = (-d * d / sigma_x).exp().max(FLOOR);
            w[i * n + j] = v;
            w[j * n + i] = v;
        }
    }
    let degree = (0..n).map(|i| (0..n).map(|j| w[i * n + j]).sum()).collect();
    Dense {
        n,
        w,
        nbhd,
        degree,
        sigma_x,
    }
}

/// Random features whose kNN graph is connected, with both representations.
pub fn connected_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    k: usize,
    dim: usize,
) -> (Array2<f64>, Graph) {
    for _ in 0..1000 {
        let x = uniform_matrix(rng, n, dim);
        let g = knn_graph(&FeatureMatrix::new(x.clone()).unwrap().distances(), k).unwrap();
        if g.is_connected() {
            return (x, g);
        }
    }
    panic!("no connected kNN graph with n = {n}, K = {k}");
}

/// `[L f](i) = (1/d_i) Σ_j a_ij (f(i) − f(j))` for a dense edge matrix `a`.
pub fn laplacian(a: &[f64], degree: &[f64], f: &Array2<f64>) -> Array2<f64> {
    let n = degree.len();
    let mut out = Array2::zeros(f.raw_dim());
    for i in 0..n {
        for c in 0..f.ncols() {
            let mut s = 0.0;
            for j in 0..n {
                s += a[i * n + j] * (f[[i, c]] - f[[j, c]]);
            }
            out[[i, c]] = s / degree[i];
        }
    }
    out
}

/// `Σ_{i<j} a_ij ‖f(i) − f(j)‖²`.
pub fn energy(a: &[f64], f: &Array2<f64>) -> f64 {
    let n = f.nrows();
    let mut e = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d2 = 0.0;
            for c in 0..f.ncols() {
                d2 += (f[[i, c]] - f[[j, c]]).powi(2);
            }
            e += a[i * n + j] * d2;
        }
    }
    e
}

fn sq_dist(f: &Array2<f64>, i: usize, j: usize) -> f64 {
    (0..f.ncols())
        .map(|c| (f[[i, c]] - f[[j, c]]).powi(2))
        .sum()
}

/// `q_ij = exp(−w_ij ‖f(j) − f(i)‖² / σ_f²)` on edges, 0 elsewhere.
pub fn diffusivity(g: &Dense, f: &Array2<f64>, sigma_f: f64) -> Vec<f64> {
    let n = g.n;
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if g.at(i, j) > 0.0 {
                q[i * n + j] = (-g.at(i, j) * sq_dist(f, i, j) / (sigma_f * sigma_f))
                    .exp()
                    .max(FLOOR);
            }
        }
    }
    q
}

pub fn plain(g: &Dense, q: &[f64]) -> Vec<f64> {
    g.w.iter().zip(q).map(|(w, q)| w * q).collect()
}

/// Smooth variant: sum over the shared neighbors `N_K(i) ∩ N_K(j)`,
/// normalized by `s_i + s_j`; `w·q` when nothing is shared.
pub fn smooth(g: &Dense, q: &[f64]) -> Vec<f64> {
    let n = g.n;
    let s: Vec<f64> = (0..n)
        .map(|i| g.nbhd[i].iter().map(|&k| q[i * n + k]).sum())
        .collect();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if g.at(i, j) == 0.0 {
                continue;
            }
            let mut acc = 0.0;
            let mut shared = 0;
            for k in 0..n {
                if g.nbhd[i].contains(&k) && g.nbhd[j].contains(&k) {
                    acc += q[i * n + j] + q[i * n + k] * q[k * n + j];
                    shared += 1;
                }
            }
            out[i * n + j] = if shared == 0 {
                g.at(i, j) * q[i * n + j]
            } else {
                g.at(i, j) * acc / (s[i] + s[j])
            };
        }
    }
    symmetric_mean(n, &out)
}

/// Local-match variant, symmetrized by averaging the two orientations.
pub fn local_match(g: &Dense, q: &[f64], f: &Array2<f64>, sigma_f: f64) -> Vec<f64> {
    let n = g.n;
    let kk = g.nbhd[0].len() as f64;
    let mut raw = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if g.at(i, j) == 0.0 {
                continue;
            }
            let mut support = 0.0;
            for &k in &g.nbhd[i] {
                let mut best: f64 = 0.0;
                for &l in &g.nbhd[j] {
                    best = best.max((-sq_dist(f, k, l) / (sigma_f * sigma_f)).exp().max(FLOOR));
                }
                support += 1.0 + best;
            }
            raw[i * n + j] = g.at(i, j) * q[i * n + j] * support / (kk + 1.0);
        }
    }
    symmetric_mean(n, &raw)
}

fn symmetric_mean(n: usize, a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = 0.5 * (a[i * n + j] + a[j * n + i]);
        }
    }
    out
}

/// Harmonic solution by Gaussian elimination with partial pivoting on the
/// unlabeled block of `D − W`.
pub fn harmonic(g: &Dense, labels: &[(usize, usize)], classes: usize) -> Array2<f64> {
    let n = g.n;
    let mut f = Array2::zeros((n, classes));
    let mut labeled = vec![false; n];
    for &(i, c) in labels {
        f[[i, c]] = 1.0;
        labeled[i] = true;
    }
    let u: Vec<usize> = (0..n).filter(|&i| !labeled[i]).collect();
    let m = u.len();
    let mut a = vec![vec![0.0; m + classes]; m];
    for (r, &i) in u.iter().enumerate() {
        for (s, &j) in u.iter().enumerate() {
            a[r][s] = if i == j { g.degree[i] } else { -g.at(i, j) };
        }
        for j in (0..n).filter(|&j| labeled[j]) {
            for c in 0..classes {
                a[r][m + c] += g.at(i, j) * f[[j, c]];
            }
        }
    }
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        for r in 0..m {
            if r != col {
                let factor = a[r][col] / a[col][col];
                for t in col..(m + classes) {
                    a[r][t] -= factor * a[col][t];
                }
            }
        }
    }
    for (r, &i) in u.iter().enumerate() {
        for c in 0..classes {
            f[[i, c]] = a[r][m + c] / a[r][r];
        }
    }
    f
}

/// Largest `|sparse(i, j) − dense(i, j)|` over the stored slots of `g`.
pub fn slot_gap(g: &Graph, sparse: &[f64], dense: &[f64]) -> f64 {
    let n = g.n();
    let mut gap: f64 = 0.0;
    for i in 0..n {
        for p in g.row_range(i) {
            gap = gap.max((sparse[p] - dense[i * n + g.cols()[p]]).abs());
        }
    }
    gap
}

/// Number of pairs `(i, j)` on which the dense matrix and `g` disagree
/// about adjacency.
pub fn structure_mismatch(g: &Graph, dense: &[f64]) -> usize {
    let n = g.n();
    let mut missing = 0;
    for i in 0..n {
        for j in 0..n {
            if (dense[i * n + j] > 0.0) != g.slot(i, j).is_some() {
                missing += 1;
            }
        }
    }
    missing
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
