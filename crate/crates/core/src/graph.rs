//! kNN similarity graphs.
//!
//! A [`Graph`] is a symmetric CSR adjacency built from the union of the
//! per-node K-nearest neighborhoods, weighted by a Gaussian kernel on the
//! pairwise distances. The directed neighbor lists are kept alongside the
//! adjacency since the context-guided diffusivities need them.

use std::io::Write;

use ndarray::{Array2, ArrayView2};

use crate::exec::Execution;
use crate::{Error, Result, POSITIVE_FLOOR};

/// Asymmetry tolerated by [`DistanceMatrix::new`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Point coordinates, one row per point.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, d) = values.dim();
        if n < 2 {
            return Err(Error::Input(format!("need at least 2 points, got {n}")));
        }
        if d < 1 {
            return Err(Error::Input("feature dimension must be at least 1".into()));
        }
        if let Some(((i, j), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite feature at row {i}, column {j}"
            )));
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Pairwise Euclidean distances.
    pub fn distances(&self) -> DistanceMatrix {
        let n = self.n();
        let x = &self.values;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d2: f64 = x
                    .row(i)
                    .iter()
                    .zip(x.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let d = d2.sqrt();
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        DistanceMatrix { n, values }
    }
}

/// Dense symmetric matrix of pairwise distances with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates a row-major `n × n` distance matrix.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        let (m, asym) = Self::symmetrized(n, values)?;
        if asym > SYMMETRY_TOLERANCE {
            return Err(Error::Input(format!(
                "distance matrix is not symmetric (max |d_ij - d_ji| = {asym:e})"
            )));
        }
        Ok(m)
    }

    /// Builds a distance matrix, replacing each off-diagonal pair by its mean.
    /// Also returns the largest asymmetry that was averaged away.
    pub fn symmetrized(n: usize, mut values: Vec<f64>) -> Result<(Self, f64)> {
        if n < 2 {
            return Err(Error::Input(format!("need at least 2 points, got {n}")));
        }
        if values.len() != n * n {
            return Err(Error::Shape {
                expected: format!("{n}x{n} = {} entries", n * n),
                actual: format!("{} entries", values.len()),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Input(format!(
                        "distance ({i}, {j}) = {v} is not a finite non-negative number"
                    )));
                }
            }
            if values[i * n + i] != 0.0 {
                return Err(Error::Input(format!("distance ({i}, {i}) is not zero")));
            }
        }
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                asym = asym.max((a - b).abs());
                if a != b {
                    let m = 0.5 * (a + b);
                    values[i * n + j] = m;
                    values[j * n + i] = m;
                }
            }
        }
        Ok((Self { n, values }, asym))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Per-node K-nearest neighbor lists, each sorted by ascending distance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhoods {
    k: usize,
    by_distance: Vec<usize>,
    by_index: Vec<usize>,
}

impl Neighborhoods {
    /// Wraps explicit neighbor lists. All lists must have the same length,
    /// exclude their own node and contain no duplicates.
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists.len();
        let k = lists.first().map_or(0, Vec::len);
        if k == 0 {
            return Err(Error::Parameter("neighborhoods must be nonempty".into()));
        }
        let mut by_distance = Vec::with_capacity(n * k);
        let mut by_index = Vec::with_capacity(n * k);
        for (i, list) in lists.into_iter().enumerate() {
            if list.len() != k {
                return Err(Error::Input(format!(
                    "neighborhood of node {i} has {} entries, expected {k}",
                    list.len()
                )));
            }
            let mut sorted = list.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) || sorted.contains(&i) {
                return Err(Error::Input(format!(
                    "neighborhood of node {i} contains duplicates or the node itself"
                )));
            }
            if sorted.last().is_some_and(|&m| m >= n) {
                return Err(Error::Input(format!(
                    "neighborhood of node {i} is out of range"
                )));
            }
            by_distance.extend(list);
            by_index.extend(sorted);
        }
        Ok(Self {
            k,
            by_distance,
            by_index,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.by_distance.len() / self.k
    }

    /// Neighbors of `i` in ascending distance order.
    pub fn get(&self, i: usize) -> &[usize] {
        &self.by_distance[i * self.k..(i + 1) * self.k]
    }

    /// Neighbors of `i` in ascending index order.
    pub fn sorted(&self, i: usize) -> &[usize] {
        &self.by_index[i * self.k..(i + 1) * self.k]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.sorted(i).binary_search(&j).is_ok()
    }
}

/// Exact K-nearest neighborhoods. Ties in distance go to the smaller index.
pub fn knn_neighborhoods(dist: &DistanceMatrix, k: usize) -> Result<Neighborhoods> {
    knn_neighborhoods_with(Execution::default(), dist, k)
}

pub fn knn_neighborhoods_with(
    exec: Execution,
    dist: &DistanceMatrix,
    k: usize,
) -> Result<Neighborhoods> {
    let n = dist.n();
    if k < 1 || k > n - 1 {
        return Err(Error::Parameter(format!(
            "K must be in [1, {}], got {k}",
            n - 1
        )));
    }
    let lists = exec.map_range(n, |i| {
        let row = dist.row(i);
        let by_key = |a: &usize, b: &usize| row[*a].total_cmp(&row[*b]).then(a.cmp(b));
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        if k < others.len() {
            others.select_nth_unstable_by(k - 1, by_key);
            others.truncate(k);
        }
        others.sort_unstable_by(by_key);
        others
    });
    Neighborhoods::from_lists(lists)
}

/// Kernel width: the squared mean distance from each node to its K neighbors.
pub fn auto_sigma_x(dist: &DistanceMatrix, nbhd: &Neighborhoods) -> Result<f64> {
    let n = nbhd.n();
    let mut total = 0.0;
    for i in 0..n {
        for &j in nbhd.get(i) {
            total += dist.get(i, j);
        }
    }
    let mean = total / (n * nbhd.k()) as f64;
    let sigma = mean * mean;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Degenerate(
            "all neighbor distances are zero; cannot set the kernel width".into(),
        ));
    }
    Ok(sigma)
}

#[inline]
pub(crate) fn gaussian_kernel(d2: f64, scale: f64) -> f64 {
    (-d2 / scale).exp().max(POSITIVE_FLOOR)
}

/// Weights `exp(-dist²/σ_x)` on the symmetric union of the neighborhoods.
pub fn gaussian_weights(
    dist: &DistanceMatrix,
    sigma_x: f64,
    nbhd: &Neighborhoods,
) -> Result<Graph> {
    if !(sigma_x > 0.0) || !sigma_x.is_finite() {
        return Err(Error::Parameter(format!(
            "sigma_x must be positive, got {sigma_x}"
        )));
    }
    if nbhd.n() != dist.n() {
        return Err(Error::Shape {
            expected: format!("{} neighborhoods", dist.n()),
            actual: format!("{}", nbhd.n()),
        });
    }
    let n = dist.n();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, adj) in adjacency.iter_mut().enumerate() {
        adj.extend_from_slice(nbhd.get(i));
    }
    for i in 0..n {
        for &j in nbhd.get(i) {
            adjacency[j].push(i);
        }
    }
    let mut edges = Vec::new();
    for (i, adj) in adjacency.iter_mut().enumerate() {
        adj.sort_unstable();
        adj.dedup();
        for &j in adj.iter().filter(|&&j| j > i) {
            let d = dist.get(i, j);
            edges.push((i, j, gaussian_kernel(d * d, sigma_x)));
        }
    }
    let mut graph = Graph::from_edges(n, &edges)?;
    graph.neighborhoods = Some(nbhd.clone());
    graph.sigma_x = Some(sigma_x);
    if graph.component_count() > 1 {
        log::warn!(
            "kNN graph (K = {}) has {} connected components; diffusion cannot cross them",
            nbhd.k(),
            graph.component_count()
        );
    }
    Ok(graph)
}

/// kNN neighborhoods, automatic kernel width and Gaussian weights in one go.
pub fn knn_graph(dist: &DistanceMatrix, k: usize) -> Result<Graph> {
    knn_graph_with(Execution::default(), dist, k)
}

pub fn knn_graph_with(exec: Execution, dist: &DistanceMatrix, k: usize) -> Result<Graph> {
    let nbhd = knn_neighborhoods_with(exec, dist, k)?;
    let sigma_x = auto_sigma_x(dist, &nbhd)?;
    Ok(gaussian_weights(dist, sigma_x, &nbhd)?.with_execution(exec))
}

/// Symmetric weighted graph in CSR form.
///
/// Column indices are sorted within each row. `mirror[p]` is the slot of the
/// reverse edge of slot `p`.
#[derive(Clone, Debug)]
pub struct Graph {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    mirror: Vec<usize>,
    degrees: Vec<f64>,
    component: Vec<usize>,
    component_count: usize,
    neighborhoods: Option<Neighborhoods>,
    sigma_x: Option<f64>,
    exec: Execution,
}

impl Graph {
    /// Builds a graph from undirected edges `(i, j, w)`. Each pair may appear
    /// once, in either orientation; weights must lie in `(0, 1]`.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Input(format!(
                    "edge ({i}, {j}) out of range for n = {n}"
                )));
            }
            if i == j {
                return Err(Error::Input(format!("self-loop at node {i}")));
            }
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::Input(format!(
                    "edge ({i}, {j}) weight {w} not in (0, 1]"
                )));
            }
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        row_ptr.push(0);
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(j, _)| j);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Input(format!("duplicate edge at node {i}")));
            }
            if row.is_empty() {
                return Err(Error::Degenerate(format!("node {i} is isolated")));
            }
            for &(j, w) in row.iter() {
                cols.push(j);
                weights.push(w);
            }
            row_ptr.push(cols.len());
        }
        let degrees = (0..n)
            .map(|i| weights[row_ptr[i]..row_ptr[i + 1]].iter().sum())
            .collect();
        let mut graph = Graph {
            n,
            row_ptr,
            cols,
            weights,
            mirror: Vec::new(),
            degrees,
            component: Vec::new(),
            component_count: 0,
            neighborhoods: None,
            sigma_x: None,
            exec: Execution::default(),
        };
        graph.mirror = (0..graph.cols.len())
            .map(|p| {
                let i = graph.row_of(p);
                graph
                    .slot(graph.cols[p], i)
                    .expect("adjacency is symmetric")
            })
            .collect();
        graph.label_components();
        Ok(graph)
    }

    /// Attaches K-neighbor lists. Every listed neighbor must be adjacent.
    pub fn with_neighborhoods(mut self, nbhd: Neighborhoods) -> Result<Self> {
        if nbhd.n() != self.n {
            return Err(Error::Shape {
                expected: format!("{} neighborhoods", self.n),
                actual: format!("{}", nbhd.n()),
            });
        }
        for i in 0..self.n {
            if let Some(&j) = nbhd.get(i).iter().find(|&&j| self.slot(i, j).is_none()) {
                return Err(Error::NotAnEdge { i, j });
            }
        }
        self.neighborhoods = Some(nbhd);
        Ok(self)
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    fn label_components(&mut self) {
        let mut component = vec![usize::MAX; self.n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.n {
            if component[start] != usize::MAX {
                continue;
            }
            component[start] = count;
            stack.push(start);
            while let Some(i) = stack.pop() {
                for &j in self.neighbors(i) {
                    if component[j] == usize::MAX {
                        component[j] = count;
                        stack.push(j);
                    }
                }
            }
            count += 1;
        }
        self.component = component;
        self.component_count = count;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored directed entries (twice the number of edges).
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn num_edges(&self) -> usize {
        self.cols.len() / 2
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Edge weights aligned with [`Graph::cols`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mirror(&self) -> &[usize] {
        &self.mirror
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.cols[self.row_range(i)]
    }

    /// Row owning CSR slot `p`.
    pub fn row_of(&self, p: usize) -> usize {
        self.row_ptr.partition_point(|&start| start <= p) - 1
    }

    /// CSR slot of edge `(i, j)`.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_range(i);
        self.cols[r.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| r.start + k)
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.slot(i, j).map(|p| self.weights[p])
    }

    pub fn neighborhoods(&self) -> Option<&Neighborhoods> {
        self.neighborhoods.as_ref()
    }

    pub fn sigma_x(&self) -> Option<f64> {
        self.sigma_x
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    pub fn is_connected(&self) -> bool {
        self.component_count == 1
    }

    /// Connected-component id of every node.
    pub fn components(&self) -> &[usize] {
        &self.component
    }

    /// Undirected edges `(i, j, w)` with `i < j` in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.row_range(i)
                .filter(move |&p| self.cols[p] > i)
                .map(move |p| (i, self.cols[p], self.weights[p]))
        })
    }

    /// Writes `i j w` lines for `i < j`.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, j, w) in self.edges() {
            writeln!(out, "{i} {j} {}", crate::io::fmt_f64(w))?;
        }
        Ok(())
    }
}

/// `√w_ij · (f(j) − f(i))` for the edge `(i, j)`.
pub fn graph_gradient(
    graph: &Graph,
    f: ArrayView2<'_, f64>,
    i: usize,
    j: usize,
) -> Result<Vec<f64>> {
    if f.nrows() != graph.n() {
        return Err(Error::Shape {
            expected: format!("{} rows", graph.n()),
            actual: format!("{} rows", f.nrows()),
        });
    }
    if i >= graph.n() || j >= graph.n() {
        return Err(Error::NotAnEdge { i, j });
    }
    let w = graph.weight(i, j).ok_or(Error::NotAnEdge { i, j })?;
    let s = w.sqrt();
    Ok(f.row(j)
        .iter()
        .zip(f.row(i))
        .map(|(a, b)| s * (a - b))
        .collect())
}
