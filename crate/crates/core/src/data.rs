//! Datasets, synthetic generators and label splits.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64`, which yields the
//! same stream on every platform.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::graph::{DistanceMatrix, FeatureMatrix};
use crate::io::{self, DistanceFormat};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Features(FeatureMatrix),
    Distances(DistanceMatrix),
}

impl DataSource {
    pub fn n(&self) -> usize {
        match self {
            DataSource::Features(x) => x.n(),
            DataSource::Distances(d) => d.n(),
        }
    }

    pub fn format(&self) -> SourceFormat {
        match self {
            DataSource::Features(_) => SourceFormat::Features,
            DataSource::Distances(_) => SourceFormat::Distances,
        }
    }

    pub fn distances(&self) -> DistanceMatrix {
        match self {
            DataSource::Features(x) => x.distances(),
            DataSource::Distances(d) => d.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceFormat {
    Features,
    Distances,
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceFormat::Features => "features",
            SourceFormat::Distances => "distances",
        })
    }
}

impl FromStr for SourceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "features" => Ok(SourceFormat::Features),
            "distances" => Ok(SourceFormat::Distances),
            _ => Err(Error::Parameter(format!("unknown data format '{s}'"))),
        }
    }
}

/// Points (or distances) with ground-truth classes in `0..classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub source: DataSource,
    pub truth: Vec<usize>,
    pub classes: usize,
    /// Original class id of each contiguous class.
    pub class_ids: Vec<i64>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, source: DataSource, truth: Vec<usize>) -> Result<Self> {
        if truth.len() != source.n() {
            return Err(Error::Shape {
                expected: format!("{} labels", source.n()),
                actual: format!("{}", truth.len()),
            });
        }
        let classes = truth.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; classes];
        truth.iter().for_each(|&c| seen[c] = true);
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Input(format!("class {missing} has no members")));
        }
        Ok(Self {
            name: name.into(),
            source,
            truth,
            classes,
            class_ids: (0..classes as i64).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.source.n()
    }
}

/// Maps arbitrary integer class ids onto `0..c` in ascending order.
pub fn contiguous_classes(ids: impl IntoIterator<Item = i64>) -> BTreeMap<i64, usize> {
    let mut map: BTreeMap<i64, usize> = ids.into_iter().map(|c| (c, 0)).collect();
    for (k, v) in map.values_mut().enumerate() {
        *v = k;
    }
    map
}

/// Loads a dataset; `labels_path` must list every node once as `index class`.
pub fn load_dataset(path: &Path, format: SourceFormat, labels_path: &Path) -> Result<Dataset> {
    let source = match format {
        SourceFormat::Features => DataSource::Features(io::read_features(path)?),
        SourceFormat::Distances => {
            DataSource::Distances(io::read_distances(path, DistanceFormat::Auto)?)
        }
    };
    let n = source.n();
    let pairs = io::read_index_class(labels_path)?;
    if pairs.len() != n {
        return Err(Error::Shape {
            expected: format!("{n} labels"),
            actual: format!("{} in {}", pairs.len(), labels_path.display()),
        });
    }
    let map = contiguous_classes(pairs.iter().map(|&(_, c)| c));
    let mut truth = vec![usize::MAX; n];
    for &(i, c) in &pairs {
        if i >= n || truth[i] != usize::MAX {
            return Err(Error::Input(format!(
                "{}: index {i} out of range or repeated",
                labels_path.display()
            )));
        }
        truth[i] = map[&c];
    }
    let class_ids: Vec<i64> = map.keys().copied().collect();
    if class_ids.iter().enumerate().any(|(k, &c)| c != k as i64) {
        let mapping: Vec<String> = map.iter().map(|(c, k)| format!("{c}->{k}")).collect();
        log::info!("class ids remapped: {}", mapping.join(", "));
    }
    let name = path.file_stem().map_or_else(
        || "dataset".to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    let mut ds = Dataset::new(name, source, truth)?;
    ds.class_ids = class_ids;
    Ok(ds)
}

/// Two interleaved unit half-circles, `n/2` points each, with Gaussian noise.
pub fn two_moons(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "two-moons needs an even n >= 4, got {n}"
        )));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::Parameter(format!(
            "noise must be non-negative, got {noise_sd}"
        )));
    }
    let half = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 2));
    let mut truth = vec![0; n];
    for k in 0..half {
        let t = PI * k as f64 / (half - 1) as f64;
        x[[k, 0]] = t.cos();
        x[[k, 1]] = t.sin();
        x[[half + k, 0]] = 1.0 - t.cos();
        x[[half + k, 1]] = 0.5 - t.sin();
        truth[half + k] = 1;
    }
    if noise_sd > 0.0 {
        for v in x.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += noise_sd * z;
        }
    }
    Dataset::new(
        "two_moons",
        DataSource::Features(FeatureMatrix::new(x)?),
        truth,
    )
}

/// `c` unit-variance Gaussian clusters centred `separation` apart along the
/// first axis. Point `i` belongs to class `i mod c`.
pub fn gaussian_blobs(n: usize, c: usize, separation: f64, d: usize, seed: u64) -> Result<Dataset> {
    if c < 2 || n < c {
        return Err(Error::Parameter(format!(
            "blobs need n >= c >= 2, got n = {n}, c = {c}"
        )));
    }
    if d == 0 {
        return Err(Error::Parameter("blobs need d >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, d));
    let truth: Vec<usize> = (0..n).map(|i| i % c).collect();
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        row[0] += separation * truth[i] as f64;
    }
    Dataset::new("blobs", DataSource::Features(FeatureMatrix::new(x)?), truth)
}

/// Train, validation and test indices, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitSpec {
    /// `(node, class)` pairs for the training labels.
    pub fn train_labels(&self, truth: &[usize]) -> Vec<(usize, usize)> {
        self.train.iter().map(|&i| (i, truth[i])).collect()
    }
}

/// Stratified draw of `l` training and `l` validation labels.
///
/// Labels are dealt round-robin over the classes, so each class gets
/// `⌊l/c⌋` or `⌈l/c⌉` training labels; the validation set is dealt the same
/// way from the remaining nodes.
pub fn split_labels(dataset: &Dataset, l: usize, seed: u64) -> Result<SplitSpec> {
    let n = dataset.n();
    let c = dataset.classes;
    if l < c {
        return Err(Error::Input(format!("{l} labels cannot cover {c} classes")));
    }
    if 2 * l > n {
        return Err(Error::Input(format!(
            "{l} training plus {l} validation labels exceed n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &k) in dataset.truth.iter().enumerate() {
        pools[k].push(i);
    }
    for pool in pools.iter_mut() {
        pool.shuffle(&mut rng);
    }
    let mut deal = |count: usize| -> Result<Vec<usize>> {
        let mut picked = Vec::with_capacity(count);
        while picked.len() < count {
            let before = picked.len();
            for pool in pools.iter_mut() {
                if picked.len() == count {
                    break;
                }
                if let Some(i) = pool.pop() {
                    picked.push(i);
                }
            }
            if picked.len() == before {
                return Err(Error::Input(
                    "not enough nodes for a stratified split".into(),
                ));
            }
        }
        picked.sort_unstable();
        Ok(picked)
    };
    let train = deal(l)?;
    let validation = deal(l)?;
    let mut test: Vec<usize> = pools.into_iter().flatten().collect();
    test.sort_unstable();
    Ok(SplitSpec {
        train,
        validation,
        test,
        seed,
    })
}

/// Small key-value description of a dataset on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub name: String,
    pub n: usize,
    pub classes: usize,
    pub format: SourceFormat,
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "name = {}", self.name)?;
        writeln!(f, "n = {}", self.n)?;
        writeln!(f, "c = {}", self.classes)?;
        writeln!(f, "format = {}", self.format)
    }
}

impl FromStr for Manifest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kv = parse_key_values(s)?;
        let get = |k: &str| {
            kv.get(k)
                .ok_or_else(|| Error::Input(format!("manifest is missing '{k}'")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Input(format!("manifest '{k}' is not a count")))
        };
        Ok(Manifest {
            name: get("name")?.clone(),
            n: num("n")?,
            classes: num("c")?,
            format: get("format")?.parse()?,
        })
    }
}

/// Parses `key = value` lines, skipping blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Input(format!("line {}: expected 'key = value'", k + 1)))?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

/// Writes `features.txt` (or `distances.txt`), `labels.txt` and `manifest.txt`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match &dataset.source {
        DataSource::Features(x) => io::write_file(&dir.join("features.txt"), |w| {
            io::write_matrix(x.values(), w)
        })?,
        DataSource::Distances(d) => io::write_file(&dir.join("distances.txt"), |w| {
            io::write_distance_triplets(d, w)
        })?,
    }
    let labels: Vec<(usize, i64)> = dataset
        .truth
        .iter()
        .enumerate()
        .map(|(i, &k)| (i, dataset.class_ids[k]))
        .collect();
    io::write_file(&dir.join("labels.txt"), |w| {
        io::write_index_class(&labels, w)
    })?;
    let manifest = Manifest {
        name: dataset.name.clone(),
        n: dataset.n(),
        classes: dataset.classes,
        format: dataset.source.format(),
    };
    io::write_file(&dir.join("manifest.txt"), |w| write!(w, "{manifest}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn noiseless_moons_lie_on_circles() {
        let ds = two_moons(40, 0.0, 3).unwrap();
        let DataSource::Features(x) = &ds.source else {
            panic!()
        };
        for (i, row) in x.values().rows().into_iter().enumerate() {
            let (cx, cy) = if ds.truth[i] == 0 {
                (0.0, 0.0)
            } else {
                (1.0, 0.5)
            };
            let r = ((row[0] - cx).powi(2) + (row[1] - cy).powi(2)).sqrt();
            assert!((r - 1.0).abs() < 1e-14);
        }
        assert!(two_moons(41, 0.1, 0).is_err());
        assert!(two_moons(2, 0.1, 0).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(
            two_moons(100, 0.1, 9).unwrap(),
            two_moons(100, 0.1, 9).unwrap()
        );
        assert_ne!(
            two_moons(100, 0.1, 9).unwrap(),
            two_moons(100, 0.1, 10).unwrap()
        );
        assert_eq!(
            gaussian_blobs(30, 3, 5.0, 2, 1).unwrap(),
            gaussian_blobs(30, 3, 5.0, 2, 1).unwrap()
        );
    }

    #[test]
    fn moon_centroids() {
        let ds = two_moons(600, 0.1, 11).unwrap();
        let DataSource::Features(x) = &ds.source else {
            panic!()
        };
        let mean_y = |k| {
            let ys: Vec<f64> = (0..600)
                .filter(|&i| ds.truth[i] == k)
                .map(|i| x.values()[[i, 1]])
                .collect();
            ys.iter().sum::<f64>() / ys.len() as f64
        };
        assert!(mean_y(0) > mean_y(1));
    }

    #[test]
    fn blob_centroids() {
        let ds = gaussian_blobs(900, 3, 8.0, 2, 4).unwrap();
        let DataSource::Features(x) = &ds.source else {
            panic!()
        };
        for k in 0..3 {
            let xs: Vec<f64> = (0..900)
                .filter(|&i| ds.truth[i] == k)
                .map(|i| x.values()[[i, 0]])
                .collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            assert!((mean - 8.0 * k as f64).abs() < 0.3, "class {k}: {mean}");
        }
    }

    #[test]
    fn splits() {
        let ds = two_moons(600, 0.1, 0).unwrap();
        let s = split_labels(&ds, 10, 5).unwrap();
        assert_eq!(s.train.len(), 10);
        assert_eq!(s.validation.len(), 10);
        let train: HashSet<_> = s.train.iter().collect();
        let val: HashSet<_> = s.validation.iter().collect();
        let test: HashSet<_> = s.test.iter().collect();
        assert!(train.is_disjoint(&val) && train.is_disjoint(&test) && val.is_disjoint(&test));
        assert_eq!(train.len() + val.len() + test.len(), 600);
        assert_eq!(s, split_labels(&ds, 10, 5).unwrap());

        let s = split_labels(&ds, 2, 1).unwrap();
        let classes: HashSet<_> = s.train.iter().map(|&i| ds.truth[i]).collect();
        assert_eq!(classes.len(), 2);

        assert!(split_labels(&ds, 1, 0).is_err());
        assert!(split_labels(&ds, 301, 0).is_err());
    }

    #[test]
    fn class_remapping() {
        let map = contiguous_classes([7, 5, 7]);
        assert_eq!(map[&5], 0);
        assert_eq!(map[&7], 1);
    }

    #[test]
    fn manifest_round_trip() {
        let m = Manifest {
            name: "two_moons".into(),
            n: 600,
            classes: 2,
            format: SourceFormat::Features,
        };
        assert_eq!(m.to_string().parse::<Manifest>().unwrap(), m);
    }
}
