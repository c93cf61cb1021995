//! Datasets and their sources.

pub mod idx;

use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::GzDecoder;
use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::objective::Batch;
pub use idx::{ElementType, IdxError, IdxTensor};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Idx {
        path: PathBuf,
        #[source]
        source: IdxError,
    },
    #[error("{path}: expected unsigned byte elements, found {found:?}")]
    ElementType { path: PathBuf, found: ElementType },
    #[error("requested {requested} rows but dataset has {available}")]
    TooManyRows { requested: usize, available: usize },
    #[error("dataset needs at least {min} rows, got {got}")]
    TooFewRows { min: usize, got: usize },
    #[error("inputs have {inputs} rows but targets have {targets}")]
    RowMismatch { inputs: usize, targets: usize },
    #[error("dataset contains non-finite values")]
    NonFinite,
}

/// Immutable input/target matrices. Cloning is cheap; autoencoder datasets
/// share one matrix for inputs and targets.
#[derive(Debug, Clone)]
pub struct Dataset {
    inputs: Arc<Array2<f64>>,
    targets: Arc<Array2<f64>>,
    name: String,
}

impl Dataset {
    pub fn new(name: impl Into<String>, inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self, DataError> {
        if inputs.nrows() != targets.nrows() {
            return Err(DataError::RowMismatch {
                inputs: inputs.nrows(),
                targets: targets.nrows(),
            });
        }
        Self::from_parts(name.into(), Arc::new(inputs), Arc::new(targets))
    }

    /// Targets alias the inputs.
    pub fn autoencoder(name: impl Into<String>, inputs: Array2<f64>) -> Result<Self, DataError> {
        let shared = Arc::new(inputs);
        Self::from_parts(name.into(), shared.clone(), shared)
    }

    fn from_parts(name: String, inputs: Arc<Array2<f64>>, targets: Arc<Array2<f64>>) -> Result<Self, DataError> {
        if inputs.nrows() == 0 {
            return Err(DataError::TooFewRows { min: 1, got: 0 });
        }
        if !inputs.iter().chain(targets.iter()).all(|v| v.is_finite()) {
            return Err(DataError::NonFinite);
        }
        Ok(Self { inputs, targets, name })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn is_autoencoder(&self) -> bool {
        Arc::ptr_eq(&self.inputs, &self.targets)
    }

    /// The listed rows as a training batch.
    pub fn batch(&self, rows: &[usize]) -> Batch {
        Batch::new(self.inputs.select(Axis(0), rows), self.targets.select(Axis(0), rows))
            .expect("dataset rows are consistent and non-empty")
    }

    /// Every row, in order.
    pub fn full_batch(&self) -> Batch {
        Batch::new(self.inputs.as_ref().clone(), self.targets.as_ref().clone()).expect("dataset is non-empty")
    }

    fn select(&self, name: String, rows: &[usize]) -> Dataset {
        let inputs = Arc::new(self.inputs.select(Axis(0), rows));
        let targets = if self.is_autoencoder() {
            inputs.clone()
        } else {
            Arc::new(self.targets.select(Axis(0), rows))
        };
        Dataset { inputs, targets, name }
    }

    /// `n` rows sampled uniformly without replacement, in sampled order.
    pub fn subset(&self, n: usize, seed: u64) -> Result<Dataset, DataError> {
        if n > self.len() {
            return Err(DataError::TooManyRows {
                requested: n,
                available: self.len(),
            });
        }
        if n == 0 {
            return Err(DataError::TooFewRows { min: 1, got: 0 });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = index::sample(&mut rng, self.len(), n).into_vec();
        Ok(self.select(format!("{}[{n}]", self.name), &rows))
    }

    /// First `n_train` rows and the remainder.
    pub fn split(&self, n_train: usize) -> Result<(Dataset, Dataset), DataError> {
        if n_train == 0 || n_train >= self.len() {
            return Err(DataError::TooManyRows {
                requested: n_train,
                available: self.len().saturating_sub(1),
            });
        }
        let head: Vec<usize> = (0..n_train).collect();
        let tail: Vec<usize> = (n_train..self.len()).collect();
        Ok((
            self.select(format!("{}-train", self.name), &head),
            self.select(format!("{}-test", self.name), &tail),
        ))
    }
}

/// The smooth surrogate regression target on `[-1, 1]^6`:
/// `sin(u1 u2) + 0.5 (u3 - u4)^2 + tanh(u5) u6`.
pub fn regression_target(u: &[f64]) -> f64 {
    (u[0] * u[1]).sin() + 0.5 * (u[2] - u[3]).powi(2) + u[4].tanh() * u[5]
}

/// `n` samples with inputs uniform in `[-1, 1]^6`.
pub fn gen_regression(n: usize, seed: u64) -> Result<Dataset, DataError> {
    if n < 2 {
        return Err(DataError::TooFewRows { min: 2, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = Array2::from_shape_simple_fn((n, 6), || rng.random_range(-1.0..=1.0));
    let targets = Array2::from_shape_fn((n, 1), |(r, _)| regression_target(inputs.row(r).as_slice().expect("row-major")));
    Dataset::new(format!("regression-{seed}"), inputs, targets)
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let raw = std::fs::read(path).map_err(io_err)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(io_err)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Read an IDX file; gzip-compressed files are detected by their magic.
pub fn read_idx_file(path: impl AsRef<Path>) -> Result<IdxTensor, DataError> {
    let path = path.as_ref();
    let bytes = read_maybe_gz(path)?;
    idx::parse(&bytes).map_err(|source| DataError::Idx {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_idx_file(path: impl AsRef<Path>, tensor: &IdxTensor) -> Result<(), DataError> {
    let path = path.as_ref();
    std::fs::write(path, tensor.to_bytes()).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Load an unsigned-byte IDX tensor as an autoencoder dataset: one row per
/// leading index, remaining axes flattened, values scaled to `[0, 1]`.
pub fn load_idx(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let tensor = read_idx_file(path)?;
    if tensor.element != ElementType::U8 {
        return Err(DataError::ElementType {
            path: path.to_path_buf(),
            found: tensor.element,
        });
    }
    let rows = tensor.dims[0] as usize;
    let cols: usize = tensor.dims[1..].iter().map(|&d| d as usize).product();
    let values: Vec<f64> = tensor.data.iter().map(|&b| b as f64 / 255.0).collect();
    let inputs = Array2::from_shape_vec((rows, cols), values).expect("payload length checked by the parser");
    let name = path.file_name().map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::autoencoder(name, inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn regression_target_examples() {
        assert_eq!(regression_target(&[0.0; 6]), 0.0);
        assert_eq!(regression_target(&[0.0, 0.0, 1.0, -1.0, 0.0, 5.0]), 2.0);
    }

    #[test]
    fn regression_is_seeded() {
        let a = gen_regression(50, 1).unwrap();
        let b = gen_regression(50, 1).unwrap();
        let c = gen_regression(50, 2).unwrap();
        assert_eq!(a.inputs(), b.inputs());
        assert_eq!(a.targets(), b.targets());
        assert_ne!(a.inputs(), c.inputs());
        assert!(a.inputs().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(gen_regression(1, 0).is_err());
    }

    #[test]
    fn subset_examples() {
        let ds = gen_regression(20, 3).unwrap();
        let all = ds.subset(20, 9).unwrap();
        let mut firsts: Vec<u64> = all.inputs().column(0).iter().map(|v| v.to_bits()).collect();
        let mut orig: Vec<u64> = ds.inputs().column(0).iter().map(|v| v.to_bits()).collect();
        firsts.sort();
        orig.sort();
        assert_eq!(firsts, orig);
        assert_eq!(ds.subset(1, 9).unwrap().len(), 1);
        assert_eq!(ds.subset(5, 4).unwrap().inputs(), ds.subset(5, 4).unwrap().inputs());
        assert!(matches!(ds.subset(21, 0), Err(DataError::TooManyRows { .. })));
    }

    #[test]
    fn split_and_alias() {
        let ds = Dataset::autoencoder("ae", array![[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]]).unwrap();
        assert!(ds.is_autoencoder());
        let (train, test) = ds.split(2).unwrap();
        assert_eq!((train.len(), test.len()), (2, 1));
        assert!(train.is_autoencoder() && test.is_autoencoder());
        assert_eq!(test.inputs(), &array![[1.0, 0.0]]);
        assert!(ds.split(3).is_err());
        assert!(Dataset::new("bad", array![[f64::NAN]], array![[0.0]]).is_err());
    }

    #[test]
    fn load_idx_scales_bytes() {
        let dir = std::env::temp_dir().join(format!("seboost-idx-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tiny-idx3-ubyte");
        let t = IdxTensor {
            element: ElementType::U8,
            dims: vec![2, 2, 2],
            data: vec![0, 10, 20, 30, 40, 50, 60, 255],
        };
        write_idx_file(&path, &t).unwrap();
        let ds = load_idx(&path).unwrap();
        assert_eq!(ds.inputs().dim(), (2, 4));
        assert_eq!(ds.inputs()[[1, 3]], 1.0);
        assert!(ds.is_autoencoder());
        assert_eq!(read_idx_file(&path).unwrap(), t);

        std::fs::write(&path, [0, 0, 8, 3]).unwrap();
        assert!(matches!(load_idx(&path), Err(DataError::Idx { source: IdxError::Truncated { offset: 4, .. }, .. })));
        assert!(matches!(load_idx(dir.join("missing")), Err(DataError::Io { .. })));
        std::fs::remove_dir_all(&dir).ok();
    }
}
