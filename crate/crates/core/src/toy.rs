//! Synthetic VAR(1) classification data with sparse random transition matrices.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::series::{LabeledDataset, TimeSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModelSpec {
    pub d: usize,
    pub n: usize,
    /// Fraction of nonzero transition entries.
    pub density: f64,
    pub noise_variance: f64,
    /// Spectral radius each transition matrix is rescaled to.
    pub spectral_target: f64,
    /// Initial observations are uniform on `[-init_range, init_range]^d`.
    pub init_range: f64,
    pub seed: u64,
}

impl Default for ToyModelSpec {
    fn default() -> Self {
        Self {
            d: 1000,
            n: 10,
            density: 0.1,
            noise_variance: 0.1,
            spectral_target: 1.0,
            init_range: 5.0,
            seed: 0,
        }
    }
}

impl ToyModelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.d == 0 || self.n == 0 {
            return bad(format!("d and n must be positive (d={}, n={})", self.d, self.n));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad(format!("density must lie in (0, 1], got {}", self.density));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return bad(format!("noise variance must be positive, got {}", self.noise_variance));
        }
        if !(self.spectral_target > 0.0 && self.spectral_target <= 1.0) {
            return bad(format!("spectral target must lie in (0, 1], got {}", self.spectral_target));
        }
        if !(self.init_range >= 0.0 && self.init_range.is_finite()) {
            return bad(format!("init range must be nonnegative, got {}", self.init_range));
        }
        Ok(())
    }
}

/// Row-compressed transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTransition {
    dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseTransition {
    fn from_dense(a: &DMatrix<f64>) -> Self {
        let rows = a
            .row_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Self { dim: a.nrows(), rows }
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.dim,
            self.rows.iter().map(|row| row.iter().map(|&(j, v)| v * x[j]).sum::<f64>()),
        )
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.dim, self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                a[(i, j)] = v;
            }
        }
        a
    }
}

/// Largest eigenvalue modulus, from the real Schur form.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// One transition matrix per class plus the RNG stream that samples series.
pub struct ToyModel {
    spec: ToyModelSpec,
    transitions: Vec<SparseTransition>,
    rng: ChaCha8Rng,
}

impl ToyModel {
    pub fn new(spec: ToyModelSpec, class_count: usize) -> Result<Self> {
        spec.validate()?;
        if class_count == 0 {
            return Err(Error::InvalidParameter("class count must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut transitions = Vec::with_capacity(class_count);
        for _ in 0..class_count {
            let mut a = DMatrix::from_fn(spec.d, spec.d, |_, _| {
                if rng.random::<f64>() < spec.density {
                    rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                }
            });
            let radius = spectral_radius(&a);
            if radius <= f64::EPSILON {
                return Err(Error::InvalidParameter(
                    "transition matrix is nilpotent; increase density or dimension".into(),
                ));
            }
            a *= spec.spectral_target / radius;
            transitions.push(SparseTransition::from_dense(&a));
        }
        Ok(Self { spec, transitions, rng })
    }

    pub fn spec(&self) -> &ToyModelSpec {
        &self.spec
    }

    pub fn transitions(&self) -> &[SparseTransition] {
        &self.transitions
    }

    /// Draws one series from class `class`.
    pub fn sample_series(&mut self, class: usize) -> TimeSeries {
        let spec = &self.spec;
        let init = Uniform::new_inclusive(-spec.init_range, spec.init_range)
            .expect("validated init range");
        let noise = Normal::new(0.0, spec.noise_variance.sqrt()).expect("validated noise");
        let mut values = DMatrix::zeros(spec.d, spec.n);
        let mut state = DVector::from_fn(spec.d, |_, _| init.sample(&mut self.rng));
        values.set_column(0, &state);
        for t in 1..spec.n {
            let mut next = self.transitions[class].apply(&state);
            for v in next.iter_mut() {
                *v += noise.sample(&mut self.rng);
            }
            values.set_column(t, &next);
            state = next;
        }
        TimeSeries::new(values).expect("simulated values are finite")
    }

    /// Draws `per_class` series for every class, grouped by class.
    pub fn sample_dataset(&mut self, per_class: usize) -> Result<LabeledDataset> {
        let class_count = self.transitions.len();
        let mut series = Vec::with_capacity(per_class * class_count);
        let mut labels = Vec::with_capacity(per_class * class_count);
        for class in 0..class_count {
            for _ in 0..per_class {
                let s = self.sample_series(class);
                if s.values().iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("simulation diverged".into()));
                }
                series.push(s);
                labels.push(class);
            }
        }
        LabeledDataset::with_class_count(series, labels, class_count)
    }
}

pub fn generate_toy_dataset(
    spec: &ToyModelSpec,
    num_per_class: usize,
    class_count: usize,
) -> Result<LabeledDataset> {
    ToyModel::new(spec.clone(), class_count)?.sample_dataset(num_per_class)
}

/// Train and test sets drawn from the same pair of transition matrices.
pub fn generate_toy_split(
    spec: &ToyModelSpec,
    train_per_class: usize,
    test_per_class: usize,
    class_count: usize,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let mut model = ToyModel::new(spec.clone(), class_count)?;
    let train = model.sample_dataset(train_per_class)?;
    let test = model.sample_dataset(test_per_class)?;
    Ok((train, test))
}
