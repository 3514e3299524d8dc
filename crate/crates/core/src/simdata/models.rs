use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal, StudentT};

use super::bspline::cubic_basis;
use super::{ModelFamily, ModelSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Skewness parameter of the skew-normal columns.
const SKEW_ALPHA: f64 = 5.0;
/// Window of the column-wise moving average.
const MA_WINDOW: usize = 3;

pub type TestPoints = Vec<(DVector<f64>, f64)>;

/// A draw plus the realized training noise (kept for diagnostics).
pub(crate) struct Draw {
    pub train: Dataset,
    pub test: TestPoints,
    pub train_noise: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum ColumnKind {
    Normal,
    Bernoulli,
    SkewNormal,
}

impl ColumnKind {
    /// One draw with unit variance (scaled, not centred).
    fn sample(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ColumnKind::Normal => rng.sample(StandardNormal),
            ColumnKind::Bernoulli => {
                let b = Bernoulli::new(0.5).unwrap().sample(rng);
                if b {
                    2.0
                } else {
                    0.0
                }
            }
            ColumnKind::SkewNormal => {
                let delta = SKEW_ALPHA / (1.0 + SKEW_ALPHA * SKEW_ALPHA).sqrt();
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let z = delta * z1.abs() + (1.0 - delta * delta).sqrt() * z2;
                let var = 1.0 - 2.0 * delta * delta / std::f64::consts::PI;
                z / var.sqrt()
            }
        }
    }
}

/// Parameters fixed for the whole draw; rows are then i.i.d. given these.
enum Structure {
    Linear {
        beta: Vec<f64>,
    },
    Additive {
        /// Four basis coefficients for each signal coordinate.
        coef: Vec<[f64; 4]>,
    },
    MovingAverage {
        kinds: Vec<ColumnKind>,
        weights: [f64; MA_WINDOW],
        beta: Vec<f64>,
    },
}

fn signed(rng: &mut ChaCha8Rng, amplitude: f64) -> f64 {
    *[-amplitude, amplitude].choose(rng).unwrap()
}

fn signal_beta(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let p = spec.regime.p();
    (0..p)
        .map(|j| if j < spec.sparsity { signed(rng, spec.amplitude) } else { 0.0 })
        .collect()
}

impl Structure {
    fn draw(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Self {
        let p = spec.regime.p();
        match spec.family {
            ModelFamily::LinearGaussian => Structure::Linear {
                beta: signal_beta(spec, rng),
            },
            ModelFamily::NonlinearAdditive => Structure::Additive {
                coef: (0..spec.sparsity)
                    .map(|_| std::array::from_fn(|_| signed(rng, spec.amplitude)))
                    .collect(),
            },
            ModelFamily::HeavyTailCorrelated => {
                let all = [ColumnKind::Normal, ColumnKind::Bernoulli, ColumnKind::SkewNormal];
                let kinds = (0..p + MA_WINDOW - 1).map(|_| *all.choose(rng).unwrap()).collect();
                let raw: [f64; MA_WINDOW] = std::array::from_fn(|_| rng.random::<f64>());
                let total: f64 = raw.iter().sum();
                let weights = raw.map(|w| w / total);
                Structure::MovingAverage {
                    kinds,
                    weights,
                    beta: signal_beta(spec, rng),
                }
            }
        }
    }

    /// One covariate row and its noiseless response.
    fn row(&self, p: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        match self {
            Structure::Linear { beta } => {
                let x: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
                let mean = x.iter().zip(beta).map(|(a, b)| a * b).sum();
                (x, mean)
            }
            Structure::Additive { coef } => {
                let x: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
                let mean = coef
                    .iter()
                    .zip(&x)
                    .map(|(c, &xj)| {
                        let b = cubic_basis(xj);
                        (0..4).map(|k| c[k] * b[k]).sum::<f64>()
                    })
                    .sum();
                (x, mean)
            }
            Structure::MovingAverage { kinds, weights, beta } => {
                let z: Vec<f64> = kinds.iter().map(|k| k.sample(rng)).collect();
                let x: Vec<f64> = (0..p)
                    .map(|j| (0..MA_WINDOW).map(|w| weights[w] * z[j + w]).sum())
                    .collect();
                let mean = x.iter().zip(beta).map(|(a, b)| a * b).sum();
                (x, mean)
            }
        }
    }
}

fn noise(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> f64 {
    let e: f64 = match spec.family {
        ModelFamily::HeavyTailCorrelated => StudentT::new(2.0).unwrap().sample(rng),
        _ => rng.sample(StandardNormal),
    };
    spec.noise_scale * e
}

pub(crate) fn draw(spec: &ModelSpec, n_train: usize, n_test: usize) -> Result<Draw> {
    spec.validate()?;
    if n_train == 0 {
        return Err(Error::InvalidInput("n_train must be positive".into()));
    }
    let p = spec.regime.p();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let structure = Structure::draw(spec, &mut rng);

    let mut x = DMatrix::zeros(n_train, p);
    let mut y = DVector::zeros(n_train);
    let mut train_noise = Vec::with_capacity(n_train);
    for i in 0..n_train {
        let (row, mean) = structure.row(p, &mut rng);
        let e = noise(spec, &mut rng);
        x.row_mut(i).copy_from_slice(&row);
        y[i] = mean + e;
        train_noise.push(e);
    }
    let test = (0..n_test)
        .map(|_| {
            let (row, mean) = structure.row(p, &mut rng);
            let e = noise(spec, &mut rng);
            (DVector::from_vec(row), mean + e)
        })
        .collect();
    Ok(Draw {
        train: Dataset::new(x, y)?,
        test,
        train_noise,
    })
}

/// Training set of `n_train` rows and `n_test` i.i.d. test pairs from the
/// same process. Identical specs give bit-identical output.
pub fn generate(spec: &ModelSpec, n_train: usize, n_test: usize) -> Result<(Dataset, TestPoints)> {
    draw(spec, n_train, n_test).map(|d| (d.train, d.test))
}
