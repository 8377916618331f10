//! Seeded synthetic datasets with group-dependent features and noise, used by
//! the theory checks and tests.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Task};
use crate::error::Result;
use crate::loss::sigmoid_scalar;

/// Parameters shared by the regression and classification generators.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    /// P(protected = 1)
    pub protected_rate: f64,
    /// Shift applied to the first feature for protected rows.
    pub feature_shift: f64,
    /// Shift applied to the target (or logit) for protected rows.
    pub outcome_shift: f64,
}

impl SyntheticSpec {
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        SyntheticSpec {
            n,
            d,
            seed,
            protected_rate: 0.4,
            feature_shift: 1.0,
            outcome_shift: -0.8,
        }
    }
}

struct Draw {
    x: DMatrix<f64>,
    protected: Vec<u8>,
    signal: Vec<f64>,
    rng: ChaCha8Rng,
}

fn draw(spec: &SyntheticSpec) -> Draw {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut protected: Vec<u8> = (0..spec.n)
        .map(|_| rng.random_bool(spec.protected_rate) as u8)
        .collect();
    // both groups must exist
    if spec.n >= 2 {
        protected[0] = 1;
        protected[1] = 0;
    }
    let weights: Vec<f64> = (0..spec.d).map(|_| std_normal.sample(&mut rng)).collect();
    let mut x = DMatrix::zeros(spec.n, spec.d);
    for i in 0..spec.n {
        for j in 0..spec.d {
            x[(i, j)] = std_normal.sample(&mut rng);
        }
        x[(i, 0)] += spec.feature_shift * protected[i] as f64;
    }
    let signal = (0..spec.n)
        .map(|i| {
            let lin: f64 = (0..spec.d).map(|j| x[(i, j)] * weights[j]).sum();
            lin * 0.5 + 0.3 + spec.outcome_shift * protected[i] as f64
        })
        .collect();
    Draw {
        x,
        protected,
        signal,
        rng,
    }
}

fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

/// Linear target plus noise whose scale and mean depend on the group.
pub fn regression(spec: &SyntheticSpec) -> Result<Dataset> {
    let Draw {
        x,
        protected,
        signal,
        mut rng,
    } = draw(spec);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let y = signal
        .iter()
        .zip(&protected)
        .map(|(s, &p)| {
            let scale = if p == 1 { 0.8 } else { 0.4 };
            s + scale * noise.sample(&mut rng) + 0.2 * p as f64
        })
        .collect();
    Dataset::new(x, y, protected, 1, names(spec.d), Task::Regression)
}

/// Bernoulli labels drawn from a logistic model of the same signal.
pub fn classification(spec: &SyntheticSpec) -> Result<Dataset> {
    let Draw {
        x,
        protected,
        signal,
        mut rng,
    } = draw(spec);
    let mut y: Vec<f64> = signal
        .iter()
        .map(|&s| rng.random_bool(sigmoid_scalar(2.0 * s)) as u8 as f64)
        .collect();
    if spec.n >= 4 {
        // keep both classes present in each group
        y[0] = 0.0;
        y[1] = 1.0;
        y[2] = 1.0;
        y[3] = 0.0;
    }
    Dataset::new(x, y, protected, 1, names(spec.d), Task::Classification)
}
