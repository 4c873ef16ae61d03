//! Seeded synthetic datasets drawn from a known sparse logistic model.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ingest::{ByExampleRecord, ParsedDataset};

/// Sparse data with standard normal values. `informative` features at random
/// ids carry coefficients of magnitude in `[2, 4)` with random sign and are
/// present in an example with probability `informative_density`; the
/// remaining noise features appear with probability `density`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub p: usize,
    pub informative: usize,
    pub seed: u64,
    pub density: f64,
    pub informative_density: f64,
}

impl SynthSpec {
    pub const DEFAULT_DENSITY: f64 = 0.05;
    pub const DEFAULT_INFORMATIVE_DENSITY: f64 = 0.5;

    pub fn new(n: usize, p: usize, informative: usize, seed: u64) -> Self {
        Self {
            n,
            p,
            informative: informative.min(p),
            seed,
            density: Self::DEFAULT_DENSITY,
            informative_density: Self::DEFAULT_INFORMATIVE_DENSITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub data: ParsedDataset,
    pub true_beta: Vec<f64>,
}

impl SynthData {
    pub fn informative_features(&self) -> Vec<usize> {
        self.true_beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

fn draw_label(rng: &mut ChaCha8Rng, margin: f64) -> f64 {
    let prob = 1.0 / (1.0 + (-margin).exp());
    if rng.random::<f64>() < prob {
        1.0
    } else {
        -1.0
    }
}

fn finish(records: Vec<ByExampleRecord>, p: usize) -> ParsedDataset {
    let mut data = ParsedDataset::from_records(records);
    // Keep the declared width even if the last features never fired.
    data.p = data.p.max(p);
    data
}

pub fn generate(spec: &SynthSpec) -> SynthData {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ids: Vec<usize> = (0..spec.p).collect();
    ids.shuffle(&mut rng);
    let mut true_beta = vec![0.0; spec.p];
    for &j in ids.iter().take(spec.informative) {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        true_beta[j] = sign * rng.random_range(2.0..4.0);
    }
    let mut records = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let mut features = Vec::new();
        let mut margin = 0.0;
        for (j, &b) in true_beta.iter().enumerate() {
            let density = if b != 0.0 { spec.informative_density } else { spec.density };
            if rng.random::<f64>() < density {
                let v: f64 = StandardNormal.sample(&mut rng);
                if v != 0.0 {
                    features.push((j, v));
                    margin += b * v;
                }
            }
        }
        let label = draw_label(&mut rng, margin);
        records.push(ByExampleRecord { label, features });
    }
    SynthData {
        data: finish(records, spec.p),
        true_beta,
    }
}

/// Fully dense standard-normal design with `p / 5` (at least one) nonzero
/// true coefficients of magnitude in `[0.5, 1)`.
pub fn dense_instance(n: usize, p: usize, seed: u64) -> SynthData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut true_beta = vec![0.0; p];
    let active = (p / 5).max(1).min(p);
    let mut ids: Vec<usize> = (0..p).collect();
    ids.shuffle(&mut rng);
    for &j in ids.iter().take(active) {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        true_beta[j] = sign * rng.random_range(0.5..1.0);
    }
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p)
            .map(|_| loop {
                let v: f64 = StandardNormal.sample(&mut rng);
                if v != 0.0 {
                    break v;
                }
            })
            .collect();
        let margin: f64 = row.iter().zip(&true_beta).map(|(x, b)| x * b).sum();
        let label = draw_label(&mut rng, margin);
        records.push(ByExampleRecord {
            label,
            features: row.into_iter().enumerate().collect(),
        });
    }
    SynthData {
        data: finish(records, p),
        true_beta,
    }
}

/// Splits off the last `test_fraction` of the examples. Both halves keep
/// the full feature width.
pub fn train_test_split(data: &ParsedDataset, test_fraction: f64) -> (ParsedDataset, ParsedDataset) {
    let n_test = ((data.n as f64) * test_fraction).round() as usize;
    let n_train = data.n - n_test.min(data.n);
    let train = finish(data.records[..n_train].to_vec(), data.p);
    let test = finish(data.records[n_train..].to_vec(), data.p);
    (train, test)
}
