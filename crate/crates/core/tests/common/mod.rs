#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use dglmnet::data::FeatureShard;
use dglmnet::ingest::{build_shards, partition_features, ByExampleRecord, ParsedDataset};
use dglmnet::oracle::DenseProblem;

pub fn shards(data: &ParsedDataset, m: usize) -> Vec<FeatureShard> {
    let partition = partition_features(&data.nnz_per_feature(), m).unwrap();
    build_shards(data, &partition).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Dense Gaussian design with about 40% structural zeros and random labels.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DenseProblem {
    let x: Vec<f64> = (0..n * p)
        .map(|_| if rng.random::<f64>() < 0.6 { normal(rng) } else { 0.0 })
        .collect();
    let y = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    DenseProblem::new(n, p, x, y)
}

pub fn to_parsed(problem: &DenseProblem) -> ParsedDataset {
    let records = (0..problem.n)
        .map(|i| ByExampleRecord {
            label: problem.y[i],
            features: problem
                .row(i)
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j, *v))
                .collect(),
        })
        .collect();
    let mut data = ParsedDataset::from_records(records);
    data.p = problem.p;
    data
}

pub fn column(problem: &DenseProblem, j: usize) -> Vec<f64> {
    (0..problem.n).map(|i| problem.x[i * problem.p + j]).collect()
}
