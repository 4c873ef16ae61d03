//! Reading "by example" text, transposing it to per-feature shards, and
//! loading shards back.
//!
//! A converted dataset directory holds:
//!
//! - `shard-<m>.txt` for every shard `m`: a header line
//!   `#dglmnet v1 shard=<m> of=<M> n=<n> p=<p>` followed by one line per
//!   owned feature, `<feature_id> <example_id>:<value> …`, features and
//!   example ids ascending;
//! - `labels.txt`: one `+1` / `-1` per example;
//! - `manifest.json`: sizes and per-shard totals.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use serde::{Deserialize, Serialize};

use crate::data::{check_shard_cover, FeaturePosting, FeatureShard, LabelVector, ShardBuilder};
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "dglmnet v1";
pub const LABELS_FILE: &str = "labels.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn shard_file_name(m: usize) -> String {
    format!("shard-{m}.txt")
}

/// One example: its label and nonzero features, ids strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct ByExampleRecord {
    pub label: f64,
    pub features: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDataset {
    pub records: Vec<ByExampleRecord>,
    pub n: usize,
    pub p: usize,
    pub nnz: usize,
}

impl ParsedDataset {
    pub fn from_records(records: Vec<ByExampleRecord>) -> Self {
        let p = records
            .iter()
            .flat_map(|r| r.features.iter().map(|&(j, _)| j + 1))
            .max()
            .unwrap_or(0);
        let nnz = records.iter().map(|r| r.features.len()).sum();
        Self {
            n: records.len(),
            p,
            nnz,
            records,
        }
    }

    pub fn labels(&self) -> LabelVector {
        LabelVector::new(self.records.iter().map(|r| r.label).collect())
            .expect("parsed labels are ±1")
    }

    pub fn nnz_per_feature(&self) -> Vec<usize> {
        let mut counts = vec![0; self.p];
        for r in &self.records {
            for &(j, _) in &r.features {
                counts[j] += 1;
            }
        }
        counts
    }

    /// All `(example, feature, value)` triples in record order.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.records
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.features.iter().map(move |&(j, v)| (i, j, v)))
    }
}

fn parse_label(token: &str) -> Option<f64> {
    match token {
        "+1" | "1" => Some(1.0),
        "-1" | "0" => Some(-1.0),
        _ => None,
    }
}

/// Parses lines of the form `<label> <id>:<value> …`. Labels are `+1`, `1`,
/// `-1` or `0` (read as −1). Blank lines are skipped.
pub fn parse_by_example<R: BufRead>(reader: R) -> Result<ParsedDataset> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let label = parse_label(label_tok)
            .ok_or_else(|| err(format!("invalid label {label_tok:?}")))?;
        let mut features = Vec::new();
        for tok in tokens {
            let (id, value) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("malformed token {tok:?}, expected <id>:<value>")))?;
            let id: usize = id
                .parse()
                .map_err(|_| err(format!("invalid feature id in {tok:?}")))?;
            let value: f64 = value
                .parse()
                .map_err(|_| err(format!("invalid value in {tok:?}")))?;
            if value == 0.0 {
                return Err(err(format!("explicit zero value for feature {id}")));
            }
            if !value.is_finite() {
                return Err(err(format!("non-finite value for feature {id}")));
            }
            features.push((id, value));
        }
        features.sort_by_key(|&(j, _)| j);
        if let Some(w) = features.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(err(format!("duplicate feature id {}", w[0].0)));
        }
        records.push(ByExampleRecord { label, features });
    }
    if records.is_empty() {
        return Err(Error::Degenerate("dataset has no examples".into()));
    }
    Ok(ParsedDataset::from_records(records))
}

pub fn read_by_example(path: &Path) -> Result<ParsedDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_by_example(BufReader::new(file))
}

pub fn write_by_example(records: &[ByExampleRecord], path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        write!(w, "{}", if r.label > 0.0 { "+1" } else { "-1" }).map_err(io)?;
        for &(j, v) in &r.features {
            write!(w, " {j}:{v:?}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Assignment of features to shards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturePartition {
    pub num_shards: usize,
    /// Shard of every feature id.
    pub assignment: Vec<usize>,
    pub shard_nnz: Vec<usize>,
}

impl FeaturePartition {
    /// Owned feature ids of shard `m`, ascending.
    pub fn shard_features(&self, m: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s == m)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Greedy balancing by nonzero count: features in descending nnz order,
/// each to the currently lightest shard (ties to the lower shard id, then
/// the lower feature id).
pub fn partition_features(nnz_per_feature: &[usize], num_shards: usize) -> Result<FeaturePartition> {
    if num_shards == 0 {
        return Err(Error::InvalidInput("need at least one shard".into()));
    }
    let mut order: Vec<usize> = (0..nnz_per_feature.len()).collect();
    order.sort_by_key(|&j| (Reverse(nnz_per_feature[j]), j));
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..num_shards).map(|m| Reverse((0, m))).collect();
    let mut assignment = vec![0; nnz_per_feature.len()];
    let mut shard_nnz = vec![0; num_shards];
    for j in order {
        let Reverse((load, m)) = heap.pop().expect("heap holds every shard");
        assignment[j] = m;
        shard_nnz[m] = load + nnz_per_feature[j];
        heap.push(Reverse((shard_nnz[m], m)));
    }
    Ok(FeaturePartition {
        num_shards,
        assignment,
        shard_nnz,
    })
}

/// In-memory transpose of `data` into one shard per partition block.
pub fn build_shards(data: &ParsedDataset, partition: &FeaturePartition) -> Result<Vec<FeatureShard>> {
    if partition.assignment.len() != data.p {
        return Err(Error::InvalidInput(format!(
            "partition covers {} features, dataset has {}",
            partition.assignment.len(),
            data.p
        )));
    }
    let mut columns: Vec<Vec<FeaturePosting>> = vec![Vec::new(); data.p];
    for (i, r) in data.records.iter().enumerate() {
        for &(j, value) in &r.features {
            columns[j].push(FeaturePosting { example: i, value });
        }
    }
    let mut builders: Vec<ShardBuilder> = (0..partition.num_shards)
        .map(|m| ShardBuilder::new(m, partition.num_shards, data.n, data.p))
        .collect();
    for (j, column) in columns.into_iter().enumerate() {
        let b = &mut builders[partition.assignment[j]];
        b.push_feature(j)?;
        for e in column {
            b.push_posting(e.example, e.value)?;
        }
    }
    Ok(builders.into_iter().map(ShardBuilder::finish).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub n: usize,
    pub p: usize,
    pub shards: usize,
    pub nnz: usize,
    pub shard_features: Vec<usize>,
    pub shard_nnz: Vec<usize>,
}

fn write_shard(shard: &FeatureShard, path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(
        w,
        "#{FORMAT_TAG} shard={} of={} n={} p={}",
        shard.shard_id(),
        shard.num_shards(),
        shard.n(),
        shard.p()
    )
    .map_err(io)?;
    for (j, column) in shard.columns() {
        write!(w, "{j}").map_err(io)?;
        for e in column {
            write!(w, " {}:{:?}", e.example, e.value).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_labels(labels: &LabelVector, path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for &y in labels.as_slice() {
        writeln!(w, "{}", if y > 0.0 { "+1" } else { "-1" }).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes the shard files, labels and manifest of `data` under `out_dir`.
pub fn convert_to_by_feature(
    data: &ParsedDataset,
    partition: &FeaturePartition,
    out_dir: &Path,
) -> Result<Manifest> {
    let shards = build_shards(data, partition)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for shard in &shards {
        write_shard(shard, &out_dir.join(shard_file_name(shard.shard_id())))?;
    }
    write_labels(&data.labels(), &out_dir.join(LABELS_FILE))?;
    let manifest = Manifest {
        format: FORMAT_TAG.to_string(),
        n: data.n,
        p: data.p,
        shards: partition.num_shards,
        nnz: data.nnz,
        shard_features: shards.iter().map(|s| s.features().len()).collect(),
        shard_nnz: shards.iter().map(FeatureShard::nnz).collect(),
    };
    let path = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

struct ShardHeader {
    shard: usize,
    of: usize,
    n: usize,
    p: usize,
}

fn parse_header(line: &str) -> std::result::Result<ShardHeader, String> {
    let rest = line
        .trim_end()
        .strip_prefix('#')
        .and_then(|l| l.strip_prefix(FORMAT_TAG))
        .ok_or_else(|| format!("missing '#{FORMAT_TAG}' header"))?;
    let mut fields = [None; 4];
    for tok in rest.split_whitespace() {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| format!("malformed header field {tok:?}"))?;
        let slot = match key {
            "shard" => 0,
            "of" => 1,
            "n" => 2,
            "p" => 3,
            _ => return Err(format!("unknown header field {key:?}")),
        };
        fields[slot] = Some(
            value
                .parse::<usize>()
                .map_err(|_| format!("invalid header value {tok:?}"))?,
        );
    }
    match fields {
        [Some(shard), Some(of), Some(n), Some(p)] => Ok(ShardHeader { shard, of, n, p }),
        _ => Err("header needs shard=, of=, n= and p=".into()),
    }
}

/// Streams one shard file into memory.
pub fn load_shard(path: &Path) -> Result<FeatureShard> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut offset: u64 = 0;
    let format_err = |offset: u64, message: String| Error::Format {
        path: path.to_path_buf(),
        offset,
        message,
    };

    let read = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    if read == 0 {
        return Err(format_err(0, "empty file, missing header".into()));
    }
    let header = parse_header(&line).map_err(|m| format_err(0, m))?;
    if header.of == 0 || header.shard >= header.of {
        return Err(format_err(0, format!("shard {} of {} is out of range", header.shard, header.of)));
    }
    offset += read as u64;
    let mut builder = ShardBuilder::new(header.shard, header.of, header.n, header.p);
    let consistency = |offset: u64, e: Error| match e {
        Error::Consistency(m) => Error::Consistency(format!("{} at byte {offset}: {m}", path.display())),
        other => other,
    };

    loop {
        line.clear();
        let read = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if read == 0 {
            break;
        }
        let line_start = offset;
        offset += read as u64;
        let mut tokens = line.split_whitespace();
        let Some(feature_tok) = tokens.next() else {
            continue;
        };
        let feature: usize = feature_tok
            .parse()
            .map_err(|_| format_err(line_start, format!("invalid feature id {feature_tok:?}")))?;
        builder
            .push_feature(feature)
            .map_err(|e| consistency(line_start, e))?;
        for tok in tokens {
            let (ex, value) = tok
                .split_once(':')
                .ok_or_else(|| format_err(line_start, format!("malformed posting {tok:?}")))?;
            let ex: usize = ex
                .parse()
                .map_err(|_| format_err(line_start, format!("invalid example id in {tok:?}")))?;
            let value: f64 = value
                .parse()
                .map_err(|_| format_err(line_start, format!("invalid value in {tok:?}")))?;
            builder
                .push_posting(ex, value)
                .map_err(|e| consistency(line_start, e))?;
        }
    }
    Ok(builder.finish())
}

pub fn load_labels(path: &Path) -> Result<LabelVector> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let tok = line.trim();
        if tok.is_empty() {
            continue;
        }
        labels.push(parse_label(tok).ok_or_else(|| Error::Parse {
            line: idx + 1,
            message: format!("{}: invalid label {tok:?}", path.display()),
        })?);
    }
    LabelVector::new(labels)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.clone(),
        offset: 0,
        message: e.to_string(),
    })?;
    if manifest.format != FORMAT_TAG {
        return Err(Error::Consistency(format!(
            "{}: unsupported format {:?}",
            path.display(),
            manifest.format
        )));
    }
    Ok(manifest)
}

fn check_against_manifest(shard: &FeatureShard, manifest: &Manifest, m: usize) -> Result<()> {
    let ok = shard.shard_id() == m
        && shard.num_shards() == manifest.shards
        && shard.n() == manifest.n
        && shard.p() == manifest.p
        && manifest.shard_features.get(m) == Some(&shard.features().len())
        && manifest.shard_nnz.get(m) == Some(&shard.nnz());
    if ok {
        Ok(())
    } else {
        Err(Error::Consistency(format!(
            "shard file {} does not match the manifest",
            shard_file_name(m)
        )))
    }
}

/// One worker's view of a converted dataset directory.
#[derive(Debug, Clone)]
pub struct WorkerData {
    pub manifest: Manifest,
    pub shard: FeatureShard,
    pub labels: LabelVector,
}

fn checked_labels(dir: &Path, manifest: &Manifest) -> Result<LabelVector> {
    let labels = load_labels(&dir.join(LABELS_FILE))?;
    if labels.len() != manifest.n {
        return Err(Error::Consistency(format!(
            "{} labels, manifest says n = {}",
            labels.len(),
            manifest.n
        )));
    }
    Ok(labels)
}

pub fn load_worker(dir: &Path, rank: usize) -> Result<WorkerData> {
    let manifest = read_manifest(dir)?;
    if rank >= manifest.shards {
        return Err(Error::InvalidInput(format!(
            "rank {rank} but the dataset has {} shards",
            manifest.shards
        )));
    }
    let shard = load_shard(&dir.join(shard_file_name(rank)))?;
    check_against_manifest(&shard, &manifest, rank)?;
    let labels = checked_labels(dir, &manifest)?;
    Ok(WorkerData {
        manifest,
        shard,
        labels,
    })
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub shards: Vec<FeatureShard>,
    pub labels: LabelVector,
}

/// Loads every shard of a converted directory (in parallel) and checks that
/// together they partition the feature ids.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let shards: Vec<FeatureShard> = thread::scope(|s| {
        let handles: Vec<_> = (0..manifest.shards)
            .map(|m| s.spawn(move || load_shard(&dir.join(shard_file_name(m)))))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("shard loader panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    for (m, shard) in shards.iter().enumerate() {
        check_against_manifest(shard, &manifest, m)?;
    }
    check_shard_cover(&shards)?;
    let labels = checked_labels(dir, &manifest)?;
    Ok(Dataset {
        dir: dir.to_path_buf(),
        manifest,
        shards,
        labels,
    })
}

/// Row-major sparse examples, for scoring a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSet {
    offsets: Vec<usize>,
    features: Vec<usize>,
    values: Vec<f64>,
    labels: LabelVector,
}

impl ExampleSet {
    pub fn from_parsed(data: &ParsedDataset) -> Self {
        let mut offsets = Vec::with_capacity(data.n + 1);
        offsets.push(0);
        let mut features = Vec::with_capacity(data.nnz);
        let mut values = Vec::with_capacity(data.nnz);
        for r in &data.records {
            for &(j, v) in &r.features {
                features.push(j);
                values.push(v);
            }
            offsets.push(features.len());
        }
        Self {
            offsets,
            features,
            values,
            labels: data.labels(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &LabelVector {
        &self.labels
    }

    /// `βᵀx_i` for every example; features beyond `beta.len()` count as zero
    /// weight.
    pub fn margins(&self, beta: &[f64]) -> Vec<f64> {
        self.offsets
            .windows(2)
            .map(|w| {
                (w[0]..w[1])
                    .filter_map(|k| beta.get(self.features[k]).map(|b| b * self.values[k]))
                    .sum()
            })
            .collect()
    }
}
