//! Sparse model files: one header line, then `feature_id<TAB>weight` for
//! every nonzero weight in increasing feature order.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use dglmnet::{nnz, Error, Result};

const HEADER_TAG: &str = "# dglmnet model";

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub lambda: f64,
    pub beta: Vec<f64>,
}

pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    let io = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(
        w,
        "{HEADER_TAG} p={} lambda={:?} nnz={}",
        model.beta.len(),
        model.lambda,
        nnz(&model.beta)
    )
    .map_err(io)?;
    for (j, b) in model.beta.iter().enumerate() {
        if *b != 0.0 {
            writeln!(w, "{j}\t{b:?}").map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn format_error(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn read_model(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    // (byte offset, line) pairs
    let mut lines = text.split_inclusive('\n').scan(0usize, |offset, line| {
        let start = *offset;
        *offset += line.len();
        Some((start, line.trim_end_matches(['\n', '\r'])))
    });
    let (_, header) = lines.next().ok_or_else(|| format_error(path, 0, "empty model file"))?;
    let rest = header
        .strip_prefix(HEADER_TAG)
        .ok_or_else(|| format_error(path, 0, format!("expected header starting with {HEADER_TAG:?}")))?;
    let (mut p, mut lambda, mut declared) = (None, None, None);
    for token in rest.split_whitespace() {
        let bad = || format_error(path, 0, format!("malformed header field {token:?}"));
        let (key, value) = token.split_once('=').ok_or_else(bad)?;
        match key {
            "p" => p = Some(value.parse::<usize>().map_err(|_| bad())?),
            "lambda" => lambda = Some(value.parse::<f64>().map_err(|_| bad())?),
            "nnz" => declared = Some(value.parse::<usize>().map_err(|_| bad())?),
            _ => return Err(bad()),
        }
    }
    let (Some(p), Some(lambda), Some(declared)) = (p, lambda, declared) else {
        return Err(format_error(path, 0, "header needs p, lambda and nnz"));
    };

    let mut beta = vec![0.0; p];
    let mut last: Option<usize> = None;
    for (offset, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (j, w) = line
            .split_once('\t')
            .ok_or_else(|| format_error(path, offset, "expected feature_id<TAB>weight"))?;
        let j: usize = j
            .parse()
            .map_err(|_| format_error(path, offset, format!("bad feature id {j:?}")))?;
        let w: f64 = w
            .parse()
            .map_err(|_| format_error(path, offset, format!("bad weight {w:?}")))?;
        if j >= p || last.is_some_and(|l| j <= l) || w == 0.0 || !w.is_finite() {
            return Err(format_error(
                path,
                offset,
                format!("feature {j} out of order, out of range or with zero weight"),
            ));
        }
        beta[j] = w;
        last = Some(j);
    }
    if nnz(&beta) != declared {
        return Err(format_error(
            path,
            0,
            format!("header declares {declared} nonzeros, file has {}", nnz(&beta)),
        ));
    }
    Ok(Model { lambda, beta })
}
