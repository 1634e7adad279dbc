use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fold_prefix, FeatureError, FeatureId};
use crate::traffic::LabeledDataset;

/// A model input column: either one of the packet features or an opaque
/// named column loaded from a feature-only CSV.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum Column {
    Packet(FeatureId),
    External(String),
}

impl Column {
    pub fn name(&self) -> &str {
        match self {
            Column::Packet(id) => id.name(),
            Column::External(name) => name,
        }
    }

    pub fn feature(&self) -> Option<FeatureId> {
        match self {
            Column::Packet(id) => Some(*id),
            Column::External(_) => None,
        }
    }

    /// Planning memory estimate; opaque columns are assumed 32 bits wide.
    pub fn memory_cost(&self) -> u32 {
        self.feature().map_or(32, FeatureId::memory_cost)
    }

    pub fn convergence_cost(&self) -> u32 {
        self.feature().map_or(1, FeatureId::convergence_cost)
    }

    pub fn packet_columns() -> Vec<Column> {
        FeatureId::ALL.iter().map(|f| Column::Packet(*f)).collect()
    }
}

impl From<String> for Column {
    fn from(name: String) -> Self {
        match name.parse::<FeatureId>() {
            Ok(id) => Column::Packet(id),
            Err(_) => Column::External(name),
        }
    }
}

impl From<Column> for String {
    fn from(c: Column) -> String {
        c.name().to_string()
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Column-major matrix of feature values. Definedness is tracked per
/// column: within one context a feature is defined for every row or none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub columns: Vec<Column>,
    values: Vec<Vec<f64>>,
    pub defined: Vec<bool>,
    pub row_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<Column>, values: Vec<Vec<f64>>, defined: Vec<bool>, row_ids: Vec<String>) -> Self {
        assert_eq!(columns.len(), values.len(), "one value vector per column");
        assert_eq!(columns.len(), defined.len(), "one definedness flag per column");
        for col in &values {
            assert_eq!(col.len(), row_ids.len(), "ragged feature matrix");
        }
        FeatureMatrix {
            columns,
            values,
            defined,
            row_ids,
        }
    }

    /// Builds a matrix from row-major data with all columns defined.
    pub fn from_rows(columns: Vec<Column>, rows: &[Vec<f64>]) -> Self {
        let mut values = vec![Vec::with_capacity(rows.len()); columns.len()];
        for row in rows {
            assert_eq!(row.len(), columns.len(), "row width mismatch");
            for (col, v) in values.iter_mut().zip(row) {
                col.push(*v);
            }
        }
        let defined = vec![true; columns.len()];
        let row_ids = (0..rows.len()).map(|i| i.to_string()).collect();
        FeatureMatrix::new(columns, values, defined, row_ids)
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[col][row]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|c| c[i]).collect()
    }

    pub fn column_index(&self, column: &Column) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    pub fn defined_columns(&self) -> Vec<usize> {
        (0..self.n_cols()).filter(|&j| self.defined[j]).collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            values: cols.iter().map(|&j| self.values[j].clone()).collect(),
            defined: cols.iter().map(|&j| self.defined[j]).collect(),
            row_ids: self.row_ids.clone(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: self.columns.clone(),
            values: self.values.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            defined: self.defined.clone(),
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }
}

/// Features of all flows at one packet count, with their class ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextData {
    /// Number of leading packets folded per flow; 0 marks whole-flow data.
    pub packet_count: usize,
    pub x: FeatureMatrix,
    pub y: Vec<usize>,
    /// Flows excluded for having fewer than `packet_count` packets.
    pub short_flows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextDataset {
    pub classes: Vec<String>,
    pub columns: Vec<Column>,
    pub contexts: Vec<ContextData>,
    /// Whole-flow features, used to find redundant feature groups.
    pub full: ContextData,
}

impl ContextDataset {
    pub fn packet_counts(&self) -> Vec<usize> {
        self.contexts.iter().map(|c| c.packet_count).collect()
    }

    pub fn context(&self, packet_count: usize) -> Option<&ContextData> {
        self.contexts.iter().find(|c| c.packet_count == packet_count)
    }
}

fn fold_rows(dataset: &LabeledDataset, flow_idx: &[usize], take: Option<usize>) -> Result<Vec<[u64; FeatureId::COUNT]>, FeatureError> {
    flow_idx
        .par_iter()
        .map(|&i| {
            let packets = &dataset.flows[i].packets;
            let n = take.unwrap_or(packets.len());
            fold_prefix(&packets[..n]).map(|v| v.values)
        })
        .collect()
}

fn assemble(
    dataset: &LabeledDataset,
    flow_idx: &[usize],
    rows: Vec<[u64; FeatureId::COUNT]>,
    min_len: usize,
    packet_count: usize,
) -> ContextData {
    let columns = Column::packet_columns();
    let defined: Vec<bool> = FeatureId::ALL.iter().map(|f| min_len >= f.defined_from()).collect();
    let values = FeatureId::ALL
        .iter()
        .map(|f| {
            let j = f.index();
            rows.iter()
                .map(|r| if defined[j] { r[j] as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    let row_ids = flow_idx.iter().map(|&i| dataset.flows[i].key.to_string()).collect();
    let y = flow_idx
        .iter()
        .map(|&i| dataset.flows[i].label.expect("labeled dataset"))
        .collect();
    ContextData {
        packet_count,
        x: FeatureMatrix::new(columns, values, defined, row_ids),
        y,
        short_flows: dataset.flows.len() - flow_idx.len(),
    }
}

/// Features after the first `n` packets of every flow that has at least `n`.
pub fn extract_dataset(dataset: &LabeledDataset, n: usize) -> Result<ContextData, FeatureError> {
    assert!(n >= 1, "packet count must be at least 1");
    let idx: Vec<usize> = (0..dataset.flows.len()).filter(|&i| dataset.flows[i].len() >= n).collect();
    if idx.is_empty() {
        return Err(FeatureError::EmptyContext(n));
    }
    let rows = fold_rows(dataset, &idx, Some(n))?;
    Ok(assemble(dataset, &idx, rows, n, n))
}

/// Whole-flow features over flows with at least three packets (so every
/// feature is defined). Falls back to all flows when fewer than two qualify.
pub fn extract_full_flows(dataset: &LabeledDataset) -> Result<ContextData, FeatureError> {
    let mut idx: Vec<usize> = (0..dataset.flows.len()).filter(|&i| dataset.flows[i].len() >= 3).collect();
    if idx.len() < 2 {
        idx = (0..dataset.flows.len()).filter(|&i| !dataset.flows[i].is_empty()).collect();
    }
    if idx.is_empty() {
        return Err(FeatureError::EmptyContext(1));
    }
    let min_len = idx.iter().map(|&i| dataset.flows[i].len()).min().unwrap_or(0);
    let rows = fold_rows(dataset, &idx, None)?;
    let mut data = assemble(dataset, &idx, rows, min_len, 0);
    data.short_flows = dataset.flows.len() - idx.len();
    Ok(data)
}

/// Extracts every requested context; packet counts no flow reaches are
/// skipped with a warning.
pub fn build_context_dataset(dataset: &LabeledDataset, packet_counts: &[usize]) -> Result<ContextDataset, FeatureError> {
    let mut contexts = Vec::new();
    for &p in packet_counts {
        match extract_dataset(dataset, p) {
            Ok(c) => contexts.push(c),
            Err(FeatureError::EmptyContext(_)) => log::warn!("no flow has {p} packets, context skipped"),
            Err(e) => return Err(e),
        }
    }
    Ok(ContextDataset {
        classes: dataset.classes.clone(),
        columns: Column::packet_columns(),
        contexts,
        full: extract_full_flows(dataset)?,
    })
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Writes `flow,<feature names>,label`; undefined features are empty cells.
pub fn write_matrix_csv<W: Write>(out: W, data: &ContextData, classes: &[String]) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["flow".to_string()];
    header.extend(data.x.columns.iter().map(|c| c.name().to_string()));
    header.push("label".to_string());
    w.write_record(&header)?;
    for i in 0..data.x.n_rows() {
        let mut record = Vec::with_capacity(header.len());
        record.push(data.x.row_ids[i].clone());
        for j in 0..data.x.n_cols() {
            record.push(if data.x.defined[j] {
                format_value(data.x.value(i, j))
            } else {
                String::new()
            });
        }
        record.push(classes[data.y[i]].clone());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// A feature matrix read back from CSV, labels still as text.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrix {
    pub x: FeatureMatrix,
    pub labels: Vec<String>,
}

pub fn read_matrix_csv<R: Read>(input: R) -> Result<RawMatrix, FeatureError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let malformed = |line: u64, reason: String| FeatureError::MalformedCsv { line, reason };
    if header.len() < 3 || header[0] != "flow" || header[header.len() - 1] != "label" {
        return Err(malformed(1, "header must be `flow,<features...>,label`".into()));
    }
    let columns: Vec<Column> = header[1..header.len() - 1].iter().cloned().map(Column::from).collect();
    if columns.iter().collect::<BTreeSet<_>>().len() != columns.len() {
        return Err(malformed(1, "duplicate column name".into()));
    }
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    let mut empty: Vec<Option<bool>> = vec![None; columns.len()];
    let mut row_ids = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(malformed(line, format!("expected {} fields, got {}", header.len(), record.len())));
        }
        row_ids.push(record[0].trim().to_string());
        for j in 0..columns.len() {
            let cell = record[j + 1].trim();
            let is_empty = cell.is_empty();
            if *empty[j].get_or_insert(is_empty) != is_empty {
                return Err(malformed(
                    line,
                    format!("column `{}` mixes defined and undefined cells", columns[j]),
                ));
            }
            let v = if is_empty {
                0.0
            } else {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| malformed(line, format!("bad value `{cell}` in column `{}`", columns[j])))?
            };
            values[j].push(v);
        }
        let label = record[header.len() - 1].trim();
        if label.is_empty() {
            return Err(malformed(line, "empty label".into()));
        }
        labels.push(label.to_string());
    }
    let defined = empty.iter().map(|e| !e.unwrap_or(false)).collect();
    Ok(RawMatrix {
        x: FeatureMatrix::new(columns, values, defined, row_ids),
        labels,
    })
}

fn context_file_name(packet_count: usize) -> String {
    if packet_count == 0 {
        "features_full.csv".to_string()
    } else {
        format!("features_p{packet_count}.csv")
    }
}

pub fn write_context_dir(dir: &Path, dataset: &ContextDataset) -> Result<(), FeatureError> {
    fs::create_dir_all(dir)?;
    for ctx in dataset.contexts.iter().chain(std::iter::once(&dataset.full)) {
        let file = fs::File::create(dir.join(context_file_name(ctx.packet_count)))?;
        write_matrix_csv(std::io::BufWriter::new(file), ctx, &dataset.classes)?;
    }
    Ok(())
}

/// Loads `features_p<n>.csv` files (and `features_full.csv` if present;
/// otherwise the largest context doubles as whole-flow data).
pub fn read_context_dir(dir: &Path) -> Result<ContextDataset, FeatureError> {
    let mut found: Vec<(usize, RawMatrix)> = Vec::new();
    let mut full: Option<RawMatrix> = None;
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let name = entry.file_name().to_string_lossy().to_string();
        let raw = || -> Result<RawMatrix, FeatureError> { read_matrix_csv(fs::File::open(entry.path())?) };
        if name == "features_full.csv" {
            full = Some(raw()?);
        } else if let Some(n) = name
            .strip_prefix("features_p")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&n| n >= 1)
        {
            found.push((n, raw()?));
        }
    }
    found.sort_by_key(|(n, _)| *n);
    if found.is_empty() {
        return Err(FeatureError::NoMatrices(dir.display().to_string()));
    }
    let columns = found[0].1.x.columns.clone();
    let all = found.iter().map(|(_, m)| m).chain(full.iter());
    let mut classes = BTreeSet::new();
    for m in all {
        if m.x.columns != columns {
            return Err(FeatureError::MalformedCsv {
                line: 1,
                reason: "feature files disagree on columns".into(),
            });
        }
        classes.extend(m.labels.iter().cloned());
    }
    let classes: Vec<String> = classes.into_iter().collect();
    let to_ctx = |packet_count: usize, m: RawMatrix| ContextData {
        packet_count,
        y: m.labels
            .iter()
            .map(|l| classes.binary_search(l).expect("class collected"))
            .collect(),
        x: m.x,
        short_flows: 0,
    };
    let full = match full {
        Some(m) => to_ctx(0, m),
        None => {
            let (_, last) = found.last().expect("non-empty").clone();
            to_ctx(0, last)
        }
    };
    let contexts = found.into_iter().map(|(n, m)| to_ctx(n, m)).collect();
    Ok(ContextDataset {
        classes: classes.clone(),
        columns,
        contexts,
        full,
    })
}
