//! Labeled molecule CSVs (`smiles,<task1>,<task2>,...`).

use std::fs::File;
use std::io::Read;
use std::path::PathBuf;

use thiserror::Error;

use crate::graph::MolGraph;
use crate::smiles::parse_smiles;
use crate::trainer::TaskKind;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("no valid molecules ({} rows failed)", .0.failures.len())]
    NoValidMolecules(LoadReport),
}

/// Which columns hold labels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelColumns {
    /// Every column other than the SMILES column.
    #[default]
    AllOthers,
    /// These columns, in this order. Empty reads SMILES only.
    Named(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub path: PathBuf,
    pub smiles_column: String,
    pub label_columns: LabelColumns,
    pub task: TaskKind,
}

impl DatasetFile {
    pub fn new(path: impl Into<PathBuf>, task: TaskKind) -> Self {
        Self {
            path: path.into(),
            smiles_column: "smiles".into(),
            label_columns: LabelColumns::AllOthers,
            task,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseFailure {
    /// 1-based line in the file (the header is line 1).
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadReport {
    pub rows: usize,
    pub failures: Vec<ParseFailure>,
}

/// Successfully parsed rows, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub smiles: Vec<String>,
    pub graphs: Vec<MolGraph>,
    /// `labels[i][t]`; `None` for an empty cell.
    pub labels: Vec<Vec<Option<f64>>>,
    pub task_names: Vec<String>,
    pub task: TaskKind,
    pub lines: Vec<u64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

pub fn load_dataset(file: &DatasetFile) -> Result<(Dataset, LoadReport), DatasetError> {
    let f = File::open(&file.path)?;
    read_dataset(f, &file.smiles_column, &file.label_columns, file.task)
}

fn parse_label(cell: &str, task: TaskKind) -> Result<Option<f64>, String> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell.parse().map_err(|_| format!("label `{cell}` is not numeric"))?;
    if !v.is_finite() {
        return Err(format!("label `{cell}` is not finite"));
    }
    if task == TaskKind::Classification && v != 0.0 && v != 1.0 {
        return Err(format!("classification label `{cell}` is not 0 or 1"));
    }
    Ok(Some(v))
}

/// Parses CSV text. Rows that fail (bad SMILES, bad label, wrong field
/// count, invalid UTF-8) are reported and skipped.
pub fn read_dataset<R: Read>(
    reader: R,
    smiles_column: &str,
    label_columns: &LabelColumns,
    task: TaskKind,
) -> Result<(Dataset, LoadReport), DatasetError> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header: Vec<String> = match csv.byte_headers() {
        Ok(h) => h.iter().map(|c| String::from_utf8_lossy(c).trim().to_string()).collect(),
        Err(_) => Vec::new(),
    };
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let smiles_idx = col(smiles_column)?;
    let label_idx: Vec<usize> = match label_columns {
        LabelColumns::AllOthers => (0..header.len()).filter(|&i| i != smiles_idx).collect(),
        LabelColumns::Named(names) => names.iter().map(|c| col(c)).collect::<Result<_, _>>()?,
    };
    let task_names: Vec<String> = label_idx.iter().map(|&i| header[i].clone()).collect();

    let mut data = Dataset {
        smiles: Vec::new(),
        graphs: Vec::new(),
        labels: Vec::new(),
        task_names,
        task,
        lines: Vec::new(),
    };
    let mut report = LoadReport::default();
    let mut record = csv::ByteRecord::new();
    loop {
        let line = csv.position().line();
        match csv.read_byte_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                report.rows += 1;
                report.failures.push(ParseFailure {
                    line,
                    reason: format!("unreadable row: {e}"),
                });
                // A broken quote can swallow the rest of the file; stop there.
                if !matches!(e.kind(), csv::ErrorKind::Utf8 { .. } | csv::ErrorKind::UnequalLengths { .. }) {
                    break;
                }
                continue;
            }
        }
        let line = record.position().map(|p| p.line()).unwrap_or(line);
        report.rows += 1;
        match parse_row(&record, smiles_idx, &label_idx, task) {
            Ok((smiles, graph, labels)) => {
                data.smiles.push(smiles);
                data.graphs.push(graph);
                data.labels.push(labels);
                data.lines.push(line);
            }
            Err(reason) => report.failures.push(ParseFailure { line, reason }),
        }
    }
    for f in &report.failures {
        log::warn!("line {}: {}", f.line, f.reason);
    }
    if data.is_empty() {
        return Err(DatasetError::NoValidMolecules(report));
    }
    Ok((data, report))
}

type Row = (String, MolGraph, Vec<Option<f64>>);

fn parse_row(record: &csv::ByteRecord, smiles_idx: usize, label_idx: &[usize], task: TaskKind) -> Result<Row, String> {
    let field = |i: usize| -> Result<&str, String> {
        let raw = record.get(i).ok_or_else(|| format!("row has {} fields, column {} missing", record.len(), i + 1))?;
        std::str::from_utf8(raw).map_err(|_| "row is not valid UTF-8".to_string())
    };
    let smiles = field(smiles_idx)?.trim().to_string();
    let graph = parse_smiles(&smiles).map_err(|e| format!("SMILES `{smiles}`: {e}"))?;
    let labels = label_idx
        .iter()
        .map(|&i| parse_label(field(i)?, task))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((smiles, graph, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, task: TaskKind) -> Result<(Dataset, LoadReport), DatasetError> {
        read_dataset(text.as_bytes(), "smiles", &LabelColumns::AllOthers, task)
    }

    #[test]
    fn malformed_rows_are_reported() {
        let (d, r) = read("smiles,p\nCCO,1\nC(C,0\nc1ccccc1,0\n", TaskKind::Classification).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(r.rows, 3);
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].line, 3);
        assert_eq!(d.lines, vec![2, 4]);
    }

    #[test]
    fn empty_cells_are_missing_labels() {
        let (d, _) = read("smiles,a,b\nCC,1,\nCO,,0\n", TaskKind::Classification).unwrap();
        assert_eq!(d.task_names, vec!["a", "b"]);
        assert_eq!(d.labels, vec![vec![Some(1.0), None], vec![None, Some(0.0)]]);
    }

    #[test]
    fn duplicates_are_kept() {
        let (d, _) = read("smiles,y\nCC,1.5\nCC,1.5\n", TaskKind::Regression).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.graphs[0], d.graphs[1]);
    }

    #[test]
    fn column_errors() {
        assert!(matches!(read("mol,y\nCC,1\n", TaskKind::Regression), Err(DatasetError::MissingColumn(c)) if c == "smiles"));
        assert!(matches!(
            read_dataset(
                "smiles,y\nCC,1\n".as_bytes(),
                "smiles",
                &LabelColumns::Named(vec!["z".into()]),
                TaskKind::Regression
            ),
            Err(DatasetError::MissingColumn(_))
        ));
        assert!(matches!(read("", TaskKind::Regression), Err(DatasetError::MissingColumn(_))));
        assert!(matches!(read("smiles,y\nXX,1\n", TaskKind::Regression), Err(DatasetError::NoValidMolecules(r)) if r.failures.len() == 1));
    }

    #[test]
    fn bad_labels_and_ragged_rows() {
        let (d, r) = read("smiles,y\nCC,2\nCO,abc\nCN\nCCC,1\n", TaskKind::Classification).unwrap();
        assert_eq!(d.smiles, vec!["CCC"]);
        assert_eq!(r.failures.len(), 3);
    }

    #[test]
    fn smiles_only() {
        let (d, _) = read_dataset("smiles,y\nCC,junk\n".as_bytes(), "smiles", &LabelColumns::Named(vec![]), TaskKind::Regression).unwrap();
        assert_eq!(d.labels, vec![Vec::<Option<f64>>::new()]);
        assert!(d.task_names.is_empty());
    }

    #[test]
    fn quoted_fields() {
        let (d, _) = read("\"smiles\",\"y\"\n\"CC(=O)O\",\"0.5\"\n", TaskKind::Regression).unwrap();
        assert_eq!(d.smiles, vec!["CC(=O)O"]);
        assert_eq!(d.labels, vec![vec![Some(0.5)]]);
    }
}
