use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Patient-keyed table of real-valued attributes. Missing cells are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularFrame {
    /// Prefix applied to column names when the frame takes part in a join.
    pub source: Option<String>,
    columns: Vec<String>,
    ids: Vec<String>,
    values: Vec<f64>,
}

pub const ID_COLUMN: &str = "patient_id";

impl TabularFrame {
    pub fn new(columns: Vec<String>, ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != columns.len() * ids.len() {
            return Err(Error::dim(format!(
                "{} values for {} rows × {} columns",
                values.len(),
                ids.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::Data(format!("duplicate patient id {dup}")));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = columns.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::Data(format!("duplicate column {dup}")));
        }
        Ok(Self {
            source: None,
            columns,
            ids,
            values,
        })
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.columns.len() + col]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_nan()
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.columns.len();
        &self.values[row * n..(row + 1) * n]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn row_index(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|c| c == id)
    }

    /// Keeps the listed columns, in the listed order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let names = cols.iter().map(|&c| self.columns[c].clone()).collect();
        let mut values = Vec::with_capacity(self.n_rows() * cols.len());
        for r in 0..self.n_rows() {
            let row = self.row(r);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        let mut f = Self::new(names, self.ids.clone(), values)?;
        f.source = self.source.clone();
        Ok(f)
    }

    /// Reorders rows to follow `ids`; every id must be present.
    pub fn reorder_rows(&self, ids: &[String]) -> Result<Self> {
        let pos: HashMap<&str, usize> = self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut values = Vec::with_capacity(ids.len() * self.n_cols());
        for id in ids {
            let r = *pos
                .get(id.as_str())
                .ok_or_else(|| Error::Consistency(format!("patient {id} missing from EMR table")))?;
            values.extend_from_slice(self.row(r));
        }
        Self::new(self.columns.clone(), ids.to_vec(), values)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(file)
    }

    /// UTF-8 CSV with a header row, a `patient_id` column, `.` decimals.
    /// Empty cells are missing values.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Data(format!("unreadable CSV header: {e}")))?
            .clone();
        let id_col = headers
            .iter()
            .position(|h| h == ID_COLUMN)
            .ok_or_else(|| Error::Data(format!("CSV lacks a `{ID_COLUMN}` column")))?;
        let columns: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != id_col)
            .map(|(_, h)| h.to_string())
            .collect();
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("CSV row {}: {e}", line + 2)))?;
            for (i, cell) in rec.iter().enumerate() {
                if i == id_col {
                    ids.push(cell.to_string());
                    continue;
                }
                let cell = cell.trim();
                let v = if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse::<f64>().map_err(|_| {
                        Error::Data(format!("CSV row {}, column {}: `{cell}` is not a number", line + 2, headers[i].to_string()))
                    })?
                };
                values.push(v);
            }
        }
        Self::new(columns, ids, values)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let to_err = |e: csv::Error| Error::Internal(format!("CSV write failed: {e}"));
        let mut header = vec![ID_COLUMN.to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(to_err)?;
        for r in 0..self.n_rows() {
            let mut rec = vec![self.ids[r].clone()];
            rec.extend(self.row(r).iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
            w.write_record(&rec).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::Internal(format!("CSV flush failed: {e}")))
    }
}

/// Outer join on patient id. Rows appear in order of first appearance; cells
/// a table has no row for are missing. Columns of a table with a `source` are
/// prefixed `source.`.
pub fn join_tables(tables: &[TabularFrame]) -> Result<TabularFrame> {
    let mut ids: Vec<String> = Vec::new();
    let mut row_of: HashMap<String, usize> = HashMap::new();
    let mut columns = Vec::new();
    for t in tables {
        for id in t.ids() {
            if !row_of.contains_key(id) {
                row_of.insert(id.clone(), ids.len());
                ids.push(id.clone());
            }
        }
        columns.extend(t.columns().iter().map(|c| match &t.source {
            Some(s) => format!("{s}.{c}"),
            None => c.clone(),
        }));
    }
    let width = columns.len();
    let mut values = vec![f64::NAN; ids.len() * width];
    let mut offset = 0;
    for t in tables {
        for (r, id) in t.ids().iter().enumerate() {
            let dst = row_of[id];
            values[dst * width + offset..dst * width + offset + t.n_cols()].copy_from_slice(t.row(r));
        }
        offset += t.n_cols();
    }
    TabularFrame::new(columns, ids, values)
}
