//! CSV formats: transactions (`entity_id,amount`) and labels
//! (`entity_id,label`).

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::ecdf::TransactionBatch;
use crate::error::{Error, Result};

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Csv {
            line: 1,
            message: format!("missing `{name}` column in header"),
        })
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Csv {
        line,
        message: e.to_string(),
    }
}

/// Read transactions grouped by entity, in order of first appearance.
pub fn read_transactions<R: Read>(reader: R) -> Result<Vec<TransactionBatch>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let id_col = header_index(&headers, "entity_id")?;
    let amount_col = header_index(&headers, "amount")?;

    let mut order: Vec<String> = Vec::new();
    let mut amounts: HashMap<String, Vec<f64>> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let id = record.get(id_col).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::Csv {
                line,
                message: "empty entity_id".into(),
            });
        }
        let raw = record.get(amount_col).unwrap_or("");
        let value: f64 = raw.parse().map_err(|_| Error::Csv {
            line,
            message: format!("cannot parse amount `{raw}`"),
        })?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Csv {
                line,
                message: format!("amount `{raw}` must be finite and non-negative"),
            });
        }
        amounts
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id.clone());
                Vec::new()
            })
            .push(value);
    }
    if order.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let a = amounts.remove(&id).unwrap_or_default();
            TransactionBatch {
                entity_id: id,
                amounts: a,
            }
        })
        .collect())
}

pub fn read_transactions_file(path: &Path) -> Result<Vec<TransactionBatch>> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_transactions(std::io::BufReader::new(f))
}

pub fn write_transactions<W: Write>(writer: W, batches: &[TransactionBatch]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["entity_id", "amount"]).map_err(csv_err)?;
    for b in batches {
        for a in &b.amounts {
            w.write_record([b.entity_id.as_str(), &a.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read an `entity_id,label` file, preserving row order.
pub fn read_labels<R: Read>(reader: R) -> Result<Vec<(String, usize)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let id_col = header_index(&headers, "entity_id")?;
    let label_col = header_index(&headers, "label")?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let raw = record.get(label_col).unwrap_or("");
        let label = raw.parse::<usize>().map_err(|_| Error::Csv {
            line,
            message: format!("cannot parse label `{raw}`"),
        })?;
        out.push((record.get(id_col).unwrap_or("").to_string(), label));
    }
    Ok(out)
}

pub fn read_labels_file(path: &Path) -> Result<Vec<(String, usize)>> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_labels(std::io::BufReader::new(f))
}

pub fn write_labels<W: Write>(writer: W, entity_ids: &[String], labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["entity_id", "label"]).map_err(csv_err)?;
    for (id, l) in entity_ids.iter().zip(labels) {
        w.write_record([id.as_str(), &l.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a square matrix with entity ids as header.
pub fn write_matrix<W: Write>(
    writer: W,
    entity_ids: &[String],
    m: ndarray::ArrayView2<'_, f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(entity_ids).map_err(csv_err)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
