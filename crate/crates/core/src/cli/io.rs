//! Plain-text file formats: schema, data, offsets and numeric matrices.
//!
//! All files are comma-separated with a header row. Numbers are written in
//! the shortest form that parses back to the same `f64`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::{Column, MixedDataMatrix, VariableKind, VariableSchema};
use crate::error::{Error, Result};

pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::parse(path, line, e.to_string())
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::parse(path, line, format!("not a number: '{field}'")))
}

/// Schema file with columns `name,kind,trials`; `trials` is required for
/// binomial rows and must be empty otherwise.
pub fn read_schema(path: &Path) -> Result<VariableSchema> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let idx = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let name_i = idx("name").ok_or_else(|| Error::parse(path, 1, "missing 'name' column"))?;
    let kind_i = idx("kind").ok_or_else(|| Error::parse(path, 1, "missing 'kind' column"))?;
    let trials_i = idx("trials");

    let mut cols = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let name = rec.get(name_i).unwrap_or("").to_string();
        if name.is_empty() {
            return Err(Error::parse(path, line, "empty column name"));
        }
        let trials = trials_i.and_then(|i| rec.get(i)).unwrap_or("");
        let kind = match rec.get(kind_i).unwrap_or("").to_ascii_lowercase().as_str() {
            "continuous" => VariableKind::Continuous,
            "count" => VariableKind::Count,
            "binomial" => {
                let t: u32 = trials.parse().map_err(|_| {
                    Error::parse(
                        path,
                        line,
                        format!("binomial column '{name}' needs integer trials"),
                    )
                })?;
                VariableKind::Binomial { trials: t }
            }
            other => {
                return Err(Error::parse(path, line, format!("unknown kind '{other}'")));
            }
        };
        if !matches!(kind, VariableKind::Binomial { .. }) && !trials.is_empty() {
            return Err(Error::parse(
                path,
                line,
                "trials given for a non-binomial column",
            ));
        }
        cols.push(Column::new(name, kind));
    }
    VariableSchema::new(cols)
}

pub fn write_schema(path: &Path, schema: &VariableSchema) -> Result<()> {
    let mut out = String::from("name,kind,trials\n");
    for c in schema.columns() {
        let trials = c.kind.trials().map(|t| t.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", c.name, c.kind.label(), trials));
    }
    write_atomic(path, out.as_bytes())
}

/// Data file whose header names the schema columns (in any order).
pub fn read_data(path: &Path, schema: &VariableSchema) -> Result<DMatrix<f64>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.len() != schema.len() {
        return Err(Error::parse(
            path,
            1,
            format!(
                "header has {} columns, schema has {}",
                headers.len(),
                schema.len()
            ),
        ));
    }
    let mut order = Vec::with_capacity(schema.len());
    for c in schema.columns() {
        let pos = headers.iter().position(|h| h == c.name).ok_or_else(|| {
            Error::parse(path, 1, format!("column '{}' missing from header", c.name))
        })?;
        order.push(pos);
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut row = Vec::with_capacity(order.len());
        for &pos in &order {
            row.push(parse_f64(path, line, rec.get(pos).unwrap_or(""))?);
        }
        rows.push(row);
    }
    let p = schema.len();
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

pub fn write_data(path: &Path, data: &MixedDataMatrix, schema: &VariableSchema) -> Result<()> {
    let header: Vec<String> = schema.columns().iter().map(|c| c.name.clone()).collect();
    write_matrix(path, &header, &data.x)
}

/// One offset per line; a non-numeric first line is taken as a header.
pub fn read_offsets(path: &Path) -> Result<DVector<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        match t.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if k == 0 => continue,
            Err(_) => return Err(Error::parse(path, k + 1, format!("not a number: '{t}'"))),
        }
    }
    Ok(DVector::from_vec(values))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = reader(path)?;
    let width = rdr.headers().map_err(|e| csv_err(path, e))?.len();
    let mut values = Vec::new();
    let mut nrows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != width {
            return Err(Error::parse(
                path,
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        for f in rec.iter() {
            values.push(parse_f64(path, line, f)?);
        }
        nrows += 1;
    }
    Ok(DMatrix::from_row_slice(nrows, width, &values))
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(Error::parse(
            path,
            1,
            format!("expected one column, found {}", m.ncols()),
        ));
    }
    Ok(DVector::from_column_slice(m.as_slice()))
}

pub fn write_matrix(path: &Path, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::with_capacity(m.len() * 20);
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_f64(m[(i, j)]));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_vector(path: &Path, name: &str, v: &DVector<f64>) -> Result<()> {
    let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    write_matrix(path, &[name.to_string()], &m)
}

pub fn factor_header(q: usize) -> Vec<String> {
    (1..=q).map(|k| format!("f{k}")).collect()
}

/// Write to a sibling temporary file and rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let tmp = path.with_extension("tmp~");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
