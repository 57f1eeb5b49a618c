use std::io::{Read, Write};
use std::path::Path;

use super::{DatasetBuilder, Record, Role, Schema};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

/// Reads a header-first CSV and validates it against `schema`.
///
/// Missing cells (the schema's missing token) are only allowed in the `x1`
/// and `x2` blocks, and each block must be missing as a whole.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();

    let mut roles = Vec::with_capacity(headers.len());
    for name in headers.iter() {
        let role = schema
            .role(name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` has no role")))?;
        roles.push(role);
    }
    for name in schema.roles.keys() {
        if !headers.iter().any(|h| h == name) {
            return Err(Error::Schema(format!(
                "column `{name}` not found in header"
            )));
        }
    }

    let cols_with = |role: Role| -> Vec<usize> {
        roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == role)
            .map(|(i, _)| i)
            .collect()
    };
    let outcome_col = cols_with(Role::Outcome)[0];
    let x1_cols = cols_with(Role::X1);
    let x2_cols = cols_with(Role::X2);
    let z_cols = cols_with(Role::Z);
    let w_cols = cols_with(Role::W);

    let mut builder = DatasetBuilder::new(&headers[outcome_col]);
    for &c in &x1_cols {
        builder = builder.x1(&headers[c]);
    }
    for &c in &x2_cols {
        builder = builder.x2(&headers[c]);
    }
    for &c in &z_cols {
        builder = builder.z(&headers[c]);
    }
    for &c in &w_cols {
        builder = builder.w(&headers[c]);
    }

    let na = schema.missing_token.as_str();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = idx + 1;
        let cell = |c: usize| rec.get(c).unwrap_or("").trim();

        let y_tok = cell(outcome_col);
        let y = match y_tok {
            "0" => 0,
            "1" => 1,
            t if t == na => {
                return Err(Error::MissingRequired {
                    row,
                    column: headers[outcome_col].to_string(),
                })
            }
            t => {
                return Err(Error::BadOutcome {
                    row,
                    token: t.to_string(),
                })
            }
        };

        let required = |cols: &[usize]| -> Result<Vec<&str>> {
            cols.iter()
                .map(|&c| {
                    let t = cell(c);
                    if t == na {
                        Err(Error::MissingRequired {
                            row,
                            column: headers[c].to_string(),
                        })
                    } else {
                        Ok(t)
                    }
                })
                .collect()
        };
        let block = |cols: &[usize], name: &'static str| -> Result<Option<Vec<&str>>> {
            let missing = cols.iter().filter(|&&c| cell(c) == na).count();
            if missing == 0 {
                Ok(Some(cols.iter().map(|&c| cell(c)).collect()))
            } else if missing == cols.len() {
                Ok(None)
            } else {
                Err(Error::PartialBlock { row, block: name })
            }
        };

        let z = required(&z_cols)?;
        let w = required(&w_cols)?;
        let x1 = block(&x1_cols, "x1")?;
        let x2 = block(&x2_cols, "x2")?;
        builder
            .push(y, x1.as_deref(), x2.as_deref(), &z, &w)
            .map_err(|e| match e {
                Error::NonNumeric { column, token, .. } => Error::NonNumeric { row, column, token },
                other => other,
            })?;
    }
    builder.build()
}

/// Writes the dataset in block order (outcome, x1, x2, z, w) with `missing_token`
/// for absent blocks.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W, missing_token: &str) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![dataset.outcome_name().to_string()];
    for col in dataset
        .x1_columns()
        .iter()
        .chain(dataset.x2_columns())
        .chain(dataset.z_columns())
        .chain(dataset.w_columns())
    {
        header.push(col.name().to_string());
    }
    wtr.write_record(&header)?;

    let block_cells =
        |cols: &[super::Column], ids: Option<&Vec<u32>>, out: &mut Vec<String>| match ids {
            Some(ids) => out.extend(cols.iter().zip(ids).map(|(c, &id)| c.level(id).to_string())),
            None => out.extend(cols.iter().map(|_| missing_token.to_string())),
        };
    for Record { y, x1, x2, z, w } in dataset.records() {
        let mut row = vec![y.to_string()];
        block_cells(dataset.x1_columns(), x1.as_ref(), &mut row);
        block_cells(dataset.x2_columns(), x2.as_ref(), &mut row);
        block_cells(dataset.z_columns(), Some(z), &mut row);
        block_cells(dataset.w_columns(), Some(w), &mut row);
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
