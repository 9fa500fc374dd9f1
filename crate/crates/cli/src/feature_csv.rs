//! Feature table CSV. The header is fixed per model family and carries a
//! `schema_version` column; NaN is never written.

use std::io::Write;
use std::path::Path;

use reshare_core::features::{FeatureTable, RowStatus};

use crate::csv_io::fmt_f64;
use crate::error::{CliError, Result};

pub const FEATURE_SCHEMA_VERSION: u32 = 1;

pub fn header(table: &FeatureTable) -> Vec<String> {
    let mut h = table.header();
    h.push("message".into());
    h.push("schema_version".into());
    h
}

pub fn write_features<W: Write>(writer: W, table: &FeatureTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let fail = |e: csv::Error| CliError::from_csv("features", e);
    w.write_record(header(table)).map_err(fail)?;
    for row in &table.rows {
        let mut rec = vec![
            row.user_id.clone(),
            row.n_cascades.to_string(),
            row.status.label().to_string(),
            row.converged.to_string(),
        ];
        for (name, v) in table.header()[4..].iter().zip(row.numeric()) {
            if !v.is_finite() {
                return Err(CliError::Format(format!("user `{}`: non-finite `{name}`", row.user_id)));
            }
            rec.push(fmt_f64(v));
        }
        rec.push(match &row.status {
            RowStatus::Failed(msg) => msg.clone(),
            _ => String::new(),
        });
        rec.push(FEATURE_SCHEMA_VERSION.to_string());
        w.write_record(&rec).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io("features", e))
}

pub fn write_features_csv(path: &Path, table: &FeatureTable) -> Result<()> {
    write_features(crate::create_file(path)?, table).map_err(|e| match e {
        CliError::Io { source, .. } => CliError::io(path, source),
        other => other,
    })
}
