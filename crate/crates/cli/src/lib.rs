//! File formats, tweet ingestion and the `reshare` command-line tool built
//! on `reshare-core`.

use std::cmp::Ordering;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

pub mod cli;
pub mod csv_io;
pub mod error;
pub mod feature_csv;
pub mod manifest;
pub mod model_file;
pub mod tweets;

pub use csv_io::{load_cascades_csv, write_cascades_csv};
pub use error::{CliError, Result};
pub use model_file::ModelFile;
pub use tweets::{parse_raw_tweets, FieldMapping, ParsedTweets};

/// Creates `path`, making missing parent directories.
pub fn create_file(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Format(e.to_string()))?;
    text.push('\n');
    let mut f = create_file(path)?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

/// Id order: numeric ids first, by value, then the rest as strings.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u128>(), b.parse::<u128>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}
