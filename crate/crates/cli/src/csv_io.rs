//! Cascade CSV files: `cascade_id,time,magnitude[,user_id]` plus the
//! optional per-cascade columns `observation_time`, `initiator_user_id` and
//! `orphan`.
//!
//! Times may be absolute; each cascade is shifted so that its first event
//! sits at 0. `observation_time` (alias `T`) is read in the same clock as
//! `time` and must be constant within a cascade. Without an
//! `initiator_user_id` column the initiator is the first event's user.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use reshare_core::{Cascade, Error, MarkedEvent};

use crate::error::{CliError, Result};

pub const CASCADE_ID: &str = "cascade_id";
pub const TIME: &str = "time";
pub const MAGNITUDE: &str = "magnitude";
pub const USER_ID: &str = "user_id";
pub const OBSERVATION_TIME: &str = "observation_time";
pub const INITIATOR: &str = "initiator_user_id";
pub const ORPHAN: &str = "orphan";
pub const SIMULATED: &str = "simulated";

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

struct Columns {
    id: usize,
    time: usize,
    magnitude: Option<usize>,
    user: Option<usize>,
    observation: Option<usize>,
    initiator: Option<usize>,
    orphan: Option<usize>,
}

fn find(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers.iter().position(|h| names.contains(&h))
}

fn columns(headers: &csv::StringRecord, has_marks: bool, source: &str) -> Result<Columns> {
    let required = |name: &str| {
        find(headers, &[name]).ok_or_else(|| CliError::Format(format!("{source}: missing column `{name}`")))
    };
    let id = required(CASCADE_ID)?;
    let time = required(TIME)?;
    let magnitude = if has_marks { Some(required(MAGNITUDE)?) } else { None };
    Ok(Columns {
        id,
        time,
        magnitude,
        user: find(headers, &[USER_ID]),
        observation: find(headers, &[OBSERVATION_TIME, "T"]),
        initiator: find(headers, &[INITIATOR]),
        orphan: find(headers, &[ORPHAN]),
    })
}

fn parse_number(field: &str, column: &str, row: u64, source: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| CliError::Format(format!("{source}: row {row}: `{column}` is not a number: `{field}`")))
}

struct Pending {
    id: String,
    events: Vec<MarkedEvent>,
    observation: Option<f64>,
    initiator: Option<String>,
    orphan: bool,
}

/// Reads cascades from CSV text. `has_marks = false` ignores any magnitude
/// column and sets every magnitude to 1.
pub fn read_cascades<R: Read>(reader: R, has_marks: bool, source: &str) -> Result<Vec<Cascade>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CliError::from_csv(source, e))?.clone();
    let cols = columns(&headers, has_marks, source)?;
    let mut pending: Vec<Pending> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::from_csv(source, e))?;
        let row = record.position().map_or(0, |p| p.line());
        let id = record.get(cols.id).unwrap_or("");
        if id.is_empty() {
            return Err(CliError::Format(format!("{source}: row {row}: empty `{CASCADE_ID}`")));
        }
        let time = parse_number(record.get(cols.time).unwrap_or(""), TIME, row, source)?;
        if !(time >= 0.0 && time.is_finite()) {
            return Err(Error::Validation(format!("{source}: row {row}: invalid time {time}")).into());
        }
        let magnitude = match cols.magnitude.and_then(|i| record.get(i)) {
            Some(f) if !f.is_empty() => parse_number(f, MAGNITUDE, row, source)?,
            _ => 1.0,
        };
        if !(magnitude >= 0.0 && magnitude.is_finite()) {
            return Err(Error::Validation(format!("{source}: row {row}: invalid magnitude {magnitude}")).into());
        }
        let mut event = MarkedEvent::new(time, magnitude);
        if let Some(u) = cols.user.and_then(|i| record.get(i)).filter(|u| !u.is_empty()) {
            event.user_id = Some(u.to_string());
        }
        let observation = match cols.observation.and_then(|i| record.get(i)) {
            Some(f) if !f.is_empty() => Some(parse_number(f, OBSERVATION_TIME, row, source)?),
            _ => None,
        };
        let slot = *index.entry(id.to_string()).or_insert_with(|| {
            pending.push(Pending {
                id: id.to_string(),
                events: Vec::new(),
                observation: None,
                initiator: None,
                orphan: false,
            });
            pending.len() - 1
        });
        let p = &mut pending[slot];
        if let Some(t) = observation {
            match p.observation {
                Some(prev) if prev != t => {
                    return Err(Error::Validation(format!(
                        "{source}: row {row}: cascade `{id}` has conflicting observation times {prev} and {t}"
                    ))
                    .into())
                }
                _ => p.observation = Some(t),
            }
        }
        if p.events.is_empty() {
            p.initiator = cols.initiator.and_then(|i| record.get(i)).filter(|u| !u.is_empty()).map(String::from);
            p.orphan = cols.orphan.and_then(|i| record.get(i)).is_some_and(|f| f == "1" || f == "true");
        }
        p.events.push(event);
    }
    if pending.is_empty() {
        return Err(Error::EmptyInput(format!("{source}: no rows")).into());
    }
    pending
        .into_iter()
        .map(|p| {
            let mut c = Cascade::from_absolute(p.id, p.events, p.observation)?;
            if cols.initiator.is_some() {
                c.initiator_user_id = p.initiator;
            }
            c.orphan = p.orphan;
            Ok(c)
        })
        .collect()
}

pub fn load_cascades_csv(path: &Path, has_marks: bool) -> Result<Vec<Cascade>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_cascades(file, has_marks, &path.display().to_string())
}

/// Writes cascades in relative time; `simulated`, when given, adds a 0/1
/// column flagging generated events.
pub fn write_cascades<W: Write>(writer: W, cascades: &[Cascade], simulated: Option<&[Vec<bool>]>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![CASCADE_ID, TIME, MAGNITUDE, USER_ID, OBSERVATION_TIME, INITIATOR, ORPHAN];
    if simulated.is_some() {
        header.push(SIMULATED);
    }
    w.write_record(&header)?;
    for (k, c) in cascades.iter().enumerate() {
        let t = fmt_f64(c.observation_time());
        let initiator = c.initiator_user_id.clone().unwrap_or_default();
        let orphan = if c.orphan { "1" } else { "0" };
        for (i, e) in c.events().iter().enumerate() {
            let mut row = vec![
                c.cascade_id.clone(),
                fmt_f64(e.time),
                fmt_f64(e.magnitude),
                e.user_id.clone().unwrap_or_default(),
                t.clone(),
                initiator.clone(),
                orphan.to_string(),
            ];
            if let Some(flags) = simulated {
                row.push(if flags[k][i] { "1" } else { "0" }.to_string());
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_cascades_csv(path: &Path, cascades: &[Cascade], simulated: Option<&[Vec<bool>]>) -> Result<()> {
    let file = crate::create_file(path)?;
    write_cascades(file, cascades, simulated).map_err(|e| CliError::from_csv(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, marks: bool) -> Result<Vec<Cascade>> {
        read_cascades(text.as_bytes(), marks, "test")
    }

    #[test]
    fn unmarked_defaults() {
        let cs = read("cascade_id,time\nc1,0\nc1,3\nc1,10\n", false).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].times().collect::<Vec<_>>(), vec![0.0, 3.0, 10.0]);
        assert_eq!(cs[0].observation_time(), 10.0);
        assert!(cs[0].magnitudes().all(|m| m == 1.0));
    }

    #[test]
    fn absolute_times_are_shifted() {
        let cs = read("cascade_id,time\nc1,100\nc1,103\n", false).unwrap();
        assert_eq!(cs[0].times().collect::<Vec<_>>(), vec![0.0, 3.0]);
    }

    #[test]
    fn errors_name_column_and_row() {
        let e = read("cascade_id,time\nc1,0\n", true).unwrap_err();
        assert!(e.to_string().contains("`magnitude`"), "{e}");
        let e = read("cascade_id,magnitude\nc1,0\n", true).unwrap_err();
        assert!(e.to_string().contains("`time`"), "{e}");
        let e = read("cascade_id,time,magnitude\nc1,0,1\nc1,-2,1\n", true).unwrap_err();
        assert!(e.to_string().contains("row 3"), "{e}");
        let e = read("cascade_id,time,magnitude\nc1,0,1\nc1,2,-1\n", true).unwrap_err();
        assert!(e.to_string().contains("row 3"), "{e}");
        let e = read("cascade_id,time\n", false).unwrap_err();
        assert!(matches!(e, CliError::Core(Error::EmptyInput(_))));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn observation_column_and_users() {
        let text = "cascade_id,time,magnitude,user_id,T\na,5,10,u1,50\na,7,2,u2,50\nb,0,3,,\n";
        let cs = read(text, true).unwrap();
        assert_eq!(cs[0].observation_time(), 45.0);
        assert_eq!(cs[0].initiator_user_id.as_deref(), Some("u1"));
        assert_eq!(cs[1].initiator_user_id, None);
        assert!(read("cascade_id,time,T\na,0,5\na,1,6\n", false).is_err());
    }

    #[test]
    fn initiator_and_orphan_columns() {
        let text = "cascade_id,time,user_id,initiator_user_id,orphan\na,0,r1,src,1\na,4,r2,src,1\nb,0,u,,0\n";
        let cs = read(text, false).unwrap();
        assert_eq!(cs[0].initiator_user_id.as_deref(), Some("src"));
        assert!(cs[0].orphan);
        assert_eq!(cs[1].initiator_user_id, None);
        assert!(!cs[1].orphan);
        let mut buf = Vec::new();
        write_cascades(&mut buf, &cs, None).unwrap();
        assert_eq!(read_cascades(buf.as_slice(), false, "buf").unwrap(), cs);
    }

    #[test]
    fn round_trip_is_exact() {
        let text = "cascade_id,time,magnitude\nx,0,1.5\nx,0.1,3\nx,0.30000000000000004,1e-7\ny,0,12345678.9\n";
        let cs = read(text, true).unwrap();
        let mut buf = Vec::new();
        write_cascades(&mut buf, &cs, None).unwrap();
        let back = read_cascades(buf.as_slice(), true, "buf").unwrap();
        assert_eq!(cs, back);
    }

    #[test]
    fn float_formatting_round_trips() {
        for x in [0.0, 1.0, 0.1, 1e-7, 123.456, 1e300, 5e-324, 2.5e15, 1e16] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
