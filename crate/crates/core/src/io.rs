//! Study CSV format: header `study_id,effect,std_err`, `#` comment lines.

use std::io::{Read, Write};

use crate::domain::{Dataset, StudyRecord};
use crate::error::{Error, Result};

pub const HEADER: [&str; 3] = ["study_id", "effect", "std_err"];

fn parse_field(raw: &str, name: &str, line: u64) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("{name} `{raw}` is not a number"),
    })
}

/// Reads and validates a dataset. Parse errors carry the 1-based line number.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers().map_err(csv_error)?.clone();
    let found: Vec<&str> = headers.iter().collect();
    if found != HEADER {
        return Err(Error::Parse {
            line: headers.position().map_or(1, |p| p.line()),
            message: format!("expected header `{}`, found `{}`", HEADER.join(","), found.join(",")),
        });
    }

    let mut studies = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty study_id".into(),
            });
        }
        let effect = parse_field(&record[1], "effect", line)?;
        let std_err = parse_field(&record[2], "std_err", line)?;
        studies.push(StudyRecord::new(id, effect, std_err));
    }
    Dataset::new(studies)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        _ => Error::Parse {
            line,
            message: e.to_string(),
        },
    }
}

/// Writes `ds` in the format accepted by [`read_dataset`]. Numbers use the
/// shortest representation that parses back to the same `f64`.
pub fn write_dataset<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io_err = |e: csv::Error| Error::Io(e.to_string());
    wtr.write_record(HEADER).map_err(io_err)?;
    for s in ds.studies() {
        wtr.write_record([s.id.clone(), s.effect.to_string(), s.std_err.to_string()])
            .map_err(io_err)?;
    }
    wtr.flush().map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_with_comments_and_whitespace() {
        let text = "# comment\nstudy_id,effect,std_err\nA, -2.31 ,0.60\n# another\nB,1e-1,2\n";
        let ds = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.studies()[0].effect, -2.31);
        assert_eq!(ds.studies()[1].std_err, 2.0);
    }

    #[test]
    fn malformed_number_reports_line() {
        let text = "study_id,effect,std_err\nHeffron,-2.31,0.60\nGibelli,abc,0.56\n";
        match read_dataset(text.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_header_rejected() {
        let text = "id,y,se\nA,1,1\n";
        assert!(matches!(read_dataset(text.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn ragged_row_rejected() {
        let text = "study_id,effect,std_err\nA,1\n";
        assert!(matches!(read_dataset(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn validation_errors_pass_through() {
        let text = "study_id,effect,std_err\nA,1,0\n";
        assert_eq!(
            read_dataset(text.as_bytes()),
            Err(Error::NonPositiveStdErr("A".into()))
        );
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in prop::collection::vec((-1e3f64..1e3, 1e-3f64..1e2), 1..20)) {
            let ds = crate::domain::validate_dataset(
                rows.iter().enumerate().map(|(i, &(y, s))| (format!("study {i}"), y, s)),
            ).unwrap();
            let mut buf = Vec::new();
            write_dataset(&ds, &mut buf).unwrap();
            let back = read_dataset(buf.as_slice()).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
