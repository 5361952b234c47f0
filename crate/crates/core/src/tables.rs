//! CSV plumbing shared by every exported table.
//!
//! Files may start with `#` metadata lines (config hash, versions); readers skip them.

use std::io::{Read, Write};

use crate::{Error, Result};

/// Formats a float with the shortest representation that round-trips exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Writes `meta` lines as `# ...` comments, then a header and the rows.
pub fn write_csv<W: Write>(
    out: W,
    meta: &[String],
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut out = out;
    for line in meta {
        writeln!(out, "# {line}")?;
    }
    let mut wtr = csv::WriterBuilder::new().from_writer(out);
    wtr.write_record(header).map_err(csv_err)?;
    for row in rows {
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a CSV with a header, skipping `#` comment lines; checks the header matches.
pub fn read_csv<R: Read>(input: R, expected_header: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != expected_header {
        return Err(Error::Parse(format!(
            "expected header {:?}, found {:?}",
            expected_header, header
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

pub fn parse_f64(field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("bad number {field:?}: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
