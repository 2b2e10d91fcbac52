//! `metrics.csv`: one header line, fixed column order, shortest round-trip
//! decimals, and an empty field for a missing value.

use std::io::{Read, Write};
use std::path::Path;

use rphedge::hedging::MetricsRow;

use crate::error::{CliError, Result};

pub const HEADER: [&str; 6] = ["wall_time_s", "iteration", "n_subproblems", "steplength", "subopt_rel", "feas_err"];

pub fn write_rows<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::runtime(format!("metrics: {e}"));
    if rows.is_empty() {
        writer.write_record(HEADER).map_err(io)?;
    }
    for row in rows {
        writer.serialize(row).map_err(io)?;
    }
    writer.flush().map_err(|e| CliError::runtime(format!("metrics: {e}")))
}

pub fn to_string(rows: &[MetricsRow]) -> String {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

pub fn write_file(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))?;
    write_rows(std::io::BufWriter::new(file), rows)
}

/// Parses a metrics log, insisting on the documented header.
pub fn read_rows<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers().map_err(|e| CliError::parse(format!("metrics: {e}")))?;
    if headers.iter().ne(HEADER) {
        return Err(CliError::parse(format!("metrics: unexpected header {:?}", headers.iter().collect::<Vec<_>>())));
    }
    reader
        .deserialize()
        .map(|row| row.map_err(|e| CliError::parse(format!("metrics: {e}"))))
        .collect()
}

pub fn read_file(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::parse(format!("cannot open {}: {e}", path.display())))?;
    read_rows(file)
}
