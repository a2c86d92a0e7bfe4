//! Long-format `series,iteration,loss` files built from per-run histories.

use std::io::{Read, Write};
use std::path::Path;

use dbq_core::{Error, Result};

pub const PLOT_HEADER: [&str; 3] = ["series", "iteration", "loss"];

fn csv_err(e: csv::Error) -> Error {
    Error::config(format!("csv: {e}"))
}

/// Merges histories that share one header containing `iteration` and `loss`.
/// Field text is copied verbatim so a split reproduces the inputs exactly.
pub fn merge_histories<R: Read, W: Write>(inputs: Vec<(String, R)>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PLOT_HEADER).map_err(csv_err)?;
    let mut schema: Option<csv::StringRecord> = None;
    for (series, r) in inputs {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(csv_err)?.clone();
        match &schema {
            Some(s) if *s != header => {
                return Err(Error::config(format!(
                    "series `{series}` has columns {:?}, expected {:?}",
                    header.iter().collect::<Vec<_>>(),
                    s.iter().collect::<Vec<_>>()
                )))
            }
            Some(_) => {}
            None => schema = Some(header.clone()),
        }
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::config(format!("series `{series}` lacks a `{name}` column")))
        };
        let (it, loss) = (col("iteration")?, col("loss")?);
        for row in rdr.records() {
            let row = row.map_err(csv_err)?;
            w.write_record([series.as_str(), &row[it], &row[loss]]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Merges history files, naming each series after its file stem.
pub fn emit_plot_data(histories: &[&Path], out: &Path) -> Result<()> {
    let inputs = histories
        .iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let f = std::fs::File::open(p).map_err(|e| Error::config(format!("cannot open {}: {e}", p.display())))?;
            Ok((name, f))
        })
        .collect::<Result<Vec<_>>>()?;
    merge_histories(inputs, std::fs::File::create(out)?)
}

/// `(series, [(iteration, loss)])` in first-appearance order, field text preserved.
pub type SeriesRows = Vec<(String, Vec<(String, String)>)>;

pub fn split_plot_data<R: Read>(r: R) -> Result<SeriesRows> {
    let mut rdr = csv::Reader::from_reader(r);
    if rdr.headers().map_err(csv_err)?.iter().ne(PLOT_HEADER) {
        return Err(Error::config(format!("plot data must start with {}", PLOT_HEADER.join(","))));
    }
    let mut out: SeriesRows = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let entry = (row[1].to_string(), row[2].to_string());
        match out.iter_mut().find(|(s, _)| s == &row[0]) {
            Some((_, rows)) => rows.push(entry),
            None => out.push((row[0].to_string(), vec![entry])),
        }
    }
    Ok(out)
}
