//! CSV input and output.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Column selection for [`load_returns`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Header name of the column to read. Without it the loader looks for
    /// `return`/`returns`/`y` (or `price`/`close`/`adj close` with `prices`)
    /// and otherwise takes the last column.
    pub column: Option<String>,
    /// Treat the column as prices and convert to `100 (ln p_t - ln p_{t-1})`.
    pub prices: bool,
}

/// Percent log returns `100 (ln p_t - ln p_{t-1})`.
pub fn log_returns(prices: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = prices.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        return Err(Error::Domain(format!("prices must be positive and finite, got {p}")));
    }
    Ok(prices.windows(2).map(|w| 100.0 * (w[1].ln() - w[0].ln())).collect())
}

fn pick_column(headers: &csv::StringRecord, opts: &LoadOptions, path: &str) -> Result<usize> {
    let norm = |s: &str| s.trim().to_ascii_lowercase();
    if let Some(name) = &opts.column {
        return headers
            .iter()
            .position(|h| norm(h) == norm(name))
            .ok_or_else(|| Error::Parse { path: path.into(), line: 1, msg: format!("no column named '{name}'") });
    }
    let wanted: &[&str] = if opts.prices { &["price", "close", "adj close", "adj_close"] } else { &["return", "returns", "y"] };
    if let Some(i) = headers.iter().position(|h| wanted.contains(&norm(h).as_str())) {
        return Ok(i);
    }
    if headers.is_empty() {
        return Err(Error::Parse { path: path.into(), line: 1, msg: "missing header row".into() });
    }
    Ok(headers.len() - 1)
}

/// Reads one numeric column of a headed CSV file as an ordered series.
pub fn load_returns(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::Config(format!("cannot open {shown}: {e}")))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers()?.clone();
    let col = pick_column(&headers, opts, &shown)?;
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(row + 2, |p| p.line() as usize);
        let cell = rec.get(col).unwrap_or("");
        let v: f64 = cell.parse().map_err(|_| Error::Parse {
            path: shown.clone(),
            line,
            msg: if cell.is_empty() {
                format!("row {}: empty cell in column {}", row + 1, col + 1)
            } else {
                format!("row {}: '{cell}' is not a number", row + 1)
            },
        })?;
        if !v.is_finite() {
            return Err(Error::Parse { path: shown.clone(), line, msg: format!("row {}: non-finite value", row + 1) });
        }
        values.push(v);
    }
    let series = if opts.prices { log_returns(&values)? } else { values };
    if series.is_empty() {
        return Err(Error::Domain(format!("{shown}: empty series")));
    }
    Ok(series)
}

/// Writes `# key=value` metadata lines followed by a CSV table.
pub fn write_csv<W: Write>(
    out: &mut W,
    metadata: &[(String, String)],
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Plain right-aligned text table.
pub fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut s = String::new();
    let line = |cells: Vec<&str>, s: &mut String| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        s.push_str(parts.join("  ").trim_end());
        s.push('\n');
    };
    line(header.to_vec(), &mut s);
    for r in rows {
        line(r.iter().map(String::as_str).collect(), &mut s);
    }
    s
}

/// Fixed formatting for machine-readable numbers: shortest round-trip form.
pub fn num(v: f64) -> String {
    format!("{v}")
}
