//! Deterministic file emission: CSV tables, JSON tables, mode-function
//! CSVs, and the per-run manifest. Every byte written here is a pure
//! function of the resolved configuration, so identical runs produce
//! identical files.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Shortest-roundtrip decimal for data files. Plain notation for
/// human-scale magnitudes, scientific below it so tail samples do not
/// expand into hundreds of zeros.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // Canonicalize -0.0 as well.
        return "0".into();
    }
    if x.abs() >= 1e-4 {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// `re{+|-}im i`, parseable by [`parse_complex`].
pub fn fmt_complex(z: Complex<f64>) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}i", fmt_f64(z.re), sign, fmt_f64(z.im.abs()))
}

/// Inverse of [`fmt_complex`]; also accepts a bare real number.
pub fn parse_complex(s: &str) -> Result<Complex<f64>> {
    let s = s.trim();
    let bad = || CliError::Config(format!("`{s}` is not a complex sample (want re+imi)"));
    if let Some(body) = s.strip_suffix(['i', 'I']) {
        // The separating sign is the last +/- not directly after an
        // exponent marker; the real part may carry its own leading sign.
        let bytes = body.as_bytes();
        let mut split = None;
        for k in 1..bytes.len() {
            if (bytes[k] == b'+' || bytes[k] == b'-')
                && bytes[k - 1] != b'e'
                && bytes[k - 1] != b'E'
            {
                split = Some(k);
            }
        }
        let k = split.ok_or_else(bad)?;
        let re: f64 = body[..k].trim().parse().map_err(|_| bad())?;
        let im: f64 = body[k..].trim().parse().map_err(|_| bad())?;
        Ok(Complex::new(re, im))
    } else {
        let re: f64 = s.parse().map_err(|_| bad())?;
        Ok(Complex::new(re, 0.0))
    }
}

/// A rectangular table plus the column names, the unit all emitters
/// reduce to before anything touches the disk.
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// What one run wrote, echoed into the manifest.
#[derive(Serialize)]
pub struct FileEntry {
    pub path: String,
    pub kind: &'static str,
    pub columns: Vec<String>,
    pub rows: usize,
}

/// Accumulates data files for one run and writes the manifest last.
pub struct Sink {
    dir: PathBuf,
    json_tables: bool,
    files: Vec<FileEntry>,
}

impl Sink {
    pub fn new(dir: &Path, json_tables: bool) -> Result<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), json_tables, files: Vec::new() })
    }

    fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }

    /// Writes a table as CSV or, when the run asked for JSON data files,
    /// as a columns/rows object. The stem is the file name sans suffix.
    pub fn table(&mut self, stem: &str, kind: &'static str, table: &Table) -> Result<()> {
        let name = if self.json_tables {
            let body = serde_json::json!({
                "columns": table.columns,
                "rows": table.rows,
            });
            let name = format!("{stem}.json");
            self.write_bytes(&name, pretty(&body)?.as_bytes())?;
            name
        } else {
            let name = format!("{stem}.csv");
            let mut w = csv::WriterBuilder::new()
                .quote_style(csv::QuoteStyle::Necessary)
                .from_writer(Vec::new());
            w.write_record(&table.columns).map_err(csv_err)?;
            for row in &table.rows {
                w.write_record(row.iter().map(|v| fmt_f64(*v))).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
            self.write_bytes(&name, &bytes)?;
            name
        };
        self.files.push(FileEntry {
            path: name,
            kind,
            columns: table.columns.iter().map(|c| c.to_string()).collect(),
            rows: table.rows.len(),
        });
        Ok(())
    }

    /// Mode functions always go out as two-column CSV so they can be fed
    /// back in regardless of the table format.
    pub fn mode(&mut self, stem: &str, times: &[f64], samples: &[Complex<f64>]) -> Result<()> {
        let name = format!("{stem}.csv");
        let mut w = csv::WriterBuilder::new()
            .quote_style(csv::QuoteStyle::Necessary)
            .from_writer(Vec::new());
        w.write_record(["t", "u"]).map_err(csv_err)?;
        for (t, u) in times.iter().zip(samples) {
            w.write_record([fmt_f64(*t), fmt_complex(*u)]).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.write_bytes(&name, &bytes)?;
        self.files.push(FileEntry {
            path: name,
            kind: "mode",
            columns: vec!["t".into(), "u".into()],
            rows: times.len(),
        });
        Ok(())
    }

    /// Free-form JSON payload (the spectrum listing, the output-field
    /// summary). Always JSON whatever the table format.
    pub fn json(&mut self, stem: &str, kind: &'static str, value: &serde_json::Value) -> Result<()> {
        let name = format!("{stem}.json");
        self.write_bytes(&name, pretty(value)?.as_bytes())?;
        self.files.push(FileEntry { path: name, kind, columns: Vec::new(), rows: 0 });
        Ok(())
    }

    /// Writes `{stem}.manifest.json` describing every file this run
    /// produced, then consumes the sink.
    pub fn finish(
        self,
        stem: &str,
        scenario: &str,
        parameters: serde_json::Value,
        extra: serde_json::Value,
    ) -> Result<()> {
        let manifest = serde_json::json!({
            "scenario": scenario,
            "parameters": parameters,
            "files": self.files,
            "extra": extra,
        });
        self.write_bytes(&format!("{stem}.manifest.json"), pretty(&manifest)?.as_bytes())
    }
}

fn pretty(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("serialize: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(format!("csv: {e}"))
}

/// Reads a two-column (t, complex) CSV back into parallel vectors.
pub fn read_mode_csv(path: &Path) -> Result<(Vec<f64>, Vec<Complex<f64>>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read mode file {}: {e}", path.display())))?;
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| {
            CliError::Config(format!("{}: row {}: {e}", path.display(), line + 2))
        })?;
        if rec.len() != 2 {
            return Err(CliError::Config(format!(
                "{}: row {}: want 2 columns (t, u), got {}",
                path.display(),
                line + 2,
                rec.len()
            )));
        }
        let t: f64 = rec[0].trim().parse().map_err(|_| {
            CliError::Config(format!(
                "{}: row {}: bad time `{}`",
                path.display(),
                line + 2,
                &rec[0]
            ))
        })?;
        times.push(t);
        samples.push(parse_complex(&rec[1])?);
    }
    Ok((times, samples))
}
