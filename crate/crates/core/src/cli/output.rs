use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
    Bool(bool),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Num(x) => write!(f, "{x}"),
            Cell::Text(s) => write!(f, "{s}"),
            Cell::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}
impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}
impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}
impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

/// A named output table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: Vec<&'static str>) -> Self {
        Self {
            name: name.to_string(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format, hash: &str, seed: u64) -> String {
        match format {
            Format::Csv => {
                let mut s = format!("# manifest {hash} seed={seed}\n{}\n", self.columns.join(","));
                for row in &self.rows {
                    for (i, c) in row.iter().enumerate() {
                        if i > 0 {
                            s.push(',');
                        }
                        let _ = write!(s, "{c}");
                    }
                    s.push('\n');
                }
                s
            }
            Format::Json => {
                let doc = serde_json::json!({
                    "manifest": hash,
                    "seed": seed,
                    "columns": self.columns,
                    "rows": self.rows,
                });
                let mut s = serde_json::to_string_pretty(&doc).expect("tables serialize");
                s.push('\n');
                s
            }
        }
    }

    pub fn file_name(&self, format: Format) -> String {
        match format {
            Format::Csv => format!("{}.csv", self.name),
            Format::Json => format!("{}.json", self.name),
        }
    }
}

/// Provenance record written next to every set of outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub run_hash: String,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write-temp-then-rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let io = |e: std::io::Error| CliError::Io(path.display().to_string(), e.to_string());
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_outputs(
    out: &Path,
    tables: &[Table],
    format: Format,
    manifest: RunManifest,
) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(out.display().to_string(), e.to_string()))?;
    let mut written = Vec::new();
    for t in tables {
        let p = out.join(t.file_name(format));
        write_atomic(&p, t.render(format, &manifest.run_hash, manifest.seed).as_bytes())?;
        written.push(p);
    }
    let p = out.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(&p, text.as_bytes())?;
    written.push(p);
    Ok(written)
}

/// Gnuplot script for a recognized CSV schema, or `None` for anything else.
pub fn gnuplot_stub(csv_path: &Path) -> Result<Option<PathBuf>, CliError> {
    let text = std::fs::read_to_string(csv_path)
        .map_err(|e| CliError::Io(csv_path.display().to_string(), e.to_string()))?;
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap_or("");
    let cols: Vec<&str> = header.split(',').collect();
    let file = csv_path.file_name().and_then(|f| f.to_str()).unwrap_or("data.csv");
    let col = |name: &str| cols.iter().position(|c| *c == name).map(|i| i + 1);
    let body = match cols.as_slice() {
        ["s", ..] | ["d", ..] => {
            let x = cols[0];
            let lines: Vec<String> = cols[1..]
                .iter()
                .enumerate()
                .map(|(i, c)| format!("'{file}' using 1:{} with lines title '{c}'", i + 2))
                .collect();
            format!("set xlabel '{x}'\nplot {}\n", lines.join(", \\\n     "))
        }
        ["path", "t", "inventory"] => format!(
            "set xlabel 't'\nset ylabel 'inventory'\nplot for [p=0:*] '{file}' using ($1==p ? $2 : 1/0):3 with lines notitle\n"
        ),
        ["sigma", "mean_excess", "stderr"] => format!(
            "set xlabel 'sigma'\nset ylabel 'excess over TWAMM'\nplot '{file}' using 1:2:3 with yerrorlines title 'mean excess'\n"
        ),
        ["tau", ..] => format!(
            "set xlabel 'variance'\nset ylabel 'tau'\nplot '{file}' using {}:1 with lines title 'frontier'\n",
            col("variance_star").unwrap_or(3)
        ),
        ["alpha", "beta", ..] => format!(
            "set xlabel 'alpha'\nset ylabel 'beta'\nset logscale y\nset view map\nsplot '{file}' using 1:2:{} with points palette title 'delta_star'\n",
            col("delta_star").unwrap_or(4)
        ),
        ["t", "I", "z", ..] => format!(
            "set xlabel 'z'\nset ylabel 'I'\nset view map\nsplot '{file}' using ($1==0 ? $3 : 1/0):2:4 with points palette title 'value'\n"
        ),
        _ => return Ok(None),
    };
    let script = format!("set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n{body}");
    let out = csv_path.with_extension("gp");
    write_atomic(&out, script.as_bytes())?;
    Ok(Some(out))
}
