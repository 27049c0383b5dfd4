//! File emission: pinned number formatting, provenance headers, CSV, JSON and SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shortest round-trip decimal; exponent form outside `[1e-5, 1e16)`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = x.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Run metadata embedded in every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// SHA-256 of the canonical JSON of the resolved inputs.
    pub input_sha256: String,
    pub seed: u64,
    pub tol: f64,
    pub integrator: &'static str,
    pub inputs: serde_json::Value,
}

impl Provenance {
    pub fn new<T: Serialize>(command: &str, inputs: &T, seed: u64, tol: f64) -> Result<Self, CliError> {
        let inputs = serde_json::to_value(inputs).map_err(|e| CliError::Validation(e.to_string()))?;
        let canonical = serde_json::to_string(&inputs).map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(Provenance {
            tool: "virlab",
            version: VERSION,
            command: command.into(),
            input_sha256: hex::encode(Sha256::digest(canonical.as_bytes())),
            seed,
            tol,
            integrator: "dop853",
            inputs,
        })
    }

    /// Comment header lines, each starting with `prefix`.
    pub fn header(&self, prefix: &str) -> String {
        let inputs = serde_json::to_string(&self.inputs).unwrap_or_default();
        let mut s = String::new();
        let _ = writeln!(s, "{prefix} {} {}", self.tool, self.version);
        let _ = writeln!(s, "{prefix} command: {}", self.command);
        let _ = writeln!(s, "{prefix} input_sha256: {}", self.input_sha256);
        let _ = writeln!(s, "{prefix} seed: {}", self.seed);
        let _ = writeln!(s, "{prefix} tol: {}", fmt_f64(self.tol));
        let _ = writeln!(s, "{prefix} integrator: {}", self.integrator);
        let _ = writeln!(s, "{prefix} inputs: {inputs}");
        s
    }
}

/// Output directory; files written through it are listed for the summary.
pub struct Bundle {
    pub dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Bundle {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, prov: &Provenance, body: &T) -> Result<PathBuf, CliError> {
        self.write(name, &json_document(prov, body)?)
    }

    pub fn write_csv(&mut self, name: &str, prov: &Provenance, table: &Table) -> Result<PathBuf, CliError> {
        self.write(name, &format!("{}{}", prov.header("#"), table.to_csv()))
    }
}

/// `{"provenance": .., "result": ..}` with a trailing newline.
pub fn json_document<T: Serialize>(prov: &Provenance, body: &T) -> Result<String, CliError> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        provenance: &'a Provenance,
        result: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Doc { provenance: prov, result: body })
        .map_err(|e| CliError::Validation(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// One JSON object per line.
pub fn json_lines<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r).map_err(|e| CliError::Validation(e.to_string()))?);
        s.push('\n');
    }
    Ok(s)
}

/// Numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|x| fmt_f64(*x)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Parse a CSV table, returning the `#` header lines alongside.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Table), String> {
    let mut header = Vec::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| {
        if let Some(h) = l.strip_prefix('#') {
            header.push(h.trim().to_string());
            false
        } else {
            !l.trim().is_empty()
        }
    });
    let (_, cols) = lines.next().ok_or("missing column header")?;
    let mut table = Table::new(cols.split(',').map(|c| c.trim().to_string()).collect());
    for (n, line) in lines {
        let row: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", n + 1))?;
        if row.len() != table.columns.len() {
            return Err(format!("line {}: expected {} columns, found {}", n + 1, table.columns.len(), row.len()));
        }
        table.push(row);
    }
    Ok((header, table))
}

/// Minimal line plot of one or more series.
pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub series: Vec<(&'a str, Vec<(f64, f64)>)>,
    /// Draw markers instead of lines.
    pub scatter: bool,
    pub log_x: bool,
    pub log_y: bool,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

impl Plot<'_> {
    pub fn to_svg(&self, prov: &Provenance) -> String {
        let (w, h, m) = (640.0, 400.0, 60.0);
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let ty = |y: f64| if self.log_y { y.log10() } else { y };
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|(_, s)| s.iter().map(|&(x, y)| (tx(x), ty(y))))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        let span = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-300 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = span(&mut pts.iter().map(|p| p.0));
        let (y0, y1) = span(&mut pts.iter().map(|p| p.1));
        let px = |x: f64| m + (w - 2.0 * m) * (x - x0) / (x1 - x0);
        let py = |y: f64| h - m - (h - 2.0 * m) * (y - y0) / (y1 - y0);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
        let _ = writeln!(s, "<!--\n{}-->", prov.header(" ").replace("--", "- -"));
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            w - 2.0 * m,
            h - 2.0 * m
        );
        let _ = writeln!(s, r#"<text x="{}" y="30" text-anchor="middle" font-size="16">{}</text>"#, w / 2.0, esc(self.title));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#, w / 2.0, h - 15.0, esc(self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="15" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 15 {})">{}</text>"#,
            h / 2.0,
            h / 2.0,
            esc(self.y_label)
        );
        let tick = |v: f64, log: bool| if log { format!("1e{v:.1}") } else { format!("{v:.4}") };
        let _ = writeln!(s, r#"<text x="{m}" y="{}" font-size="10">{}</text>"#, h - m + 14.0, tick(x0, self.log_x));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{}</text>"#, w - m, h - m + 14.0, tick(x1, self.log_x));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{}</text>"#, m - 4.0, h - m, tick(y0, self.log_y));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{}</text>"#, m - 4.0, m + 8.0, tick(y1, self.log_y));
        for (i, (name, data)) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let coords: Vec<String> = data
                .iter()
                .map(|&(x, y)| (tx(x), ty(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            if self.scatter {
                for c in &coords {
                    let (cx, cy) = c.split_once(',').unwrap_or(("0", "0"));
                    let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
                }
            } else {
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#, coords.join(" "));
            }
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
                w - m - 120.0,
                m + 16.0 + 14.0 * i as f64,
                esc(name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips() {
        for x in [0.0, 1.0, -2.5, 1e-7, 123456.789, 1e300, 0.1 + 0.2, f64::MIN_POSITIVE, 6.02214076e23] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(1e-7), "1e-7");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_round_trip() {
        let mut t = Table::new(vec!["t".into(), "x".into()]);
        t.push(vec![0.0, 1.0 / 3.0]);
        t.push(vec![1e-9, -2e20]);
        let (h, back) = parse_csv(&format!("# hello\n{}", t.to_csv())).unwrap();
        assert_eq!(h, vec!["hello".to_string()]);
        assert_eq!(back, t);
        assert!(parse_csv("a,b\n1,2,3\n").is_err());
    }
}
