//! Whitespace-delimited trace files.
//!
//! `#` lines carry `key value` metadata, then one column-header line, then
//! one row per closed-loop step `k`:
//! `tL = (k+1)Δt`, levels `h = x_{k+1}`, `tU = kΔt`, releases `u_k`,
//! underground flows `q = (r12, r23)` of `x_{k+1}`, rainfall `w_k`.

use std::fmt::Write as _;

use cfcc_smpc::SimulationTrace;

pub const COLUMNS: [&str; 13] = ["tL", "h1", "h2", "h3", "tU", "u1", "u2", "u3", "q12", "q23", "w1", "w2", "w3"];

pub type Row = [f64; 13];

#[derive(Debug, Clone, PartialEq)]
pub struct DataFile {
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<Row>,
}

/// Nine significant digits.
pub fn format_number(v: f64) -> String {
    format!("{v:.8e}")
}

/// The value a number takes after a write/read cycle.
pub fn round_trip(v: f64) -> f64 {
    format_number(v).parse().expect("formatted float parses")
}

pub fn rows_from_trace(trace: &SimulationTrace, dt_hours: f64) -> Vec<Row> {
    trace
        .records
        .iter()
        .map(|r| {
            let k = r.step as f64;
            let x = &r.next_state;
            [
                (k + 1.0) * dt_hours,
                x[0],
                x[1],
                x[2],
                k * dt_hours,
                r.input[0],
                r.input[1],
                r.input[2],
                x[3],
                x[4],
                r.disturbance[0],
                r.disturbance[1],
                r.disturbance[2],
            ]
        })
        .collect()
}

impl DataFile {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            writeln!(out, "# {k} {v}").unwrap();
        }
        out.push_str(&COLUMNS.join(" "));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_number(*v)).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut metadata = Vec::new();
        let mut rows = Vec::new();
        let mut header = false;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let meta = meta.trim();
                let (k, v) = meta.split_once(' ').unwrap_or((meta, ""));
                metadata.push((k.to_string(), v.trim().to_string()));
                continue;
            }
            if !header {
                let names: Vec<&str> = line.split_whitespace().collect();
                if names != COLUMNS {
                    return Err(format!("line {}: unexpected column header `{line}`", n + 1));
                }
                header = true;
                continue;
            }
            let cells: Vec<f64> = line
                .split_whitespace()
                .map(|c| c.parse::<f64>().map_err(|e| format!("line {}: `{c}`: {e}", n + 1)))
                .collect::<Result<_, _>>()?;
            let row: Row = cells
                .try_into()
                .map_err(|c: Vec<f64>| format!("line {}: expected {} columns, found {}", n + 1, COLUMNS.len(), c.len()))?;
            rows.push(row);
        }
        if !header {
            return Err("missing column header".into());
        }
        Ok(Self { metadata, rows })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_number(4.5), "4.50000000e0");
        assert_eq!(format_number(-0.00123456789123), "-1.23456789e-3");
        assert_eq!(round_trip(1.0 / 3.0), 0.333333333);
    }

    #[test]
    fn rejects_ragged_rows() {
        let text = format!("{}\n1 2 3\n", COLUMNS.join(" "));
        assert!(DataFile::parse(&text).unwrap_err().contains("expected 13 columns"));
    }
}
