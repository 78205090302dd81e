//! Audit records and their CSV / JSON-lines serialization.
//!
//! A [`BoundReport`] never decides pass/fail on its own: theorem right-hand
//! sides carry unknown absolute constants, so sweeps record `lhs/rhs` ratios
//! and the experiment layer judges calibration thresholds.

/// Schema version written as the first line of every CSV artifact.
pub const CSV_SCHEMA: &str = "# kloosterlab.report.v1";

/// One audited inequality: computed left-hand side against a theorem-shaped
/// right-hand side (implied constant 1, ε replaced by a declared proxy).
#[derive(Clone, Debug)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Parameter tuple, in a fixed order chosen by the producing sweep.
    pub params: Vec<(String, String)>,
}

impl BoundReport {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        BoundReport {
            lhs,
            rhs,
            params: Vec::new(),
        }
    }

    pub fn with<T: std::fmt::Display>(mut self, key: &str, value: T) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn ratio(&self) -> f64 {
        if self.lhs == 0.0 {
            0.0
        } else {
            self.lhs / self.rhs
        }
    }
}

/// Floats print with 12 significant digits so artifacts are byte-stable.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    format!("{:.11e}", x)
}

/// A rectangular report: fixed column order, rows of preformatted cells.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_SCHEMA);
        out.push('\n');
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// JSON-lines mirror: one object per row, same order, same cells.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let mut obj = String::from("{");
            for (i, (col, cell)) in self.columns.iter().zip(row).enumerate() {
                if i > 0 {
                    obj.push(',');
                }
                obj.push_str(&format!("{}:{}", json_string(col), json_string(cell)));
            }
            obj.push('}');
            out.push_str(&obj);
            out.push('\n');
        }
        out
    }
}

fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_schema_and_header() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), fmt_f64(0.5)]);
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_SCHEMA);
        assert_eq!(lines.next().unwrap(), "a,b");
        assert_eq!(lines.next().unwrap(), "1,5.00000000000e-1");
    }

    #[test]
    fn jsonl_mirrors_rows() {
        let mut t = Table::new(&["x"]);
        t.push(vec!["7".into()]);
        assert_eq!(t.to_jsonl(), "{\"x\":\"7\"}\n");
    }

    #[test]
    fn ratio_of_zero_lhs() {
        assert_eq!(BoundReport::new(0.0, 5.0).ratio(), 0.0);
    }
}
