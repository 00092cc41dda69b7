//! Byte-stable report output: JSON with sorted keys and every float rounded
//! to 12 significant digits, and plain CSV tables.

use std::io::Write;

use serde::Serialize;
use serde_json::{Map, Number, Value};

use crate::error::Result;

pub const SIGNIFICANT_DIGITS: usize = 12;

/// `x` rounded to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

/// Shortest text of the rounded value; non-finite values become empty.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        let r = round_sig(x);
        if r == 0.0 {
            "0".to_owned()
        } else if r.fract() == 0.0 && r.abs() < 1e15 {
            format!("{r}")
        } else {
            Number::from_f64(r).expect("finite").to_string()
        }
    } else {
        String::new()
    }
}

fn canonical(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonical).collect()),
        Value::Object(map) => {
            let mut sorted: Vec<(String, Value)> = map.into_iter().collect();
            sorted.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(
                sorted
                    .into_iter()
                    .map(|(k, v)| (k, canonical(v)))
                    .collect::<Map<_, _>>(),
            )
        }
        other => other,
    }
}

/// Canonical JSON value of anything serializable.
pub fn to_canonical_value<T: Serialize + ?Sized>(value: &T) -> Result<Value> {
    Ok(canonical(serde_json::to_value(value)?))
}

/// Pretty-printed canonical JSON, newline-terminated.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&to_canonical_value(value)?)?;
    text.push('\n');
    Ok(text)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: Value,
}

/// One verification run: what was asked, what was measured, what passed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub config: Value,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Report {
    pub fn new(command: impl Into<String>, config: Value) -> Report {
        Report {
            command: command.into(),
            config,
            checks: Vec::new(),
            passed: true,
        }
    }

    pub fn push<T: Serialize>(
        &mut self,
        name: impl Into<String>,
        passed: bool,
        detail: &T,
    ) -> Result<()> {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: to_canonical_value(detail)?,
        });
        self.passed &= passed;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        to_canonical_json(self)
    }
}

/// A CSV table of numbers and short labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_owned())
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl Table {
    pub fn new(header: &[&str]) -> Table {
        Table {
            header: header.iter().map(|s| (*s).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.header.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Int(i) => i.to_string(),
                    Cell::Float(x) => format_float(*x),
                    Cell::Text(s) => s.clone(),
                })
                .collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii csv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounding() {
        assert_eq!(round_sig(0.1 + 0.2), 0.3);
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_sig(-123456789.0123456), -123456789.012);
        assert_eq!(format_float(2.0), "2");
        assert_eq!(format_float(f64::NAN), "");
        assert_eq!(format_float(-0.0), "0");
        assert_eq!(format_float(2.06115362924e-8), "2.06115362924e-8");
        assert_eq!(format_float(-0.25), "-0.25");
        assert_eq!(format_float(1e20), "1e+20");
    }

    #[test]
    fn canonical_json_sorts_and_rounds() {
        let v = json!({"b": 1.0 / 3.0, "a": [0.1 + 0.2, 3], "c": {"z": null, "y": true}});
        let text = to_canonical_json(&v).unwrap();
        let a = text.find("\"a\"").unwrap();
        let b = text.find("\"b\"").unwrap();
        assert!(a < b);
        assert!(text.contains("0.333333333333"));
        assert!(text.contains("0.3,") || text.contains("0.3\n"));
        assert!(text.find("\"y\"").unwrap() < text.find("\"z\"").unwrap());
        #[derive(Serialize)]
        struct Odd {
            x: f64,
        }
        let text = to_canonical_json(&Odd { x: f64::INFINITY }).unwrap();
        assert!(text.contains("null"));
    }

    #[test]
    fn report_passes_only_if_all_checks_do() {
        let mut r = Report::new("demo", json!({}));
        r.push("one", true, &1.0).unwrap();
        assert!(r.passed);
        r.push("two", false, &"detail").unwrap();
        assert!(!r.passed);
        assert_eq!(r.to_json().unwrap(), r.clone().to_json().unwrap());
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["k", "x", "label"]);
        t.push(vec![Cell::from(3u64), Cell::from(0.5), Cell::from("a")]);
        t.push(vec![
            Cell::from(4u64),
            Cell::from(1.0 / 7.0),
            Cell::from(true),
        ]);
        assert_eq!(t.to_csv(), "k,x,label\n3,0.5,a\n4,0.142857142857,true\n");
    }
}
