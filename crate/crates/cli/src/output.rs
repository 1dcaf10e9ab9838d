//! CSV and JSON artifacts. Every artifact carries the resolved configuration, the
//! seed and a summary block next to its table.

use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug)]
pub struct Artifact {
    pub command: String,
    pub config: Value,
    pub summary: Map<String, Value>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Artifact {
    pub fn new(command: &str, config: Value, columns: &[&str]) -> Self {
        Self {
            command: command.to_string(),
            config,
            summary: Map::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn summary(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(key.to_string(), to_value(value));
    }

    pub fn row(&mut self, values: Vec<Value>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(values);
    }

    pub fn render(&self, format: Format) -> Result<String, Box<dyn std::error::Error>> {
        match format {
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| Value::Object(self.columns.iter().cloned().zip(r.iter().cloned()).collect()))
                    .collect();
                let doc = json!({
                    "command": self.command,
                    "config": self.config,
                    "summary": self.summary,
                    "rows": rows,
                });
                Ok(serde_json::to_string_pretty(&doc)? + "\n")
            }
            Format::Csv => {
                let mut out = String::new();
                out.push_str(&format!("# command: {}\n", self.command));
                out.push_str(&format!("# config: {}\n", serde_json::to_string(&self.config)?));
                out.push_str(&format!("# summary: {}\n", serde_json::to_string(&self.summary)?));
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.columns)?;
                for r in &self.rows {
                    w.write_record(r.iter().map(cell))?;
                }
                out.push_str(&String::from_utf8(w.into_inner()?)?);
                Ok(out)
            }
        }
    }

    pub fn write(&self, format: Format, out: Option<&Path>) -> Result<(), Box<dyn std::error::Error>> {
        let text = self.render(format)?;
        match out {
            Some(p) => std::fs::write(p, text)?,
            None => std::io::stdout().lock().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

pub fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_block_and_named_columns() {
        let mut a = Artifact::new("demo", json!({"seed": 3}), &["x", "label"]);
        a.summary("total", 1.5);
        a.row(vec![json!(0.25), json!("a,b")]);
        let s = a.render(Format::Csv).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# command: demo");
        assert_eq!(lines[1], "# config: {\"seed\":3}");
        assert_eq!(lines[3], "x,label");
        assert_eq!(lines[4], "0.25,\"a,b\"");
    }

    #[test]
    fn json_rows_are_objects_in_column_order() {
        let mut a = Artifact::new("demo", json!({}), &["b", "a"]);
        a.row(vec![json!(1), json!(2)]);
        let v: Value = serde_json::from_str(&a.render(Format::Json).unwrap()).unwrap();
        let keys: Vec<&String> = v["rows"][0].as_object().unwrap().keys().collect();
        assert_eq!(keys, ["b", "a"]);
    }
}
