//! Solve records written by `solve` and the aggregated table built by `report`.

use std::collections::BTreeMap;
use std::io::Write;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use endosaa::stats::mean_with_halfwidth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Saa,
    Dep,
    Ev,
    Evaluate,
    Vss,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveRecord {
    pub method: Method,
    pub instance: String,
    pub variant: String,
    pub seed: u64,
    pub nodes: usize,
    pub facilities: usize,
    pub levels: u32,
    /// Support size `|K|`; `None` when it overflows.
    pub scenario_count: Option<f64>,
    pub wall_time_s: f64,
    pub result: Value,
}

impl SolveRecord {
    /// Instance class shared by all seeds.
    pub fn config_key(&self) -> String {
        format!("{}-{}-n{}-f{}-w{}", self.method, self.variant, self.nodes, self.facilities, self.levels)
    }

    fn number(&self, key: &str) -> Option<f64> {
        self.result.get(key).and_then(Value::as_f64)
    }

    /// Gap `ḡap(x̄)` in percent, when the record has one.
    pub fn gap_percent(&self) -> Option<f64> {
        match self.method {
            Method::Saa => self.number("gap_percent"),
            Method::Vss => self.result.get("saa").and_then(|s| s.get("gap_percent")).and_then(Value::as_f64),
            _ => None,
        }
    }

    /// `VSS₁` in percent.
    pub fn vss1_percent(&self) -> Option<f64> {
        (self.method == Method::Vss).then(|| self.number("vss1")).flatten().map(|v| 100.0 * v)
    }

    /// Flat `name,value` pairs of the scalar fields, for CSV output.
    pub fn flat_fields(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("method".to_string(), self.method.to_string()),
            ("instance".into(), self.instance.clone()),
            ("variant".into(), self.variant.clone()),
            ("seed".into(), self.seed.to_string()),
            ("scenario_count".into(), self.scenario_count.map_or(String::new(), |k| k.to_string())),
            ("wall_time_s".into(), self.wall_time_s.to_string()),
        ];
        flatten("", &self.result, &mut out);
        out
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        Value::Number(n) => out.push((prefix.to_string(), n.to_string())),
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        // Arrays (decisions, per-replication details) stay in the JSON output.
        Value::Array(_) | Value::Null => {}
    }
}

pub fn write_record_csv<W: Write>(w: W, rec: &SolveRecord) -> Result<()> {
    let fields = rec.flat_fields();
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(fields.iter().map(|(k, _)| k))?;
    wtr.write_record(fields.iter().map(|(_, v)| v))?;
    wtr.flush()?;
    Ok(())
}

/// Mean and 95% t half-width over seeds.
pub fn mean_hw(xs: &[f64]) -> Result<(f64, f64)> {
    Ok(mean_with_halfwidth(xs, 0.05)?)
}

fn cell(xs: &[f64]) -> Result<String> {
    if xs.is_empty() {
        return Ok(String::new());
    }
    let (m, hw) = mean_hw(xs)?;
    Ok(format!("{m:.4} ± {hw:.4}"))
}

pub const REPORT_COLUMNS: [&str; 6] = ["config", "seeds", "|K|", "gap-bar(x̄)(%)", "Time(s)", "VSS₁"];

/// One row per configuration: mean ± half-width of the table columns.
pub fn aggregate<W: Write>(records: &[SolveRecord], w: W) -> Result<()> {
    if records.is_empty() {
        bail!("report needs at least one record");
    }
    let method = records[0].method;
    if let Some(other) = records.iter().find(|r| r.method != method) {
        bail!("mixed record schemas: {} and {}", method, other.method);
    }
    let mut groups: BTreeMap<String, Vec<&SolveRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.config_key()).or_default().push(r);
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(REPORT_COLUMNS)?;
    for (key, recs) in groups {
        let k: Vec<f64> = recs.iter().filter_map(|r| r.scenario_count).collect();
        let gaps: Vec<f64> = recs.iter().filter_map(|r| r.gap_percent()).collect();
        let times: Vec<f64> = recs.iter().map(|r| r.wall_time_s).collect();
        let vss: Vec<f64> = recs.iter().filter_map(|r| r.vss1_percent()).collect();
        wtr.write_record([key, recs.len().to_string(), cell(&k)?, cell(&gaps)?, cell(&times)?, cell(&vss)?])?;
    }
    wtr.flush()?;
    Ok(())
}
