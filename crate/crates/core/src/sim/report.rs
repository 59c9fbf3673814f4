//! Comma-separated and JSON renderings of simulation reports.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimulationReport;
use crate::cost::CostBreakdown;
use crate::scalar::Scalar;

pub const SERIES_HEADER: &str = "t,exec_cost,transfer_cost,total_input_MBps,total_capacity_MBps,deficit_MBps";
pub const EVENTS_HEADER: &str = "event_id,t,kind,delta_units,changes,post_cost_per_s,response_s";
pub const SUMMARY_HEADER: &str = "exec_total,transfer_total,total";

fn provenance_line(out: &mut String, provenance: &serde_json::Value) {
    let _ = writeln!(out, "# {}", serde_json::to_string(provenance).expect("json value"));
}

pub fn series_csv<T: Scalar>(r: &SimulationReport<T>, provenance: &serde_json::Value) -> String {
    let mut out = String::new();
    provenance_line(&mut out, provenance);
    out.push_str(SERIES_HEADER);
    out.push('\n');
    for s in &r.series {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.t, s.exec_cost, s.transfer_cost, s.total_input, s.total_capacity, s.deficit
        );
    }
    out
}

pub fn events_csv<T: Scalar>(r: &SimulationReport<T>, provenance: &serde_json::Value) -> String {
    let mut out = String::new();
    provenance_line(&mut out, provenance);
    out.push_str(EVENTS_HEADER);
    out.push('\n');
    for e in &r.events {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.event_id, e.t, e.kind, e.delta_units, e.changes, e.post_cost_per_s, e.response_s
        );
    }
    out
}

fn summary_csv<T: Scalar>(totals: &CostBreakdown<T>, provenance: &serde_json::Value) -> String {
    let mut out = String::new();
    provenance_line(&mut out, provenance);
    let _ = writeln!(out, "{SUMMARY_HEADER}\n{},{},{}", totals.exec, totals.transfer, totals.total);
    out
}

#[derive(Serialize)]
#[serde(bound = "T: Scalar")]
struct Summary<'a, T> {
    provenance: &'a serde_json::Value,
    workflow: &'a str,
    totals: &'a CostBreakdown<T>,
    events: &'a [super::EventRecord<T>],
}

/// Writes `series.csv`, `events.csv`, `summary.csv` and `summary.json`.
pub fn write_report<T: Scalar>(dir: &Path, r: &SimulationReport<T>, provenance: &serde_json::Value) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("series.csv"), series_csv(r, provenance))?;
    fs::write(dir.join("events.csv"), events_csv(r, provenance))?;
    fs::write(dir.join("summary.csv"), summary_csv(&r.totals, provenance))?;
    let summary = Summary {
        provenance,
        workflow: &r.workflow,
        totals: &r.totals,
        events: &r.events,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

/// Wall-clock scheduler time per event, in microseconds. Varies between
/// runs, so it is kept out of the other files.
pub fn write_timing<T: Scalar>(dir: &Path, r: &SimulationReport<T>) -> io::Result<()> {
    let mut out = String::from("event_id,handler_us\n");
    for (k, d) in r.handler_time.iter().enumerate() {
        let _ = writeln!(out, "{k},{}", d.as_micros());
    }
    fs::write(dir.join("timing.csv"), out)
}

/// Per-second and per-event means over repetitions of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanReport {
    pub workflow: String,
    pub reps: usize,
    /// `t, exec, transfer, input, capacity, deficit`
    pub series: Vec<[f64; 6]>,
    /// `event index, changes, post_cost_per_s, response_s`
    pub events: Vec<[f64; 4]>,
    pub totals: CostBreakdown<f64>,
}

impl MeanReport {
    pub fn from_reports<T: Scalar>(reports: &[SimulationReport<T>]) -> Self {
        let n = reports.len().max(1) as f64;
        let len = reports.iter().map(|r| r.series.len()).min().unwrap_or(0);
        let series = (0..len)
            .map(|t| {
                let mut row = [t as f64, 0.0, 0.0, 0.0, 0.0, 0.0];
                for r in reports {
                    let s = &r.series[t];
                    for (k, v) in [s.exec_cost, s.transfer_cost, s.total_input, s.total_capacity, s.deficit]
                        .into_iter()
                        .enumerate()
                    {
                        row[k + 1] += v.as_f64() / n;
                    }
                }
                row
            })
            .collect();
        let events_len = reports.iter().map(|r| r.events.len()).min().unwrap_or(0);
        let events = (0..events_len)
            .map(|k| {
                let mut row = [k as f64, 0.0, 0.0, 0.0];
                for r in reports {
                    let e = &r.events[k];
                    row[1] += e.changes as f64 / n;
                    row[2] += e.post_cost_per_s.as_f64() / n;
                    row[3] += e.response_s as f64 / n;
                }
                row
            })
            .collect();
        let mean = |f: fn(&CostBreakdown<T>) -> T| reports.iter().map(|r| f(&r.totals).as_f64()).sum::<f64>() / n;
        Self {
            workflow: reports.first().map(|r| r.workflow.clone()).unwrap_or_default(),
            reps: reports.len(),
            series,
            events,
            totals: CostBreakdown::new(mean(|c| c.exec), mean(|c| c.transfer)),
        }
    }

    pub fn write(&self, dir: &Path, provenance: &serde_json::Value) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut s = String::new();
        provenance_line(&mut s, provenance);
        s.push_str(SERIES_HEADER);
        s.push('\n');
        for r in &self.series {
            let _ = writeln!(s, "{},{},{},{},{},{}", r[0], r[1], r[2], r[3], r[4], r[5]);
        }
        fs::write(dir.join("series.csv"), s)?;
        let mut e = String::new();
        provenance_line(&mut e, provenance);
        e.push_str("event_index,mean_changes,mean_post_cost_per_s,mean_response_s\n");
        for r in &self.events {
            let _ = writeln!(e, "{},{},{},{}", r[0], r[1], r[2], r[3]);
        }
        fs::write(dir.join("events.csv"), e)?;
        fs::write(dir.join("summary.csv"), summary_csv(&self.totals, provenance))?;
        let doc = serde_json::json!({ "provenance": provenance, "mean": self });
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(())
    }
}

/// Reads the totals row of a `summary.csv`.
pub fn read_summary(path: &Path) -> io::Result<CostBreakdown<f64>> {
    let text = fs::read_to_string(path)?;
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {m}", path.display()));
    let mut rows = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    if rows.next() != Some(SUMMARY_HEADER) {
        return Err(bad("missing summary header"));
    }
    let vals: Vec<f64> = rows
        .next()
        .ok_or_else(|| bad("missing totals row"))?
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| bad(&e.to_string()))?;
    match vals.as_slice() {
        [exec, transfer, _] => Ok(CostBreakdown::new(*exec, *transfer)),
        _ => Err(bad("expected three columns")),
    }
}
