//! Benchmark results. Every scenario keeps its raw per-trial latencies;
//! the summary statistics are always recomputed from that list, never
//! stored, so a written report can be re-derived from its own rows.
//!
//! CSV layout (one file may hold many scenarios):
//!
//! ```text
//! scenario,metric,trial,value
//! raw-1048576,latency_ms,0,3.21     one row per trial
//! raw-1048576,bytes,,1048576       bytes transferred per trial
//! raw-1048576,mean_ms,,3.40        summary rows have an empty trial
//! raw-1048576,p50_ms,,3.35
//! raw-1048576,p95_ms,,3.88
//! raw-1048576,stddev_ms,,0.41
//! ```
//!
//! Scenario-specific metrics (speedup factors, ops/sec, reference values)
//! appear as extra summary rows under their own metric names.

use std::path::Path;

use crate::CliError;

pub struct BenchReport {
    pub scenario: String,
    pub samples_ms: Vec<f64>,
    /// Bytes transferred per trial (0 when not a transfer benchmark).
    pub bytes: u64,
    /// Additional named metrics for this scenario.
    pub extra: Vec<(String, f64)>,
}

pub struct Summary {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub stddev: f64,
}

impl BenchReport {
    pub fn new(scenario: impl Into<String>, samples_ms: Vec<f64>, bytes: u64) -> Self {
        BenchReport {
            scenario: scenario.into(),
            samples_ms,
            bytes,
            extra: Vec::new(),
        }
    }

    pub fn with_extra(mut self, name: impl Into<String>, value: f64) -> Self {
        self.extra.push((name.into(), value));
        self
    }

    pub fn summary(&self) -> Summary {
        summarize(&self.samples_ms)
    }
}

pub fn summarize(samples: &[f64]) -> Summary {
    if samples.is_empty() {
        return Summary { mean: 0.0, p50: 0.0, p95: 0.0, stddev: 0.0 };
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Summary {
        mean,
        p50: percentile(&sorted, 50.0),
        p95: percentile(&sorted, 95.0),
        stddev: var.sqrt(),
    }
}

/// Nearest-rank percentile over an already sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn write_csv(path: &Path, reports: &[BenchReport]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(io_from_csv)?;
    w.write_record(["scenario", "metric", "trial", "value"]).map_err(io_from_csv)?;
    for r in reports {
        for (i, v) in r.samples_ms.iter().enumerate() {
            w.write_record([r.scenario.as_str(), "latency_ms", &i.to_string(), &format!("{v:.4}")])
                .map_err(io_from_csv)?;
        }
        let s = r.summary();
        let rows = [
            ("bytes", r.bytes as f64),
            ("mean_ms", s.mean),
            ("p50_ms", s.p50),
            ("p95_ms", s.p95),
            ("stddev_ms", s.stddev),
        ];
        for (metric, value) in rows {
            w.write_record([r.scenario.as_str(), metric, "", &format!("{value:.4}")])
                .map_err(io_from_csv)?;
        }
        for (metric, value) in &r.extra {
            w.write_record([r.scenario.as_str(), metric.as_str(), "", &format!("{value:.4}")])
                .map_err(io_from_csv)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn io_from_csv(e: csv::Error) -> CliError {
    CliError::invalid(format!("csv write failed: {e}"))
}

pub fn print_table(reports: &[BenchReport]) {
    println!(
        "{:<28} {:>7} {:>10} {:>10} {:>10} {:>10} {:>12}",
        "scenario", "trials", "mean ms", "p50 ms", "p95 ms", "stddev", "bytes"
    );
    for r in reports {
        let s = r.summary();
        println!(
            "{:<28} {:>7} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>12}",
            r.scenario,
            r.samples_ms.len(),
            s.mean,
            s.p50,
            s.p95,
            s.stddev,
            r.bytes
        );
        for (name, value) in &r.extra {
            println!("{:<28}   {name} = {value:.3}", "");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_matches_hand_computation() {
        let r = BenchReport::new("s", vec![1.0, 2.0, 3.0, 4.0], 10);
        let s = r.summary();
        assert!((s.mean - 2.5).abs() < 1e-9);
        assert!((s.p50 - 2.0).abs() < 1e-9);
        assert!((s.p95 - 4.0).abs() < 1e-9);
        let var: f64 = (2.25 + 0.25 + 0.25 + 2.25) / 4.0;
        assert!((s.stddev - var.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trips_the_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let reports = vec![
            BenchReport::new("a", vec![1.5, 2.5], 64).with_extra("speedup_x", 3.0),
            BenchReport::new("b", vec![9.0], 0),
        ];
        write_csv(&path, &reports).unwrap();

        let mut rdr = csv::Reader::from_path(&path).unwrap();
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        let samples: Vec<f64> = rows
            .iter()
            .filter(|r| &r[0] == "a" && &r[1] == "latency_ms")
            .map(|r| r[3].parse().unwrap())
            .collect();
        assert_eq!(samples, vec![1.5, 2.5]);

        let mean_row = rows.iter().find(|r| &r[0] == "a" && &r[1] == "mean_ms").unwrap();
        let recomputed = summarize(&samples).mean;
        assert!((mean_row[3].parse::<f64>().unwrap() - recomputed).abs() < 1e-6);
        assert!(rows.iter().any(|r| &r[0] == "a" && &r[1] == "speedup_x"));
    }
}
