//! Summary statistics and CSV output for benchmark reports.

use std::io;

use serde::Serialize;

use crate::bench::MetricsReport;

/// Nearest-rank percentile of `xs`; `p` in `[0, 100]`.
pub fn percentile(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation.
pub fn stddev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub stddev: f64,
    pub min: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        Summary {
            n: xs.len(),
            mean: mean(xs),
            stddev: stddev(xs),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            p50: percentile(xs, 50.0),
            p95: percentile(xs, 95.0),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Coefficient of variation.
    pub fn cv(&self) -> f64 {
        self.stddev / self.mean
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CsvRow<'a> {
    pub run_id: &'a str,
    pub workload: &'a str,
    pub mode: &'a str,
    pub batch: usize,
    pub nodes: usize,
    pub timeout_commit_ms: u64,
    pub abci: &'a str,
    pub latency_profile: &'a str,
    pub n_txs: u64,
    pub latency_p50_ms: f64,
    pub latency_p95_ms: f64,
    pub latency_mean_ms: f64,
    pub end_to_end_ms: f64,
    pub processing_ms: f64,
    pub inspection_ms: f64,
    pub blocks: usize,
    pub txs_per_block: f64,
    pub failures: usize,
    pub final_app_hash: &'a str,
}

impl<'a> CsvRow<'a> {
    pub fn from_report(r: &'a MetricsReport) -> Self {
        let wl = r.wl_latencies_ms();
        let (p50, p95, m) = if wl.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            (percentile(&wl, 50.0), percentile(&wl, 95.0), mean(&wl))
        };
        CsvRow {
            run_id: &r.run_id,
            workload: &r.workload,
            mode: r.mode.name(),
            batch: r.batch,
            nodes: r.nodes,
            timeout_commit_ms: r.timeout_commit_ms,
            abci: r.abci.name(),
            latency_profile: &r.latency_profile,
            n_txs: r.n_txs,
            latency_p50_ms: p50,
            latency_p95_ms: p95,
            latency_mean_ms: m,
            end_to_end_ms: r.end_to_end_ms,
            processing_ms: r.processing_ms,
            inspection_ms: r.inspection_ms,
            blocks: r.blocks.len(),
            txs_per_block: r.txs_per_block(),
            failures: r.failures.len(),
            final_app_hash: &r.final_app_hash,
        }
    }
}

/// Writes one CSV row per report, with a header.
pub fn write_csv<'a, W: io::Write>(out: W, reports: impl IntoIterator<Item = &'a MetricsReport>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(CsvRow::from_report(r))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&xs, 50.0), 50.0);
        assert_eq!(percentile(&xs, 95.0), 95.0);
        assert_eq!(percentile(&xs, 0.0), 1.0);
        assert_eq!(percentile(&xs, 100.0), 100.0);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0), 2.0);
    }

    #[test]
    fn summary_stats() {
        let s = Summary::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(s.mean, 5.0);
        assert!((s.stddev - 2.138_089_935).abs() < 1e-6);
        assert_eq!((s.min, s.max), (2.0, 9.0));
        assert!(percentile(&[], 50.0).is_nan());
    }
}
