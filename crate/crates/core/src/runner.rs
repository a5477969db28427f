//! Single runs and baseline/QoS sweeps over a scenario.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use crate::engine::{Residual, Simulator};
use crate::error::{IoError, RunError};
use crate::metrics::{self, compare, Aggregator, Comparison, RunSummary};
use crate::packet::TrafficClass;
use crate::routing::ProtocolMode;
use crate::scenario::ScenarioConfig;
use crate::trace::{TraceSink, TraceWriter};

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub residual: Residual,
}

/// Runs one `(pause, mode)` point, optionally streaming the trace to a file.
pub fn run_single(
    cfg: &ScenarioConfig,
    pause: f64,
    mode: ProtocolMode,
    trace_path: Option<&Path>,
) -> Result<RunOutput, RunError> {
    let sim = Simulator::new(cfg, pause, mode)?;
    let mut agg = Aggregator::new(cfg.bucket_width, cfg.sim_time);
    let outcome = match trace_path {
        Some(path) => {
            let mut writer = TraceWriter::create(path)?;
            let outcome = sim.run((&mut agg, &mut writer));
            writer.finish()?;
            outcome
        }
        None => sim.run(&mut agg),
    };
    let summary = agg.finish(mode.as_str(), pause, &cfg.fingerprint(pause))?;
    Ok(RunOutput { summary, residual: outcome.residual })
}

/// Same as [`run_single`] but with a caller-supplied extra sink.
pub fn run_with_sink<S: TraceSink>(
    cfg: &ScenarioConfig,
    pause: f64,
    mode: ProtocolMode,
    sink: S,
) -> Result<RunOutput, RunError> {
    let sim = Simulator::new(cfg, pause, mode)?;
    let mut agg = Aggregator::new(cfg.bucket_width, cfg.sim_time);
    let outcome = sim.run((&mut agg, sink));
    let summary = agg.finish(mode.as_str(), pause, &cfg.fingerprint(pause))?;
    Ok(RunOutput { summary, residual: outcome.residual })
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub seed: u64,
    /// One entry per pause time, in the configured order.
    pub rows: Vec<Comparison>,
}

impl ComparisonReport {
    pub fn worst_rt_ratio(&self) -> Option<f64> {
        self.rows.iter().filter_map(|c| c.rt_ratio).reduce(f64::min)
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.digits$}"))
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed {}", self.seed)?;
        writeln!(
            f,
            "{:>7} {:>16} {:>8} {:>8} {:>8} {:>8} {:>7} {:>7} {:>10} {:>10} {:>7}",
            "pause", "fingerprint", "rt_base", "rt_qos", "be_base", "be_qos", "rt_x", "be_x", "delay_base", "delay_qos", "delay_x"
        )?;
        for c in &self.rows {
            let (b, i) = (&c.baseline, &c.improved);
            writeln!(
                f,
                "{:>7} {:>16} {:>8} {:>8} {:>8} {:>8} {:>7} {:>7} {:>10} {:>10} {:>7}",
                b.pause_time_s,
                b.fingerprint,
                b.real_time.delivered,
                i.real_time.delivered,
                b.best_effort.delivered,
                i.best_effort.delivered,
                opt(c.rt_ratio, 3),
                opt(c.be_ratio, 3),
                opt(b.real_time.mean_delay_s, 6),
                opt(i.real_time.mean_delay_s, 6),
                opt(c.rt_delay_ratio, 3),
            )?;
        }
        Ok(())
    }
}

pub fn summary_text(s: &RunSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode {}  pause {} s  fingerprint {}", s.label, s.pause_time_s, s.fingerprint);
    for class in [TrafficClass::RealTime, TrafficClass::BestEffort] {
        let c = s.class(class);
        let _ = writeln!(
            out,
            "{:<3} generated {:>6}  delivered {:>6}  dropped {:>6}  mean_delay {} s  mean_queue_delay {} s",
            class.as_str(),
            c.generated,
            c.delivered,
            c.dropped,
            opt(c.mean_delay_s, 6),
            opt(c.mean_queue_delay_s, 6)
        );
    }
    out
}

/// Runs both modes at every pause time. The points are independent engine
/// instances and run on scoped threads; rows come back in pause order.
/// With `out`, each run's trace plus the series and sweep CSVs are written
/// there.
pub fn run_ab(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<ComparisonReport, RunError> {
    cfg.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.to_path_buf(), source })?;
    }
    let trace_path = |pause: f64, mode: ProtocolMode| -> Option<PathBuf> {
        out.map(|d| d.join(format!("trace_{}_pause{}.tsv", mode.as_str(), pause)))
    };
    let results: Vec<Result<Comparison, RunError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .pause_times
            .iter()
            .map(|&pause| {
                let tb = trace_path(pause, ProtocolMode::Baseline);
                let tq = trace_path(pause, ProtocolMode::QosImproved);
                scope.spawn(move || {
                    let b = run_single(cfg, pause, ProtocolMode::Baseline, tb.as_deref())?;
                    let q = run_single(cfg, pause, ProtocolMode::QosImproved, tq.as_deref())?;
                    Ok(compare(&b.summary, &q.summary)?)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let report = ComparisonReport { seed: cfg.seed, rows };
    if let Some(dir) = out {
        let summaries = report.rows.iter().flat_map(|c| [&c.baseline, &c.improved]);
        metrics::export_csv(summaries, dir.join("series.csv"))?;
        metrics::write_sweep_csv(&report.rows, dir.join("sweep.csv"))?;
        let path = dir.join("report.txt");
        fs::write(&path, report.to_string()).map_err(|source| IoError::Io { path, source })?;
    }
    Ok(report)
}
