//! Per-class throughput and delay aggregation over a trace stream.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CompareError, IoError, TraceError};
use crate::packet::TrafficClass;
use crate::time::SimTime;
use crate::trace::{TraceEvent, TraceRecord, TraceSink};

pub const DEFAULT_BUCKET_WIDTH: f64 = 5.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// `None` when nothing was delivered.
    pub mean_delay_s: Option<f64>,
    pub mean_queue_delay_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub bucket_end_s: f64,
    pub class: TrafficClass,
    pub cumulative_delivered: u64,
    /// Mean delay of everything delivered up to the bucket end.
    pub mean_delay_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub pause_time_s: f64,
    pub fingerprint: String,
    pub real_time: ClassSummary,
    pub best_effort: ClassSummary,
    pub series: Vec<SeriesPoint>,
}

impl RunSummary {
    pub fn class(&self, class: TrafficClass) -> &ClassSummary {
        match class {
            TrafficClass::RealTime => &self.real_time,
            _ => &self.best_effort,
        }
    }

    fn class_mut(&mut self, class: TrafficClass) -> &mut ClassSummary {
        match class {
            TrafficClass::RealTime => &mut self.real_time,
            _ => &mut self.best_effort,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Mean {
    sum: f64,
    n: u64,
}

impl Mean {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

#[derive(Debug)]
struct Life {
    class: TrafficClass,
    created: SimTime,
    queued: SimTime,
    delivered: bool,
}

#[derive(Debug, Default, Clone)]
struct ClassAcc {
    generated: u64,
    delivered: u64,
    dropped: u64,
    delay: Mean,
    queue_delay: Mean,
    buckets: Vec<(u64, Mean)>,
}

/// Streaming fold from trace records to a [`RunSummary`]. Usable directly
/// as the simulator's trace sink; integrity errors are held until
/// [`Aggregator::finish`].
#[derive(Debug)]
pub struct Aggregator {
    bucket_width: SimTime,
    bucket_count: usize,
    packets: HashMap<u64, Life>,
    rt: ClassAcc,
    be: ClassAcc,
    error: Option<TraceError>,
}

impl Aggregator {
    /// Buckets of `bucket_width` seconds covering `[0, sim_time]`.
    pub fn new(bucket_width: f64, sim_time: f64) -> Self {
        let bucket_count = if bucket_width > 0.0 { (sim_time / bucket_width).ceil().max(0.0) as usize } else { 0 };
        let empty = ClassAcc { buckets: vec![(0, Mean::default()); bucket_count], ..ClassAcc::default() };
        Aggregator {
            bucket_width: SimTime::from_secs_f64(bucket_width),
            bucket_count,
            packets: HashMap::new(),
            rt: empty.clone(),
            be: empty,
            error: None,
        }
    }

    fn acc(&mut self, class: TrafficClass) -> Option<&mut ClassAcc> {
        match class {
            TrafficClass::RealTime => Some(&mut self.rt),
            TrafficClass::BestEffort => Some(&mut self.be),
            TrafficClass::Control => None,
        }
    }

    /// Bucket `i` covers `((i) w, (i + 1) w]`; time zero falls in the first.
    fn bucket_of(&self, t: SimTime) -> usize {
        let w = self.bucket_width.as_nanos().max(1);
        let idx = t.as_nanos().div_ceil(w).saturating_sub(1) as usize;
        idx.min(self.bucket_count.saturating_sub(1))
    }

    fn fail(&mut self, e: TraceError) {
        self.error.get_or_insert(e);
    }

    pub fn push(&mut self, rec: &TraceRecord) {
        let (Some(id), Some(class)) = (rec.packet_id, rec.class) else {
            return;
        };
        if !class.is_data() {
            return;
        }
        match rec.event {
            TraceEvent::Generate => {
                self.packets.insert(id, Life { class, created: rec.time, queued: SimTime::ZERO, delivered: false });
                if let Some(acc) = self.acc(class) {
                    acc.generated += 1;
                }
            }
            TraceEvent::Dequeue => {
                let wait = rec.get_time("wait").unwrap_or(SimTime::ZERO);
                if let Some(life) = self.packets.get_mut(&id) {
                    life.queued += wait;
                }
            }
            TraceEvent::Deliver => {
                let Some(life) = self.packets.get_mut(&id) else {
                    self.fail(TraceError::OrphanDelivery { packet_id: id, time: rec.time.to_string() });
                    return;
                };
                if life.delivered {
                    self.fail(TraceError::DuplicateDelivery(id));
                    return;
                }
                life.delivered = true;
                let delay = (rec.time - life.created).as_secs_f64();
                let queued = life.queued.as_secs_f64();
                let class = life.class;
                let bucket = self.bucket_of(rec.time);
                let has_buckets = self.bucket_count > 0;
                if let Some(acc) = self.acc(class) {
                    acc.delivered += 1;
                    acc.delay.push(delay);
                    acc.queue_delay.push(queued);
                    if has_buckets {
                        acc.buckets[bucket].0 += 1;
                        acc.buckets[bucket].1.push(delay);
                    }
                }
            }
            e if e.is_data_drop() => {
                if let Some(acc) = self.acc(class) {
                    acc.dropped += 1;
                }
            }
            _ => {}
        }
    }

    pub fn finish(self, label: &str, pause_time_s: f64, fingerprint: &str) -> Result<RunSummary, TraceError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let w = self.bucket_width.as_secs_f64();
        let mut series = Vec::with_capacity(2 * self.bucket_count);
        let mut summary = RunSummary {
            label: label.to_owned(),
            pause_time_s,
            fingerprint: fingerprint.to_owned(),
            real_time: ClassSummary::default(),
            best_effort: ClassSummary::default(),
            series: Vec::new(),
        };
        for (class, acc) in [(TrafficClass::RealTime, &self.rt), (TrafficClass::BestEffort, &self.be)] {
            *summary.class_mut(class) = ClassSummary {
                generated: acc.generated,
                delivered: acc.delivered,
                dropped: acc.dropped,
                mean_delay_s: acc.delay.get(),
                mean_queue_delay_s: acc.queue_delay.get(),
            };
            let mut running = Mean::default();
            let mut delivered = 0;
            for (i, (count, mean)) in acc.buckets.iter().enumerate() {
                delivered += count;
                running.sum += mean.sum;
                running.n += mean.n;
                series.push(SeriesPoint {
                    bucket_end_s: w * (i + 1) as f64,
                    class,
                    cumulative_delivered: delivered,
                    mean_delay_s: running.get(),
                });
            }
        }
        summary.series = series;
        Ok(summary)
    }
}

impl TraceSink for Aggregator {
    fn record(&mut self, rec: TraceRecord) {
        self.push(&rec);
    }
}

/// Folds a finished trace in one call.
pub fn aggregate<'a>(
    records: impl IntoIterator<Item = &'a TraceRecord>,
    bucket_width: f64,
    sim_time: f64,
) -> Result<RunSummary, TraceError> {
    let mut agg = Aggregator::new(bucket_width, sim_time);
    for rec in records {
        agg.push(rec);
    }
    agg.finish("", 0.0, "")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: RunSummary,
    pub improved: RunSummary,
    /// Improved over baseline; `None` when the baseline delivered nothing.
    pub rt_ratio: Option<f64>,
    pub be_ratio: Option<f64>,
    /// Baseline over improved, so a value above one means lower delay.
    pub rt_delay_ratio: Option<f64>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

pub fn compare(baseline: &RunSummary, improved: &RunSummary) -> Result<Comparison, CompareError> {
    if baseline.fingerprint != improved.fingerprint {
        return Err(CompareError::FingerprintMismatch {
            baseline: baseline.fingerprint.clone(),
            improved: improved.fingerprint.clone(),
        });
    }
    let rt_delay_ratio = match (baseline.real_time.mean_delay_s, improved.real_time.mean_delay_s) {
        (Some(b), Some(i)) => ratio(b, i),
        _ => None,
    };
    Ok(Comparison {
        baseline: baseline.clone(),
        improved: improved.clone(),
        rt_ratio: ratio(improved.real_time.delivered as f64, baseline.real_time.delivered as f64),
        be_ratio: ratio(improved.best_effort.delivered as f64, baseline.best_effort.delivered as f64),
        rt_delay_ratio,
    })
}

/// One CSV data row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub series: String,
    pub pause_time_s: f64,
    pub bucket_end_s: f64,
    pub class: String,
    pub cumulative_delivered: u64,
    pub mean_delay_s: Option<f64>,
}

pub fn summary_rows(summary: &RunSummary) -> Vec<SeriesRow> {
    summary
        .series
        .iter()
        .map(|p| SeriesRow {
            series: summary.label.clone(),
            pause_time_s: summary.pause_time_s,
            bucket_end_s: p.bucket_end_s,
            class: p.class.as_str().to_owned(),
            cumulative_delivered: p.cumulative_delivered,
            mean_delay_s: p.mean_delay_s,
        })
        .collect()
}

fn csv_err(path: &Path, source: csv::Error) -> IoError {
    IoError::Csv { path: path.to_path_buf(), source }
}

pub fn write_rows<'a>(rows: impl IntoIterator<Item = &'a SeriesRow>, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(["series", "pause_time_s", "bucket_end_s", "class", "cumulative_delivered", "mean_delay_s"])
        .map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

/// Writes every summary's series, one block after another.
pub fn export_csv<'a>(summaries: impl IntoIterator<Item = &'a RunSummary>, path: impl AsRef<Path>) -> Result<(), IoError> {
    let rows: Vec<SeriesRow> = summaries.into_iter().flat_map(summary_rows).collect();
    write_rows(&rows, path)
}

pub fn export_comparison_csv(cmp: &Comparison, path: impl AsRef<Path>) -> Result<(), IoError> {
    export_csv([&cmp.baseline, &cmp.improved], path)
}

pub fn parse_csv(path: impl AsRef<Path>) -> Result<Vec<SeriesRow>, IoError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// Final per-pause-time counts, one row per mode and class.
pub fn write_sweep_csv(comparisons: &[Comparison], path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let io = |source| IoError::Io { path: path.to_path_buf(), source };
    let mut out = String::from("pause_time_s,mode,class,generated,delivered,dropped,mean_delay_s,mean_queue_delay_s\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for cmp in comparisons {
        for s in [&cmp.baseline, &cmp.improved] {
            for class in [TrafficClass::RealTime, TrafficClass::BestEffort] {
                let c = s.class(class);
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    s.pause_time_s,
                    s.label,
                    class.as_str(),
                    c.generated,
                    c.delivered,
                    c.dropped,
                    opt(c.mean_delay_s),
                    opt(c.mean_queue_delay_s)
                ));
            }
        }
    }
    let mut f = File::create(path).map_err(io)?;
    f.write_all(out.as_bytes()).map_err(io)
}
