//! Simulation trace records and their line format.
//!
//! One record per line, tab separated:
//! `time node event packet_id class key=value...`, with `-` standing in for
//! an absent packet id or class. Times use nine decimals so they parse back
//! to the exact nanosecond.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{IoError, TraceError};
use crate::packet::{NodeId, TrafficClass};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    /// A flow created a data packet at its source.
    Generate,
    Enqueue,
    Dequeue,
    /// Refused (or pushed out) by a full buffer at a relay.
    DropTail,
    /// Refused by a full buffer at the packet's own source.
    DropSource,
    /// No usable route: discovery gave up, or a relay had nowhere to send it.
    DropRoute,
    Send,
    Deliver,
    LinkBreak,
    RreqForward,
    RrepSend,
    RatioSample,
    Mobility,
}

impl TraceEvent {
    pub const ALL: [TraceEvent; 13] = [
        TraceEvent::Generate,
        TraceEvent::Enqueue,
        TraceEvent::Dequeue,
        TraceEvent::DropTail,
        TraceEvent::DropSource,
        TraceEvent::DropRoute,
        TraceEvent::Send,
        TraceEvent::Deliver,
        TraceEvent::LinkBreak,
        TraceEvent::RreqForward,
        TraceEvent::RrepSend,
        TraceEvent::RatioSample,
        TraceEvent::Mobility,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TraceEvent::Generate => "Generate",
            TraceEvent::Enqueue => "Enqueue",
            TraceEvent::Dequeue => "Dequeue",
            TraceEvent::DropTail => "DropTail",
            TraceEvent::DropSource => "DropSource",
            TraceEvent::DropRoute => "DropRoute",
            TraceEvent::Send => "Send",
            TraceEvent::Deliver => "Deliver",
            TraceEvent::LinkBreak => "LinkBreak",
            TraceEvent::RreqForward => "RreqForward",
            TraceEvent::RrepSend => "RrepSend",
            TraceEvent::RatioSample => "RatioSample",
            TraceEvent::Mobility => "Mobility",
        }
    }

    /// Events that end a data packet's life without delivery.
    pub fn is_data_drop(self) -> bool {
        matches!(
            self,
            TraceEvent::DropTail | TraceEvent::DropSource | TraceEvent::DropRoute | TraceEvent::LinkBreak
        )
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraceEvent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TraceEvent::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown trace event `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub node: NodeId,
    pub event: TraceEvent,
    pub packet_id: Option<u64>,
    pub class: Option<TrafficClass>,
    pub extra: Vec<(String, String)>,
}

impl TraceRecord {
    pub fn new(time: SimTime, node: NodeId, event: TraceEvent) -> Self {
        TraceRecord { time, node, event, packet_id: None, class: None, extra: Vec::new() }
    }

    pub fn packet(mut self, packet_id: u64, class: TrafficClass) -> Self {
        self.packet_id = Some(packet_id);
        self.class = Some(class);
        self
    }

    pub fn class(mut self, class: TrafficClass) -> Self {
        self.class = Some(class);
        self
    }

    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.extra.push((key.to_owned(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Option<T> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn get_time(&self, key: &str) -> Option<SimTime> {
        self.get(key).and_then(SimTime::parse)
    }

    pub fn to_line(&self) -> String {
        self.to_string()
    }

    pub fn parse_line(line: &str) -> Result<TraceRecord, String> {
        let mut fields = line.split('\t');
        let mut next = |name: &str| fields.next().ok_or_else(|| format!("missing {name} field"));
        let time = SimTime::parse(next("time")?).ok_or("bad time")?;
        let node = NodeId(next("node")?.parse().map_err(|_| "bad node id")?);
        let event = next("event")?.parse()?;
        let packet_id = match next("packet_id")? {
            "-" => None,
            s => Some(s.parse().map_err(|_| format!("bad packet id `{s}`"))?),
        };
        let class = match next("class")? {
            "-" => None,
            s => Some(s.parse()?),
        };
        let mut extra = Vec::new();
        for kv in fields {
            let (k, v) = kv.split_once('=').ok_or_else(|| format!("malformed detail `{kv}`"))?;
            extra.push((k.to_owned(), v.to_owned()));
        }
        Ok(TraceRecord { time, node, event, packet_id, class, extra })
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t", self.time, self.node, self.event)?;
        match self.packet_id {
            Some(id) => write!(f, "{id}\t")?,
            None => f.write_str("-\t")?,
        }
        match self.class {
            Some(c) => f.write_str(c.as_str())?,
            None => f.write_str("-")?,
        }
        for (k, v) in &self.extra {
            write!(f, "\t{k}={v}")?;
        }
        Ok(())
    }
}

/// Consumer of the record stream emitted by the simulator.
pub trait TraceSink {
    fn record(&mut self, rec: TraceRecord);
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, rec: TraceRecord) {
        self.push(rec);
    }
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _rec: TraceRecord) {}
}

impl<A: TraceSink, B: TraceSink> TraceSink for (A, B) {
    fn record(&mut self, rec: TraceRecord) {
        self.0.record(rec.clone());
        self.1.record(rec);
    }
}

impl<S: TraceSink + ?Sized> TraceSink for &mut S {
    fn record(&mut self, rec: TraceRecord) {
        (**self).record(rec);
    }
}

/// Streams records to a file. Write errors are held until [`TraceWriter::finish`].
pub struct TraceWriter {
    path: PathBuf,
    out: BufWriter<File>,
    error: Option<io::Error>,
}

impl TraceWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, IoError> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|source| IoError::Io { path: path.clone(), source })?;
        Ok(TraceWriter { path, out: BufWriter::new(file), error: None })
    }

    pub fn finish(mut self) -> Result<(), IoError> {
        if let Some(source) = self.error.take() {
            return Err(IoError::Io { path: self.path, source });
        }
        self.out.flush().map_err(|source| IoError::Io { path: self.path.clone(), source })
    }
}

impl TraceSink for TraceWriter {
    fn record(&mut self, rec: TraceRecord) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.out, "{rec}") {
                self.error = Some(e);
            }
        }
    }
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>, crate::error::RunError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    parse_trace(BufReader::new(file)).map_err(|e| match e {
        ReadError::Io(source) => IoError::Io { path: path.to_path_buf(), source }.into(),
        ReadError::Trace(t) => t.into(),
    })
}

enum ReadError {
    Io(io::Error),
    Trace(TraceError),
}

fn parse_trace<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>, ReadError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(ReadError::Io)?;
        if line.is_empty() {
            continue;
        }
        let rec = TraceRecord::parse_line(&line)
            .map_err(|message| ReadError::Trace(TraceError::Parse { line: i + 1, message }))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_trace_str(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    parse_trace(text.as_bytes()).map_err(|e| match e {
        ReadError::Trace(t) => t,
        ReadError::Io(e) => TraceError::Parse { line: 0, message: e.to_string() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_layout() {
        let rec = TraceRecord::new(SimTime::from_millis(1050), NodeId(3), TraceEvent::Enqueue)
            .packet(17, TrafficClass::RealTime)
            .with("flow", 1);
        assert_eq!(rec.to_line(), "1.050000000\t3\tEnqueue\t17\tRT\tflow=1");
        let bare = TraceRecord::new(SimTime::ZERO, NodeId(0), TraceEvent::Mobility);
        assert_eq!(bare.to_line(), "0.000000000\t0\tMobility\t-\t-");
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(TraceRecord::parse_line("nope").is_err());
        assert!(TraceRecord::parse_line("1.0\t0\tWhatever\t-\t-").is_err());
        assert!(TraceRecord::parse_line("1.0\t0\tSend\t-\t-\tbroken").is_err());
        let err = parse_trace_str("0.0\t0\tSend\t-\t-\n1.0\tx\tSend\t-\t-\n").unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 2, .. }));
    }
}
