//! Discrete-event simulation of AODV routing in a mobile ad hoc network,
//! with load-aware route selection and slotted real-time/best-effort
//! scheduling as an alternative to plain FIFO forwarding.

pub mod engine;
pub mod error;
pub mod metrics;
pub mod mobility;
pub mod packet;
pub mod queue;
pub mod routing;
pub mod runner;
pub mod scenario;
pub mod time;
pub mod trace;

pub use engine::{Residual, SimOutcome, Simulator, TrafficFlow};
pub use error::{CompareError, ConfigError, IoError, RunError, TraceError};
pub use metrics::{aggregate, compare, export_csv, parse_csv, Aggregator, ClassSummary, Comparison, RunSummary};
pub use mobility::{Point, RadioModel};
pub use packet::{DataPacket, FlowKind, NodeId, Packet, TrafficClass};
pub use queue::{compute_node_ratio, Buffer, Discipline, SchedulerConfig};
pub use routing::{select_best_rreq, AodvNode, ProtocolMode};
pub use runner::{run_ab, run_single, ComparisonReport, RunOutput};
pub use scenario::{load_scenario, FlowConfig, ScenarioConfig};
pub use time::SimTime;
pub use trace::{TraceEvent, TraceRecord, TraceSink};
