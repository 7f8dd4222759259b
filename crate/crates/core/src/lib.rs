//! Flow construction over packet traces, packet and sample-and-hold
//! sampling, and estimation of the original flow-length distribution from
//! sampled flows.
//!
//! The pipeline: read or generate a trace ([`trace`]), group packets into
//! flows through a sampler ([`flowtable`], [`sampling`]), invert the observed
//! length distribution ([`inversion`]) and compare it with ground truth over
//! logarithmic bins ([`binning`], [`report`]).

pub mod binning;
pub mod dist;
pub mod error;
pub mod flowtable;
pub mod inversion;
pub mod report;
pub mod sampling;
pub mod trace;

pub use dist::{FlowLengthDistribution, LengthHistogram, ObservedDistribution};
pub use error::{Error, Result};
pub use flowtable::{build_flows, FlowId, FlowRecord, FlowSet, FlowTable, FlowTableConfig};
pub use sampling::{Method, Sampler, SamplerConfig};
pub use trace::{FiveTuple, PacketRecord, TcpFlags, Trace};
