//! NetFlow-style flow construction over a (possibly sampled) packet stream.
//!
//! For each packet, in trace order:
//!
//! * a tracked 5-tuple whose last packet is more than `flow_timeout` ago has
//!   its current flow terminated and a fresh one opened; either way the
//!   packet is added to the current flow;
//! * an untracked 5-tuple starts a new flow only if the sampler selects it;
//! * once the buffer holds `buffer_capacity` records, or `export_timeout`
//!   of trace time has passed since the last export, every record is
//!   exported and all tracking state is dropped.
//!
//! Expired flows stay in the buffer until the next export.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::LengthHistogram;
use crate::error::{Error, Result};
use crate::sampling::{Decision, SamplerDecision};
use crate::trace::{secs_to_micros, FiveTuple, PacketRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowTableConfig {
    /// Idle gap, in seconds, after which a tracked flow is terminated.
    #[serde(with = "infinite_as_null")]
    pub flow_timeout: f64,
    /// Analysis window length in seconds.
    #[serde(with = "infinite_as_null")]
    pub export_timeout: f64,
    pub buffer_capacity: usize,
}

impl FlowTableConfig {
    pub fn new(flow_timeout: f64, export_timeout: f64, buffer_capacity: usize) -> Result<Self> {
        let config = Self {
            flow_timeout,
            export_timeout,
            buffer_capacity,
        };
        config.validate()?;
        Ok(config)
    }

    /// No expiry, no window exports, no buffer limit.
    pub fn unbounded() -> Self {
        Self {
            flow_timeout: f64::INFINITY,
            export_timeout: f64::INFINITY,
            buffer_capacity: usize::MAX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.flow_timeout > 0.0) || !(self.export_timeout > 0.0) {
            return Err(Error::InvalidConfig(
                "flow and export timeouts must be positive".into(),
            ));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::InvalidConfig("buffer capacity must be >= 1".into()));
        }
        Ok(())
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Flow identifier ψ: the analysis window plus the number of earlier
/// flows on the same 5-tuple within that window. Unique together with φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowId {
    pub window: u32,
    pub seq: u32,
}

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.window, self.seq)
    }
}

impl FromStr for FlowId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, q) = s
            .split_once(':')
            .ok_or_else(|| format!("bad flow id {s:?}"))?;
        Ok(FlowId {
            window: w.parse().map_err(|_| format!("bad flow id {s:?}"))?,
            seq: q.parse().map_err(|_| format!("bad flow id {s:?}"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub flow_id: FlowId,
    pub key: FiveTuple,
    pub packet_count: u64,
    pub byte_count: u64,
    pub first_seen_us: u64,
    pub last_seen_us: u64,
    pub syn_count: u32,
}

impl FlowRecord {
    fn open(flow_id: FlowId, packet: &PacketRecord) -> Self {
        Self {
            flow_id,
            key: packet.key,
            packet_count: 1,
            byte_count: u64::from(packet.byte_len),
            first_seen_us: packet.timestamp_us,
            last_seen_us: packet.timestamp_us,
            syn_count: u32::from(packet.is_syn()),
        }
    }

    fn add(&mut self, packet: &PacketRecord) {
        self.packet_count += 1;
        self.byte_count += u64::from(packet.byte_len);
        self.last_seen_us = packet.timestamp_us;
        self.syn_count += u32::from(packet.is_syn());
    }
}

/// All records exported from one run of the flow table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowSet {
    pub records: Vec<FlowRecord>,
    /// Trace time (us) of each export that wrote at least one record.
    pub window_boundaries: Vec<u64>,
}

impl FlowSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_packets(&self) -> u64 {
        self.records.iter().map(|r| r.packet_count).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.records.iter().map(|r| r.byte_count).sum()
    }

    /// Arithmetic mean length of the packets accounted in these flows.
    pub fn mean_packet_len(&self) -> Option<f64> {
        let packets = self.total_packets();
        (packets > 0).then(|| self.total_bytes() as f64 / packets as f64)
    }

    pub fn tcp_only(&self) -> FlowSet {
        FlowSet {
            records: self
                .records
                .iter()
                .filter(|r| r.key.is_tcp())
                .copied()
                .collect(),
            window_boundaries: self.window_boundaries.clone(),
        }
    }

    /// Per-window flow-length histograms, in window order.
    pub fn window_histograms(&self) -> Vec<LengthHistogram> {
        let windows = self
            .records
            .iter()
            .map(|r| r.flow_id.window as usize + 1)
            .max()
            .unwrap_or(0);
        let mut out = vec![LengthHistogram::new(); windows];
        for r in &self.records {
            out[r.flow_id.window as usize].add(r.packet_count);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(FlowCsvRow::from(r))?;
        }
        if self.records.is_empty() {
            w.write_record(FLOW_CSV_HEADER)?;
        }
        w.flush().map_err(|e| Error::io("<flow csv>", e))?;
        Ok(())
    }

    /// Reads records written by [`FlowSet::write_csv`]. Window boundaries
    /// are not stored in the file and come back empty.
    pub fn read_csv<R: Read>(reader: R) -> Result<FlowSet> {
        let mut r = csv::Reader::from_reader(reader);
        let mut records = Vec::new();
        for (i, row) in r.deserialize::<FlowCsvRow>().enumerate() {
            let row = row?;
            records.push(row.into_record().map_err(|message| Error::Parse {
                line: i + 2,
                message,
            })?);
        }
        Ok(FlowSet {
            records,
            window_boundaries: Vec::new(),
        })
    }
}

/// Histogram of flow lengths over every window. Flows from different
/// windows are counted separately even when they share a 5-tuple.
pub fn flow_length_histogram(flows: &FlowSet) -> LengthHistogram {
    flows.records.iter().map(|r| r.packet_count).collect()
}

const FLOW_CSV_HEADER: [&str; 11] = [
    "flow_id",
    "proto",
    "src",
    "sport",
    "dst",
    "dport",
    "packets",
    "bytes",
    "first_seen",
    "last_seen",
    "syn_count",
];

#[derive(Debug, Serialize, Deserialize)]
struct FlowCsvRow {
    flow_id: String,
    proto: u8,
    src: Ipv4Addr,
    sport: u16,
    dst: Ipv4Addr,
    dport: u16,
    packets: u64,
    bytes: u64,
    first_seen: String,
    last_seen: String,
    syn_count: u32,
}

impl From<&FlowRecord> for FlowCsvRow {
    fn from(r: &FlowRecord) -> Self {
        let ts = |us: u64| format!("{}.{:06}", us / 1_000_000, us % 1_000_000);
        Self {
            flow_id: r.flow_id.to_string(),
            proto: r.key.protocol,
            src: r.key.src_addr,
            sport: r.key.src_port,
            dst: r.key.dst_addr,
            dport: r.key.dst_port,
            packets: r.packet_count,
            bytes: r.byte_count,
            first_seen: ts(r.first_seen_us),
            last_seen: ts(r.last_seen_us),
            syn_count: r.syn_count,
        }
    }
}

impl FlowCsvRow {
    fn into_record(self) -> std::result::Result<FlowRecord, String> {
        let secs = |s: &str| -> std::result::Result<u64, String> {
            let v: f64 = s.parse().map_err(|_| format!("bad time {s:?}"))?;
            if v < 0.0 {
                return Err(format!("negative time {s:?}"));
            }
            Ok(secs_to_micros(v))
        };
        let record = FlowRecord {
            flow_id: self.flow_id.parse()?,
            key: FiveTuple::new(self.proto, self.src, self.sport, self.dst, self.dport),
            packet_count: self.packets,
            byte_count: self.bytes,
            first_seen_us: secs(&self.first_seen)?,
            last_seen_us: secs(&self.last_seen)?,
            syn_count: self.syn_count,
        };
        if record.packet_count == 0 {
            return Err("flow with zero packets".into());
        }
        if record.byte_count < record.packet_count {
            return Err("fewer bytes than packets".into());
        }
        if record.first_seen_us > record.last_seen_us {
            return Err("first_seen after last_seen".into());
        }
        Ok(record)
    }
}

/// What happened to an admitted packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Admission {
    pub flow_id: FlowId,
    /// The sampler's start decision opened tracking on this packet.
    pub started: bool,
}

struct Tracked {
    slot: usize,
    last_seen_us: u64,
    seq: u32,
}

/// Single-owner flow table driven by one time-ordered packet stream.
pub struct FlowTable<'s, S: ?Sized> {
    sampler: &'s S,
    flow_timeout_us: u64,
    export_timeout_us: u64,
    capacity: usize,
    tracked: HashMap<FiveTuple, Tracked>,
    buffer: Vec<FlowRecord>,
    out: FlowSet,
    window: u32,
    window_start_us: Option<u64>,
    last_ts: Option<u64>,
    index: u64,
    admitted: u64,
}

impl<'s, S: SamplerDecision + ?Sized> FlowTable<'s, S> {
    pub fn new(config: FlowTableConfig, sampler: &'s S) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            sampler,
            flow_timeout_us: secs_to_micros(config.flow_timeout),
            export_timeout_us: secs_to_micros(config.export_timeout),
            capacity: config.buffer_capacity,
            tracked: HashMap::new(),
            buffer: Vec::new(),
            out: FlowSet::default(),
            window: 0,
            window_start_us: None,
            last_ts: None,
            index: 0,
            admitted: 0,
        })
    }

    /// Packets admitted so far.
    pub fn admitted(&self) -> u64 {
        self.admitted
    }

    /// Packets seen so far.
    pub fn seen(&self) -> u64 {
        self.index
    }

    pub fn push(&mut self, packet: &PacketRecord) -> Result<Option<Admission>> {
        let t = packet.timestamp_us;
        let index = self.index;
        if let Some(prev) = self.last_ts {
            if t < prev {
                return Err(Error::OutOfOrder {
                    index,
                    timestamp_us: t,
                    previous_us: prev,
                });
            }
        }
        self.last_ts = Some(t);
        self.index += 1;
        let window_start = *self.window_start_us.get_or_insert(t);

        let is_tracked = self.tracked.contains_key(&packet.key);
        let decision = self.sampler.decide(packet, index, is_tracked);
        let admission = if decision == Decision::Skip {
            None
        } else {
            self.admitted += 1;
            Some(self.account(packet, is_tracked))
        };

        if self.buffer.len() >= self.capacity || t - window_start >= self.export_timeout_us {
            self.export(t);
        }
        Ok(admission)
    }

    fn account(&mut self, packet: &PacketRecord, is_tracked: bool) -> Admission {
        let t = packet.timestamp_us;
        let window = self.window;
        if is_tracked {
            let entry = self.tracked.get_mut(&packet.key).expect("tracked");
            if t - entry.last_seen_us > self.flow_timeout_us {
                entry.seq += 1;
                entry.slot = self.buffer.len();
                let flow_id = FlowId {
                    window,
                    seq: entry.seq,
                };
                self.buffer.push(FlowRecord::open(flow_id, packet));
            } else {
                self.buffer[entry.slot].add(packet);
            }
            entry.last_seen_us = t;
            Admission {
                flow_id: self.buffer[entry.slot].flow_id,
                started: false,
            }
        } else {
            let flow_id = FlowId { window, seq: 0 };
            self.tracked.insert(
                packet.key,
                Tracked {
                    slot: self.buffer.len(),
                    last_seen_us: t,
                    seq: 0,
                },
            );
            self.buffer.push(FlowRecord::open(flow_id, packet));
            Admission {
                flow_id,
                started: true,
            }
        }
    }

    fn export(&mut self, t: u64) {
        if !self.buffer.is_empty() {
            self.out.records.append(&mut self.buffer);
            self.out.window_boundaries.push(t);
            self.window += 1;
        }
        self.tracked.clear();
        self.window_start_us = Some(t);
    }

    /// Exports whatever is still resident and returns every record.
    pub fn finish(mut self) -> FlowSet {
        if let Some(t) = self.last_ts {
            if !self.buffer.is_empty() {
                self.export(t);
            }
        }
        self.out
    }
}

/// Runs a whole stream through a fresh flow table.
pub fn build_flows<'a, I, S>(packets: I, config: FlowTableConfig, sampler: &S) -> Result<FlowSet>
where
    I: IntoIterator<Item = &'a PacketRecord>,
    S: SamplerDecision + ?Sized,
{
    let mut table = FlowTable::new(config, sampler)?;
    for p in packets {
        table.push(p)?;
    }
    Ok(table.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{Sampler, SamplerConfig};
    use crate::trace::{TcpFlags, PROTO_TCP};

    fn pkt(t_secs: f64, host: u8) -> PacketRecord {
        PacketRecord {
            timestamp_us: secs_to_micros(t_secs),
            key: FiveTuple::new(
                PROTO_TCP,
                Ipv4Addr::new(10, 0, 0, host),
                1000,
                Ipv4Addr::new(10, 0, 1, 1),
                80,
            ),
            byte_len: 100,
            tcp_flags: TcpFlags::NONE,
        }
    }

    fn always() -> Sampler {
        Sampler::new(SamplerConfig::always()).unwrap()
    }

    fn cfg(tt: f64, tw: f64, nf: usize) -> FlowTableConfig {
        FlowTableConfig::new(tt, tw, nf).unwrap()
    }

    #[test]
    fn gap_beyond_timeout_splits() {
        let packets = [pkt(0.0, 1), pkt(10.0, 1)];
        let flows = build_flows(&packets, cfg(5.0, 1e6, 100), &always()).unwrap();
        assert_eq!(flows.len(), 2);
        assert!(flows.records.iter().all(|r| r.packet_count == 1));
        assert_eq!(flows.records[0].flow_id, FlowId { window: 0, seq: 0 });
        assert_eq!(flows.records[1].flow_id, FlowId { window: 0, seq: 1 });
    }

    #[test]
    fn gap_within_timeout_joins() {
        let packets = [pkt(0.0, 1), pkt(10.0, 1)];
        let flows = build_flows(&packets, cfg(15.0, 1e6, 100), &always()).unwrap();
        assert_eq!(flows.len(), 1);
        assert_eq!(flows.records[0].packet_count, 2);
        assert_eq!(flows.records[0].byte_count, 200);
    }

    #[test]
    fn gap_equal_to_timeout_does_not_expire() {
        let packets = [pkt(0.0, 1), pkt(5.0, 1)];
        let flows = build_flows(&packets, cfg(5.0, 1e6, 100), &always()).unwrap();
        assert_eq!(flows.len(), 1);
    }

    #[test]
    fn buffer_of_one_exports_every_insertion() {
        let packets = [pkt(0.0, 1), pkt(1.0, 2), pkt(2.0, 3)];
        let flows = build_flows(&packets, cfg(100.0, 1e6, 1), &always()).unwrap();
        assert_eq!(flows.len(), 3);
        assert_eq!(flows.window_boundaries, vec![0, 1_000_000, 2_000_000]);
        let windows: Vec<u32> = flows.records.iter().map(|r| r.flow_id.window).collect();
        assert_eq!(windows, vec![0, 1, 2]);
        assert_eq!(flows.window_histograms().len(), 3);
    }

    #[test]
    fn export_timer_restarts_at_export() {
        // tw = 10: export fires on the packet at t=10, the next at t=20.
        let packets = [pkt(0.0, 1), pkt(10.0, 1), pkt(15.0, 1), pkt(20.0, 1)];
        let flows = build_flows(&packets, cfg(100.0, 10.0, 100), &always()).unwrap();
        let counts: Vec<u64> = flows.records.iter().map(|r| r.packet_count).collect();
        assert_eq!(counts, vec![2, 2]);
        assert_eq!(flows.window_boundaries, vec![10_000_000, 20_000_000]);
    }

    #[test]
    fn empty_stream() {
        let flows = build_flows(&[], cfg(1.0, 1.0, 1), &always()).unwrap();
        assert!(flows.is_empty());
        assert!(flows.window_boundaries.is_empty());
        assert!(flow_length_histogram(&flows).is_empty());
    }

    #[test]
    fn out_of_order_names_packet() {
        let packets = [pkt(0.0, 1), pkt(2.0, 2), pkt(1.0, 3)];
        match build_flows(&packets, cfg(1.0, 10.0, 10), &always()) {
            Err(Error::OutOfOrder { index, .. }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn untracked_skip_and_tracked_hold() {
        // Start only on the second packet of host 1.
        let sampler = |_: &PacketRecord, i: u64, tracked: bool| {
            if tracked || i == 1 {
                Decision::SampleAndTrack
            } else {
                Decision::Skip
            }
        };
        let packets = [pkt(0.0, 1), pkt(1.0, 1), pkt(2.0, 1), pkt(3.0, 2)];
        let mut table = FlowTable::new(cfg(100.0, 1e6, 100), &sampler).unwrap();
        let adm: Vec<_> = packets.iter().map(|p| table.push(p).unwrap()).collect();
        assert_eq!(adm[0], None);
        assert!(adm[1].unwrap().started);
        assert!(!adm[2].unwrap().started);
        assert_eq!(adm[3], None);
        let flows = table.finish();
        assert_eq!(flows.len(), 1);
        assert_eq!(flows.records[0].packet_count, 2);
    }

    #[test]
    fn histogram_counts_lengths() {
        let packets = [pkt(0.0, 1), pkt(0.1, 2), pkt(0.2, 3), pkt(0.3, 3)];
        let flows = build_flows(&packets, cfg(100.0, 1e6, 100), &always()).unwrap();
        let h = flow_length_histogram(&flows);
        assert_eq!(h.get(1), 2);
        assert_eq!(h.get(2), 1);
    }

    #[test]
    fn csv_round_trip() {
        let packets = [pkt(0.0, 1), pkt(0.5, 2), pkt(7.25, 1)];
        let flows = build_flows(&packets, cfg(5.0, 1e6, 100), &always()).unwrap();
        let mut bytes = Vec::new();
        flows.write_csv(&mut bytes).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with(
            "flow_id,proto,src,sport,dst,dport,packets,bytes,first_seen,last_seen,syn_count\n"
        ));
        assert!(text.contains("0:1,6,10.0.0.1,1000,10.0.1.1,80,1,100,7.250000,7.250000,0"));
        let back = FlowSet::read_csv(&bytes[..]).unwrap();
        assert_eq!(back.records, flows.records);
    }

    #[test]
    fn empty_csv_has_header() {
        let mut bytes = Vec::new();
        FlowSet::default().write_csv(&mut bytes).unwrap();
        assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 1);
        assert!(FlowSet::read_csv(&bytes[..]).unwrap().is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(FlowTableConfig::new(0.0, 1.0, 1).is_err());
        assert!(FlowTableConfig::new(1.0, -1.0, 1).is_err());
        assert!(FlowTableConfig::new(1.0, 1.0, 0).is_err());
        assert!(FlowTableConfig::unbounded().validate().is_ok());
    }

    #[test]
    fn config_json_handles_infinity() {
        let json = serde_json::to_string(&FlowTableConfig::unbounded()).unwrap();
        let back: FlowTableConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, FlowTableConfig::unbounded());
    }
}
