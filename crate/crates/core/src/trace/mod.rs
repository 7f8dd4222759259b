//! Packet traces: the record types, the text and pcap readers, and the
//! synthetic heavy-tailed trace generator.

mod pcap;
mod synth;
mod text;

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read};
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pcap::{write_pcap, PcapReader};
pub use synth::{
    generate_trace, ByteLenModel, GeneratedFlow, SyntheticTrace, SyntheticTraceConfig,
};
pub use text::{write_text, TextReader};

pub const PROTO_ICMP: u8 = 1;
pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;

pub const MICROS_PER_SEC: f64 = 1_000_000.0;

/// Converts a duration in seconds to whole microseconds (rounded, saturating).
pub fn secs_to_micros(secs: f64) -> u64 {
    if secs.is_nan() || secs <= 0.0 {
        0
    } else if secs * MICROS_PER_SEC >= u64::MAX as f64 {
        u64::MAX
    } else {
        (secs * MICROS_PER_SEC).round() as u64
    }
}

pub fn micros_to_secs(us: u64) -> f64 {
    us as f64 / MICROS_PER_SEC
}

/// The flow key: protocol plus both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FiveTuple {
    pub protocol: u8,
    pub src_addr: Ipv4Addr,
    pub src_port: u16,
    pub dst_addr: Ipv4Addr,
    pub dst_port: u16,
}

impl FiveTuple {
    pub fn new(
        protocol: u8,
        src_addr: Ipv4Addr,
        src_port: u16,
        dst_addr: Ipv4Addr,
        dst_port: u16,
    ) -> Self {
        Self {
            protocol,
            src_addr,
            src_port,
            dst_addr,
            dst_port,
        }
    }

    pub fn is_tcp(&self) -> bool {
        self.protocol == PROTO_TCP
    }

    /// Whether the protocol carries ports; ports must be zero otherwise.
    pub fn has_ports(protocol: u8) -> bool {
        matches!(protocol, PROTO_TCP | PROTO_UDP)
    }
}

impl fmt::Display for FiveTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}:{} -> {}:{}",
            self.protocol, self.src_addr, self.src_port, self.dst_addr, self.dst_port
        )
    }
}

/// The subset of TCP flags the toolkit cares about.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const NONE: TcpFlags = TcpFlags(0);
    pub const SYN: TcpFlags = TcpFlags(0b001);
    pub const FIN: TcpFlags = TcpFlags(0b010);
    pub const RST: TcpFlags = TcpFlags(0b100);

    pub fn contains(self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: TcpFlags) -> TcpFlags {
        TcpFlags(self.0 | other.0)
    }

    /// Maps the flag bits of a raw TCP header flags byte.
    pub fn from_tcp_header(byte: u8) -> TcpFlags {
        let mut flags = TcpFlags::NONE;
        if byte & 0x02 != 0 {
            flags = flags.union(TcpFlags::SYN);
        }
        if byte & 0x01 != 0 {
            flags = flags.union(TcpFlags::FIN);
        }
        if byte & 0x04 != 0 {
            flags = flags.union(TcpFlags::RST);
        }
        flags
    }

    pub fn to_tcp_header(self) -> u8 {
        let mut byte = 0;
        if self.contains(TcpFlags::SYN) {
            byte |= 0x02;
        }
        if self.contains(TcpFlags::FIN) {
            byte |= 0x01;
        }
        if self.contains(TcpFlags::RST) {
            byte |= 0x04;
        }
        byte
    }
}

impl fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        for (flag, c) in [
            (TcpFlags::SYN, 'S'),
            (TcpFlags::FIN, 'F'),
            (TcpFlags::RST, 'R'),
        ] {
            if self.contains(flag) {
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for TcpFlags {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "-" {
            return Ok(TcpFlags::NONE);
        }
        if s.is_empty() {
            return Err("empty flags field".into());
        }
        let mut flags = TcpFlags::NONE;
        for c in s.chars() {
            let flag = match c {
                'S' => TcpFlags::SYN,
                'F' => TcpFlags::FIN,
                'R' => TcpFlags::RST,
                other => return Err(format!("unknown flag {other:?}")),
            };
            if flags.contains(flag) {
                return Err(format!("flag {c:?} repeated"));
            }
            flags = flags.union(flag);
        }
        Ok(flags)
    }
}

/// One captured packet. Timestamps are microseconds since the start of the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PacketRecord {
    pub timestamp_us: u64,
    pub key: FiveTuple,
    pub byte_len: u16,
    pub tcp_flags: TcpFlags,
}

impl PacketRecord {
    pub fn timestamp_secs(&self) -> f64 {
        micros_to_secs(self.timestamp_us)
    }

    pub fn is_syn(&self) -> bool {
        self.key.is_tcp() && self.tcp_flags.contains(TcpFlags::SYN)
    }

    /// Checks the per-record invariants.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.byte_len == 0 {
            return Err("byte length must be at least 1".into());
        }
        if !self.key.is_tcp() && !self.tcp_flags.is_empty() {
            return Err(format!(
                "TCP flags on a non-TCP packet (protocol {})",
                self.key.protocol
            ));
        }
        if !FiveTuple::has_ports(self.key.protocol)
            && (self.key.src_port != 0 || self.key.dst_port != 0)
        {
            return Err(format!(
                "non-zero ports on protocol {} which has none",
                self.key.protocol
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Pcap,
    Text,
}

impl FromStr for TraceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pcap" => Ok(TraceFormat::Pcap),
            "text" | "txt" => Ok(TraceFormat::Text),
            other => Err(format!("unknown trace format {other:?}")),
        }
    }
}

/// A fully read trace plus the number of packets that could not be decoded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub packets: Vec<PacketRecord>,
    pub skipped: u64,
}

impl Trace {
    pub fn total_bytes(&self) -> u64 {
        self.packets.iter().map(|p| p.byte_len as u64).sum()
    }
}

/// Sniffs the format from the pcap magic number.
pub fn detect_format(path: impl AsRef<Path>) -> Result<TraceFormat> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match file.read(&mut magic[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) => return Err(Error::io(path, e)),
        }
    }
    if filled == 4 && pcap::is_pcap_magic(magic) {
        Ok(TraceFormat::Pcap)
    } else {
        Ok(TraceFormat::Text)
    }
}

/// Reads a whole trace file. Timestamps are rebased so the first packet is at 0.
pub fn read_trace(path: impl AsRef<Path>, format: TraceFormat) -> Result<Trace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        TraceFormat::Text => {
            let packets = TextReader::new(reader).collect::<Result<Vec<_>>>()?;
            Ok(Trace {
                packets,
                skipped: 0,
            })
        }
        TraceFormat::Pcap => {
            let mut pcap = PcapReader::new(reader)?;
            let packets = pcap.by_ref().collect::<Result<Vec<_>>>()?;
            Ok(Trace {
                packets,
                skipped: pcap.skipped(),
            })
        }
    }
}
