//! Minimal libpcap reader/writer: Ethernet + IPv4 + TCP/UDP/ICMP.
//!
//! Anything else (other link-layer payloads, IPv6, non-first fragments,
//! other IP protocols, captures too short to hold the headers) is counted
//! as skipped rather than treated as fatal.

use std::io::{ErrorKind, Read, Write};
use std::net::Ipv4Addr;

use super::{FiveTuple, PacketRecord, TcpFlags, PROTO_ICMP, PROTO_TCP, PROTO_UDP};
use crate::error::{Error, Result};

const MAGIC_USEC: u32 = 0xa1b2_c3d4;
const MAGIC_NSEC: u32 = 0xa1b2_3c4d;
const LINKTYPE_ETHERNET: u32 = 1;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const ETHERNET_HEADER_LEN: usize = 14;
const ETHERTYPE_IPV4: u16 = 0x0800;
// Sanity bound on a single record; real snaplens are at most 256 KiB.
const MAX_CAPLEN: u32 = 1 << 24;

pub(super) fn is_pcap_magic(bytes: [u8; 4]) -> bool {
    let le = u32::from_le_bytes(bytes);
    let be = u32::from_be_bytes(bytes);
    [MAGIC_USEC, MAGIC_NSEC].contains(&le) || [MAGIC_USEC, MAGIC_NSEC].contains(&be)
}

#[derive(Debug, Clone, Copy)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self {
            Endian::Little => u32::from_le_bytes(a),
            Endian::Big => u32::from_be_bytes(a),
        }
    }
}

pub struct PcapReader<R> {
    reader: R,
    endian: Endian,
    nanos: bool,
    base_us: Option<u64>,
    skipped: u64,
    index: u64,
    buf: Vec<u8>,
    done: bool,
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut reader: R) -> Result<Self> {
        let mut header = [0u8; GLOBAL_HEADER_LEN];
        reader
            .read_exact(&mut header)
            .map_err(|e| Error::Pcap(format!("reading global header: {e}")))?;
        let magic = [header[0], header[1], header[2], header[3]];
        let (endian, nanos) = match (u32::from_le_bytes(magic), u32::from_be_bytes(magic)) {
            (MAGIC_USEC, _) => (Endian::Little, false),
            (MAGIC_NSEC, _) => (Endian::Little, true),
            (_, MAGIC_USEC) => (Endian::Big, false),
            (_, MAGIC_NSEC) => (Endian::Big, true),
            _ => return Err(Error::Pcap(format!("bad magic {magic:02x?}"))),
        };
        let linktype = endian.u32(&header[20..24]);
        if linktype != LINKTYPE_ETHERNET {
            return Err(Error::Pcap(format!(
                "unsupported link type {linktype} (only Ethernet)"
            )));
        }
        Ok(Self {
            reader,
            endian,
            nanos,
            base_us: None,
            skipped: 0,
            index: 0,
            buf: Vec::new(),
            done: false,
        })
    }

    /// Packets that were read but could not be decoded.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// Reads the next raw record; `Ok(None)` at a clean or truncated end.
    fn next_record(&mut self) -> Result<Option<u64>> {
        let mut header = [0u8; RECORD_HEADER_LEN];
        match read_fully(&mut self.reader, &mut header) {
            Ok(0) => return Ok(None),
            Ok(n) if n < RECORD_HEADER_LEN => {
                self.skipped += 1;
                return Ok(None);
            }
            Ok(_) => {}
            Err(e) => return Err(Error::Pcap(e.to_string())),
        }
        let ts_sec = u64::from(self.endian.u32(&header[0..4]));
        let ts_frac = u64::from(self.endian.u32(&header[4..8]));
        let caplen = self.endian.u32(&header[8..12]);
        if caplen > MAX_CAPLEN {
            return Err(Error::Pcap(format!(
                "record {} has implausible caplen {caplen}",
                self.index
            )));
        }
        self.buf.resize(caplen as usize, 0);
        match read_fully(&mut self.reader, &mut self.buf) {
            Ok(n) if n < caplen as usize => {
                self.skipped += 1;
                return Ok(None);
            }
            Ok(_) => {}
            Err(e) => return Err(Error::Pcap(e.to_string())),
        }
        let frac_us = if self.nanos {
            (ts_frac + 500) / 1000
        } else {
            ts_frac
        };
        Ok(Some(ts_sec * 1_000_000 + frac_us))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<PacketRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let ts = match self.next_record() {
                Ok(Some(ts)) => ts,
                Ok(None) => {
                    self.done = true;
                    return None;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            };
            let index = self.index;
            self.index += 1;
            let Some((key, byte_len, tcp_flags)) = decode_ethernet(&self.buf) else {
                self.skipped += 1;
                continue;
            };
            let base = *self.base_us.get_or_insert(ts);
            let Some(timestamp_us) = ts.checked_sub(base) else {
                self.done = true;
                return Some(Err(Error::Pcap(format!(
                    "record {index} is timestamped before the first packet"
                ))));
            };
            return Some(Ok(PacketRecord {
                timestamp_us,
                key,
                byte_len,
                tcp_flags,
            }));
        }
        None
    }
}

fn read_fully<R: Read>(reader: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn decode_ethernet(frame: &[u8]) -> Option<(FiveTuple, u16, TcpFlags)> {
    if frame.len() < ETHERNET_HEADER_LEN {
        return None;
    }
    let ethertype = u16::from_be_bytes([frame[12], frame[13]]);
    if ethertype != ETHERTYPE_IPV4 {
        return None;
    }
    decode_ipv4(&frame[ETHERNET_HEADER_LEN..])
}

fn decode_ipv4(ip: &[u8]) -> Option<(FiveTuple, u16, TcpFlags)> {
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return None;
    }
    let ihl = usize::from(ip[0] & 0x0f) * 4;
    if ihl < 20 || ip.len() < ihl {
        return None;
    }
    let total_len = u16::from_be_bytes([ip[2], ip[3]]);
    if total_len == 0 {
        return None;
    }
    let frag_offset = u16::from_be_bytes([ip[6], ip[7]]) & 0x1fff;
    if frag_offset != 0 {
        return None;
    }
    let protocol = ip[9];
    let src = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let l4 = &ip[ihl..];
    let port = |off: usize| u16::from_be_bytes([l4[off], l4[off + 1]]);
    let (sport, dport, flags) = match protocol {
        PROTO_TCP if l4.len() >= 14 => (port(0), port(2), TcpFlags::from_tcp_header(l4[13])),
        PROTO_UDP if l4.len() >= 4 => (port(0), port(2), TcpFlags::NONE),
        PROTO_ICMP => (0, 0, TcpFlags::NONE),
        _ => return None,
    };
    Some((
        FiveTuple::new(protocol, src, sport, dst, dport),
        total_len,
        flags,
    ))
}

/// Writes a little-endian microsecond pcap holding header-only captures of
/// `packets`; the IPv4 total length carries `byte_len`.
pub fn write_pcap<W: Write>(mut writer: W, packets: &[PacketRecord]) -> std::io::Result<()> {
    let mut header = Vec::with_capacity(GLOBAL_HEADER_LEN);
    header.extend_from_slice(&MAGIC_USEC.to_le_bytes());
    header.extend_from_slice(&2u16.to_le_bytes());
    header.extend_from_slice(&4u16.to_le_bytes());
    header.extend_from_slice(&0i32.to_le_bytes());
    header.extend_from_slice(&0u32.to_le_bytes());
    header.extend_from_slice(&65535u32.to_le_bytes());
    header.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
    writer.write_all(&header)?;

    for p in packets {
        let frame = encode_frame(p);
        let ts_sec = (p.timestamp_us / 1_000_000) as u32;
        let ts_usec = (p.timestamp_us % 1_000_000) as u32;
        writer.write_all(&ts_sec.to_le_bytes())?;
        writer.write_all(&ts_usec.to_le_bytes())?;
        writer.write_all(&(frame.len() as u32).to_le_bytes())?;
        let wire_len = ETHERNET_HEADER_LEN as u32 + u32::from(p.byte_len);
        writer.write_all(&wire_len.to_le_bytes())?;
        writer.write_all(&frame)?;
    }
    writer.flush()
}

fn encode_frame(p: &PacketRecord) -> Vec<u8> {
    let mut frame = Vec::with_capacity(64);
    frame.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x02]);
    frame.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01]);
    frame.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());

    let mut ip = [0u8; 20];
    ip[0] = 0x45;
    ip[2..4].copy_from_slice(&p.byte_len.to_be_bytes());
    ip[8] = 64;
    ip[9] = p.key.protocol;
    ip[12..16].copy_from_slice(&p.key.src_addr.octets());
    ip[16..20].copy_from_slice(&p.key.dst_addr.octets());
    frame.extend_from_slice(&ip);

    match p.key.protocol {
        PROTO_TCP => {
            let mut tcp = [0u8; 20];
            tcp[0..2].copy_from_slice(&p.key.src_port.to_be_bytes());
            tcp[2..4].copy_from_slice(&p.key.dst_port.to_be_bytes());
            tcp[12] = 5 << 4;
            tcp[13] = p.tcp_flags.to_tcp_header();
            frame.extend_from_slice(&tcp);
        }
        PROTO_UDP => {
            let mut udp = [0u8; 8];
            udp[0..2].copy_from_slice(&p.key.src_port.to_be_bytes());
            udp[2..4].copy_from_slice(&p.key.dst_port.to_be_bytes());
            frame.extend_from_slice(&udp);
        }
        _ => frame.extend_from_slice(&[8, 0, 0, 0, 0, 0, 0, 0]),
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packet(i: u8, proto: u8) -> PacketRecord {
        let (sport, dport) = if FiveTuple::has_ports(proto) {
            (1000 + u16::from(i), 80)
        } else {
            (0, 0)
        };
        PacketRecord {
            timestamp_us: u64::from(i) * 1500,
            key: FiveTuple::new(
                proto,
                Ipv4Addr::new(10, 0, 0, i),
                sport,
                Ipv4Addr::new(10, 1, 0, 1),
                dport,
            ),
            byte_len: 40 + u16::from(i),
            tcp_flags: if proto == PROTO_TCP && i == 0 {
                TcpFlags::SYN
            } else {
                TcpFlags::NONE
            },
        }
    }

    fn read_all(bytes: &[u8]) -> (Vec<PacketRecord>, u64) {
        let mut r = PcapReader::new(bytes).unwrap();
        let packets = r.by_ref().collect::<Result<Vec<_>>>().unwrap();
        (packets, r.skipped())
    }

    #[test]
    fn round_trips_tcp_udp_icmp() {
        let packets: Vec<_> = (0..6)
            .map(|i| packet(i, [PROTO_TCP, PROTO_UDP, PROTO_ICMP][usize::from(i) % 3]))
            .collect();
        let mut bytes = Vec::new();
        write_pcap(&mut bytes, &packets).unwrap();
        let (read, skipped) = read_all(&bytes);
        assert_eq!(read, packets);
        assert_eq!(skipped, 0);
    }

    #[test]
    fn big_endian_nanosecond_header() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC_NSEC.to_be_bytes());
        bytes.extend_from_slice(&2u16.to_be_bytes());
        bytes.extend_from_slice(&4u16.to_be_bytes());
        bytes.extend_from_slice(&[0; 12]);
        bytes.extend_from_slice(&LINKTYPE_ETHERNET.to_be_bytes());
        let frame = encode_frame(&packet(0, PROTO_UDP));
        for (sec, nsec) in [(5u32, 1_000u32), (5, 2_501_000)] {
            bytes.extend_from_slice(&sec.to_be_bytes());
            bytes.extend_from_slice(&nsec.to_be_bytes());
            bytes.extend_from_slice(&(frame.len() as u32).to_be_bytes());
            bytes.extend_from_slice(&(frame.len() as u32).to_be_bytes());
            bytes.extend_from_slice(&frame);
        }
        let (read, _) = read_all(&bytes);
        assert_eq!(read.len(), 2);
        assert_eq!(read[0].timestamp_us, 0);
        assert_eq!(read[1].timestamp_us, 2_500);
    }

    #[test]
    fn caplen_too_short_for_tcp_header_is_skipped() {
        let mut bytes = Vec::new();
        let p = packet(0, PROTO_TCP);
        write_pcap(&mut bytes, &[p]).unwrap();
        // Shrink caplen so the TCP flags byte is cut off.
        let frame_len = encode_frame(&p).len() as u32;
        let short = frame_len - 8;
        bytes[GLOBAL_HEADER_LEN + 8..GLOBAL_HEADER_LEN + 12].copy_from_slice(&short.to_le_bytes());
        bytes.truncate(bytes.len() - 8);
        let (read, skipped) = read_all(&bytes);
        assert!(read.is_empty());
        assert_eq!(skipped, 1);
    }

    #[test]
    fn empty_capture() {
        let mut bytes = Vec::new();
        write_pcap(&mut bytes, &[]).unwrap();
        assert_eq!(read_all(&bytes), (vec![], 0));
    }

    #[test]
    fn rejects_bad_magic_and_linktype() {
        assert!(PcapReader::new(&[0u8; 24][..]).is_err());
        let mut bytes = Vec::new();
        write_pcap(&mut bytes, &[]).unwrap();
        bytes[20] = 101;
        assert!(PcapReader::new(&bytes[..]).is_err());
    }

    #[test]
    fn truncated_final_record_is_skipped() {
        let mut bytes = Vec::new();
        write_pcap(&mut bytes, &[packet(0, PROTO_UDP), packet(1, PROTO_UDP)]).unwrap();
        bytes.truncate(bytes.len() - 3);
        let (read, skipped) = read_all(&bytes);
        assert_eq!(read.len(), 1);
        assert_eq!(skipped, 1);
    }
}
