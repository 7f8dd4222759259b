use std::io::Write;
use std::net::Ipv4Addr;

use flowinv::trace::{
    detect_format, generate_trace, read_trace, write_pcap, write_text, ByteLenModel,
    SyntheticTraceConfig, TextReader, TraceFormat, PROTO_ICMP, PROTO_TCP, PROTO_UDP,
};
use flowinv::{FiveTuple, PacketRecord, TcpFlags};
use proptest::prelude::*;

fn packet() -> impl Strategy<Value = PacketRecord> {
    (
        prop::sample::select(vec![PROTO_TCP, PROTO_UDP, PROTO_ICMP]),
        any::<u32>(),
        any::<u16>(),
        any::<u32>(),
        any::<u16>(),
        1u16..=u16::MAX,
        0u8..8,
    )
        .prop_map(|(proto, src, sport, dst, dport, bytes, flags)| {
            let ports = FiveTuple::has_ports(proto);
            PacketRecord {
                timestamp_us: 0,
                key: FiveTuple::new(
                    proto,
                    Ipv4Addr::from(src),
                    if ports { sport } else { 0 },
                    Ipv4Addr::from(dst),
                    if ports { dport } else { 0 },
                ),
                byte_len: bytes,
                tcp_flags: if proto == PROTO_TCP {
                    [TcpFlags::SYN, TcpFlags::FIN, TcpFlags::RST]
                        .into_iter()
                        .enumerate()
                        .filter(|(i, _)| flags & (1 << i) != 0)
                        .fold(TcpFlags::NONE, |acc, (_, f)| acc.union(f))
                } else {
                    TcpFlags::NONE
                },
            }
        })
}

/// Streams that start at time 0, as every reader rebases them.
fn stream() -> impl Strategy<Value = Vec<PacketRecord>> {
    prop::collection::vec((packet(), 0u64..10_000_000_000), 0..60).prop_map(|v| {
        let mut t = 0;
        v.into_iter()
            .enumerate()
            .map(|(i, (mut p, gap))| {
                if i > 0 {
                    t += gap;
                }
                p.timestamp_us = t;
                p
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn text_round_trip(packets in stream()) {
        let mut buf = Vec::new();
        write_text(&mut buf, &packets).unwrap();
        let back: Vec<_> = TextReader::new(buf.as_slice()).collect::<Result<_, _>>().unwrap();
        prop_assert_eq!(back, packets);
    }

    #[test]
    fn text_file_round_trip(packets in stream()) {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write_text(&mut file, &packets).unwrap();
        file.flush().unwrap();
        prop_assert_eq!(detect_format(file.path()).unwrap(), TraceFormat::Text);
        let trace = read_trace(file.path(), TraceFormat::Text).unwrap();
        prop_assert_eq!(trace.packets, packets);
    }

    #[test]
    fn pcap_round_trip(packets in stream()) {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write_pcap(&mut file, &packets).unwrap();
        prop_assert_eq!(detect_format(file.path()).unwrap(), TraceFormat::Pcap);
        let trace = read_trace(file.path(), TraceFormat::Pcap).unwrap();
        prop_assert_eq!(trace.skipped, 0);
        prop_assert_eq!(trace.packets, packets);
    }
}

fn ten_packets() -> Vec<PacketRecord> {
    (0..10u64)
        .map(|i| PacketRecord {
            timestamp_us: i * 1000,
            key: FiveTuple::new(
                if i % 2 == 0 { PROTO_TCP } else { PROTO_UDP },
                Ipv4Addr::new(10, 0, 0, i as u8),
                1000 + i as u16,
                Ipv4Addr::new(10, 0, 1, 1),
                80,
            ),
            byte_len: 100 + i as u16,
            tcp_flags: TcpFlags::NONE,
        })
        .collect()
}

/// Byte offset of the start of each record's frame.
fn frame_offsets(capture: &[u8]) -> Vec<usize> {
    let mut offsets = Vec::new();
    let mut at = 24;
    while at < capture.len() {
        let caplen = u32::from_le_bytes(capture[at + 8..at + 12].try_into().unwrap()) as usize;
        offsets.push(at + 16);
        at += 16 + caplen;
    }
    offsets
}

#[test]
fn one_corrupt_packet_in_ten_is_skipped() {
    let packets = ten_packets();
    let mut capture = Vec::new();
    write_pcap(&mut capture, &packets).unwrap();
    let offsets = frame_offsets(&capture);
    assert_eq!(offsets.len(), 10);
    // IP version nibble of the fourth packet set to 6
    capture[offsets[3] + 14] = 0x65;

    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(&capture).unwrap();
    let trace = read_trace(file.path(), TraceFormat::Pcap).unwrap();
    assert_eq!(trace.packets.len(), 9);
    assert_eq!(trace.skipped, 1);
    let expected: Vec<_> = packets
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != 3)
        .map(|(_, p)| *p)
        .collect();
    assert_eq!(trace.packets, expected);
}

#[test]
fn non_ipv4_ethertype_is_skipped() {
    let mut capture = Vec::new();
    write_pcap(&mut capture, &ten_packets()).unwrap();
    let offsets = frame_offsets(&capture);
    capture[offsets[0] + 12..offsets[0] + 14].copy_from_slice(&0x86ddu16.to_be_bytes());
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(&capture).unwrap();
    let trace = read_trace(file.path(), TraceFormat::Pcap).unwrap();
    assert_eq!((trace.packets.len(), trace.skipped), (9, 1));
    // the second packet becomes time zero
    assert_eq!(trace.packets[0].timestamp_us, 0);
}

#[test]
fn generated_trace_survives_both_formats() {
    let trace = generate_trace(&SyntheticTraceConfig {
        num_flows: 500,
        max_flow_len: 200,
        extra_syn_prob: 0.3,
        byte_len_model: ByteLenModel::Uniform { min: 40, max: 1500 },
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    for format in [TraceFormat::Text, TraceFormat::Pcap] {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        match format {
            TraceFormat::Text => write_text(&mut file, &trace.packets).unwrap(),
            TraceFormat::Pcap => write_pcap(&mut file, &trace.packets).unwrap(),
        }
        file.flush().unwrap();
        let back = read_trace(file.path(), detect_format(file.path()).unwrap()).unwrap();
        assert_eq!(back.packets, trace.packets);
    }
}
