//! Whitespace-separated text traces, one packet per line:
//!
//! ```text
//! timestamp proto src sport dst dport bytes flags
//! 0.000000 6 10.0.0.1 80 10.0.0.2 1234 1500 S
//! ```
//!
//! Flags are a subset of `SFR`, or `-` for none. Blank lines and lines
//! starting with `#` are ignored.

use std::io::{BufRead, Write};
use std::net::Ipv4Addr;

use super::{FiveTuple, PacketRecord, TcpFlags};
use crate::error::{Error, Result};

pub struct TextReader<R> {
    reader: R,
    line_no: usize,
    base_us: Option<u64>,
    buf: String,
}

impl<R: BufRead> TextReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            line_no: 0,
            base_us: None,
            buf: String::new(),
        }
    }

    fn parse_line(&mut self, line: &str) -> Result<PacketRecord> {
        let line_no = self.line_no;
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(err(format!("expected 8 fields, found {}", fields.len())));
        }
        let ts = parse_timestamp(fields[0]).map_err(&err)?;
        let protocol: u8 = fields[1]
            .parse()
            .map_err(|_| err(format!("bad protocol {:?}", fields[1])))?;
        let src_addr: Ipv4Addr = fields[2]
            .parse()
            .map_err(|_| err(format!("bad source address {:?}", fields[2])))?;
        let src_port: u16 = fields[3]
            .parse()
            .map_err(|_| err(format!("bad source port {:?}", fields[3])))?;
        let dst_addr: Ipv4Addr = fields[4]
            .parse()
            .map_err(|_| err(format!("bad destination address {:?}", fields[4])))?;
        let dst_port: u16 = fields[5]
            .parse()
            .map_err(|_| err(format!("bad destination port {:?}", fields[5])))?;
        let byte_len: u16 = fields[6]
            .parse()
            .map_err(|_| err(format!("bad byte length {:?}", fields[6])))?;
        let tcp_flags: TcpFlags = fields[7].parse().map_err(&err)?;

        let base = *self.base_us.get_or_insert(ts);
        let timestamp_us = ts
            .checked_sub(base)
            .ok_or_else(|| err("timestamp precedes the first packet".into()))?;
        let packet = PacketRecord {
            timestamp_us,
            key: FiveTuple::new(protocol, src_addr, src_port, dst_addr, dst_port),
            byte_len,
            tcp_flags,
        };
        packet.validate().map_err(err)?;
        Ok(packet)
    }
}

impl<R: BufRead> Iterator for TextReader<R> {
    type Item = Result<PacketRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line_no += 1;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    return Some(Err(Error::Parse {
                        line: self.line_no,
                        message: e.to_string(),
                    }))
                }
            }
            let line = std::mem::take(&mut self.buf);
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                self.buf = line;
                continue;
            }
            let parsed = self.parse_line(trimmed);
            self.buf = line;
            return Some(parsed);
        }
    }
}

/// Parses `secs[.fraction]` into microseconds without going through f64.
fn parse_timestamp(s: &str) -> std::result::Result<u64, String> {
    let bad = || format!("bad timestamp {s:?}");
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    if !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let secs: u64 = int_part.parse().map_err(|_| bad())?;
    let mut micros: u64 = 0;
    for (i, b) in frac_part.bytes().take(6).enumerate() {
        micros += u64::from(b - b'0') * 10u64.pow(5 - i as u32);
    }
    if let Some(b) = frac_part.as_bytes().get(6).copied() {
        if b >= b'5' {
            micros += 1;
        }
    }
    secs.checked_mul(1_000_000)
        .and_then(|us| us.checked_add(micros))
        .ok_or_else(bad)
}

fn format_timestamp(us: u64) -> String {
    format!("{}.{:06}", us / 1_000_000, us % 1_000_000)
}

pub fn write_text<W: Write>(mut writer: W, packets: &[PacketRecord]) -> std::io::Result<()> {
    for p in packets {
        writeln!(
            writer,
            "{} {} {} {} {} {} {} {}",
            format_timestamp(p.timestamp_us),
            p.key.protocol,
            p.key.src_addr,
            p.key.src_port,
            p.key.dst_addr,
            p.key.dst_port,
            p.byte_len,
            p.tcp_flags
        )?;
    }
    writer.flush()
}
