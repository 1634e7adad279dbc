use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::Ipv4Addr;

use super::{FlowKey, PacketRecord, ParsedCapture, TcpFlags, TrafficError, PROTO_TCP, PROTO_UDP};

const PACKET_HEADER: [&str; 8] = [
    "ts_us", "src_ip", "dst_ip", "src_port", "dst_port", "proto", "len", "flags",
];
const LABEL_HEADER: [&str; 6] = ["src_ip", "dst_ip", "src_port", "dst_port", "proto", "label"];

fn field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, what: &str) -> Result<T, TrafficError>
where
    T::Err: std::fmt::Display,
{
    let line = record.position().map_or(0, |p| p.line());
    let raw = record.get(idx).ok_or_else(|| TrafficError::MalformedCsv {
        line,
        reason: format!("missing column `{what}`"),
    })?;
    raw.trim().parse().map_err(|e: T::Err| TrafficError::MalformedCsv {
        line,
        reason: format!("bad `{what}` value `{raw}`: {e}"),
    })
}

fn check_header(headers: &csv::StringRecord, expected: &[&str]) -> Result<(), TrafficError> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(TrafficError::MalformedCsv {
            line: 1,
            reason: format!("expected header `{}`, got `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn key_from(record: &csv::StringRecord, offset: usize) -> Result<FlowKey, TrafficError> {
    Ok(FlowKey {
        src_ip: field::<Ipv4Addr>(record, offset, "src_ip")?,
        dst_ip: field::<Ipv4Addr>(record, offset + 1, "dst_ip")?,
        src_port: field(record, offset + 2, "src_port")?,
        dst_port: field(record, offset + 3, "dst_port")?,
        protocol: field(record, offset + 4, "proto")?,
    })
}

/// Reads the packet CSV format
/// `ts_us,src_ip,dst_ip,src_port,dst_port,proto,len,flags`.
/// Rows that are neither TCP nor UDP are skipped and counted.
pub fn read_packet_csv<R: Read>(input: R) -> Result<ParsedCapture, TrafficError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    check_header(reader.headers()?, &PACKET_HEADER)?;
    let mut out = ParsedCapture::default();
    let mut first_ts = None;
    for record in reader.records() {
        let record = record?;
        let ts: u64 = field(&record, 0, "ts_us")?;
        let base = *first_ts.get_or_insert(ts);
        let key = key_from(&record, 1)?;
        let length: u32 = field(&record, 6, "len")?;
        let flags: TcpFlags = field(&record, 7, "flags")?;
        if key.protocol != PROTO_TCP && key.protocol != PROTO_UDP || length == 0 {
            out.skipped += 1;
            continue;
        }
        out.packets.push(PacketRecord {
            timestamp: ts.saturating_sub(base),
            key,
            length,
            tcp_flags: if key.protocol == PROTO_TCP { flags } else { TcpFlags::empty() },
        });
    }
    Ok(out)
}

pub fn write_packet_csv<W: Write>(out: W, packets: &[PacketRecord]) -> Result<(), TrafficError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PACKET_HEADER)?;
    for p in packets {
        w.write_record([
            p.timestamp.to_string(),
            p.key.src_ip.to_string(),
            p.key.dst_ip.to_string(),
            p.key.src_port.to_string(),
            p.key.dst_port.to_string(),
            p.key.protocol.to_string(),
            p.length.to_string(),
            p.tcp_flags.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the label file `src_ip,dst_ip,src_port,dst_port,proto,label`.
pub fn read_labels<R: Read>(input: R) -> Result<BTreeMap<FlowKey, String>, TrafficError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    check_header(reader.headers()?, &LABEL_HEADER)?;
    let mut labels = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let key = key_from(&record, 0)?;
        let label: String = field(&record, 5, "label")?;
        labels.insert(key, label);
    }
    Ok(labels)
}

pub fn write_labels<W: Write>(out: W, labels: &BTreeMap<FlowKey, String>) -> Result<(), TrafficError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LABEL_HEADER)?;
    for (k, label) in labels {
        w.write_record([
            k.src_ip.to_string(),
            k.dst_ip.to_string(),
            k.src_port.to_string(),
            k.dst_port.to_string(),
            k.protocol.to_string(),
            label.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
