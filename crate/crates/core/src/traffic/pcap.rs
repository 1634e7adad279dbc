use std::net::Ipv4Addr;

use super::{FlowKey, PacketRecord, ParsedCapture, TcpFlags, TrafficError, PROTO_TCP, PROTO_UDP};

const MAGIC_USEC: u32 = 0xa1b2_c3d4;
const MAGIC_NSEC: u32 = 0xa1b2_3c4d;
const LINKTYPE_ETHERNET: u32 = 1;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const ETHERTYPE_IPV4: u16 = 0x0800;

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u32(self, b: &[u8]) -> u32 {
        let arr = [b[0], b[1], b[2], b[3]];
        match self {
            Endian::Little => u32::from_le_bytes(arr),
            Endian::Big => u32::from_be_bytes(arr),
        }
    }
}

fn malformed(offset: usize, reason: impl Into<String>) -> TrafficError {
    TrafficError::MalformedCapture {
        offset,
        reason: reason.into(),
    }
}

/// Parses a classic pcap capture with Ethernet framing.
pub fn parse_pcap(raw: &[u8]) -> Result<ParsedCapture, TrafficError> {
    if raw.len() < GLOBAL_HEADER_LEN {
        return Err(malformed(0, "truncated global header"));
    }
    let magic_le = u32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]);
    let magic_be = u32::from_be_bytes([raw[0], raw[1], raw[2], raw[3]]);
    let (endian, nanos) = match (magic_le, magic_be) {
        (MAGIC_USEC, _) => (Endian::Little, false),
        (MAGIC_NSEC, _) => (Endian::Little, true),
        (_, MAGIC_USEC) => (Endian::Big, false),
        (_, MAGIC_NSEC) => (Endian::Big, true),
        _ => return Err(malformed(0, format!("bad magic {magic_le:#010x}"))),
    };
    let link_type = endian.u32(&raw[20..24]);
    if link_type != LINKTYPE_ETHERNET {
        return Err(TrafficError::UnsupportedLinkType(link_type));
    }

    let mut out = ParsedCapture::default();
    let mut first_ts: Option<u64> = None;
    let mut offset = GLOBAL_HEADER_LEN;
    while offset < raw.len() {
        if raw.len() - offset < RECORD_HEADER_LEN {
            return Err(malformed(offset, "truncated record header"));
        }
        let hdr = &raw[offset..offset + RECORD_HEADER_LEN];
        let secs = endian.u32(&hdr[0..4]) as u64;
        let frac = endian.u32(&hdr[4..8]) as u64;
        let incl_len = endian.u32(&hdr[8..12]) as usize;
        let data_start = offset + RECORD_HEADER_LEN;
        if raw.len() - data_start < incl_len {
            return Err(malformed(offset, "record data extends past end of capture"));
        }
        let micros = secs * 1_000_000 + if nanos { frac / 1000 } else { frac };
        let base = *first_ts.get_or_insert(micros);
        let frame = &raw[data_start..data_start + incl_len];
        match decode_frame(frame) {
            Some((key, length, tcp_flags)) => out.packets.push(PacketRecord {
                timestamp: micros.saturating_sub(base),
                key,
                length,
                tcp_flags,
            }),
            None => out.skipped += 1,
        }
        offset = data_start + incl_len;
    }
    Ok(out)
}

/// Returns `None` for anything that is not an IPv4 TCP/UDP first fragment.
fn decode_frame(frame: &[u8]) -> Option<(FlowKey, u32, TcpFlags)> {
    if frame.len() < 14 || u16::from_be_bytes([frame[12], frame[13]]) != ETHERTYPE_IPV4 {
        return None;
    }
    let ip = &frame[14..];
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return None;
    }
    let ihl = ((ip[0] & 0x0f) as usize) * 4;
    let total_len = u16::from_be_bytes([ip[2], ip[3]]) as u32;
    let frag_offset = u16::from_be_bytes([ip[6], ip[7]]) & 0x1fff;
    let protocol = ip[9];
    if ihl < 20 || total_len == 0 || frag_offset != 0 {
        return None;
    }
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let l4 = ip.get(ihl..)?;
    let (src_port, dst_port, tcp_flags) = match protocol {
        PROTO_TCP if l4.len() >= 14 => (
            u16::from_be_bytes([l4[0], l4[1]]),
            u16::from_be_bytes([l4[2], l4[3]]),
            TcpFlags::from_bits_truncate(l4[13]),
        ),
        PROTO_UDP if l4.len() >= 8 => (
            u16::from_be_bytes([l4[0], l4[1]]),
            u16::from_be_bytes([l4[2], l4[3]]),
            TcpFlags::empty(),
        ),
        _ => return None,
    };
    Some((
        FlowKey {
            src_ip,
            dst_ip,
            src_port,
            dst_port,
            protocol,
        },
        total_len,
        tcp_flags,
    ))
}

/// Writes packets as a little-endian microsecond pcap with synthetic
/// Ethernet/IPv4/TCP-or-UDP headers (no payload bytes beyond the headers).
pub fn write_pcap(packets: &[PacketRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(GLOBAL_HEADER_LEN + packets.len() * 70);
    out.extend_from_slice(&MAGIC_USEC.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&65535u32.to_le_bytes());
    out.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());

    for p in packets {
        let frame = encode_frame(p);
        out.extend_from_slice(&((p.timestamp / 1_000_000) as u32).to_le_bytes());
        out.extend_from_slice(&((p.timestamp % 1_000_000) as u32).to_le_bytes());
        out.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        out.extend_from_slice(&(14 + p.length).to_le_bytes());
        out.extend_from_slice(&frame);
    }
    out
}

fn encode_frame(p: &PacketRecord) -> Vec<u8> {
    let mut f = vec![0u8; 12];
    f.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
    let mut ip = [0u8; 20];
    ip[0] = 0x45;
    ip[2..4].copy_from_slice(&(p.length.min(u16::MAX as u32) as u16).to_be_bytes());
    ip[8] = 64;
    ip[9] = p.key.protocol;
    ip[12..16].copy_from_slice(&p.key.src_ip.octets());
    ip[16..20].copy_from_slice(&p.key.dst_ip.octets());
    f.extend_from_slice(&ip);
    let mut l4 = if p.key.protocol == PROTO_TCP { vec![0u8; 20] } else { vec![0u8; 8] };
    l4[0..2].copy_from_slice(&p.key.src_port.to_be_bytes());
    l4[2..4].copy_from_slice(&p.key.dst_port.to_be_bytes());
    if p.key.protocol == PROTO_TCP {
        l4[12] = 0x50;
        l4[13] = p.tcp_flags.bits();
    }
    f.extend_from_slice(&l4);
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn global_header(magic: [u8; 4], link: [u8; 4]) -> Vec<u8> {
        let mut h = magic.to_vec();
        h.extend_from_slice(&[2, 0, 4, 0]);
        h.extend_from_slice(&[0; 8]);
        h.extend_from_slice(&[0xff, 0xff, 0, 0]);
        h.extend_from_slice(&link);
        h
    }

    fn record(ts_sec: u32, ts_usec: u32, frame: &[u8]) -> Vec<u8> {
        let mut r = ts_sec.to_le_bytes().to_vec();
        r.extend_from_slice(&ts_usec.to_le_bytes());
        r.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        r.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        r.extend_from_slice(frame);
        r
    }

    /// 60-byte Ethernet frame carrying IPv4/TCP with only SYN set, written
    /// out byte by byte.
    fn syn_frame() -> Vec<u8> {
        let mut f = Vec::new();
        f.extend_from_slice(&[0x00, 0x11, 0x22, 0x33, 0x44, 0x55]); // dst mac
        f.extend_from_slice(&[0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb]); // src mac
        f.extend_from_slice(&[0x08, 0x00]); // ethertype
        f.extend_from_slice(&[0x45, 0x00, 0x00, 0x28]); // v4, ihl 5, total len 40
        f.extend_from_slice(&[0x12, 0x34, 0x40, 0x00]); // id, DF
        f.extend_from_slice(&[0x40, 0x06, 0x00, 0x00]); // ttl 64, tcp, csum
        f.extend_from_slice(&[192, 168, 1, 10]);
        f.extend_from_slice(&[10, 0, 0, 1]);
        f.extend_from_slice(&[0xc3, 0x50, 0x01, 0xbb]); // 50000 -> 443
        f.extend_from_slice(&[0, 0, 0, 1, 0, 0, 0, 0]); // seq, ack
        f.extend_from_slice(&[0x50, 0x02, 0xff, 0xff]); // data offset 5, SYN, window
        f.extend_from_slice(&[0, 0, 0, 0]); // csum, urg
        f.extend_from_slice(&[0; 6]); // ethernet padding
        assert_eq!(f.len(), 60);
        f
    }

    #[test]
    fn empty_capture() {
        let raw = global_header([0xd4, 0xc3, 0xb2, 0xa1], [1, 0, 0, 0]);
        let parsed = parse_pcap(&raw).unwrap();
        assert!(parsed.packets.is_empty());
        assert_eq!(parsed.skipped, 0);
    }

    #[test]
    fn single_syn() {
        let mut raw = global_header([0xd4, 0xc3, 0xb2, 0xa1], [1, 0, 0, 0]);
        raw.extend(record(100, 5, &syn_frame()));
        let parsed = parse_pcap(&raw).unwrap();
        assert_eq!(parsed.packets.len(), 1);
        let p = &parsed.packets[0];
        assert_eq!(p.timestamp, 0);
        assert_eq!(p.length, 40);
        assert_eq!(p.tcp_flags, TcpFlags::SYN);
        assert_eq!(p.key.src_ip, Ipv4Addr::new(192, 168, 1, 10));
        assert_eq!(p.key.dst_ip, Ipv4Addr::new(10, 0, 0, 1));
        assert_eq!((p.key.src_port, p.key.dst_port, p.key.protocol), (50000, 443, 6));
    }

    #[test]
    fn big_endian_header() {
        let mut raw = vec![0xa1, 0xb2, 0xc3, 0xd4, 0, 2, 0, 4];
        raw.extend_from_slice(&[0; 8]);
        raw.extend_from_slice(&[0, 0, 0xff, 0xff, 0, 0, 0, 1]);
        let frame = syn_frame();
        raw.extend_from_slice(&7u32.to_be_bytes());
        raw.extend_from_slice(&9u32.to_be_bytes());
        raw.extend_from_slice(&(frame.len() as u32).to_be_bytes());
        raw.extend_from_slice(&(frame.len() as u32).to_be_bytes());
        raw.extend_from_slice(&frame);
        let parsed = parse_pcap(&raw).unwrap();
        assert_eq!(parsed.packets.len(), 1);
    }

    #[test]
    fn arp_is_skipped() {
        let mut arp = vec![0xff; 12];
        arp.extend_from_slice(&[0x08, 0x06]);
        arp.extend_from_slice(&[0; 28]);
        let udp = PacketRecord {
            timestamp: 0,
            key: FlowKey {
                src_ip: Ipv4Addr::new(1, 1, 1, 1),
                dst_ip: Ipv4Addr::new(2, 2, 2, 2),
                src_port: 53,
                dst_port: 5353,
                protocol: PROTO_UDP,
            },
            length: 28,
            tcp_flags: TcpFlags::empty(),
        };
        let mut raw = global_header([0xd4, 0xc3, 0xb2, 0xa1], [1, 0, 0, 0]);
        raw.extend(record(0, 0, &arp));
        raw.extend(record(0, 10, &encode_frame(&udp)));
        let parsed = parse_pcap(&raw).unwrap();
        assert_eq!(parsed.packets.len(), 1);
        assert_eq!(parsed.skipped, 1);
        assert_eq!(parsed.packets[0].timestamp, 10);
    }

    #[test]
    fn truncated_inputs() {
        assert!(matches!(
            parse_pcap(&[0xd4, 0xc3, 0xb2]),
            Err(TrafficError::MalformedCapture { .. })
        ));
        let mut raw = global_header([0xd4, 0xc3, 0xb2, 0xa1], [1, 0, 0, 0]);
        let mut rec = record(0, 0, &syn_frame());
        rec.truncate(30);
        raw.extend(rec);
        assert!(matches!(parse_pcap(&raw), Err(TrafficError::MalformedCapture { .. })));
    }

    #[test]
    fn non_ethernet_rejected() {
        let raw = global_header([0xd4, 0xc3, 0xb2, 0xa1], [101, 0, 0, 0]);
        assert!(matches!(parse_pcap(&raw), Err(TrafficError::UnsupportedLinkType(101))));
    }

    #[test]
    fn writer_output_parses_back() {
        let packets: Vec<PacketRecord> = (0..5)
            .map(|i| PacketRecord {
                timestamp: i * 1500,
                key: FlowKey {
                    src_ip: Ipv4Addr::new(10, 0, 0, i as u8),
                    dst_ip: Ipv4Addr::new(10, 0, 1, 1),
                    src_port: 1000 + i as u16,
                    dst_port: 80,
                    protocol: if i % 2 == 0 { PROTO_TCP } else { PROTO_UDP },
                },
                length: 40 + i as u32,
                tcp_flags: if i % 2 == 0 { TcpFlags::ACK | TcpFlags::PSH } else { TcpFlags::empty() },
            })
            .collect();
        let parsed = parse_pcap(&write_pcap(&packets)).unwrap();
        assert_eq!(parsed.packets, packets);
    }
}
