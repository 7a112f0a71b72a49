//! Minimal DNS codec: single-question queries and A-record answers.
//!
//! Names are always written uncompressed; a compression pointer in the
//! question section is rejected as unsupported.

use std::net::Ipv4Addr;

use thiserror::Error;

pub const TYPE_A: u16 = 1;
pub const TYPE_AAAA: u16 = 28;
pub const CLASS_IN: u16 = 1;

pub const RCODE_NO_ERROR: u8 = 0;
pub const RCODE_FORMAT_ERROR: u8 = 1;
pub const RCODE_NAME_ERROR: u8 = 3;
pub const RCODE_NOT_IMPLEMENTED: u8 = 4;

const HEADER_LEN: usize = 12;
const FLAG_QR: u16 = 0x8000;
const FLAG_AA: u16 = 0x0400;
const FLAG_RD: u16 = 0x0100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DnsError {
    #[error("message shorter than the 12-byte header")]
    TooShort,
    #[error("query carries {0} questions; only single-question queries are supported")]
    MultipleQuestions(u16),
    #[error("label runs past the end of the message")]
    TruncatedLabel,
    #[error("unsupported encoding: {0}")]
    Unsupported(&'static str),
    #[error("label longer than 63 bytes or name longer than 255 bytes")]
    NameTooLong,
    #[error("record truncated")]
    TruncatedRecord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsQuery {
    pub id: u16,
    pub recursion_desired: bool,
    pub name: String,
    pub qtype: u16,
    pub qclass: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ARecord {
    pub name: String,
    pub ttl: u32,
    pub addr: Ipv4Addr,
}

/// A response: the echoed question plus zero or more A records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsAnswer {
    pub id: u16,
    pub rcode: u8,
    pub authoritative: bool,
    pub question: DnsQuery,
    pub records: Vec<ARecord>,
}

impl DnsAnswer {
    pub fn to_query(query: &DnsQuery, rcode: u8, records: Vec<ARecord>) -> Self {
        Self {
            id: query.id,
            rcode,
            authoritative: true,
            question: query.clone(),
            records,
        }
    }
}

fn read_u16(raw: &[u8], at: usize) -> Option<u16> {
    Some(u16::from_be_bytes([*raw.get(at)?, *raw.get(at + 1)?]))
}

fn read_name(raw: &[u8], mut pos: usize) -> Result<(String, usize), DnsError> {
    let mut labels: Vec<String> = Vec::new();
    let mut total = 0usize;
    loop {
        let len = *raw.get(pos).ok_or(DnsError::TruncatedLabel)? as usize;
        if len & 0xC0 != 0 {
            return Err(DnsError::Unsupported("compressed or extended label"));
        }
        pos += 1;
        if len == 0 {
            break;
        }
        let label = raw.get(pos..pos + len).ok_or(DnsError::TruncatedLabel)?;
        total += len + 1;
        if total > 255 {
            return Err(DnsError::NameTooLong);
        }
        labels.push(String::from_utf8_lossy(label).into_owned());
        pos += len;
    }
    Ok((labels.join("."), pos))
}

fn write_name(out: &mut Vec<u8>, name: &str) -> Result<(), DnsError> {
    let trimmed = name.trim_end_matches('.');
    let mut total = 1usize;
    if !trimmed.is_empty() {
        for label in trimmed.split('.') {
            if label.is_empty() || label.len() > 63 {
                return Err(DnsError::NameTooLong);
            }
            total += label.len() + 1;
            out.push(label.len() as u8);
            out.extend_from_slice(label.as_bytes());
        }
    }
    if total > 255 {
        return Err(DnsError::NameTooLong);
    }
    out.push(0);
    Ok(())
}

fn decode_question(raw: &[u8]) -> Result<(u16, u16, DnsQuery, usize), DnsError> {
    if raw.len() < HEADER_LEN {
        return Err(DnsError::TooShort);
    }
    let id = read_u16(raw, 0).unwrap();
    let flags = read_u16(raw, 2).unwrap();
    let qdcount = read_u16(raw, 4).unwrap();
    if qdcount != 1 {
        return Err(DnsError::MultipleQuestions(qdcount));
    }
    let (name, pos) = read_name(raw, HEADER_LEN)?;
    let qtype = read_u16(raw, pos).ok_or(DnsError::TruncatedRecord)?;
    let qclass = read_u16(raw, pos + 2).ok_or(DnsError::TruncatedRecord)?;
    let query = DnsQuery {
        id,
        recursion_desired: flags & FLAG_RD != 0,
        name,
        qtype,
        qclass,
    };
    Ok((flags, read_u16(raw, 6).unwrap(), query, pos + 4))
}

/// Decodes a single-question query.
pub fn decode_dns_query(raw: &[u8]) -> Result<DnsQuery, DnsError> {
    let (flags, _, query, _) = decode_question(raw)?;
    if flags & FLAG_QR != 0 {
        return Err(DnsError::Unsupported("message is a response"));
    }
    Ok(query)
}

pub fn encode_dns_query(q: &DnsQuery) -> Result<Vec<u8>, DnsError> {
    let mut out = Vec::with_capacity(32);
    out.extend_from_slice(&q.id.to_be_bytes());
    let flags = if q.recursion_desired { FLAG_RD } else { 0 };
    out.extend_from_slice(&flags.to_be_bytes());
    out.extend_from_slice(&[0, 1, 0, 0, 0, 0, 0, 0]);
    write_name(&mut out, &q.name)?;
    out.extend_from_slice(&q.qtype.to_be_bytes());
    out.extend_from_slice(&q.qclass.to_be_bytes());
    Ok(out)
}

pub fn encode_dns_answer(ans: &DnsAnswer) -> Result<Vec<u8>, DnsError> {
    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(&ans.id.to_be_bytes());
    let mut flags = FLAG_QR | u16::from(ans.rcode & 0x0F);
    if ans.authoritative {
        flags |= FLAG_AA;
    }
    if ans.question.recursion_desired {
        flags |= FLAG_RD;
    }
    out.extend_from_slice(&flags.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(ans.records.len() as u16).to_be_bytes());
    out.extend_from_slice(&[0, 0, 0, 0]);
    write_name(&mut out, &ans.question.name)?;
    out.extend_from_slice(&ans.question.qtype.to_be_bytes());
    out.extend_from_slice(&ans.question.qclass.to_be_bytes());
    for rec in &ans.records {
        write_name(&mut out, &rec.name)?;
        out.extend_from_slice(&TYPE_A.to_be_bytes());
        out.extend_from_slice(&CLASS_IN.to_be_bytes());
        out.extend_from_slice(&rec.ttl.to_be_bytes());
        out.extend_from_slice(&4u16.to_be_bytes());
        out.extend_from_slice(&rec.addr.octets());
    }
    Ok(out)
}

/// Decodes a response produced by [`encode_dns_answer`] (or any server that
/// writes uncompressed names). Non-A records are skipped.
pub fn decode_dns_answer(raw: &[u8]) -> Result<DnsAnswer, DnsError> {
    let (flags, ancount, question, mut pos) = decode_question(raw)?;
    if flags & FLAG_QR == 0 {
        return Err(DnsError::Unsupported("message is a query"));
    }
    let mut records = Vec::new();
    for _ in 0..ancount {
        let (name, after) = read_name(raw, pos)?;
        let rtype = read_u16(raw, after).ok_or(DnsError::TruncatedRecord)?;
        let ttl_bytes = raw
            .get(after + 4..after + 8)
            .ok_or(DnsError::TruncatedRecord)?;
        let ttl = u32::from_be_bytes(ttl_bytes.try_into().unwrap());
        let rdlen = read_u16(raw, after + 8).ok_or(DnsError::TruncatedRecord)? as usize;
        let rdata = raw
            .get(after + 10..after + 10 + rdlen)
            .ok_or(DnsError::TruncatedRecord)?;
        if rtype == TYPE_A && rdlen == 4 {
            records.push(ARecord {
                name,
                ttl,
                addr: Ipv4Addr::new(rdata[0], rdata[1], rdata[2], rdata[3]),
            });
        }
        pos = after + 10 + rdlen;
    }
    Ok(DnsAnswer {
        id: question.id,
        rcode: (flags & 0x0F) as u8,
        authoritative: flags & FLAG_AA != 0,
        question,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn query(name: &str) -> DnsQuery {
        DnsQuery {
            id: 0x1234,
            recursion_desired: true,
            name: name.into(),
            qtype: TYPE_A,
            qclass: CLASS_IN,
        }
    }

    #[test]
    fn label_length_past_end() {
        let mut raw = encode_dns_query(&query("boot")).unwrap();
        raw.truncate(HEADER_LEN);
        raw.extend_from_slice(&[40, b'a', b'b']);
        assert_eq!(decode_dns_query(&raw), Err(DnsError::TruncatedLabel));
    }

    #[test]
    fn two_questions_rejected() {
        let mut raw = encode_dns_query(&query("boot")).unwrap();
        raw[5] = 2;
        assert_eq!(decode_dns_query(&raw), Err(DnsError::MultipleQuestions(2)));
    }

    #[test]
    fn compressed_question_rejected() {
        let mut raw = encode_dns_query(&query("a")).unwrap();
        raw.truncate(HEADER_LEN);
        raw.extend_from_slice(&[0xC0, 0x0C, 0, 1, 0, 1]);
        assert!(matches!(
            decode_dns_query(&raw),
            Err(DnsError::Unsupported(_))
        ));
    }

    #[test]
    fn answer_echoes_id_and_question() {
        let q = query("anything.at.all");
        let ans = DnsAnswer::to_query(
            &q,
            RCODE_NO_ERROR,
            vec![ARecord {
                name: q.name.clone(),
                ttl: 60,
                addr: Ipv4Addr::new(192, 168, 77, 1),
            }],
        );
        let raw = encode_dns_answer(&ans).unwrap();
        assert_eq!(&raw[..2], &[0x12, 0x34]);
        // ancount
        assert_eq!(&raw[6..8], &[0, 1]);
        assert_eq!(decode_dns_answer(&raw).unwrap(), ans);
    }

    #[test]
    fn overlong_label_rejected_on_encode() {
        let name = "a".repeat(64);
        assert_eq!(encode_dns_query(&query(&name)), Err(DnsError::NameTooLong));
    }
}
