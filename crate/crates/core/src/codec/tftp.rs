//! TFTP packet codec (RFC 1350) with option negotiation (RFC 2347/2348).
//!
//! Write requests are not supported; opcode 2 decodes as
//! [`TftpError::UnknownOpcode`].

use thiserror::Error;

pub const DEFAULT_BLOCK_SIZE: usize = 512;
pub const MIN_BLOCK_SIZE: usize = 8;
/// Largest block size the gateway negotiates (fits a 1500-byte MTU).
pub const MAX_BLOCK_SIZE: usize = 1428;

pub const OPT_BLKSIZE: &str = "blksize";
pub const OPT_TSIZE: &str = "tsize";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TftpError {
    #[error("packet is {0} bytes, too short")]
    TooShort(usize),
    #[error("unknown opcode {0}")]
    UnknownOpcode(u16),
    #[error("unterminated string")]
    UnterminatedString,
    #[error("string field contains a NUL byte")]
    EmbeddedNul,
}

/// Error codes carried in ERROR packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum ErrorCode {
    NotDefined = 0,
    FileNotFound = 1,
    AccessViolation = 2,
    DiskFull = 3,
    IllegalOperation = 4,
    UnknownTransferId = 5,
    FileExists = 6,
    NoSuchUser = 7,
    OptionRefused = 8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TftpPacket {
    ReadRequest {
        filename: String,
        mode: String,
        options: Vec<(String, String)>,
    },
    Data {
        block: u16,
        payload: Vec<u8>,
    },
    Ack {
        block: u16,
    },
    Error {
        code: u16,
        message: String,
    },
    OptionAck {
        options: Vec<(String, String)>,
    },
}

impl TftpPacket {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        TftpPacket::Error {
            code: code as u16,
            message: message.into(),
        }
    }

    pub fn opcode(&self) -> u16 {
        match self {
            TftpPacket::ReadRequest { .. } => 1,
            TftpPacket::Data { .. } => 3,
            TftpPacket::Ack { .. } => 4,
            TftpPacket::Error { .. } => 5,
            TftpPacket::OptionAck { .. } => 6,
        }
    }

    /// Looks up a request/OACK option, case-insensitively.
    pub fn option(&self, name: &str) -> Option<&str> {
        let opts = match self {
            TftpPacket::ReadRequest { options, .. } | TftpPacket::OptionAck { options } => options,
            _ => return None,
        };
        opts.iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// True when a DATA payload of `len` bytes means more blocks follow.
pub fn more_data_expected(len: usize, block_size: usize) -> bool {
    len == block_size
}

/// Parses a client's `blksize` request and clamps it to the supported range.
/// Returns `None` when the value is missing or unparsable.
pub fn negotiate_block_size(requested: Option<&str>) -> Option<usize> {
    let value: usize = requested?.trim().parse().ok()?;
    if value < MIN_BLOCK_SIZE {
        return None;
    }
    Some(value.min(MAX_BLOCK_SIZE))
}

pub fn decode_tftp(raw: &[u8]) -> Result<TftpPacket, TftpError> {
    if raw.len() < 2 {
        return Err(TftpError::TooShort(raw.len()));
    }
    let opcode = u16::from_be_bytes([raw[0], raw[1]]);
    let body = &raw[2..];
    match opcode {
        1 => {
            let mut fields = StrReader(body);
            let filename = fields.next_str()?;
            let mode = fields.next_str()?;
            let options = fields.pairs()?;
            Ok(TftpPacket::ReadRequest {
                filename,
                mode,
                options,
            })
        }
        3 => {
            if body.len() < 2 {
                return Err(TftpError::TooShort(raw.len()));
            }
            Ok(TftpPacket::Data {
                block: u16::from_be_bytes([body[0], body[1]]),
                payload: body[2..].to_vec(),
            })
        }
        4 => {
            if body.len() < 2 {
                return Err(TftpError::TooShort(raw.len()));
            }
            Ok(TftpPacket::Ack {
                block: u16::from_be_bytes([body[0], body[1]]),
            })
        }
        5 => {
            if body.len() < 2 {
                return Err(TftpError::TooShort(raw.len()));
            }
            let code = u16::from_be_bytes([body[0], body[1]]);
            let message = StrReader(&body[2..]).next_str()?;
            Ok(TftpPacket::Error { code, message })
        }
        6 => Ok(TftpPacket::OptionAck {
            options: StrReader(body).pairs()?,
        }),
        other => Err(TftpError::UnknownOpcode(other)),
    }
}

pub fn encode_tftp(pkt: &TftpPacket) -> Result<Vec<u8>, TftpError> {
    let mut out = pkt.opcode().to_be_bytes().to_vec();
    match pkt {
        TftpPacket::ReadRequest {
            filename,
            mode,
            options,
        } => {
            put_str(&mut out, filename)?;
            put_str(&mut out, mode)?;
            for (k, v) in options {
                put_str(&mut out, k)?;
                put_str(&mut out, v)?;
            }
        }
        TftpPacket::Data { block, payload } => {
            out.extend_from_slice(&block.to_be_bytes());
            out.extend_from_slice(payload);
        }
        TftpPacket::Ack { block } => out.extend_from_slice(&block.to_be_bytes()),
        TftpPacket::Error { code, message } => {
            out.extend_from_slice(&code.to_be_bytes());
            put_str(&mut out, message)?;
        }
        TftpPacket::OptionAck { options } => {
            for (k, v) in options {
                put_str(&mut out, k)?;
                put_str(&mut out, v)?;
            }
        }
    }
    Ok(out)
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), TftpError> {
    if s.as_bytes().contains(&0) {
        return Err(TftpError::EmbeddedNul);
    }
    out.extend_from_slice(s.as_bytes());
    out.push(0);
    Ok(())
}

struct StrReader<'a>(&'a [u8]);

impl StrReader<'_> {
    fn next_str(&mut self) -> Result<String, TftpError> {
        let end = self
            .0
            .iter()
            .position(|&b| b == 0)
            .ok_or(TftpError::UnterminatedString)?;
        let s = String::from_utf8_lossy(&self.0[..end]).into_owned();
        self.0 = &self.0[end + 1..];
        Ok(s)
    }

    fn pairs(&mut self) -> Result<Vec<(String, String)>, TftpError> {
        let mut out = Vec::new();
        while !self.0.is_empty() {
            let k = self.next_str()?;
            let v = self.next_str()?;
            out.push((k, v));
        }
        Ok(out)
    }
}

/// Splits `data` into DATA payloads of `block_size`, always ending with a
/// short (possibly empty) block.
pub fn chunk_blocks(data: &[u8], block_size: usize) -> impl Iterator<Item = &[u8]> {
    let full = data.len() / block_size;
    (0..=full).map(move |i| {
        let start = i * block_size;
        let end = (start + block_size).min(data.len());
        &data[start..end]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rrq_layout() {
        let pkt = TftpPacket::ReadRequest {
            filename: "boot.ipxe".into(),
            mode: "octet".into(),
            options: vec![],
        };
        let mut expected = vec![0x00, 0x01];
        expected.extend_from_slice(b"boot.ipxe\0octet\0");
        assert_eq!(encode_tftp(&pkt).unwrap(), expected);
    }

    #[test]
    fn missing_terminator() {
        assert_eq!(
            decode_tftp(b"\x00\x01boot.ipxe"),
            Err(TftpError::UnterminatedString)
        );
        assert_eq!(
            decode_tftp(b"\x00\x01boot.ipxe\0octet"),
            Err(TftpError::UnterminatedString)
        );
    }

    #[test]
    fn write_request_unsupported() {
        assert_eq!(
            decode_tftp(b"\x00\x02f\0octet\0"),
            Err(TftpError::UnknownOpcode(2))
        );
        assert_eq!(decode_tftp(b"\x00\x09"), Err(TftpError::UnknownOpcode(9)));
        assert_eq!(decode_tftp(b"\x00"), Err(TftpError::TooShort(1)));
    }

    #[test]
    fn option_lookup_is_case_insensitive() {
        let raw = b"\x00\x01f\0octet\0BLKSIZE\x001024\0";
        let pkt = decode_tftp(raw).unwrap();
        assert_eq!(pkt.option("blksize"), Some("1024"));
    }

    #[test]
    fn block_size_negotiation() {
        assert_eq!(negotiate_block_size(Some("1024")), Some(1024));
        assert_eq!(negotiate_block_size(Some("65464")), Some(MAX_BLOCK_SIZE));
        assert_eq!(negotiate_block_size(Some("4")), None);
        assert_eq!(negotiate_block_size(Some("x")), None);
        assert_eq!(negotiate_block_size(None), None);
    }

    #[test]
    fn final_block_detection() {
        assert!(more_data_expected(512, 512));
        assert!(!more_data_expected(511, 512));
        assert!(!more_data_expected(0, 512));
    }
}
