//! Read-only TFTP service for the bootloader image.

use crate::codec::tftp::{
    self, chunk_blocks, ErrorCode, TftpPacket, DEFAULT_BLOCK_SIZE, OPT_BLKSIZE, OPT_TSIZE,
};

/// Server side of one transfer, advanced by the client's ACKs.
#[derive(Debug, Clone)]
pub struct TftpTransfer {
    data: std::sync::Arc<[u8]>,
    block_size: usize,
    /// Index of the last DATA block sent (1-based; 0 = OACK outstanding).
    sent: usize,
    total_blocks: usize,
    finished: bool,
}

impl TftpTransfer {
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    fn data_packet(&self, index: usize) -> TftpPacket {
        let start = (index - 1) * self.block_size;
        let end = (start + self.block_size).min(self.data.len());
        TftpPacket::Data {
            block: (index % 65536) as u16,
            payload: self.data[start.min(end)..end].to_vec(),
        }
    }

    /// Handles an ACK. Returns the next DATA block, a retransmission for a
    /// duplicate ACK, or `None` once the final block is acknowledged.
    pub fn on_ack(&mut self, block: u16) -> Option<TftpPacket> {
        if self.finished {
            return None;
        }
        let acked = (self.sent % 65536) as u16;
        if block == acked {
            if self.sent == self.total_blocks {
                self.finished = true;
                return None;
            }
            self.sent += 1;
            return Some(self.data_packet(self.sent));
        }
        let previous = (self.sent.wrapping_sub(1) % 65536) as u16;
        if self.sent >= 1 && block == previous {
            return Some(self.data_packet(self.sent));
        }
        None
    }
}

/// Starts serving `rrq`. Only `boot_filename` exists; anything else gets
/// FileNotFound and a non-RRQ first packet gets IllegalOperation.
pub fn start_transfer(
    rrq: &TftpPacket,
    boot_filename: &str,
    blob: std::sync::Arc<[u8]>,
) -> Result<(TftpTransfer, TftpPacket), TftpPacket> {
    let TftpPacket::ReadRequest { filename, .. } = rrq else {
        return Err(TftpPacket::error(
            ErrorCode::IllegalOperation,
            "expected a read request",
        ));
    };
    if filename.trim_start_matches('/') != boot_filename {
        return Err(TftpPacket::error(ErrorCode::FileNotFound, "file not found"));
    }
    let negotiated = tftp::negotiate_block_size(rrq.option(OPT_BLKSIZE));
    let block_size = negotiated.unwrap_or(DEFAULT_BLOCK_SIZE);
    let total_blocks = blob.len() / block_size + 1;
    let mut transfer = TftpTransfer {
        data: blob,
        block_size,
        sent: 0,
        total_blocks,
        finished: false,
    };
    let mut oack = Vec::new();
    if let Some(size) = negotiated {
        oack.push((OPT_BLKSIZE.to_string(), size.to_string()));
    }
    if rrq.option(OPT_TSIZE).is_some() {
        oack.push((OPT_TSIZE.to_string(), transfer.data.len().to_string()));
    }
    if !oack.is_empty() {
        return Ok((transfer, TftpPacket::OptionAck { options: oack }));
    }
    transfer.sent = 1;
    let first = transfer.data_packet(1);
    Ok((transfer, first))
}

/// The full server-side packet stream for `rrq` assuming every packet is
/// acknowledged in order.
pub fn serve_tftp(rrq: &TftpPacket, boot_filename: &str, blob: &[u8]) -> Vec<TftpPacket> {
    let (mut transfer, first) = match start_transfer(rrq, boot_filename, blob.into()) {
        Ok(t) => t,
        Err(err) => return vec![err],
    };
    let mut ack = match &first {
        TftpPacket::Data { block, .. } => *block,
        _ => 0,
    };
    let mut out = vec![first];
    while let Some(pkt) = transfer.on_ack(ack) {
        if let TftpPacket::Data { block, .. } = &pkt {
            ack = *block;
        }
        out.push(pkt);
    }
    debug_assert_eq!(
        out.iter()
            .filter(|p| matches!(p, TftpPacket::Data { .. }))
            .count(),
        chunk_blocks(blob, transfer.block_size).count()
    );
    out
}
