//! Embedding files: `"SFPE" | count u32 | (row u32, 1000 × f32)*`, little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{Embedding, EMBEDDING_DIM};

pub const EMBEDDINGS_MAGIC: [u8; 4] = *b"SFPE";
const RECORD_LEN: usize = 4 + 4 * EMBEDDING_DIM;

/// An embedding keyed by its manifest row (0-based data row).
#[derive(Debug, Clone, PartialEq)]
pub struct RowEmbedding {
    pub row: usize,
    pub embedding: Embedding,
}

fn format_err(reason: String) -> Error {
    Error::Format {
        kind: "embedding",
        reason,
    }
}

pub fn encode_embeddings(records: &[RowEmbedding]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + records.len() * RECORD_LEN);
    out.extend_from_slice(&EMBEDDINGS_MAGIC);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        if r.embedding.len() != EMBEDDING_DIM {
            return Err(Error::dim("embedding length", EMBEDDING_DIM, r.embedding.len()));
        }
        let row = u32::try_from(r.row).map_err(|_| format_err(format!("row {} exceeds u32", r.row)))?;
        out.extend_from_slice(&row.to_le_bytes());
        for v in r.embedding.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<Vec<RowEmbedding>> {
    if bytes.len() < 8 {
        return Err(format_err("shorter than the 8-byte header".into()));
    }
    if bytes[..4] != EMBEDDINGS_MAGIC {
        return Err(format_err(format!("bad magic {:?}", &bytes[..4])));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != count * RECORD_LEN {
        return Err(format_err(format!(
            "{count} records need {} bytes, found {}",
            count * RECORD_LEN,
            body.len()
        )));
    }
    body.chunks_exact(RECORD_LEN)
        .map(|rec| {
            let row = u32::from_le_bytes(rec[..4].try_into().unwrap()) as usize;
            let values = rec[4..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
            let embedding = Embedding::new(values).map_err(|e| format_err(format!("row {row}: {e}")))?;
            Ok(RowEmbedding { row, embedding })
        })
        .collect()
}

pub fn write_embeddings(path: &Path, records: &[RowEmbedding]) -> Result<()> {
    std::fs::write(path, encode_embeddings(records)?).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<Vec<RowEmbedding>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(row: usize, fill: f32) -> RowEmbedding {
        RowEmbedding {
            row,
            embedding: Embedding::new(vec![fill; EMBEDDING_DIM]).unwrap(),
        }
    }

    #[test]
    fn round_trip() {
        let records = vec![rec(3, 0.5), rec(0, 2.0)];
        let bytes = encode_embeddings(&records).unwrap();
        assert_eq!(bytes.len(), 8 + 2 * RECORD_LEN);
        assert_eq!(&bytes[..8], b"SFPE\x02\x00\x00\x00");
        assert_eq!(decode_embeddings(&bytes).unwrap(), records);
    }

    #[test]
    fn malformed_rejected() {
        let bytes = encode_embeddings(&[rec(1, 1.0)]).unwrap();
        assert!(decode_embeddings(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_embeddings(&bad).is_err());
        let mut neg = bytes.clone();
        neg[8 + 4..8 + 8].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(decode_embeddings(&neg).is_err());
        let short = RowEmbedding {
            row: 0,
            embedding: Embedding::new(vec![1.0; 5]).unwrap(),
        };
        assert!(encode_embeddings(&[short]).is_err());
    }
}
