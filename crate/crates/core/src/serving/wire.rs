//! Length-prefixed little-endian frames:
//!
//! ```text
//! u32 frame length (bytes after this field)
//! u8  kind (1 score request, 2 score response, 3 rerank result)
//! u16 version
//! u64 query id
//! ... body
//! ```
//!
//! Score request body: `u16 query_dim, u16 item_dim, u32 count`, the query
//! features as f64, then `count x (u64 item_id, item_dim x f64)`.
//!
//! Score response body: `u8 float width, u16 embedding_dim, u32 count,
//! u32 tail_count`, then `count x (u64 item_id, logit, embedding)` and
//! `tail_count x (u64 item_id, logit)`.
//!
//! Rerank result body: `u8 float width, u32 reranked, u32 tail_count`, then
//! `(reranked + tail_count) x (u64 item_id, score)`.

use crate::error::{LtcsError, Result};
use crate::model::Item;
use crate::real::Precision;

pub const WIRE_VERSION: u16 = 1;

const KIND_SCORE_REQUEST: u8 = 1;
const KIND_SCORE_RESPONSE: u8 = 2;
const KIND_RERANK_RESULT: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRequest {
    pub query_id: u64,
    pub query_features: Vec<f64>,
    pub item_dim: usize,
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRecord {
    pub item_id: u64,
    pub logit: f64,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRecord {
    pub item_id: u64,
    pub logit: f64,
}

/// A leaf's local top candidates with embeddings, and logits for the rest.
/// Values are carried as f64 but encoded at `precision`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreResponse {
    pub query_id: u64,
    pub precision: Precision,
    pub embedding_dim: usize,
    pub scored: Vec<ScoredRecord>,
    pub tail: Vec<TailRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedRecord {
    pub item_id: u64,
    pub score: f64,
}

/// Final order: re-ranked records (scored by re-rank logit), then the tail
/// (scored by initial logit).
#[derive(Debug, Clone, PartialEq)]
pub struct RerankResult {
    pub query_id: u64,
    pub precision: Precision,
    pub reranked: Vec<RankedRecord>,
    pub tail: Vec<RankedRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    ScoreRequest(ScoreRequest),
    ScoreResponse(ScoreResponse),
    RerankResult(RerankResult),
}

fn too_large(what: &str, n: usize) -> LtcsError {
    LtcsError::Protocol(format!("{what} {n} does not fit the wire field"))
}

fn u16_of(what: &str, n: usize) -> Result<u16> {
    u16::try_from(n).map_err(|_| too_large(what, n))
}

fn u32_of(what: &str, n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| too_large(what, n))
}

struct Writer {
    buf: Vec<u8>,
    precision: Precision,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn float(&mut self, v: f64) {
        match self.precision {
            Precision::F32 => self.buf.extend_from_slice(&(v as f32).to_le_bytes()),
            Precision::F64 => self.f64(v),
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    precision: Precision,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            LtcsError::Protocol(format!("truncated frame: needed {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn float(&mut self) -> Result<f64> {
        match self.precision {
            Precision::F32 => Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64),
            Precision::F64 => self.f64(),
        }
    }
    fn precision(&mut self) -> Result<Precision> {
        match self.u8()? {
            4 => Ok(Precision::F32),
            8 => Ok(Precision::F64),
            w => Err(LtcsError::Protocol(format!("unsupported float width {w}"))),
        }
    }
    /// Rejects counts that could not possibly fit in the rest of the frame.
    fn count(&mut self, min_record: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_record) > self.buf.len() - self.pos {
            return Err(LtcsError::Protocol(format!("record count {n} exceeds the frame size")));
        }
        Ok(n)
    }
}

impl WireMessage {
    pub fn query_id(&self) -> u64 {
        match self {
            WireMessage::ScoreRequest(m) => m.query_id,
            WireMessage::ScoreResponse(m) => m.query_id,
            WireMessage::RerankResult(m) => m.query_id,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let precision = match self {
            WireMessage::ScoreRequest(_) => Precision::F64,
            WireMessage::ScoreResponse(m) => m.precision,
            WireMessage::RerankResult(m) => m.precision,
        };
        let mut w = Writer { buf: vec![0; 4], precision };
        match self {
            WireMessage::ScoreRequest(m) => {
                w.u8(KIND_SCORE_REQUEST);
                w.u16(WIRE_VERSION);
                w.u64(m.query_id);
                w.u16(u16_of("query dimension", m.query_features.len())?);
                w.u16(u16_of("item dimension", m.item_dim)?);
                w.u32(u32_of("item count", m.items.len())?);
                for &v in &m.query_features {
                    w.f64(v);
                }
                for item in &m.items {
                    if item.features.len() != m.item_dim {
                        return Err(LtcsError::Protocol(format!(
                            "item {} has {} features, header says {}",
                            item.item_id,
                            item.features.len(),
                            m.item_dim
                        )));
                    }
                    w.u64(item.item_id);
                    for &v in &item.features {
                        w.f64(v);
                    }
                }
            }
            WireMessage::ScoreResponse(m) => {
                w.u8(KIND_SCORE_RESPONSE);
                w.u16(WIRE_VERSION);
                w.u64(m.query_id);
                w.u8(m.precision.bytes() as u8);
                w.u16(u16_of("embedding dimension", m.embedding_dim)?);
                w.u32(u32_of("scored count", m.scored.len())?);
                w.u32(u32_of("tail count", m.tail.len())?);
                for r in &m.scored {
                    if r.embedding.len() != m.embedding_dim {
                        return Err(LtcsError::Protocol(format!(
                            "item {} embedding has width {}, header says {}",
                            r.item_id,
                            r.embedding.len(),
                            m.embedding_dim
                        )));
                    }
                    w.u64(r.item_id);
                    w.float(r.logit);
                    for &v in &r.embedding {
                        w.float(v);
                    }
                }
                for t in &m.tail {
                    w.u64(t.item_id);
                    w.float(t.logit);
                }
            }
            WireMessage::RerankResult(m) => {
                w.u8(KIND_RERANK_RESULT);
                w.u16(WIRE_VERSION);
                w.u64(m.query_id);
                w.u8(m.precision.bytes() as u8);
                w.u32(u32_of("reranked count", m.reranked.len())?);
                w.u32(u32_of("tail count", m.tail.len())?);
                for r in m.reranked.iter().chain(&m.tail) {
                    w.u64(r.item_id);
                    w.float(r.score);
                }
            }
        }
        let len = u32_of("frame length", w.buf.len() - 4)?;
        w.buf[..4].copy_from_slice(&len.to_le_bytes());
        Ok(w.buf)
    }

    /// Decodes exactly one frame; trailing bytes are an error.
    pub fn decode(bytes: &[u8]) -> Result<WireMessage> {
        let mut r = Reader { buf: bytes, pos: 0, precision: Precision::F64 };
        let len = r.u32()? as usize;
        if len != bytes.len() - 4 {
            return Err(LtcsError::Protocol(format!(
                "frame length field says {len} bytes, got {}",
                bytes.len() - 4
            )));
        }
        let kind = r.u8()?;
        let version = r.u16()?;
        if version != WIRE_VERSION {
            return Err(LtcsError::Protocol(format!(
                "wire version {version} is not supported (expected {WIRE_VERSION})"
            )));
        }
        let query_id = r.u64()?;
        let msg = match kind {
            KIND_SCORE_REQUEST => {
                let qdim = r.u16()? as usize;
                let item_dim = r.u16()? as usize;
                let count = r.count(8 + 8 * item_dim)?;
                let query_features = (0..qdim).map(|_| r.f64()).collect::<Result<_>>()?;
                let mut items = Vec::with_capacity(count);
                for _ in 0..count {
                    let item_id = r.u64()?;
                    let features = (0..item_dim).map(|_| r.f64()).collect::<Result<_>>()?;
                    items.push(Item { item_id, features });
                }
                WireMessage::ScoreRequest(ScoreRequest { query_id, query_features, item_dim, items })
            }
            KIND_SCORE_RESPONSE => {
                r.precision = r.precision()?;
                let fw = r.precision.bytes();
                let embedding_dim = r.u16()? as usize;
                let count = r.count(8 + fw * (1 + embedding_dim))?;
                let tail_count = r.count(8 + fw)?;
                let mut scored = Vec::with_capacity(count);
                for _ in 0..count {
                    let item_id = r.u64()?;
                    let logit = r.float()?;
                    let embedding = (0..embedding_dim).map(|_| r.float()).collect::<Result<_>>()?;
                    scored.push(ScoredRecord { item_id, logit, embedding });
                }
                let tail = (0..tail_count)
                    .map(|_| Ok(TailRecord { item_id: r.u64()?, logit: r.float()? }))
                    .collect::<Result<_>>()?;
                WireMessage::ScoreResponse(ScoreResponse { query_id, precision: r.precision, embedding_dim, scored, tail })
            }
            KIND_RERANK_RESULT => {
                r.precision = r.precision()?;
                let fw = r.precision.bytes();
                let reranked_count = r.count(8 + fw)?;
                let tail_count = r.count(8 + fw)?;
                let mut rec = || -> Result<RankedRecord> { Ok(RankedRecord { item_id: r.u64()?, score: r.float()? }) };
                let reranked = (0..reranked_count).map(|_| rec()).collect::<Result<_>>()?;
                let tail = (0..tail_count).map(|_| rec()).collect::<Result<_>>()?;
                WireMessage::RerankResult(RerankResult { query_id, precision: r.precision, reranked, tail })
            }
            k => return Err(LtcsError::Protocol(format!("unknown message kind {k}"))),
        };
        if r.pos != bytes.len() {
            return Err(LtcsError::Protocol(format!("{} trailing bytes after message", bytes.len() - r.pos)));
        }
        Ok(msg)
    }
}
