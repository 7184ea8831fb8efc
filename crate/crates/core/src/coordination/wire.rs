//! Protocol messages and their length-prefixed binary frames.
//!
//! Frame layout, little-endian:
//! `frame_len u32 | msg_type u8 | round u32 | trainer u16 | payload`, where
//! `frame_len` counts every byte after itself.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::io::{self, FormatError, Reader, Writer};
use crate::nn::ModelWeights;
use crate::partition::TrainerId;

/// Upper bound on a single frame, as a guard against corrupt lengths.
pub const MAX_FRAME: usize = 1 << 30;
const HEADER: usize = 1 + 4 + 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Ready = 1,
    Weights = 2,
    GlobalWeights = 3,
    Stop = 4,
    KvGet = 5,
    KvSet = 6,
    KvValue = 7,
}

impl MsgType {
    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => Self::Ready,
            2 => Self::Weights,
            3 => Self::GlobalWeights,
            4 => Self::Stop,
            5 => Self::KvGet,
            6 => Self::KvSet,
            7 => Self::KvValue,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum KvKey {
    Agg = 0,
    Stop = 1,
    Ready = 2,
}

impl KvKey {
    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Self::Agg,
            1 => Self::Stop,
            2 => Self::Ready,
            _ => return None,
        })
    }
}

/// Local weights sent by a trainer when it sees the aggregation flag.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsMsg {
    pub round: u64,
    pub trainer: TrainerId,
    /// Local steps completed so far.
    pub steps: u64,
    /// Mean training loss over the steps since the previous submission.
    pub window_loss: f64,
    pub ema_loss: f64,
    pub weights: Arc<ModelWeights>,
}

/// Averaged weights broadcast by the server; `round` is the new round.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMsg {
    pub round: u64,
    pub weights: Arc<ModelWeights>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Ready { trainer: TrainerId },
    Weights(WeightsMsg),
    Global(GlobalMsg),
    Stop,
    KvGet { trainer: TrainerId, key: KvKey },
    KvSet { trainer: TrainerId, key: KvKey, value: bool },
    KvValue { key: KvKey, value: bool },
}

fn round_u32(round: u64) -> u32 {
    u32::try_from(round).expect("round number exceeds the u32 wire field")
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u32(0);
        let (ty, round, trainer) = match self {
            Frame::Ready { trainer } => (MsgType::Ready, 0, *trainer),
            Frame::Weights(m) => (MsgType::Weights, round_u32(m.round), m.trainer),
            Frame::Global(m) => (MsgType::GlobalWeights, round_u32(m.round), 0),
            Frame::Stop => (MsgType::Stop, 0, 0),
            Frame::KvGet { trainer, .. } => (MsgType::KvGet, 0, *trainer),
            Frame::KvSet { trainer, .. } => (MsgType::KvSet, 0, *trainer),
            Frame::KvValue { .. } => (MsgType::KvValue, 0, 0),
        };
        w.u8(ty as u8);
        w.u32(round);
        w.u16(trainer);
        match self {
            Frame::Weights(m) => {
                w.u64(m.steps);
                w.f64(m.window_loss);
                w.f64(m.ema_loss);
                w.bytes(&m.weights.to_bytes());
            }
            Frame::Global(m) => w.bytes(&m.weights.to_bytes()),
            Frame::KvGet { key, .. } => w.u8(*key as u8),
            Frame::KvSet { key, value, .. } | Frame::KvValue { key, value } => {
                w.u8(*key as u8);
                w.u8(u8::from(*value));
            }
            Frame::Ready { .. } | Frame::Stop => {}
        }
        let len = (w.buf.len() - 4) as u32;
        w.buf[..4].copy_from_slice(&len.to_le_bytes());
        w.buf
    }

    /// Decodes the bytes after the length field.
    pub fn decode(body: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(body);
        let ty_at = r.offset();
        let ty = r.u8()?;
        let round = r.u32()? as u64;
        let trainer = r.u16()?;
        let ty = MsgType::from_u8(ty).ok_or_else(|| io::invalid(ty_at, format!("unknown message type {ty}")))?;
        let key = |r: &mut Reader<'_>| -> Result<KvKey, FormatError> {
            let at = r.offset();
            let k = r.u8()?;
            KvKey::from_u8(k).ok_or_else(|| io::invalid(at, format!("unknown key {k}")))
        };
        let flag = |r: &mut Reader<'_>| -> Result<bool, FormatError> {
            let at = r.offset();
            match r.u8()? {
                0 => Ok(false),
                1 => Ok(true),
                v => Err(io::invalid(at, format!("flag byte {v}"))),
            }
        };
        let frame = match ty {
            MsgType::Ready => Frame::Ready { trainer },
            MsgType::Weights => {
                let steps = r.u64()?;
                let window_loss = r.f64()?;
                let ema_loss = r.f64()?;
                Frame::Weights(WeightsMsg {
                    round,
                    trainer,
                    steps,
                    window_loss,
                    ema_loss,
                    weights: Arc::new(ModelWeights::read(&mut r)?),
                })
            }
            MsgType::GlobalWeights => Frame::Global(GlobalMsg {
                round,
                weights: Arc::new(ModelWeights::read(&mut r)?),
            }),
            MsgType::Stop => Frame::Stop,
            MsgType::KvGet => Frame::KvGet {
                trainer,
                key: key(&mut r)?,
            },
            MsgType::KvSet => Frame::KvSet {
                trainer,
                key: key(&mut r)?,
                value: flag(&mut r)?,
            },
            MsgType::KvValue => Frame::KvValue {
                key: key(&mut r)?,
                value: flag(&mut r)?,
            },
        };
        r.finish()?;
        Ok(frame)
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&self.encode())?;
        w.flush()
    }

    /// Reads one frame; `Ok(None)` on a clean end of stream.
    pub fn read_from(r: &mut impl Read) -> Result<Option<Self>, FormatError> {
        let mut len = [0u8; 4];
        match r.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        let len = u32::from_le_bytes(len) as usize;
        if !(HEADER..=MAX_FRAME).contains(&len) {
            return Err(io::invalid(0, format!("frame length {len} out of range")));
        }
        let mut body = vec![0u8; len];
        r.read_exact(&mut body)?;
        Self::decode(&body).map(Some)
    }
}
