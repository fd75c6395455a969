//! Binary packet layout. All integers little-endian.
//!
//! ```text
//! header  : magic "VRSA" | version u8 (=1) | kind u8 | length u32 | body
//! Hello   : role u8 | major u8 | minor u8 | agent_len u16 | agent utf-8
//! CueBatch: batch_id u32 | tone u8 | count u16 | cue*
//!   cue   : order_index u16 | start_ms u32 | azimuth f32 | gain f32
//!           | distance f32 | payload_kind u8 | payload_len u32 | payload
//! Cancel  : batch_id u32
//! Keypress: key u8
//! Ping/Pong: opaque bytes echoed back
//! ```

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"VRSA";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
/// Bodies above this are refused before allocation.
pub const MAX_BODY_LEN: u32 = 64 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported packet version {0}")]
    BadVersion(u8),
    #[error("truncated packet: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown packet kind {0}")]
    UnknownKind(u8),
    #[error("{0} trailing bytes after packet")]
    TrailingBytes(usize),
    #[error("body length {0} exceeds limit")]
    TooLarge(u32),
    #[error("invalid body: {0}")]
    InvalidBody(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PacketKind {
    Hello = 0,
    CueBatch = 1,
    CancelBatch = 2,
    Keypress = 3,
    Ping = 4,
    Pong = 5,
}

impl PacketKind {
    pub fn from_u8(v: u8) -> Result<Self, WireError> {
        Ok(match v {
            0 => PacketKind::Hello,
            1 => PacketKind::CueBatch,
            2 => PacketKind::CancelBatch,
            3 => PacketKind::Keypress,
            4 => PacketKind::Ping,
            5 => PacketKind::Pong,
            other => return Err(WireError::UnknownKind(other)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Role {
    Client = 0,
    Engine = 1,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hello {
    pub role: Role,
    pub protocol_major: u8,
    pub protocol_minor: u8,
    /// Client kind for clients, engine version for the engine.
    pub agent: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PayloadKind {
    SpeechPcm = 0,
    EffectId = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireCue {
    pub order_index: u16,
    pub start_ms: u32,
    pub azimuth: f32,
    pub gain: f32,
    pub distance: f32,
    pub payload_kind: PayloadKind,
    /// PCM16 LE mono 48 kHz for speech; UTF-8 effect name for effects.
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CueBatchBody {
    pub batch_id: u32,
    pub tone: u8,
    pub cues: Vec<WireCue>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Packet {
    Hello(Hello),
    CueBatch(CueBatchBody),
    CancelBatch { batch_id: u32 },
    Keypress { key: u8 },
    Ping(Vec<u8>),
    Pong(Vec<u8>),
}

impl Packet {
    pub fn kind(&self) -> PacketKind {
        match self {
            Packet::Hello(_) => PacketKind::Hello,
            Packet::CueBatch(_) => PacketKind::CueBatch,
            Packet::CancelBatch { .. } => PacketKind::CancelBatch,
            Packet::Keypress { .. } => PacketKind::Keypress,
            Packet::Ping(_) => PacketKind::Ping,
            Packet::Pong(_) => PacketKind::Pong,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        match self {
            Packet::Hello(h) => {
                body.push(h.role as u8);
                body.push(h.protocol_major);
                body.push(h.protocol_minor);
                let agent = h.agent.as_bytes();
                let len = agent.len().min(u16::MAX as usize);
                body.extend_from_slice(&(len as u16).to_le_bytes());
                body.extend_from_slice(&agent[..len]);
            }
            Packet::CueBatch(b) => {
                body.extend_from_slice(&b.batch_id.to_le_bytes());
                body.push(b.tone);
                body.extend_from_slice(&(b.cues.len() as u16).to_le_bytes());
                for c in &b.cues {
                    body.extend_from_slice(&c.order_index.to_le_bytes());
                    body.extend_from_slice(&c.start_ms.to_le_bytes());
                    body.extend_from_slice(&c.azimuth.to_le_bytes());
                    body.extend_from_slice(&c.gain.to_le_bytes());
                    body.extend_from_slice(&c.distance.to_le_bytes());
                    body.push(c.payload_kind as u8);
                    body.extend_from_slice(&(c.payload.len() as u32).to_le_bytes());
                    body.extend_from_slice(&c.payload);
                }
            }
            Packet::CancelBatch { batch_id } => body.extend_from_slice(&batch_id.to_le_bytes()),
            Packet::Keypress { key } => body.push(*key),
            Packet::Ping(p) | Packet::Pong(p) => body.extend_from_slice(p),
        }
        let mut out = Vec::with_capacity(HEADER_LEN + body.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.kind() as u8);
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    /// Decodes exactly one packet; bytes past the declared body are an
    /// error.
    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(WireError::BadMagic(magic));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(WireError::BadVersion(version));
        }
        let kind = PacketKind::from_u8(r.u8()?)?;
        let len = r.u32()?;
        if len > MAX_BODY_LEN {
            return Err(WireError::TooLarge(len));
        }
        let body = r.take(len as usize)?;
        if r.remaining() > 0 {
            return Err(WireError::TrailingBytes(r.remaining()));
        }
        let mut b = Reader::new(body);
        let packet = match kind {
            PacketKind::Hello => {
                let role = match b.u8()? {
                    0 => Role::Client,
                    1 => Role::Engine,
                    other => return Err(invalid(format!("unknown role {other}"))),
                };
                let protocol_major = b.u8()?;
                let protocol_minor = b.u8()?;
                let n = b.u16()? as usize;
                let agent = String::from_utf8(b.take(n)?.to_vec())
                    .map_err(|_| invalid("agent is not utf-8".into()))?;
                Packet::Hello(Hello {
                    role,
                    protocol_major,
                    protocol_minor,
                    agent,
                })
            }
            PacketKind::CueBatch => Packet::CueBatch(decode_batch(&mut b)?),
            PacketKind::CancelBatch => Packet::CancelBatch { batch_id: b.u32()? },
            PacketKind::Keypress => Packet::Keypress { key: b.u8()? },
            PacketKind::Ping => Packet::Ping(b.rest().to_vec()),
            PacketKind::Pong => Packet::Pong(b.rest().to_vec()),
        };
        if b.remaining() > 0 {
            return Err(invalid(format!("{} unread body bytes", b.remaining())));
        }
        Ok(packet)
    }
}

fn invalid(msg: String) -> WireError {
    WireError::InvalidBody(msg)
}

fn decode_batch(b: &mut Reader<'_>) -> Result<CueBatchBody, WireError> {
    let batch_id = b.u32()?;
    let tone = b.u8()?;
    if tone > 4 {
        return Err(invalid(format!("unknown tone {tone}")));
    }
    let count = b.u16()? as usize;
    let mut cues = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let order_index = b.u16()?;
        let start_ms = b.u32()?;
        let azimuth = b.f32()?;
        let gain = b.f32()?;
        let distance = b.f32()?;
        let payload_kind = match b.u8()? {
            0 => PayloadKind::SpeechPcm,
            1 => PayloadKind::EffectId,
            other => return Err(invalid(format!("cue {i}: unknown payload kind {other}"))),
        };
        let n = b.u32()? as usize;
        let payload = b.take(n)?.to_vec();
        if !(azimuth.is_finite() && gain.is_finite() && distance.is_finite()) {
            return Err(invalid(format!("cue {i}: non-finite float")));
        }
        if !(0.0..=1.0).contains(&gain) {
            return Err(invalid(format!("cue {i}: gain {gain} outside [0, 1]")));
        }
        if let Some(prev) = cues.last().map(|c: &WireCue| c.order_index) {
            if order_index <= prev {
                return Err(invalid(format!("cue {i}: order_index not increasing")));
            }
        }
        cues.push(WireCue {
            order_index,
            start_ms,
            azimuth,
            gain,
            distance,
            payload_kind,
            payload,
        });
    }
    Ok(CueBatchBody {
        batch_id,
        tone,
        cues,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated {
                needed: self.pos + n,
                available: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32, WireError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn arb_cue_batch() -> impl Strategy<Value = CueBatchBody> {
        let cue = (
            -1.6f32..1.6,
            0.0f32..=1.0,
            0.0f32..=1.0,
            any::<u32>(),
            any::<bool>(),
            proptest::collection::vec(any::<u8>(), 0..64),
        );
        (
            any::<u32>(),
            0u8..5,
            proptest::collection::vec(cue, 0..8),
        )
            .prop_map(|(batch_id, tone, cues)| CueBatchBody {
                batch_id,
                tone,
                cues: cues
                    .into_iter()
                    .enumerate()
                    .map(|(i, (az, g, d, start, speech, payload))| WireCue {
                        order_index: i as u16,
                        start_ms: start,
                        azimuth: az,
                        gain: g,
                        distance: d,
                        payload_kind: if speech {
                            PayloadKind::SpeechPcm
                        } else {
                            PayloadKind::EffectId
                        },
                        payload,
                    })
                    .collect(),
            })
    }

    #[test]
    fn ping_is_ten_bytes() {
        let bytes = Packet::Ping(vec![]).encode();
        assert_eq!(bytes, vec![b'V', b'R', b'S', b'A', 1, 4, 0, 0, 0, 0]);
        assert_eq!(Packet::decode(&bytes).unwrap(), Packet::Ping(vec![]));
    }

    #[test]
    fn error_cases() {
        let good = Packet::Keypress { key: 1 }.encode();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(Packet::decode(&bad_magic), Err(WireError::BadMagic(_))));
        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert_eq!(Packet::decode(&bad_version), Err(WireError::BadVersion(2)));
        let mut unknown = good.clone();
        unknown[5] = 9;
        assert_eq!(Packet::decode(&unknown), Err(WireError::UnknownKind(9)));
        let mut long = good.clone();
        long[6] = 5;
        assert!(matches!(Packet::decode(&long), Err(WireError::Truncated { .. })));
        let mut trailing = good.clone();
        trailing.push(0);
        assert_eq!(Packet::decode(&trailing), Err(WireError::TrailingBytes(1)));
        assert!(matches!(Packet::decode(&good[..3]), Err(WireError::Truncated { .. })));
    }

    #[test]
    fn batch_validation_on_decode() {
        let mut body = CueBatchBody {
            batch_id: 1,
            tone: 0,
            cues: vec![WireCue {
                order_index: 0,
                start_ms: 0,
                azimuth: 0.0,
                gain: 1.5,
                distance: 0.0,
                payload_kind: PayloadKind::EffectId,
                payload: b"warning".to_vec(),
            }],
        };
        assert!(matches!(
            Packet::decode(&Packet::CueBatch(body.clone()).encode()),
            Err(WireError::InvalidBody(_))
        ));
        body.cues[0].gain = 0.5;
        body.cues.push(body.cues[0].clone());
        assert!(matches!(
            Packet::decode(&Packet::CueBatch(body.clone()).encode()),
            Err(WireError::InvalidBody(_))
        ));
        body.cues[1].order_index = 1;
        assert!(Packet::decode(&Packet::CueBatch(body).encode()).is_ok());
    }

    #[test]
    fn hello_layout() {
        let h = Packet::Hello(Hello {
            role: Role::Client,
            protocol_major: 1,
            protocol_minor: 0,
            agent: "ab".into(),
        });
        let bytes = h.encode();
        assert_eq!(&bytes[10..], &[0, 1, 0, 2, 0, b'a', b'b']);
        assert_eq!(Packet::decode(&bytes).unwrap(), h);
    }

    proptest! {
        #[test]
        fn batch_round_trip(body in arb_cue_batch()) {
            let p = Packet::CueBatch(body);
            prop_assert_eq!(Packet::decode(&p.encode()).unwrap(), p);
        }

        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = Packet::decode(&bytes);
        }

        #[test]
        fn encode_decode_encode(bytes in proptest::collection::vec(any::<u8>(), 0..40)) {
            let mut framed = MAGIC.to_vec();
            framed.push(VERSION);
            framed.push(4);
            framed.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
            framed.extend_from_slice(&bytes);
            let p = Packet::decode(&framed).unwrap();
            prop_assert_eq!(p.encode(), framed);
        }
    }
}
