use std::io::Cursor;
use std::sync::Arc;

use super::ServiceError;

pub const SAMPLE_RATE: u32 = 48_000;
const SAMPLES_PER_MS: usize = (SAMPLE_RATE / 1000) as usize;

/// 16-bit mono PCM at 48 kHz.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AudioClip {
    samples: Arc<[i16]>,
}

impl AudioClip {
    pub fn from_samples(samples: Vec<i16>) -> Self {
        Self {
            samples: samples.into(),
        }
    }

    pub fn silence(duration_ms: u32) -> Self {
        Self::from_samples(vec![0; duration_ms as usize * SAMPLES_PER_MS])
    }

    pub fn samples(&self) -> &[i16] {
        &self.samples
    }

    pub fn duration_ms(&self) -> u32 {
        (self.samples.len() / SAMPLES_PER_MS) as u32
    }

    /// Little-endian sample bytes, as carried in cue packets.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.samples.len() * 2);
        for s in self.samples.iter() {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() % 2 != 0 {
            return None;
        }
        Some(Self::from_samples(
            bytes
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]))
                .collect(),
        ))
    }

    pub fn to_wav(&self) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: SAMPLE_RATE,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut buf, spec).expect("in-memory writer");
            for &s in self.samples.iter() {
                w.write_sample(s).expect("in-memory write");
            }
            w.finalize().expect("in-memory finalize");
        }
        buf.into_inner()
    }

    pub fn from_wav(bytes: &[u8]) -> Result<Self, ServiceError> {
        let reader = hound::WavReader::new(Cursor::new(bytes))
            .map_err(|e| ServiceError::Decode(format!("wav: {e}")))?;
        let spec = reader.spec();
        if spec.channels != 1 || spec.sample_rate != SAMPLE_RATE || spec.bits_per_sample != 16 {
            return Err(ServiceError::Decode(format!(
                "wav must be 16-bit mono {SAMPLE_RATE} Hz, got {} ch {} Hz {} bit",
                spec.channels, spec.sample_rate, spec.bits_per_sample
            )));
        }
        let samples = reader
            .into_samples::<i16>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ServiceError::Decode(format!("wav: {e}")))?;
        Ok(Self::from_samples(samples))
    }
}
