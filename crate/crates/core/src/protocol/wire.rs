//! Wire formats for the pairing exchange.
//!
//! All multi-byte integers are big-endian. The reconciliation message is
//! `version | m | n | matrix_seed | y_values | tag`, where the tag is an
//! HMAC-SHA256 over every preceding byte, keyed with the sender's raw bit
//! key. Verifying the tag with the reconciled key therefore authenticates
//! the message and confirms reconciliation in one step.

use hmac::{Hmac, Mac};
use sha2::Sha256;
use thiserror::Error;

use crate::quantizer::BitKey;

pub const WIRE_VERSION: u8 = 1;
pub const TAG_LEN: usize = 32;
/// Upper bound on the key length a message may announce.
pub const MAX_N: usize = 4096;

type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("message truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("unsupported wire version {0}")]
    BadVersion(u8),
    #[error("implausible dimensions m={m}, n={n}")]
    BadDimensions { m: usize, n: usize },
    #[error("trailing bytes after message")]
    TrailingBytes,
}

/// Compute the 32-byte message tag with a raw bit key as MAC key.
pub fn key_tag(key: &BitKey, payload: &[u8]) -> [u8; TAG_LEN] {
    tag_bytes(&key.to_bytes(), payload)
}

/// HMAC-SHA256 tag over a payload.
pub fn tag_bytes(mac_key: &[u8], payload: &[u8]) -> [u8; TAG_LEN] {
    let mut mac = HmacSha256::new_from_slice(mac_key).expect("HMAC accepts any key length");
    mac.update(payload);
    mac.finalize().into_bytes().into()
}

/// Constant-time-ish tag comparison (single pass, no early exit).
pub fn tags_equal(a: &[u8; TAG_LEN], b: &[u8; TAG_LEN]) -> bool {
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// The compressed-key exchange message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconMessage {
    pub version: u8,
    pub m: u16,
    pub n: u16,
    pub matrix_seed: u64,
    pub y_values: Vec<i16>,
    pub tag: [u8; TAG_LEN],
}

impl ReconMessage {
    /// Build and tag a message from the sender's sketch and raw key.
    pub fn build(matrix_seed: u64, n: usize, y_values: Vec<i16>, raw_key: &BitKey) -> Self {
        let mut msg = ReconMessage {
            version: WIRE_VERSION,
            m: y_values.len() as u16,
            n: n as u16,
            matrix_seed,
            y_values,
            tag: [0; TAG_LEN],
        };
        msg.tag = key_tag(raw_key, &msg.unsigned_bytes());
        msg
    }

    /// Every field before the tag, in wire order.
    pub fn unsigned_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 2 * self.y_values.len());
        out.push(self.version);
        out.extend_from_slice(&self.m.to_be_bytes());
        out.extend_from_slice(&self.n.to_be_bytes());
        out.extend_from_slice(&self.matrix_seed.to_be_bytes());
        for v in &self.y_values {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.unsigned_bytes();
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, WireError> {
        const HEADER: usize = 13;
        if bytes.len() < HEADER {
            return Err(WireError::Truncated {
                need: HEADER,
                have: bytes.len(),
            });
        }
        let version = bytes[0];
        if version != WIRE_VERSION {
            return Err(WireError::BadVersion(version));
        }
        let m = u16::from_be_bytes([bytes[1], bytes[2]]) as usize;
        let n = u16::from_be_bytes([bytes[3], bytes[4]]) as usize;
        if m == 0 || n == 0 || m >= n || n > MAX_N {
            return Err(WireError::BadDimensions { m, n });
        }
        let matrix_seed = u64::from_be_bytes(bytes[5..13].try_into().unwrap());
        let need = HEADER + 2 * m + TAG_LEN;
        if bytes.len() < need {
            return Err(WireError::Truncated {
                need,
                have: bytes.len(),
            });
        }
        if bytes.len() > need {
            return Err(WireError::TrailingBytes);
        }
        let y_values = (0..m)
            .map(|i| i16::from_be_bytes([bytes[HEADER + 2 * i], bytes[HEADER + 2 * i + 1]]))
            .collect();
        let tag: [u8; TAG_LEN] = bytes[need - TAG_LEN..].try_into().unwrap();
        Ok(ReconMessage {
            version,
            m: m as u16,
            n: n as u16,
            matrix_seed,
            y_values,
            tag,
        })
    }

    /// Check the tag against a candidate raw key.
    pub fn verify(&self, candidate: &BitKey) -> bool {
        tags_equal(&self.tag, &key_tag(candidate, &self.unsigned_bytes()))
    }
}

/// Final-result notification from responder to initiator. The success tag
/// is keyed by the derived final key, so only a peer that actually
/// completed reconciliation can produce it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Notification {
    pub version: u8,
    pub success: bool,
    pub tag: [u8; TAG_LEN],
}

impl Notification {
    pub fn success(final_key: &[u8; 32]) -> Self {
        let mut n = Notification {
            version: WIRE_VERSION,
            success: true,
            tag: [0; TAG_LEN],
        };
        n.tag = tag_bytes(final_key, &n.unsigned_bytes());
        n
    }

    pub fn failure() -> Self {
        Notification {
            version: WIRE_VERSION,
            success: false,
            tag: [0; TAG_LEN],
        }
    }

    fn unsigned_bytes(&self) -> [u8; 2] {
        [self.version, u8::from(self.success)]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.unsigned_bytes().to_vec();
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, WireError> {
        const LEN: usize = 2 + TAG_LEN;
        if bytes.len() < LEN {
            return Err(WireError::Truncated {
                need: LEN,
                have: bytes.len(),
            });
        }
        if bytes.len() > LEN {
            return Err(WireError::TrailingBytes);
        }
        if bytes[0] != WIRE_VERSION {
            return Err(WireError::BadVersion(bytes[0]));
        }
        Ok(Notification {
            version: bytes[0],
            success: bytes[1] != 0,
            tag: bytes[2..].try_into().unwrap(),
        })
    }

    pub fn verify(&self, final_key: &[u8; 32]) -> bool {
        self.success && tags_equal(&self.tag, &tag_bytes(final_key, &self.unsigned_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> BitKey {
        BitKey {
            bits: (0..128).map(|i| (i % 3 == 0) as u8).collect(),
            bits_per_ipi: 3,
            kept_band: (4, 6),
        }
    }

    #[test]
    fn message_round_trip_is_field_identical() {
        let y: Vec<i16> = (0..50).map(|i| (i * 3 - 70) as i16).collect();
        let msg = ReconMessage::build(0xdead_beef_1234_5678, 128, y, &key());
        let back = ReconMessage::parse(&msg.to_bytes()).unwrap();
        assert_eq!(msg, back);
    }

    #[test]
    fn build_is_deterministic() {
        let y: Vec<i16> = (0..50).map(|i| i as i16).collect();
        let a = ReconMessage::build(7, 128, y.clone(), &key());
        let b = ReconMessage::build(7, 128, y, &key());
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn byte_layout_is_big_endian() {
        let msg = ReconMessage::build(0x0102_0304_0506_0708, 128, vec![0x0a0b, -2], &key());
        let bytes = msg.to_bytes();
        assert_eq!(bytes[0], 1); // version
        assert_eq!(&bytes[1..3], &[0x00, 0x02]); // m = 2
        assert_eq!(&bytes[3..5], &[0x00, 0x80]); // n = 128
        assert_eq!(&bytes[5..13], &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(&bytes[13..15], &[0x0a, 0x0b]);
        assert_eq!(&bytes[15..17], &[0xff, 0xfe]); // -2
        assert_eq!(bytes.len(), 13 + 4 + TAG_LEN);
    }

    #[test]
    fn tampered_y_value_breaks_the_tag() {
        let y: Vec<i16> = (0..50).map(|i| (i - 25) as i16).collect();
        let msg = ReconMessage::build(9, 128, y, &key());
        let mut bytes = msg.to_bytes();
        bytes[14] ^= 0x01;
        let tampered = ReconMessage::parse(&bytes).unwrap();
        assert!(!tampered.verify(&key()));
        assert!(msg.verify(&key()));
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert!(matches!(
            ReconMessage::parse(&[1, 0]),
            Err(WireError::Truncated { .. })
        ));
        let msg = ReconMessage::build(1, 128, vec![0; 50], &key());
        let mut bytes = msg.to_bytes();
        bytes[0] = 9;
        assert!(matches!(
            ReconMessage::parse(&bytes),
            Err(WireError::BadVersion(9))
        ));
        let mut long = msg.to_bytes();
        long.push(0);
        assert!(matches!(
            ReconMessage::parse(&long),
            Err(WireError::TrailingBytes)
        ));
        // m >= n is implausible
        let mut weird = msg.to_bytes();
        weird[3] = 0;
        weird[4] = 10; // n = 10 < m = 50
        assert!(matches!(
            ReconMessage::parse(&weird),
            Err(WireError::BadDimensions { .. })
        ));
    }

    #[test]
    fn notification_success_requires_matching_key() {
        let fk = [0x42u8; 32];
        let n = Notification::success(&fk);
        let back = Notification::parse(&n.to_bytes()).unwrap();
        assert!(back.verify(&fk));
        assert!(!back.verify(&[0x43u8; 32]));
        let f = Notification::failure();
        assert!(!Notification::parse(&f.to_bytes()).unwrap().verify(&fk));
    }

    #[test]
    fn corrupted_notification_tag_fails() {
        let fk = [7u8; 32];
        let n = Notification::success(&fk);
        let mut bytes = n.to_bytes();
        bytes[5] ^= 0x80;
        assert!(!Notification::parse(&bytes).unwrap().verify(&fk));
    }
}
