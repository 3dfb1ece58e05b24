//! Bit-sequence currency between the frame codec and the modem.
//!
//! Bits are stored one per element with values 0/1, MSB-first relative to the
//! octets they came from.

use std::fmt;

/// An ordered sequence of bits (values 0 or 1), MSB-first when packed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitSequence {
    bits: Vec<u8>,
}

impl BitSequence {
    pub fn new() -> Self {
        Self { bits: Vec::new() }
    }

    /// Builds a sequence from raw 0/1 values. Panics on any other value,
    /// which indicates a programming error rather than bad input data.
    pub fn from_bits(bits: Vec<u8>) -> Self {
        assert!(
            bits.iter().all(|&b| b <= 1),
            "bit values must be 0 or 1"
        );
        Self { bits }
    }

    /// Unpacks octets MSB-first: byte 0xA0 becomes bits 1,0,1,0,0,0,0,0.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let mut bits = Vec::with_capacity(bytes.len() * 8);
        for &byte in bytes {
            for shift in (0..8).rev() {
                bits.push((byte >> shift) & 1);
            }
        }
        Self { bits }
    }

    /// Packs bits MSB-first into octets. The length must be a multiple of 8.
    pub fn to_bytes(&self) -> Vec<u8> {
        assert!(
            self.bits.len() % 8 == 0,
            "bit count {} is not a whole number of octets",
            self.bits.len()
        );
        self.bits
            .chunks_exact(8)
            .map(|chunk| chunk.iter().fold(0u8, |acc, &b| (acc << 1) | b))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    pub fn push(&mut self, bit: u8) {
        assert!(bit <= 1, "bit values must be 0 or 1");
        self.bits.push(bit);
    }

    pub fn extend(&mut self, other: &BitSequence) {
        self.bits.extend_from_slice(&other.bits);
    }

    /// Sub-range view as a new sequence.
    pub fn slice(&self, start: usize, end: usize) -> BitSequence {
        Self {
            bits: self.bits[start..end].to_vec(),
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, u8> {
        self.bits.iter()
    }
}

impl std::ops::Index<usize> for BitSequence {
    type Output = u8;

    fn index(&self, i: usize) -> &u8 {
        &self.bits[i]
    }
}

impl fmt::Display for BitSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromIterator<u8> for BitSequence {
    fn from_iter<T: IntoIterator<Item = u8>>(iter: T) -> Self {
        Self::from_bits(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unpack_is_msb_first() {
        let bits = BitSequence::from_bytes(&[0xA0]);
        assert_eq!(bits.as_slice(), &[1, 0, 1, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn pack_unpack_round_trip() {
        let bytes = vec![0x00, 0xFF, 0xAA, 0x35, 0x01];
        assert_eq!(BitSequence::from_bytes(&bytes).to_bytes(), bytes);
    }

    #[test]
    fn length_is_eight_per_octet() {
        assert_eq!(BitSequence::from_bytes(&[0u8; 25]).len(), 200);
    }

    #[test]
    #[should_panic(expected = "whole number of octets")]
    fn pack_rejects_partial_octet() {
        BitSequence::from_bits(vec![1, 0, 1]).to_bytes();
    }
}
