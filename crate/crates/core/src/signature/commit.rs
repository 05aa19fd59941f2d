//! 64-bit FNV-1a commitment over signature node indices.
//!
//! Each index is encoded as a 4-byte little-endian unsigned integer and the
//! encodings are hashed back to back.

use crate::error::{Error, Result};

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_extend(FNV_OFFSET_BASIS, bytes)
}

/// Continues an FNV-1a state with more bytes.
pub fn fnv1a64_extend(mut state: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

pub fn commit(indices: &[usize]) -> Result<u64> {
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::UnsortedIndices);
    }
    let mut h = FNV_OFFSET_BASIS;
    for &i in indices {
        let i = u32::try_from(i).map_err(|_| Error::IndexOutOfRange {
            index: i,
            len: u32::MAX as usize,
        })?;
        h = fnv1a64_extend(h, &i.to_le_bytes());
    }
    Ok(h)
}

pub fn verify_commit(indices: &[usize], digest: u64) -> bool {
    matches!(commit(indices), Ok(d) if d == digest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_list_is_offset_basis() {
        assert_eq!(commit(&[]).unwrap(), 0xcbf29ce484222325);
    }

    #[test]
    fn known_vectors() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn distinct_singletons() {
        let a = commit(&[0]).unwrap();
        let b = commit(&[1]).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, fnv1a64(&[0, 0, 0, 0]));
        assert_eq!(b, fnv1a64(&[1, 0, 0, 0]));
    }

    #[test]
    fn round_trip_and_unsorted() {
        let idx = [2, 5, 9, 100];
        assert!(verify_commit(&idx, commit(&idx).unwrap()));
        assert!(matches!(commit(&[3, 1]), Err(Error::UnsortedIndices)));
        assert!(matches!(commit(&[3, 3]), Err(Error::UnsortedIndices)));
    }
}
