//! Stage seeds derived from one master seed.
//!
//! `derive(master, tag)` is FNV-1a 64 over the master seed's eight
//! little-endian bytes followed by the UTF-8 bytes of the tag.

use crate::signature::commit::{fnv1a64, fnv1a64_extend};

pub fn derive(master: u64, tag: &str) -> u64 {
    fnv1a64_extend(fnv1a64(&master.to_le_bytes()), tag.as_bytes())
}
