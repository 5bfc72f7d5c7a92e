//! Canonical JSON encoding shared by every on-disk artifact.
//!
//! Values go through [`serde_json::Value`], whose object map is a `BTreeMap`
//! in this build, so keys come out sorted. Floats use the shortest
//! round-tripping representation. Output is pretty-printed with a trailing
//! newline so golden files diff cleanly.

use alloc::vec::Vec;

use serde::Serialize;

/// Encodes `value` canonically: sorted keys, two-space indent, trailing newline.
pub fn to_canonical_vec<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, serde_json::Error> {
    let tree = serde_json::to_value(value)?;
    let mut out = serde_json::to_vec_pretty(&tree)?;
    out.push(b'\n');
    Ok(out)
}
