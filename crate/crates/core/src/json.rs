//! JSON helpers producing byte-stable output (UTF-8, sorted object keys).

use serde::Serialize;

use crate::error::Result;

/// Compact JSON with object keys in sorted order.
pub fn to_sorted_string<T: Serialize>(value: &T) -> Result<String> {
    // serde_json::Value stores objects in a BTreeMap, so a round trip sorts keys
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string(&v)?)
}

/// Indented variant of [`to_sorted_string`].
pub fn to_sorted_string_pretty<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string_pretty(&v)?)
}
