#![no_main]
use libfuzzer_sys::fuzz_target;
use netsync::config::set_param;
use serde_json::Value;

// First line is the dot path, the rest is the JSON document. Setting the
// same value twice must be idempotent.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Some((path, doc)) = text.split_once('\n') else { return };
    let Ok(doc) = serde_json::from_str::<Value>(doc) else { return };
    let value = path.len() as f64 * 0.25 - 3.0;
    if let Ok(updated) = set_param(&doc, path, value) {
        let again = set_param(&updated, path, value).expect("path stays valid");
        assert_eq!(again, updated);
    }
});
