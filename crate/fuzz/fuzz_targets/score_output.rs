#![no_main]

use essay_scorer::scoreparse::{parse_deterministic, RangePolicy};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let raw = String::from_utf8_lossy(data);
    for meta in essay_scorer_fuzz::metas() {
        for policy in [RangePolicy::Clamp, RangePolicy::Reject] {
            if let Ok(parsed) = parse_deterministic(&raw, &meta, policy) {
                for (name, value) in &parsed.scores {
                    let (lo, hi) = meta.trait_range(name);
                    assert!(value.is_finite() && *value >= lo as f64 && *value <= hi as f64);
                }
            }
        }
    }
});
