#![no_main]

use essay_scorer::scoreparse::{interpret_fallback_reply, RangePolicy};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let reply = String::from_utf8_lossy(data);
    for meta in essay_scorer_fuzz::metas() {
        let _ = interpret_fallback_reply(&reply, "raw", &meta, RangePolicy::Clamp);
    }
});
