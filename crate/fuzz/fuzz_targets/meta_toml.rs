#![no_main]

use std::path::Path;

use essay_scorer::corpus::MetaCatalog;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = MetaCatalog::from_toml_str(text, Path::new("/nonexistent"));
    }
});
