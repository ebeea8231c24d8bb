#![no_main]

use essay_scorer::promptkit::PromptTemplate;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = PromptTemplate::from_toml_str(text);
    }
});
