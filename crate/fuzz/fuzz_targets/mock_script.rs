#![no_main]

use essay_scorer::llm::MockScript;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = MockScript::from_toml_str(text);
        let _ = MockScript::from_json_str(text);
    }
});
