#![no_main]

use essay_scorer::textstats::extract_features;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let f = extract_features(&text);
    assert!(f.unique_word_count <= f.word_count);
    assert!(f.long_word_count <= f.word_count);
});
