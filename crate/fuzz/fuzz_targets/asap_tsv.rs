#![no_main]

use essay_scorer::corpus::{load_asap_reader, AsapColumns};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = load_asap_reader(data, &essay_scorer_fuzz::catalog(), &AsapColumns::default());
});
