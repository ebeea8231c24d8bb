#![no_main]

use essay_scorer::corpus::{load_ellipse_reader, EllipseColumns};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = load_ellipse_reader(data, &EllipseColumns::default());
});
