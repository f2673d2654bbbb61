#![no_main]

use libfuzzer_sys::fuzz_target;
use toolpose::dataset::{format_labels, parse_labels};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_labels(text) {
        // Serialization fixpoint at 6-decimal precision.
        let once = format_labels(&records);
        let reparsed = parse_labels(&once).expect("writer output must parse");
        assert_eq!(format_labels(&reparsed), once);
    }
});
