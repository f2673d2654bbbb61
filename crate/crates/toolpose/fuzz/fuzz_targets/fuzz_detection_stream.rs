#![no_main]

use libfuzzer_sys::fuzz_target;
use toolpose::stream::{parse_detection_stream, write_detection_frame, DetectionStreamParser};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // The lenient per-frame iterator must never panic, whatever the input.
    for _ in DetectionStreamParser::new(text) {}

    // Accepted streams reach a serialization fixpoint after one rewrite
    // (the first write quantizes to 6 decimals).
    if let Ok(frames) = parse_detection_stream(text) {
        let mut once = String::new();
        for frame in &frames {
            write_detection_frame(&mut once, frame);
        }
        let reparsed = parse_detection_stream(&once).expect("writer output must parse");
        let mut twice = String::new();
        for frame in &reparsed {
            write_detection_frame(&mut twice, frame);
        }
        assert_eq!(once, twice);
    }
});
