#![no_main]

use libfuzzer_sys::fuzz_target;
use toolpose::stream::{parse_points_stream, write_points_frame};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(frames) = parse_points_stream(text) {
        let mut once = String::new();
        for frame in &frames {
            write_points_frame(&mut once, frame);
        }
        let reparsed = parse_points_stream(&once).expect("writer output must parse");
        let mut twice = String::new();
        for frame in &reparsed {
            write_points_frame(&mut twice, frame);
        }
        assert_eq!(once, twice);
    }
});
