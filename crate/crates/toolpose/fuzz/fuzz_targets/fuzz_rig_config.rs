#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Parsing must never panic; accepted rigs must round-trip through the
    // writer with every invariant intact.
    if let Ok(rig) = toolpose::camera::parse_rig(text) {
        let json = toolpose::camera::rig_to_json(&rig);
        let again = toolpose::camera::parse_rig(&json).expect("writer output must parse");
        assert_eq!(rig.len(), again.len());
        for (a, b) in rig.cameras().iter().zip(again.cameras()) {
            assert_eq!(a, b);
        }
    }
});
