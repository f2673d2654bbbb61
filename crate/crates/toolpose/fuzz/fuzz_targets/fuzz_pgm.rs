#![no_main]

use libfuzzer_sys::fuzz_target;
use toolpose::dataset::{Mask, MaskPair};

fuzz_target!(|data: &[u8]| {
    if let Ok(mask) = Mask::decode_pgm(data) {
        let encoded = mask.encode_pgm();
        let again = Mask::decode_pgm(&encoded).expect("writer output must parse");
        assert_eq!(mask, again);
        // The subset invariant check must not panic either way.
        let empty = Mask::new(mask.width(), mask.height(), false);
        let _ = MaskPair::new(mask.clone(), empty);
        let full = Mask::new(mask.width(), mask.height(), true);
        let _ = MaskPair::new(mask, full);
    }
});
