#![no_main]

use libfuzzer_sys::fuzz_target;
use toolpose::dataset::Raster;

fuzz_target!(|data: &[u8]| {
    if let Ok(raster) = Raster::decode_ppm(data) {
        let encoded = raster.encode_ppm();
        let again = Raster::decode_ppm(&encoded).expect("writer output must parse");
        assert_eq!(raster, again);
    }
});
