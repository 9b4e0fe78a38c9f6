#![no_main]

use libfuzzer_sys::fuzz_target;
use liftkit::io::parse_image_header;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(h) = parse_image_header(text) {
            // Accepted headers describe a bounded, nonempty body.
            let n = h.samples().expect("accepted header has a size");
            assert!(n > 0 && n <= liftkit::io::MAX_SAMPLES);
        }
    }
});
