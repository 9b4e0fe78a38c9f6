#![no_main]

//! Input: a JSON image header, a newline, then the binary body.

use libfuzzer_sys::fuzz_target;
use liftkit::io::{decode_images, encode_images, parse_image_header};

fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == b'\n') else { return };
    let Ok(text) = std::str::from_utf8(&data[..split]) else { return };
    let Ok(header) = parse_image_header(text) else { return };
    let body = &data[split + 1..];
    if let Ok(images) = decode_images(&header, body) {
        assert_eq!(images.len(), header.count);
        assert_eq!(encode_images(&images), body);
    }
});
