#![no_main]

//! Input: a JSON data header, a newline, then the binary body.

use libfuzzer_sys::fuzz_target;
use liftkit::io::{decode_data, encode_data, parse_data_header};

fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == b'\n') else { return };
    let Ok(text) = std::str::from_utf8(&data[..split]) else { return };
    let Ok(header) = parse_data_header(text) else { return };
    let body = &data[split + 1..];
    if let Ok(g) = decode_data(&header, body) {
        assert!(g.iter().all(|x| x.is_finite()));
        assert_eq!(encode_data(&g), body);
    }
});
