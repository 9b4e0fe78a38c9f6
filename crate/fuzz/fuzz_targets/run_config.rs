#![no_main]

use libfuzzer_sys::fuzz_target;
use liftkit_cli::parse_run_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_run_config(text) {
            // Whatever is accepted survives a round trip unchanged.
            let again = parse_run_config(&serde_json::to_string(&cfg).unwrap()).expect("re-parse");
            assert_eq!(again, cfg);
        }
    }
});
