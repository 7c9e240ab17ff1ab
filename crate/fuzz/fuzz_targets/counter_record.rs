#![no_main]

use distembed::transport::parse_counter_record;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(line) = std::str::from_utf8(data) {
        let _ = parse_counter_record(line);
    }
});
