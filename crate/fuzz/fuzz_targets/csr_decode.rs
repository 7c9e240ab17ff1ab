#![no_main]

use distembed::graph::{decode_binary_csr, encode_binary_csr};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(g) = decode_binary_csr(data) {
        assert_eq!(encode_binary_csr(&g), data);
    }
});
