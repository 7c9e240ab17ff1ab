#![no_main]

use distembed::pipeline::decode_embeddings;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((ids, dim, rows)) = decode_embeddings(data) {
        assert_eq!(rows.len(), ids.len() * dim);
    }
});
