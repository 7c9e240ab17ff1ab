#![no_main]

use distembed::graph::{decode_binary_csr, encode_binary_csr, parse_edge_list, Directedness};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for dir in [Directedness::Undirected, Directedness::Directed] {
        if let Ok((g, _)) = parse_edge_list(text, dir) {
            // the file format has no id section, so only structure survives
            let back = decode_binary_csr(&encode_binary_csr(&g)).expect("own encoding decodes");
            assert_eq!(back.row_offsets(), g.row_offsets());
            assert_eq!(back.all_neighbors(), g.all_neighbors());
            assert_eq!(back.all_weights(), g.all_weights());
        }
    }
});
