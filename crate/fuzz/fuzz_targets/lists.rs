#![no_main]

use geostein::experiment::{parse_n_grid, parse_seeds};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(grid) = parse_n_grid(text) {
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }
    if let Ok(seeds) = parse_seeds(text) {
        assert!(!seeds.is_empty());
    }
});
