#![no_main]

use geostein::pointfile::{format_points, parse_points};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(points) = parse_points(text) {
        let again = parse_points(&format_points(&points)).expect("formatted output parses");
        assert_eq!(points, again);
    }
});
