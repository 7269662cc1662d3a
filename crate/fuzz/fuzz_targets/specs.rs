#![no_main]

use geostein::experiment::PointRegime;
use geostein::kernels::KernelSpec;
use geostein::targets::TargetSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(k) = text.parse::<KernelSpec>() {
        assert_eq!(k.to_string().parse::<KernelSpec>().unwrap(), k);
        let _ = k.build();
    }
    if let Ok(t) = text.parse::<TargetSpec>() {
        assert_eq!(t.to_string().parse::<TargetSpec>().unwrap(), t);
    }
    if let Ok(p) = text.parse::<PointRegime>() {
        assert_eq!(p.to_string().parse::<PointRegime>().unwrap(), p);
    }
});
