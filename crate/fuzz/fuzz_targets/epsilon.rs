#![no_main]

use dpcoverage::Epsilon;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(e) = data.parse::<Epsilon>() {
        assert_eq!(e.to_string().parse::<Epsilon>().unwrap(), e);
        assert!(e.as_f64() >= 0.0);
    }
});
