#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = dpcoverage::table::read_counts(data) {
        let mut buf = Vec::new();
        dpcoverage::table::write_counts(&mut buf, &records).unwrap();
        assert_eq!(dpcoverage::table::read_counts(&buf[..]).unwrap(), records);
    }
});
