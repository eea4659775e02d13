#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = dpcoverage::table::read_households(data) {
        assert!(records.iter().all(|r| r.households() >= 1));
        let mut buf = Vec::new();
        dpcoverage::table::write_households(&mut buf, &records).unwrap();
        assert_eq!(dpcoverage::table::read_households(&buf[..]).unwrap(), records);
    }
});
