#![no_main]

use dpcoverage::table::{read_private_counts, write_private_counts};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_private_counts(data) {
        for r in &records {
            // Coverage must never panic on accepted counts.
            let _ = r.coverage(Some(1));
        }
        let mut buf = Vec::new();
        write_private_counts(&mut buf, &records).unwrap();
        assert_eq!(read_private_counts(&buf[..]).unwrap(), records);
    }
});
