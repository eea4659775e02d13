//! Release tables are read back by `simulate-error` and `summarize`.
//! Anything accepted must survive a write/read cycle, except that the
//! published coverage is rounded to three decimals on write.

#![no_main]

use dpcoverage::table::{read_release, write_release};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_release(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_release(&mut buf, &rows).unwrap();
    let again = read_release(&buf[..]).expect("written release table must parse");
    assert_eq!(again.len(), rows.len());
    for (a, b) in again.iter().zip(&rows) {
        assert_eq!(a.zone, b.zone);
        assert_eq!(a.broadband_usage_raw, b.broadband_usage_raw);
        assert_eq!(a.errors, b.errors);
        assert_eq!(a.epsilon, b.epsilon);
    }
});
