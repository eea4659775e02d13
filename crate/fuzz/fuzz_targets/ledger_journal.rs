#![no_main]

use dpcoverage::accountant::{read_journal, BudgetLedger};
use dpcoverage::Epsilon;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(entries) = read_journal(data) {
        for e in &entries {
            let line = e.to_journal_line();
            assert!(read_journal(line.as_bytes()).is_ok());
        }
        let _ = BudgetLedger::from_entries(Epsilon::from_units(u64::MAX), entries);
    }
});
