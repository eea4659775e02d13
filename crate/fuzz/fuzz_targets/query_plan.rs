#![no_main]

use dpcoverage::accountant::QueryPlan;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(plan) = data.parse::<QueryPlan>() {
        let text = plan.to_string();
        let again: QueryPlan = text.parse().expect("display form must parse");
        assert_eq!(again, plan);
        // Totals may overflow on absurd inputs but must not panic.
        let _ = plan.total_epsilon();
    }
});
