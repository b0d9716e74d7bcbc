#![no_main]

use libfuzzer_sys::fuzz_target;
use loops_spmm::scheduler::ScheduleDocument;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(doc) = ScheduleDocument::from_json(text) {
        assert!(doc.model().is_finite());
        let back = ScheduleDocument::from_json(&doc.to_json()).expect("serialized document parses");
        assert_eq!(back, doc);
    }
});
