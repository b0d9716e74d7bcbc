#![no_main]

use libfuzzer_sys::fuzz_target;
use loops_spmm::format::{convert_csr_to_loops, loops_to_csr};
use loops_spmm::sparse::{parse_matrix_market, parse_matrix_market_with_limit, write_matrix_market};

// Small dimension cap so accepted inputs stay cheap to convert.
const MAX_DIM: usize = 1 << 12;

fuzz_target!(|data: &[u8]| {
    let Ok(a) = parse_matrix_market_with_limit(data, MAX_DIM) else {
        return;
    };
    a.validate().expect("parser output is valid CSR");
    let again = parse_matrix_market(write_matrix_market(&a).as_bytes()).expect("written matrix parses");
    assert_eq!(again, a);
    let rb = a.nrows() / 2;
    let m = convert_csr_to_loops(&a, rb, 8).expect("conversion of valid CSR succeeds");
    assert_eq!(loops_to_csr(&m), a);
});
