//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

use slideret::selftest::{self, Scale};

fn main() {
    let scratch = tempfile::tempdir().expect("scratch dir");
    let checks = selftest::run_all(Scale::Full, scratch.path());
    println!();
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("\nacceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
