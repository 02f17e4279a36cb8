//! Runs every closed-form oracle against direct recomputation on random
//! instances and prints the worst error of each.

use capo::cli::oracle_suite;
use capo::Result;

fn main() -> Result<()> {
    for check in oracle_suite(1000, 0)? {
        let verdict = if check.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {:<22} worst error {:e}", check.name, check.worst);
    }
    Ok(())
}
