//! Full acceptance run: every numbered criterion at its stated scale and
//! tolerance, one verdict line each. Exits non-zero on any failure.

use std::process::ExitCode;

use fractdim::verify::{self, Scale};

fn main() -> ExitCode {
    let (ids, _) = verify::suite("all").expect("built-in suite");
    let reports = verify::run(&ids, Scale::Full);
    for r in &reports {
        for c in r.checks.iter().filter(|c| !c.pass) {
            println!("    {c}");
        }
        println!("{}", r.summary());
    }
    let failed = reports.iter().filter(|r| !r.pass()).count();
    println!(
        "acceptance: {} of {} criteria passed",
        reports.len() - failed,
        reports.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
