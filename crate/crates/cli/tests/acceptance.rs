//! Acceptance run: the full verification suite at the default seed, printed
//! as one pass/fail line per criterion with every metric at its threshold.
//! The suite is run twice and the seeded CSV artifacts must match byte for
//! byte, which extends the in-suite determinism criterion across processes
//! sharing no state but the seed.

use simlearn_cli::verify::{self, CriterionResult, Relation, VerifyOptions};
use std::process::ExitCode;

fn describe(c: &CriterionResult) -> String {
    let metrics: Vec<String> = c
        .metrics
        .iter()
        .map(|m| match m.relation {
            Relation::Logged => format!("{}={:.4e}", m.name, m.value),
            r => format!("{}={:.4e} {} {:.4e}{}", m.name, m.value, r.symbol(), m.threshold, if m.pass { "" } else { " (violated)" }),
        })
        .collect();
    format!(
        "{} criterion {:>2} {}: {} [{:.1}s of {:.0}s]",
        if c.pass { "PASS" } else { "FAIL" },
        c.id,
        c.name,
        metrics.join("; "),
        c.runtime_s,
        c.budget_s
    )
}

fn main() -> ExitCode {
    let opts = VerifyOptions::new(verify::DEFAULT_SEED);
    println!("acceptance: verification suite at seed {}", opts.seed);
    let first = verify::run(&opts, |c| println!("{}", describe(c)));
    let second = verify::run(&opts, |_| {});
    let (a, b) = (first.csv(), second.csv());
    let identical = a == b;
    println!(
        "{} cross-run determinism: verify.csv {} across two runs ({} bytes)",
        if identical { "PASS" } else { "FAIL" },
        if identical { "byte-identical" } else { "differs" },
        a.len()
    );
    if !identical {
        for (i, (x, y)) in a.lines().zip(b.lines()).enumerate() {
            if x != y {
                println!("  first difference at line {}:\n    {x}\n    {y}", i + 1);
                break;
            }
        }
    }
    let failed: Vec<u32> = first.criteria.iter().filter(|c| !c.pass).map(|c| c.id).collect();
    let pass = failed.is_empty() && second.pass && identical;
    println!("acceptance {}", if pass { "PASS" } else { "FAIL" });
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
    }
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
