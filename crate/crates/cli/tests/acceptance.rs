//! Acceptance suite: one test per criterion, each printing a single verdict
//! line followed by its sub-checks. Run with `--nocapture` to see them all.

use std::path::Path;
use std::process::Command;

use prodnet::verify::{self, CriterionOutcome, VerifyOptions};

fn report(outcome: CriterionOutcome) {
    let verdict = if outcome.passed { "PASS" } else { "FAIL" };
    println!("criterion {}: {verdict} {}", outcome.id, outcome.title);
    for c in outcome.checks.iter().filter(|c| c.gating && !c.passed) {
        println!("    {}: {}", c.name, c.detail);
    }
    assert!(outcome.passed, "{outcome}");
}

macro_rules! criterion {
    ($name:ident, $f:path) => {
        #[test]
        fn $name() {
            report($f(&VerifyOptions::default()));
        }
    };
}

criterion!(criterion_01_equilibrium_correctness, verify::criterion_1);
criterion!(criterion_02_walk_calculus, verify::criterion_2);
criterion!(criterion_03_ordinal_potential, verify::criterion_3);
criterion!(criterion_04_self_supply_best_response, verify::criterion_4);
criterion!(criterion_05_clustered_equilibria, verify::criterion_5);
criterion!(criterion_06_hicks_neutral_invariance, verify::criterion_6);
criterion!(criterion_07_returns_to_diversification, verify::criterion_7);
criterion!(criterion_08_log_gap, verify::criterion_8);
criterion!(criterion_09_cluster_inverse, verify::criterion_9);
criterion!(criterion_10_disruption_risk, verify::criterion_10);
criterion!(criterion_11_trade_policy, verify::criterion_11);

fn run_verify(out: &Path) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_prodnet-eq"))
        .args(["verify", "--out"])
        .arg(out)
        .output()
        .expect("binary runs");
    status.status.code().expect("exit code")
}

#[test]
fn criterion_12_verify_is_deterministic() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let codes = (run_verify(first.path()), run_verify(second.path()));
    // 0 when every criterion passes, 3 when some criterion fails; both runs must agree.
    let codes_ok = codes.0 == codes.1 && matches!(codes.0, 0 | 3);
    let mut same = true;
    for file in ["verify.json", "verify_checks.csv"] {
        let a = std::fs::read(first.path().join(file)).unwrap();
        let b = std::fs::read(second.path().join(file)).unwrap();
        same &= a == b;
    }
    let passed = codes_ok && same;
    println!(
        "criterion 12: {} verify reports byte-identical across runs (exit codes {} and {})",
        if passed { "PASS" } else { "FAIL" },
        codes.0,
        codes.1
    );
    assert!(passed);
}
