//! Runs every verification suite on the default configuration and prints one
//! line per acceptance criterion. Set `AZEMA_ACCEPTANCE_SMOKE=1` for a quick
//! run at toy sizes; the statistical criteria are not meaningful there.

use std::process::ExitCode;

use azema::harness::{emit, run_suite, timings_csv, CheckResult, ExperimentConfig, Format, Suite, SuiteReport};
use azema::par;

const HITTING_BUDGET_S: f64 = 60.0;

struct Criterion {
    id: usize,
    label: &'static str,
    suite: Suite,
    select: fn(&CheckResult) -> bool,
}

fn any(_: &CheckResult) -> bool {
    true
}

const CRITERIA: [Criterion; 10] = [
    Criterion {
        id: 1,
        label: "hitting density: closed form vs bridge Monte Carlo",
        suite: Suite::Hitting,
        select: any,
    },
    Criterion {
        id: 2,
        label: "inverse-moment and density bounds",
        suite: Suite::Bounds,
        select: any,
    },
    Criterion {
        id: 3,
        label: "identity A: Z + int(lambda Z) is a mean-one martingale",
        suite: Suite::Identities,
        select: |c| c.name.starts_with("martingale_a."),
    },
    Criterion {
        id: 4,
        label: "identity B: D + Lambda is a mean-one martingale",
        suite: Suite::Identities,
        select: |c| c.name.starts_with("martingale_b."),
    },
    Criterion {
        id: 5,
        label: "zero signal reduces to the prior survival",
        suite: Suite::Degenerate,
        select: any,
    },
    Criterion {
        id: 6,
        label: "multiplicative decomposition of Z",
        suite: Suite::Decomposition,
        select: any,
    },
    Criterion {
        id: 7,
        label: "KS residual has mean zero",
        suite: Suite::Ks,
        select: any,
    },
    Criterion {
        id: 8,
        label: "pricing routes agree",
        suite: Suite::Pricing,
        select: any,
    },
    Criterion {
        id: 9,
        label: "rebate valuation",
        suite: Suite::Rebate,
        select: any,
    },
    Criterion {
        id: 10,
        label: "byte-identical across worker counts",
        suite: Suite::Determinism,
        select: any,
    },
];

fn line(c: &CheckResult, name: &str) -> String {
    let band = match c.lower {
        Some(lo) => format!("[{lo}, {}]", c.upper),
        None => format!("|.| <= {}", c.upper),
    };
    let retry = if c.attempts > 1 { " (rerun)" } else { "" };
    format!(
        "      {} {} = {:.4e} {band}{retry}",
        if c.pass { "ok  " } else { "FAIL" },
        name,
        c.statistic
    )
}

fn judge(report: &SuiteReport) -> bool {
    let mut all = true;
    let mut used = vec![false; report.checks.len()];
    for cr in &CRITERIA {
        let picked: Vec<(usize, &CheckResult)> = report
            .checks
            .iter()
            .enumerate()
            .filter(|(_, c)| c.suite == cr.suite && (cr.select)(c))
            .collect();
        let mut pass = !picked.is_empty() && picked.iter().all(|(_, c)| c.pass);
        let mut extra = String::new();
        if cr.suite == Suite::Hitting {
            let secs = picked.first().map_or(f64::INFINITY, |(_, c)| c.runtime_s);
            pass &= secs < HITTING_BUDGET_S;
            extra = format!(" ({secs:.1} s of {HITTING_BUDGET_S} s)");
        }
        println!(
            "{} criterion {:>2}: {}{extra}",
            if pass { "PASS" } else { "FAIL" },
            cr.id,
            cr.label
        );
        for (i, c) in picked {
            used[i] = true;
            println!("{}", line(c, &c.name));
        }
        all &= pass;
    }
    let rest: Vec<&CheckResult> = report
        .checks
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(c, _)| c)
        .collect();
    if !rest.is_empty() {
        println!("other checks:");
        for c in rest {
            println!("{}", line(c, &format!("{}.{}", c.suite, c.name)));
            all &= c.pass;
        }
    }
    all
}

fn main() -> ExitCode {
    // Accept and ignore libtest flags such as `--nocapture`.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let mut cfg = ExperimentConfig::default();
    if std::env::var("AZEMA_ACCEPTANCE_SMOKE").is_ok_and(|v| v == "1") {
        cfg = cfg.smoke();
    }
    cfg.harness.suites = Suite::ALL.to_vec();
    let run = || run_suite(&cfg);
    let report = match par::env_threads() {
        Some(n) => par::with_threads(n, run),
        None => run(),
    };
    let report = match report {
        Ok(r) => r,
        Err(e) => {
            println!("FAIL acceptance: {e}");
            return ExitCode::FAILURE;
        }
    };
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = emit(&report, Format::Json, &dir.join("report.json"));
    let _ = std::fs::write(dir.join("timings.csv"), timings_csv(&report));
    let ok = judge(&report);
    println!(
        "acceptance: {}",
        if ok {
            "all criteria passed"
        } else {
            "some criteria failed"
        }
    );
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
