//! Command implementations behind the `uniqueid-sim` binary.
//!
//! Exit codes: 0 success, 1 domain failure (tampered ledger, runtime
//! error), 2 usage or config error. Stdout carries one JSON summary
//! object; diagnostics go to stderr.

use crate::config::ScenarioConfig;
use crate::engine::{replay, ReplayError};
use crate::ledger::Ledger;
use crate::sim::{attack_sweep, run_scenario};
use serde_json::json;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    code
}

fn load_config(path: &Path, seed: Option<u64>, epochs: Option<u64>) -> Result<ScenarioConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    let mut config = ScenarioConfig::from_json(&text).map_err(|e| e.to_string())?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(epochs) = epochs {
        config.epochs = epochs;
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), String> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| format!("writing {}: {e}", path.display()))
}

/// `run`: execute a scenario and write ledger.jsonl, metrics.csv and
/// report.json into the output directory.
pub fn cmd_run(config_path: &Path, seed: Option<u64>, epochs: Option<u64>, out_dir: &Path) -> i32 {
    let config = match load_config(config_path, seed, epochs) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    if let Err(e) = fs::create_dir_all(out_dir) {
        return fail(EXIT_USAGE, format!("creating {}: {e}", out_dir.display()));
    }
    let run = match run_scenario(&config) {
        Ok(r) => r,
        Err(crate::sim::SimError::Config(e)) => return fail(EXIT_USAGE, e),
        Err(e) => return fail(EXIT_FAILURE, e),
    };
    let report_json = serde_json::to_string_pretty(&run.report).expect("report serializes");
    for (name, contents) in [
        ("ledger.jsonl", run.ledger.to_jsonl()),
        ("metrics.csv", run.metrics.to_csv()),
        ("report.json", report_json.clone()),
    ] {
        if let Err(e) = write_file(out_dir, name, &contents) {
            return fail(EXIT_FAILURE, e);
        }
    }
    println!("{report_json}");
    EXIT_OK
}

/// `attack`: sweep collusion sizes and write frontier.csv plus per-k
/// reports.
pub fn cmd_attack(
    config_path: &Path,
    sweep: &str,
    trials: u64,
    out_dir: &Path,
) -> i32 {
    let config = match load_config(config_path, None, None) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    if config.adversary.is_none() {
        return fail(EXIT_USAGE, "config has no adversary plan");
    }
    if trials == 0 {
        return fail(EXIT_USAGE, "trials must be positive");
    }
    let (k_min, k_max) = match parse_sweep(sweep) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    if let Err(e) = fs::create_dir_all(out_dir) {
        return fail(EXIT_USAGE, format!("creating {}: {e}", out_dir.display()));
    }
    let (rows, reports) = match attack_sweep(&config, k_min, k_max, trials) {
        Ok(r) => r,
        Err(crate::sim::SimError::Config(e)) => return fail(EXIT_USAGE, e),
        Err(e) => return fail(EXIT_FAILURE, e),
    };
    let mut csv = String::from("k,success_prob,expected_cost\n");
    for row in &rows {
        csv.push_str(&format!("{},{:.9},{:.3}\n", row.k, row.success_prob, row.expected_cost));
    }
    if let Err(e) = write_file(out_dir, "frontier.csv", &csv) {
        return fail(EXIT_FAILURE, e);
    }
    for report in &reports {
        let name = format!("report_k{}.json", report.collusion_size);
        let body = serde_json::to_string_pretty(report).expect("report serializes");
        if let Err(e) = write_file(out_dir, &name, &body) {
            return fail(EXIT_FAILURE, e);
        }
    }
    let summary = json!({
        "rows": rows.len(),
        "k_min": k_min,
        "k_max": k_max,
        "trials": trials,
        "frontier": out_dir.join("frontier.csv"),
    });
    println!("{summary}");
    EXIT_OK
}

/// `verify`: check the hash chain, replay the log, print the state hash.
pub fn cmd_verify(ledger_path: &Path) -> i32 {
    let text = match fs::read_to_string(ledger_path) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_USAGE, format!("reading {}: {e}", ledger_path.display())),
    };
    let events = match Ledger::read_jsonl(text.as_bytes()) {
        Ok(events) => events,
        Err(e) => {
            // A corrupt line is tamper evidence, not a usage error.
            eprintln!("error: {e}");
            println!("{}", json!({ "ok": false, "error": "unparseable event" }));
            return EXIT_FAILURE;
        }
    };
    match replay(&events) {
        Ok(state) => {
            println!(
                "{}",
                json!({
                    "ok": true,
                    "height": events.len(),
                    "state_hash": state.state_hash().to_hex(),
                })
            );
            EXIT_OK
        }
        Err(ReplayError::ChainInvalid(height)) => {
            println!("{}", json!({ "ok": false, "first_invalid_height": height }));
            EXIT_FAILURE
        }
        Err(ReplayError::RejectedEvent { height, reason }) => {
            println!(
                "{}",
                json!({ "ok": false, "first_invalid_height": height, "reason": reason })
            );
            EXIT_FAILURE
        }
        Err(e) => {
            println!("{}", json!({ "ok": false, "error": e.to_string() }));
            EXIT_FAILURE
        }
    }
}

/// Parse an inclusive sweep range written as `a..b`.
pub fn parse_sweep(text: &str) -> Result<(u32, u32), String> {
    let (a, b) = text
        .split_once("..")
        .ok_or_else(|| format!("sweep must look like 3..10, got {text}"))?;
    let k_min: u32 = a.trim().parse().map_err(|e| format!("bad sweep start: {e}"))?;
    let k_max: u32 = b.trim().parse().map_err(|e| format!("bad sweep end: {e}"))?;
    if k_min > k_max {
        return Err("sweep start exceeds end".into());
    }
    Ok((k_min, k_max))
}

/// Thread cap from UNIQUEID_SIM_THREADS (0 or unset = automatic).
pub fn configure_threads() {
    if let Ok(v) = std::env::var("UNIQUEID_SIM_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let _ = std::io::stderr().flush();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_parsing() {
        assert_eq!(parse_sweep("3..10").unwrap(), (3, 10));
        assert_eq!(parse_sweep(" 5 .. 5 ").unwrap(), (5, 5));
        assert!(parse_sweep("10..3").is_err());
        assert!(parse_sweep("abc").is_err());
    }
}
