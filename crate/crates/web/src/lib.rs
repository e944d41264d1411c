//! Browser bindings. Every function returns a JSON string so the page can
//! stay plain JavaScript.

use kquorum::harness::{bundled, bundled_names, run_scenario};
use kquorum::params::{check_feasible_async, QuorumParams};
use kquorum::selection::select_from_seed;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Feasibility conditions and derived bounds.
#[wasm_bindgen]
pub fn bounds(n: usize, f: usize, m: usize, k1: usize, k2: usize, mu: f64) -> Result<String, JsError> {
    let p = QuorumParams::canonical(n, f, m, k1, k2, mu).map_err(err)?;
    serde_json::to_string(&check_feasible_async(&p)).map_err(err)
}

/// The quorum a seed string selects, plus how many members fall among the
/// first `f` validators.
#[wasm_bindgen]
pub fn select(seed: &str, n: usize, m: usize, f: usize) -> Result<String, JsError> {
    let q = select_from_seed(seed.as_bytes(), n, m).map_err(err)?;
    let mut members = q.members.clone();
    members.sort_unstable();
    let corrupted = members.iter().filter(|&&v| v < f).count();
    Ok(json!({ "members": members, "corrupted": corrupted }).to_string())
}

#[wasm_bindgen]
pub fn scenarios() -> String {
    let list: Vec<_> = bundled_names()
        .map(|n| json!({ "name": n, "description": bundled(n).map(|c| c.description).unwrap_or_default() }))
        .collect();
    serde_json::Value::from(list).to_string()
}

/// Runs a bundled scenario and returns the report with a short event log.
#[wasm_bindgen]
pub fn run(name: &str, seed: u64) -> Result<String, JsError> {
    let cfg = bundled(name).ok_or_else(|| err(format!("no bundled scenario `{name}`")))?;
    let out = run_scenario(&cfg, Some(seed)).map_err(err)?;
    let events: Vec<String> = out
        .trace
        .events()
        .filter(|(_, _, _, e)| {
            !matches!(
                e.name(),
                "validated"
                    | "denied"
                    | "settle_marked"
                    | "seller_settle_signed"
                    | "propagate_learned"
                    | "propagate_terminated"
            )
        })
        .take(200)
        .map(|(seq, party, corrupted, e)| {
            format!("#{seq} party {party}{} {}", if corrupted { " (corrupted)" } else { "" }, e.name())
        })
        .collect();
    Ok(json!({
        "report": out.report,
        "exit_code": out.report.exit_code(),
        "records": out.trace.records.len(),
        "digest": out.trace.digest().to_hex(),
        "warnings": out.warnings,
        "events": events,
    })
    .to_string())
}
