#![allow(dead_code)]

use serde_json::{json, Value};

use gridshare::scenario::{parse_scenario, validate_scenario, LoadMode, Scenario};

pub fn scenario(v: Value) -> Scenario {
    let s = parse_scenario(&v.to_string(), LoadMode::Strict).expect("test scenario parses");
    let violations = validate_scenario(&s);
    assert!(violations.is_empty(), "{violations:?}");
    s
}

/// One member at node 1 of a two-node line, with zero network tariffs
/// unless overridden in `tariffs`.
pub fn single_member(member: Value, prices: &[f64], delta_t: f64, tariffs: Value) -> Scenario {
    let slots = prices.len();
    let mut t = json!({
        "suppliers": {"s": prices},
        "gamma_up": 0.0, "gamma_loss": 0.0, "gamma_flow": 0.0
    });
    for (k, v) in tariffs.as_object().into_iter().flatten() {
        t[k] = v.clone();
    }
    let mut m = json!({"id": "a", "node": 1, "supplier": "s"});
    for (k, v) in member.as_object().expect("member object") {
        m[k] = v.clone();
    }
    scenario(json!({
        "schema_version": 1,
        "horizon": {"slots": slots, "delta_t_h": delta_t},
        "prosumers": [m],
        "network": {
            "node_count": 2, "voltage_base_v": 400, "power_base_kva": 100,
            "branches": [{"from": 0, "to": 1, "r_ohm": 0.0, "x_ohm": 0.0, "length_km": 0.1}]
        },
        "tariffs": t
    }))
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
