use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    SchemaVersion,
    HorizonInvalid,
    HorizonMismatch,
    EmptyCommunity,
    ApplianceInvalid,
    ApplianceInfeasible,
    BatteryInvalid,
    BatteryOverfull,
    PowerFactorRange,
    UnknownNode,
    InterfaceNode,
    DuplicateNode,
    UnknownSupplier,
    BranchInvalid,
    NetworkNotRadial,
    NetworkDisconnected,
    BasesInvalid,
    VoltageBoundsInvalid,
    TariffInvalid,
    OptionsInvalid,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit enum serializes");
        write!(f, "{}", s.as_str().unwrap_or("UNKNOWN"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// JSON path of the offending value, e.g. `prosumers[1].battery`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.code, self.path, self.message)
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, code: ViolationCode, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation {
            code,
            path: path.into(),
            message: message.into(),
        });
    }
}

fn finite_nonneg(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

/// Checks every scenario invariant and returns the violations found.
///
/// An empty list means the scenario is valid. The function is pure; the
/// order of the returned violations follows the document order.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    use ViolationCode::*;
    let mut out = Collector(Vec::new());

    if s.schema_version != super::SCHEMA_VERSION {
        out.push(
            SchemaVersion,
            "schema_version",
            format!(
                "unsupported schema version {} (expected {})",
                s.schema_version,
                super::SCHEMA_VERSION
            ),
        );
    }

    let t = s.horizon.slots;
    let dt = s.horizon.delta_t_h;
    if t == 0 {
        out.push(HorizonInvalid, "horizon.slots", "horizon needs at least one slot");
    }
    if !(dt.is_finite() && dt > 0.0) {
        out.push(HorizonInvalid, "horizon.delta_t_h", "interval duration must be positive");
    }

    if s.prosumers.is_empty() {
        out.push(EmptyCommunity, "prosumers", "community has no members");
    }

    let node_count = s.network.node_count;
    let mut seen_nodes = BTreeSet::new();
    for (m, p) in s.prosumers.iter().enumerate() {
        let base = format!("prosumers[{m}]");
        if p.base_load_kw.len() != t {
            out.push(
                HorizonMismatch,
                format!("{base}.base_load_kw"),
                format!("expected {t} values, found {}", p.base_load_kw.len()),
            );
        }
        if p.base_load_kw.iter().any(|v| !v.is_finite()) {
            out.push(HorizonMismatch, format!("{base}.base_load_kw"), "non-finite load value");
        }
        if !(p.power_factor > 0.0 && p.power_factor <= 1.0) {
            out.push(
                PowerFactorRange,
                format!("{base}.power_factor"),
                "power factor must lie in (0, 1]",
            );
        }
        if p.node == 0 {
            out.push(
                InterfaceNode,
                format!("{base}.node"),
                "node 0 is the community interface and cannot host a member",
            );
        } else if p.node >= node_count {
            out.push(
                UnknownNode,
                format!("{base}.node"),
                format!("node {} does not exist in the network", p.node),
            );
        } else if !seen_nodes.insert(p.node) {
            out.push(
                DuplicateNode,
                format!("{base}.node"),
                format!("node {} already hosts another member", p.node),
            );
        }
        if !s.tariffs.suppliers.contains_key(&p.supplier) {
            out.push(
                UnknownSupplier,
                format!("{base}.supplier"),
                format!("supplier '{}' has no tariff", p.supplier),
            );
        }

        for (a, app) in p.appliances.iter().enumerate() {
            let apath = format!("{base}.appliances[{a}]");
            if app.permitted.len() != t {
                out.push(
                    HorizonMismatch,
                    format!("{apath}.permitted"),
                    format!("expected {t} values, found {}", app.permitted.len()),
                );
            }
            if !finite_nonneg(app.energy_kwh) {
                out.push(ApplianceInvalid, format!("{apath}.energy_kwh"), "energy must be >= 0");
            }
            if !(app.max_power_kw.is_finite() && app.max_power_kw > 0.0) {
                out.push(
                    ApplianceInvalid,
                    format!("{apath}.max_power_kw"),
                    "maximum power must be > 0",
                );
            } else if dt.is_finite() && dt > 0.0 {
                let reachable = app.max_power_kw * dt * app.permitted_slots() as f64;
                if app.energy_kwh > reachable * (1.0 + 1e-12) {
                    out.push(
                        ApplianceInfeasible,
                        apath.clone(),
                        format!(
                            "appliance infeasible: {} kWh required but at most {} kWh deliverable",
                            app.energy_kwh, reachable
                        ),
                    );
                }
            }
        }

        if let Some(b) = &p.battery {
            let bpath = format!("{base}.battery");
            if !finite_nonneg(b.capacity_kwh) {
                out.push(BatteryInvalid, format!("{bpath}.capacity_kwh"), "capacity must be >= 0");
            }
            if !finite_nonneg(b.max_charge_kw) || !finite_nonneg(b.max_discharge_kw) {
                out.push(BatteryInvalid, bpath.clone(), "power limits must be >= 0");
            }
            if !finite_nonneg(b.initial_energy_kwh) {
                out.push(
                    BatteryInvalid,
                    format!("{bpath}.initial_energy_kwh"),
                    "initial energy must be >= 0",
                );
            } else if b.initial_energy_kwh > b.capacity_kwh {
                out.push(
                    BatteryOverfull,
                    format!("{bpath}.initial_energy_kwh"),
                    format!(
                        "initial energy {} kWh exceeds capacity {} kWh",
                        b.initial_energy_kwh, b.capacity_kwh
                    ),
                );
            }
        }
    }

    validate_network(s, &mut out);

    for (name, prices) in &s.tariffs.suppliers {
        let path = format!("tariffs.suppliers.{name}");
        if prices.len() != t {
            out.push(
                HorizonMismatch,
                path.clone(),
                format!("expected {t} prices, found {}", prices.len()),
            );
        }
        if prices.iter().any(|p| !finite_nonneg(*p)) {
            out.push(TariffInvalid, path, "prices must be finite and >= 0");
        }
    }
    for (field, v) in [
        ("gamma_up", s.tariffs.gamma_up),
        ("gamma_loss", s.tariffs.gamma_loss),
        ("gamma_flow", s.tariffs.gamma_flow),
    ] {
        if !finite_nonneg(v) {
            out.push(TariffInvalid, format!("tariffs.{field}"), "fee must be finite and >= 0");
        }
    }

    let o = &s.options;
    if let Some(eps) = o.epsilon {
        if !finite_nonneg(eps) {
            out.push(OptionsInvalid, "options.epsilon", "regularization weight must be >= 0");
        }
    }
    for (field, v) in [
        ("gap_tol", o.gap_tol),
        ("feas_tol", o.feas_tol),
        ("complementarity_tol", o.complementarity_tol),
    ] {
        if !(v.is_finite() && v > 0.0) {
            out.push(OptionsInvalid, format!("options.{field}"), "tolerance must be > 0");
        }
    }
    if o.max_iter == 0 {
        out.push(OptionsInvalid, "options.max_iter", "iteration limit must be > 0");
    }

    out.0
}

fn validate_network(s: &Scenario, out: &mut Collector) {
    use ViolationCode::*;
    let net = &s.network;
    let n = net.node_count;
    if n < 2 {
        out.push(
            NetworkNotRadial,
            "network.node_count",
            "network needs the interface node and at least one member node",
        );
    }
    if !(net.voltage_base_v.is_finite() && net.voltage_base_v > 0.0) {
        out.push(BasesInvalid, "network.voltage_base_v", "voltage base must be > 0");
    }
    if !(net.power_base_kva.is_finite() && net.power_base_kva > 0.0) {
        out.push(BasesInvalid, "network.power_base_kva", "power base must be > 0");
    }
    if let Some([lo, hi]) = net.voltage_bounds_pu2 {
        if !(lo.is_finite() && hi.is_finite() && (0.0..=1.0).contains(&lo) && 1.0 <= hi) {
            out.push(
                VoltageBoundsInvalid,
                "network.voltage_bounds_pu2",
                "bounds must satisfy 0 <= w_min <= 1 <= w_max",
            );
        }
    }

    let mut endpoints_ok = true;
    for (b, br) in net.branches.iter().enumerate() {
        let path = format!("network.branches[{b}]");
        if br.from >= n || br.to >= n || br.from == br.to {
            out.push(BranchInvalid, path.clone(), "branch endpoints must be two distinct existing nodes");
            endpoints_ok = false;
        }
        if !finite_nonneg(br.r_ohm) || !finite_nonneg(br.x_ohm) {
            out.push(BranchInvalid, path.clone(), "resistance and reactance must be >= 0");
        }
        if !finite_nonneg(br.length_km) {
            out.push(BranchInvalid, path, "distance must be >= 0");
        }
    }
    if !endpoints_ok || n < 2 {
        return;
    }

    if net.branches.len() != n - 1 {
        out.push(
            NetworkNotRadial,
            "network.branches",
            format!(
                "network not radial: {} branches for {} nodes",
                net.branches.len(),
                n
            ),
        );
    }
    let mut uf = DisjointSets::new(n);
    let mut cyclic = false;
    for br in &net.branches {
        if !uf.union(br.from, br.to) {
            cyclic = true;
        }
    }
    if cyclic {
        out.push(NetworkNotRadial, "network.branches", "network not radial: branches form a cycle");
    }
    let root = uf.find(0);
    if (1..n).any(|v| uf.find(v) != root) {
        out.push(
            NetworkDisconnected,
            "network.branches",
            "some nodes are not connected to the interface",
        );
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    /// Returns false when both nodes were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}
