//! Community scenario data model.
//!
//! A [`Scenario`] bundles every input of the scheduling problem: the horizon,
//! the prosumers with their appliances and batteries, the radial network,
//! the supplier tariffs and grid fee parameters, and solver settings.
//! Values are in kW / kWh / Ω / km / €; per-unit conversion happens when the
//! network block of a program is assembled.

mod io;
mod validate;

pub mod demo;
pub mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use io::{load_scenario, load_scenario_with, parse_scenario, LoadMode, ScenarioError};
pub use validate::{validate_scenario, Violation, ViolationCode};

/// Current version of the scenario file schema.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    /// Number of scheduling intervals.
    pub slots: usize,
    /// Interval duration in hours.
    pub delta_t_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Appliance {
    pub id: String,
    /// Total energy that must be delivered over the horizon.
    pub energy_kwh: f64,
    pub max_power_kw: f64,
    /// Slots in which the owner consents to run the appliance.
    pub permitted: Vec<bool>,
}

impl Appliance {
    pub fn permitted_slots(&self) -> usize {
        self.permitted.iter().filter(|p| **p).count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalPolicy {
    #[default]
    Free,
    ReturnToInitial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub capacity_kwh: f64,
    pub max_charge_kw: f64,
    pub max_discharge_kw: f64,
    #[serde(default)]
    pub initial_energy_kwh: f64,
    #[serde(default)]
    pub terminal: TerminalPolicy,
}

fn unit_power_factor() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prosumer {
    pub id: String,
    /// Network node the member is connected to (never the interface node 0).
    pub node: usize,
    pub supplier: String,
    /// Non-flexible load forecast; local generation counts negatively.
    pub base_load_kw: Vec<f64>,
    #[serde(default)]
    pub appliances: Vec<Appliance>,
    #[serde(default)]
    pub battery: Option<Battery>,
    /// Power factor of the non-flexible load.
    #[serde(default = "unit_power_factor")]
    pub power_factor: f64,
}

impl Prosumer {
    /// Reactive part of the non-flexible load. Flexible appliances and
    /// storage run at unity power factor.
    pub fn reactive_load_kvar(&self) -> Vec<f64> {
        let pf = self.power_factor.clamp(f64::MIN_POSITIVE, 1.0);
        let ratio = (1.0 - pf * pf).sqrt() / pf;
        self.base_load_kw.iter().map(|p| p * ratio).collect()
    }

    /// Flexible share of the member's gross consumption.
    pub fn shiftability(&self, delta_t_h: f64) -> f64 {
        let flexible: f64 = self.appliances.iter().map(|a| a.energy_kwh).sum();
        let fixed: f64 = self
            .base_load_kw
            .iter()
            .map(|d| d.max(0.0) * delta_t_h)
            .sum();
        if flexible + fixed <= 0.0 {
            0.0
        } else {
            flexible / (flexible + fixed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub length_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    /// Nodes are numbered `0..node_count`; node 0 is the upstream interface.
    pub node_count: usize,
    pub branches: Vec<Branch>,
    pub voltage_base_v: f64,
    pub power_base_kva: f64,
    /// Optional `[w_min, w_max]` bounds on squared voltage magnitude (p.u.²).
    #[serde(default)]
    pub voltage_bounds_pu2: Option<[f64; 2]>,
}

impl Network {
    pub fn impedance_base_ohm(&self) -> f64 {
        self.voltage_base_v * self.voltage_base_v / (self.power_base_kva * 1000.0)
    }

    /// Branch resistance and reactance in per-unit.
    pub fn branch_pu(&self, branch: usize) -> (f64, f64) {
        let z = self.impedance_base_ohm();
        let b = &self.branches[branch];
        (b.r_ohm / z, b.x_ohm / z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariffs {
    /// Commodity price per supplier and slot (€/kWh).
    pub suppliers: BTreeMap<String, Vec<f64>>,
    /// Upstream grid fee (€/kWh²).
    pub gamma_up: f64,
    /// Price of local losses (€/kWh).
    pub gamma_loss: f64,
    /// Price of local line flows (€/kWh per km).
    pub gamma_flow: f64,
}

impl Tariffs {
    pub fn max_price(&self) -> f64 {
        self.suppliers
            .values()
            .flat_map(|v| v.iter().copied())
            .fold(0.0, f64::max)
    }
}

fn default_gap_tol() -> f64 {
    1e-8
}
fn default_feas_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    100
}
fn default_complementarity_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Options {
    /// Weight of the regularization on negative net load. Defaults to
    /// `1e-6 * max tariff` when absent.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
    #[serde(default = "default_feas_tol")]
    pub feas_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_complementarity_tol")]
    pub complementarity_tol: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            epsilon: None,
            gap_tol: default_gap_tol(),
            feas_tol: default_feas_tol(),
            max_iter: default_max_iter(),
            complementarity_tol: default_complementarity_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub horizon: Horizon,
    pub prosumers: Vec<Prosumer>,
    pub network: Network,
    pub tariffs: Tariffs,
    #[serde(default)]
    pub options: Options,
}

impl Scenario {
    pub fn member_count(&self) -> usize {
        self.prosumers.len()
    }

    pub fn slots(&self) -> usize {
        self.horizon.slots
    }

    pub fn delta_t(&self) -> f64 {
        self.horizon.delta_t_h
    }

    /// Effective weight of the negative-net-load regularization.
    pub fn epsilon(&self) -> f64 {
        self.options
            .epsilon
            .unwrap_or_else(|| 1e-6 * self.tariffs.max_price())
    }

    /// Commodity price vector applying to a member.
    ///
    /// # Panics
    /// If the member's supplier is unknown; validated scenarios never hit this.
    pub fn prices(&self, member: usize) -> &[f64] {
        let supplier = &self.prosumers[member].supplier;
        &self.tariffs.suppliers[supplier]
    }

    /// Member connected at each network node, if any.
    pub fn member_at_node(&self) -> Vec<Option<usize>> {
        let mut at = vec![None; self.network.node_count];
        for (m, p) in self.prosumers.iter().enumerate() {
            if p.node < at.len() {
                at[p.node] = Some(m);
            }
        }
        at
    }

    /// Copy of the scenario with every battery removed.
    pub fn without_storage(&self) -> Scenario {
        let mut s = self.clone();
        for p in &mut s.prosumers {
            p.battery = None;
        }
        s
    }

    /// Copy with all tariffs (commodity and grid fees) multiplied by `factor`.
    pub fn with_scaled_tariffs(&self, factor: f64) -> Scenario {
        let mut s = self.clone();
        for prices in s.tariffs.suppliers.values_mut() {
            prices.iter_mut().for_each(|p| *p *= factor);
        }
        s.tariffs.gamma_up *= factor;
        s.tariffs.gamma_loss *= factor;
        s.tariffs.gamma_flow *= factor;
        if let Some(eps) = s.options.epsilon.as_mut() {
            *eps *= factor;
        }
        s
    }
}
