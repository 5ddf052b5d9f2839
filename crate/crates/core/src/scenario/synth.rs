//! Seeded generator of random but valid community scenarios.
//!
//! Used by property tests and the acceptance suite. Grid fees are drawn so
//! that the price of losses dominates any gain from dissipating exported
//! power (upstream fee slope plus line-flow fees over the whole feeder),
//! which is the regime where the cone relaxation of the branch flow
//! equations is exact.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Appliance, Battery, Branch, Horizon, Network, Options, Prosumer, Scenario, Tariffs,
    TerminalPolicy, SCHEMA_VERSION,
};

/// Knobs for [`random_scenario_with`].
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub members: usize,
    pub slots: usize,
    pub max_appliances: usize,
    pub battery_probability: f64,
    /// Cap on the number of members owning a battery.
    pub max_batteries: usize,
    pub pv_probability: f64,
    pub two_suppliers: bool,
    /// Adds a junction node without a member somewhere in the feeder.
    pub junction_node: bool,
}

impl SynthConfig {
    pub fn new(members: usize, slots: usize) -> Self {
        SynthConfig {
            members,
            slots,
            max_appliances: 2,
            battery_probability: 0.5,
            max_batteries: members,
            pv_probability: 0.5,
            two_suppliers: true,
            junction_node: false,
        }
    }
}

pub fn random_scenario(seed: u64, members: usize, slots: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = SynthConfig::new(members, slots);
    cfg.junction_node = rng.gen_bool(0.3);
    random_scenario_with(seed, &cfg)
}

/// Average of a half-sine PV shape (06:00 to 18:00) over each slot.
fn pv_shape(slots: usize) -> Vec<f64> {
    let hours_per_slot = 24.0 / slots as f64;
    (0..slots)
        .map(|t| {
            let samples = 48;
            (0..samples)
                .map(|k| {
                    let h = hours_per_slot * (t as f64 + (k as f64 + 0.5) / samples as f64);
                    if (6.0..18.0).contains(&h) {
                        (std::f64::consts::PI * (h - 6.0) / 12.0).sin()
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
                / samples as f64
        })
        .collect()
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

pub fn random_scenario_with(seed: u64, cfg: &SynthConfig) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5DEE_CE66);
    let slots = cfg.slots.max(1);
    let dt = 24.0 / slots as f64;
    let shape = pv_shape(slots);

    let supplier_names = if cfg.two_suppliers {
        vec!["s1".to_string(), "s2".to_string()]
    } else {
        vec!["s1".to_string()]
    };
    let mut suppliers = BTreeMap::new();
    for name in &supplier_names {
        let prices: Vec<f64> = (0..slots).map(|_| round3(rng.gen_range(0.10..0.35))).collect();
        suppliers.insert(name.clone(), prices);
    }

    let junction = cfg.junction_node;
    let node_count = cfg.members + 1 + usize::from(junction);
    let mut branches = Vec::new();
    let mut total_km = 0.0;
    for node in 1..node_count {
        let parent = rng.gen_range(0..node);
        let length_km = round3(rng.gen_range(0.1..0.5));
        total_km += length_km;
        branches.push(Branch {
            from: parent,
            to: node,
            r_ohm: round3(length_km * rng.gen_range(0.2..0.5)),
            x_ohm: round3(length_km * rng.gen_range(0.05..0.1)),
            length_km,
        });
    }
    // members occupy nodes 1..=members, the junction (if any) is the last node
    let mut prosumers = Vec::new();
    let mut batteries = 0;
    let mut export_bound = 0.0;
    for m in 0..cfg.members {
        let consumption: Vec<f64> = (0..slots).map(|_| rng.gen_range(0.3..3.0)).collect();
        let pv_peak = if rng.gen_bool(cfg.pv_probability) {
            rng.gen_range(1.0..6.0)
        } else {
            0.0
        };
        let base_load_kw: Vec<f64> = consumption
            .iter()
            .zip(&shape)
            .map(|(c, s)| round3(c - pv_peak * s))
            .collect();
        let mut export = base_load_kw.iter().fold(0.0f64, |a, d| a.max(-d));

        let n_apps = rng.gen_range(0..=cfg.max_appliances);
        let appliances = (0..n_apps)
            .map(|a| {
                let mut permitted: Vec<bool> = (0..slots).map(|_| rng.gen_bool(0.6)).collect();
                if !permitted.iter().any(|p| *p) {
                    let t = rng.gen_range(0..slots);
                    permitted[t] = true;
                }
                let max_power_kw = round3(rng.gen_range(1.0..4.0));
                let allowed = permitted.iter().filter(|p| **p).count() as f64;
                let energy_kwh = round3(max_power_kw * dt * allowed * rng.gen_range(0.1..0.7));
                Appliance {
                    id: format!("app{a}"),
                    energy_kwh,
                    max_power_kw,
                    permitted,
                }
            })
            .collect();

        let battery = if batteries < cfg.max_batteries && rng.gen_bool(cfg.battery_probability) {
            batteries += 1;
            let capacity_kwh = round3(rng.gen_range(3.0..12.0));
            let max_discharge_kw = round3(rng.gen_range(1.0..5.0));
            export += max_discharge_kw;
            Some(Battery {
                capacity_kwh,
                max_charge_kw: round3(rng.gen_range(1.0..5.0)),
                max_discharge_kw,
                initial_energy_kwh: round3(capacity_kwh * rng.gen_range(0.0..0.5)),
                terminal: if rng.gen_bool(0.5) {
                    TerminalPolicy::Free
                } else {
                    TerminalPolicy::ReturnToInitial
                },
            })
        } else {
            None
        };
        export_bound += export;

        prosumers.push(Prosumer {
            id: format!("m{}", m + 1),
            node: m + 1,
            supplier: supplier_names[rng.gen_range(0..supplier_names.len())].clone(),
            base_load_kw,
            appliances,
            battery,
            power_factor: round3(rng.gen_range(0.9..1.0)),
        });
    }

    let gamma_up = round3(rng.gen_range(0.5..3.0)) * 1e-3;
    let gamma_flow = round3(rng.gen_range(0.0..0.03));
    let dissipation_gain = 2.0 * gamma_up * dt * export_bound + gamma_flow * total_km;
    let gamma_loss = round3(rng.gen_range(0.15f64..0.4).max(1.5 * dissipation_gain + 0.01));

    Scenario {
        schema_version: SCHEMA_VERSION,
        horizon: Horizon {
            slots,
            delta_t_h: dt,
        },
        prosumers,
        network: Network {
            node_count,
            branches,
            voltage_base_v: 400.0,
            power_base_kva: 100.0,
            voltage_bounds_pu2: None,
        },
        tariffs: Tariffs {
            suppliers,
            gamma_up,
            gamma_loss,
            gamma_flow,
        },
        options: Options::default(),
    }
}

/// Tiny instance for exhaustive search: at most two members, two slots, two
/// appliances and one battery.
pub fn random_tiny_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_0F0F);
    let members = rng.gen_range(1..=2);
    let slots = rng.gen_range(1..=2);
    let mut cfg = SynthConfig::new(members, slots);
    cfg.max_appliances = if members == 1 { 2 } else { 1 };
    cfg.max_batteries = 1;
    cfg.battery_probability = 0.6;
    cfg.two_suppliers = rng.gen_bool(0.5);
    random_scenario_with(seed, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::validate_scenario;

    #[test]
    fn generated_scenarios_are_valid() {
        for seed in 0..200 {
            for &(n, t) in &[(2, 2), (3, 4), (4, 8)] {
                let s = random_scenario(seed, n, t);
                assert_eq!(validate_scenario(&s), vec![], "seed {seed} n {n} t {t}");
            }
            let s = random_tiny_scenario(seed);
            assert_eq!(validate_scenario(&s), vec![], "tiny seed {seed}");
            assert!(s.prosumers.iter().filter(|p| p.battery.is_some()).count() <= 1);
            let apps: usize = s.prosumers.iter().map(|p| p.appliances.len()).sum();
            assert!(apps <= 2);
        }
    }

    #[test]
    fn generator_is_deterministic() {
        assert_eq!(random_scenario(7, 3, 4), random_scenario(7, 3, 4));
        assert_ne!(random_scenario(7, 3, 4), random_scenario(8, 3, 4));
    }
}
