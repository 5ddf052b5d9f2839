//! Reconstructed three-node demonstration community.
//!
//! The original case-study parameters are not public. This scenario rebuilds
//! its structure: a one kilometre radial feeder with three member nodes and a
//! day split into four six-hour slots. Node 1 has PV and storage and little
//! shiftable load (28 %), node 2 has PV (42 %), node 3 has storage and the
//! most flexible load (56 %). Nodes 1 and 2 buy from a supplier with cheap
//! nights, node 3 from one with cheap days. Each node aggregates about five
//! households. Network, load and tariff values are plausible LV figures
//! chosen for this reconstruction.

use super::{parse_scenario, LoadMode, Scenario};

/// Raw JSON of the demo scenario, as shipped in `scenarios/demo.json`.
pub const DEMO_JSON: &str = include_str!("../../scenarios/demo.json");

pub fn demo_scenario() -> Scenario {
    parse_scenario(DEMO_JSON, LoadMode::Strict).expect("bundled demo scenario is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_member_characteristics() {
        let s = demo_scenario();
        assert_eq!(s.member_count(), 3);
        assert_eq!(s.slots(), 4);
        let total_km: f64 = s.network.branches.iter().map(|b| b.length_km).sum();
        assert!((total_km - 1.0).abs() < 1e-9);

        let shift: Vec<f64> = s
            .prosumers
            .iter()
            .map(|p| (p.shiftability(s.delta_t()) * 100.0).round())
            .collect();
        assert_eq!(shift, vec![28.0, 42.0, 56.0]);

        let has_pv: Vec<bool> = s
            .prosumers
            .iter()
            .map(|p| p.base_load_kw.iter().any(|d| *d < 0.0))
            .collect();
        assert_eq!(has_pv, vec![true, true, false]);
        let has_ess: Vec<bool> = s.prosumers.iter().map(|p| p.battery.is_some()).collect();
        assert_eq!(has_ess, vec![true, false, true]);
        assert_eq!(s.prosumers[0].supplier, s.prosumers[1].supplier);
        assert_ne!(s.prosumers[0].supplier, s.prosumers[2].supplier);
    }
}
