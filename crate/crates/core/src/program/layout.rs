use std::collections::HashMap;
use std::fmt;

/// Per-member, per-slot quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MemberQty {
    /// Own battery power for own use (kW, charging positive).
    StoreInd,
    /// Power absorbed by own battery on behalf of other members.
    StoreHost,
    /// Power stored by this member in other members' batteries.
    StoreMut,
    /// Share of the community's excess generation credited to this member.
    Excess,
    EnergyInd,
    EnergyHost,
    EnergyMut,
    /// Positive part of the virtual net load (billed import).
    LoadPos,
    /// Negative part of the virtual net load (export).
    LoadNeg,
}

impl MemberQty {
    pub const ALL: [MemberQty; 9] = [
        MemberQty::StoreInd,
        MemberQty::StoreHost,
        MemberQty::StoreMut,
        MemberQty::Excess,
        MemberQty::EnergyInd,
        MemberQty::EnergyHost,
        MemberQty::EnergyMut,
        MemberQty::LoadPos,
        MemberQty::LoadNeg,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            MemberQty::StoreInd => "s_ind",
            MemberQty::StoreHost => "s_host",
            MemberQty::StoreMut => "s_mut",
            MemberQty::Excess => "v",
            MemberQty::EnergyInd => "e_ind",
            MemberQty::EnergyHost => "e_host",
            MemberQty::EnergyMut => "e_mut",
            MemberQty::LoadPos => "l_pos",
            MemberQty::LoadNeg => "l_neg",
        }
    }
}

/// Per-branch, per-slot quantities. Active/reactive flows are per-unit and
/// measured leaving the respective end of the branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BranchQty {
    PFrom,
    PTo,
    QFrom,
    QTo,
    /// Positive and negative parts of `PFrom`.
    FlowPos,
    FlowNeg,
    /// Squared current magnitude.
    CurrentSq,
}

impl BranchQty {
    pub const ALL: [BranchQty; 7] = [
        BranchQty::PFrom,
        BranchQty::PTo,
        BranchQty::QFrom,
        BranchQty::QTo,
        BranchQty::FlowPos,
        BranchQty::FlowNeg,
        BranchQty::CurrentSq,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BranchQty::PFrom => "p_from",
            BranchQty::PTo => "p_to",
            BranchQty::QFrom => "q_from",
            BranchQty::QTo => "q_to",
            BranchQty::FlowPos => "p_pos",
            BranchQty::FlowNeg => "p_neg",
            BranchQty::CurrentSq => "phi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKind {
    /// Power of a flexible appliance (kW).
    Appliance { member: usize, appliance: usize },
    Member { member: usize, qty: MemberQty },
    Branch { branch: usize, qty: BranchQty },
    /// Squared voltage magnitude (p.u.²).
    Voltage { node: usize },
    /// Power drawn from the upstream grid (kW).
    Interface,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarKey {
    pub kind: VarKind,
    pub slot: usize,
}

impl VarKey {
    pub fn new(kind: VarKind, slot: usize) -> Self {
        VarKey { kind, slot }
    }

    pub fn member(member: usize, qty: MemberQty, slot: usize) -> Self {
        VarKey::new(VarKind::Member { member, qty }, slot)
    }

    pub fn appliance(member: usize, appliance: usize, slot: usize) -> Self {
        VarKey::new(VarKind::Appliance { member, appliance }, slot)
    }

    pub fn branch(branch: usize, qty: BranchQty, slot: usize) -> Self {
        VarKey::new(VarKind::Branch { branch, qty }, slot)
    }

    pub fn voltage(node: usize, slot: usize) -> Self {
        VarKey::new(VarKind::Voltage { node }, slot)
    }

    pub fn interface(slot: usize) -> Self {
        VarKey::new(VarKind::Interface, slot)
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.slot;
        match self.kind {
            VarKind::Appliance { member, appliance } => write!(f, "x[m{member},a{appliance},t{t}]"),
            VarKind::Member { member, qty } => write!(f, "{}[m{member},t{t}]", qty.symbol()),
            VarKind::Branch { branch, qty } => write!(f, "{}[b{branch},t{t}]", qty.symbol()),
            VarKind::Voltage { node } => write!(f, "w[n{node},t{t}]"),
            VarKind::Interface => write!(f, "p0[t{t}]"),
        }
    }
}

/// Bijection between variable keys and column indices.
#[derive(Debug, Clone, Default)]
pub struct VariableLayout {
    keys: Vec<VarKey>,
    index: HashMap<VarKey, usize>,
}

impl VariableLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a column, returning its index. Keys must be unique.
    pub fn push(&mut self, key: VarKey) -> usize {
        let col = self.keys.len();
        let prev = self.index.insert(key, col);
        assert!(prev.is_none(), "duplicate variable {key}");
        self.keys.push(key);
        col
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn col(&self, key: &VarKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Column of a key that is known to exist.
    pub fn at(&self, key: VarKey) -> usize {
        match self.index.get(&key) {
            Some(c) => *c,
            None => panic!("variable {key} not in layout"),
        }
    }

    pub fn key(&self, col: usize) -> VarKey {
        self.keys[col]
    }

    pub fn keys(&self) -> &[VarKey] {
        &self.keys
    }

    pub fn name(&self, col: usize) -> String {
        self.keys[col].to_string()
    }
}
