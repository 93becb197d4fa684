use std::collections::BTreeMap;

use serde::Serialize;

/// Invocations of an amplitude-encoding (state preparation) circuit.
pub const STATE_PREP: &str = "state_prep_queries";
/// Uses of an input block encoding by a lemma.
pub const BASE_QUERIES: &str = "base_encoding_queries";
/// Controlled uses of an input encoding or state preparation.
pub const CONTROLLED_QUERIES: &str = "controlled_queries";
/// Groups of elementary one- and two-qubit gates.
pub const GATE_GROUPS: &str = "gate_groups";

/// Query and depth accounting attached to every encoding.
///
/// Counts are cumulative: when a lemma uses an input `k` times, the input's ledger is
/// scaled by `k` and added to the output. `depth_units` follows the same rule for
/// sequential uses and takes the maximum for parallel ones.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ResourceLedger {
    entries: BTreeMap<String, u64>,
    depth_units: u64,
}

impl ResourceLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> u64 {
        self.entries.get(name).copied().unwrap_or(0)
    }

    pub fn entries(&self) -> &BTreeMap<String, u64> {
        &self.entries
    }

    pub fn depth_units(&self) -> u64 {
        self.depth_units
    }

    pub fn record(&mut self, name: &str, count: u64) -> &mut Self {
        if count > 0 {
            let slot = self.entries.entry(name.to_string()).or_insert(0);
            *slot = slot.saturating_add(count);
        }
        self
    }

    /// Counts one application of the named lemma.
    pub fn lemma(&mut self, name: &str) -> &mut Self {
        self.record(&format!("lemma.{name}"), 1)
    }

    pub fn add_depth(&mut self, units: u64) -> &mut Self {
        self.depth_units = self.depth_units.saturating_add(units);
        self
    }

    /// Entry-wise sum, depths added (sequential composition).
    pub fn merge(&mut self, other: &ResourceLedger) -> &mut Self {
        self.merge_scaled(other, 1)
    }

    /// Adds `uses` copies of `other` in sequence.
    pub fn merge_scaled(&mut self, other: &ResourceLedger, uses: u64) -> &mut Self {
        for (k, v) in &other.entries {
            self.record(k, v.saturating_mul(uses));
        }
        self.add_depth(other.depth_units.saturating_mul(uses))
    }

    /// Entry-wise sum of ledgers run side by side; depth is the maximum.
    pub fn parallel<'a, I: IntoIterator<Item = &'a ResourceLedger>>(ledgers: I) -> ResourceLedger {
        let mut out = ResourceLedger::new();
        let mut depth = 0;
        for l in ledgers {
            for (k, v) in &l.entries {
                out.record(k, *v);
            }
            depth = depth.max(l.depth_units);
        }
        out.depth_units = depth;
        out
    }

    /// Sequential composition of the given ledgers, each used once.
    pub fn sequential<'a, I: IntoIterator<Item = &'a ResourceLedger>>(ledgers: I) -> ResourceLedger {
        let mut out = ResourceLedger::new();
        for l in ledgers {
            out.merge(l);
        }
        out
    }

    /// Entry-wise difference `self - base`, or `None` if some entry of `base` is larger.
    pub fn overhead_over(&self, base: &ResourceLedger) -> Option<ResourceLedger> {
        let mut out = ResourceLedger::new();
        for (k, &v) in &base.entries {
            if self.get(k) < v {
                return None;
            }
        }
        for (k, &v) in &self.entries {
            out.record(k, v - base.get(k));
        }
        out.depth_units = self.depth_units.checked_sub(base.depth_units)?;
        Some(out)
    }

    pub fn total_count(&self) -> u64 {
        self.entries.values().fold(0u64, |a, &b| a.saturating_add(b))
    }
}
