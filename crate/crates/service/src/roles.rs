use std::collections::{BTreeMap, BTreeSet};

use pmdss_core::lifecycle::Role;
use pmdss_core::EventKind;
use serde::{Deserialize, Serialize};

/// Which roles may record which lifecycle events, keyed by [`EventKind::key`].
///
/// A key present in a configured map replaces the default entry for that key;
/// keys not mentioned keep their defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(
    from = "BTreeMap<String, BTreeSet<Role>>",
    into = "BTreeMap<String, BTreeSet<Role>>"
)]
pub struct RoleMap {
    entries: BTreeMap<String, BTreeSet<Role>>,
}

impl RoleMap {
    pub fn permits(&self, role: Role, kind: EventKind) -> bool {
        self.entries
            .get(kind.key())
            .is_some_and(|roles| roles.contains(&role))
    }

    pub fn roles_for(&self, kind: EventKind) -> BTreeSet<Role> {
        self.entries.get(kind.key()).cloned().unwrap_or_default()
    }

    /// Keys that name no lifecycle event (typos in a config file).
    pub fn unknown_keys(&self) -> Vec<&str> {
        self.entries
            .keys()
            .map(String::as_str)
            .filter(|k| !EventKind::ALL.iter().any(|e| e.key() == *k))
            .collect()
    }

    fn defaults() -> BTreeMap<String, BTreeSet<Role>> {
        use Role::*;
        let table: [(&str, &[Role]); 10] = [
            ("opportunity_qualified", &[BusinessEngineer]),
            ("proposal_ready", &[BeforeSaleEngineer, BusinessEngineer]),
            ("bid_no_bid", &[BusinessManager]),
            ("win_loss", &[BusinessManager]),
            ("contract_signed", &[Customer, LegalSupport]),
            ("plan_established", &[ProjectManager, Architect]),
            ("tasks_completed", &[ProjectManager, TeamMember]),
            ("tests_passed", &[ProjectManager]),
            ("delivered_to_customer", &[ProjectManager]),
            ("contract_closed", &[Customer, LegalSupport]),
        ];
        table
            .into_iter()
            .map(|(k, roles)| (k.to_owned(), roles.iter().copied().collect()))
            .collect()
    }
}

impl Default for RoleMap {
    fn default() -> Self {
        Self {
            entries: Self::defaults(),
        }
    }
}

impl From<BTreeMap<String, BTreeSet<Role>>> for RoleMap {
    fn from(overrides: BTreeMap<String, BTreeSet<Role>>) -> Self {
        let mut entries = Self::defaults();
        entries.extend(overrides);
        Self { entries }
    }
}

impl From<RoleMap> for BTreeMap<String, BTreeSet<Role>> {
    fn from(map: RoleMap) -> Self {
        map.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pmdss_core::{Gate, Outcome};

    #[test]
    fn defaults_follow_the_process_actors() {
        let m = RoleMap::default();
        let bid = EventKind::Decision {
            gate: Gate::BidNoBid,
            outcome: Outcome::Go,
        };
        assert!(m.permits(Role::BusinessManager, bid));
        assert!(!m.permits(Role::TeamMember, bid));
        assert!(m.permits(Role::Customer, EventKind::ContractSigned));
        assert!(m.permits(Role::TeamMember, EventKind::TasksCompleted));
        for k in EventKind::ALL {
            assert!(!m.roles_for(k).is_empty(), "{k} has no role");
        }
    }

    #[test]
    fn overrides_replace_single_entries() {
        let m: RoleMap = toml::from_str("tests_passed = [\"team-member\"]").unwrap();
        assert!(m.permits(Role::TeamMember, EventKind::TestsPassed));
        assert!(!m.permits(Role::ProjectManager, EventKind::TestsPassed));
        assert!(m.permits(Role::ProjectManager, EventKind::DeliveredToCustomer));
    }
}
