//! Project lifecycle: opportunity, proposal, negotiation and implementation,
//! with the bid/no-bid and win/loss decision gates.
//!
//! Transition table (anything else is an error):
//!
//! ```text
//! Opportunity          --OpportunityQualified-->   ProposalPreparation
//! ProposalPreparation  --ProposalReady-->          ProposalPreparation
//! ProposalPreparation  --BidNoBid Go-->            Negotiation
//! ProposalPreparation  --BidNoBid NoGo-->          Abandoned
//! Negotiation          --WinLoss Go-->             Negotiation (awaiting contract)
//! Negotiation          --WinLoss NoGo-->           Abandoned
//! Negotiation          --ContractSigned-->         Implementation   (after WinLoss Go)
//! Implementation       --PlanEstablished-->        Implementation
//! Implementation       --TasksCompleted-->         Implementation
//! Implementation       --TestsPassed-->            Implementation
//! Implementation       --DeliveredToCustomer-->    Delivered
//! Delivered            --ContractClosed-->         Closed
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evm::{Baseline, EvmError, ProgressSnapshot};
use crate::id::{ProjectId, TaskId, TimePoint};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectPhase {
    Opportunity,
    ProposalPreparation,
    Negotiation,
    Implementation,
    Delivered,
    Closed,
    Abandoned,
}

impl ProjectPhase {
    pub const ALL: [ProjectPhase; 7] = [
        ProjectPhase::Opportunity,
        ProjectPhase::ProposalPreparation,
        ProjectPhase::Negotiation,
        ProjectPhase::Implementation,
        ProjectPhase::Delivered,
        ProjectPhase::Closed,
        ProjectPhase::Abandoned,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, ProjectPhase::Closed | ProjectPhase::Abandoned)
    }
}

impl fmt::Display for ProjectPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    BidNoBid,
    WinLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Go,
    NoGo,
}

/// Actors of the sales and delivery process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    BusinessEngineer,
    BeforeSaleEngineer,
    BusinessManager,
    LegalSupport,
    Architect,
    ProjectManager,
    TeamMember,
    Customer,
}

impl Role {
    pub const ALL: [Role; 8] = [
        Role::BusinessEngineer,
        Role::BeforeSaleEngineer,
        Role::BusinessManager,
        Role::LegalSupport,
        Role::Architect,
        Role::ProjectManager,
        Role::TeamMember,
        Role::Customer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::BusinessEngineer => "business-engineer",
            Role::BeforeSaleEngineer => "before-sale-engineer",
            Role::BusinessManager => "business-manager",
            Role::LegalSupport => "legal-support",
            Role::Architect => "architect",
            Role::ProjectManager => "project-manager",
            Role::TeamMember => "team-member",
            Role::Customer => "customer",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role `{s}`"))
    }
}

/// What happened, without who did it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    OpportunityQualified,
    ProposalReady,
    Decision { gate: Gate, outcome: Outcome },
    ContractSigned,
    PlanEstablished,
    TasksCompleted,
    TestsPassed,
    DeliveredToCustomer,
    ContractClosed,
}

impl EventKind {
    pub const ALL: [EventKind; 12] = [
        EventKind::OpportunityQualified,
        EventKind::ProposalReady,
        EventKind::Decision {
            gate: Gate::BidNoBid,
            outcome: Outcome::Go,
        },
        EventKind::Decision {
            gate: Gate::BidNoBid,
            outcome: Outcome::NoGo,
        },
        EventKind::Decision {
            gate: Gate::WinLoss,
            outcome: Outcome::Go,
        },
        EventKind::Decision {
            gate: Gate::WinLoss,
            outcome: Outcome::NoGo,
        },
        EventKind::ContractSigned,
        EventKind::PlanEstablished,
        EventKind::TasksCompleted,
        EventKind::TestsPassed,
        EventKind::DeliveredToCustomer,
        EventKind::ContractClosed,
    ];

    /// Stable name used in configuration files and role maps.
    pub fn key(self) -> &'static str {
        use EventKind::*;
        match self {
            OpportunityQualified => "opportunity_qualified",
            ProposalReady => "proposal_ready",
            Decision {
                gate: Gate::BidNoBid,
                ..
            } => "bid_no_bid",
            Decision {
                gate: Gate::WinLoss,
                ..
            } => "win_loss",
            ContractSigned => "contract_signed",
            PlanEstablished => "plan_established",
            TasksCompleted => "tasks_completed",
            TestsPassed => "tests_passed",
            DeliveredToCustomer => "delivered_to_customer",
            ContractClosed => "contract_closed",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Decision { outcome, .. } => write!(f, "{}({:?})", self.key(), outcome),
            _ => f.write_str(self.key()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LifecycleEvent {
    #[serde(flatten)]
    pub kind: EventKind,
    pub actor: Role,
}

impl LifecycleEvent {
    pub fn new(kind: EventKind, actor: Role) -> Self {
        Self { kind, actor }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDecision {
    pub gate: Gate,
    pub outcome: Outcome,
    pub decided_by: Role,
    pub decided_at: TimePoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub event: LifecycleEvent,
    pub at: TimePoint,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LifecycleError {
    #[error("event {event} is not allowed in phase {phase}")]
    IllegalTransition {
        phase: ProjectPhase,
        event: EventKind,
    },
    #[error("project is in terminal phase {0}")]
    TerminalState(ProjectPhase),
    #[error("event time {at} precedes the last recorded event at {last}")]
    TimeWentBackwards { last: TimePoint, at: TimePoint },
    #[error("progress can only be recorded during Implementation (phase is {0})")]
    PhaseViolation(ProjectPhase),
    #[error("no baseline has been set")]
    NoBaseline,
    #[error("{0}")]
    BaselineLocked(&'static str),
    #[error("snapshot at {at} does not follow the last snapshot at {last}")]
    SnapshotOrder { last: TimePoint, at: TimePoint },
    #[error("document belongs to project `{found}`, expected `{expected}`")]
    ProjectMismatch {
        expected: ProjectId,
        found: ProjectId,
    },
    #[error("new baseline drops task `{0}` which already has recorded progress")]
    RebaselineDropsTask(TaskId),
    #[error(transparent)]
    Evm(#[from] EvmError),
}

/// The transition function. `won` tells whether a WinLoss Go has already been
/// recorded in the current negotiation.
pub fn next_phase(
    phase: ProjectPhase,
    won: bool,
    kind: EventKind,
) -> Result<ProjectPhase, LifecycleError> {
    use EventKind::*;
    use Gate::*;
    use Outcome::*;
    use ProjectPhase::*;
    if phase.is_terminal() {
        return Err(LifecycleError::TerminalState(phase));
    }
    let next = match (phase, kind) {
        (Opportunity, OpportunityQualified) => ProposalPreparation,
        (ProposalPreparation, ProposalReady) => ProposalPreparation,
        (
            ProposalPreparation,
            Decision {
                gate: BidNoBid,
                outcome: Go,
            },
        ) => Negotiation,
        (
            ProposalPreparation,
            Decision {
                gate: BidNoBid,
                outcome: NoGo,
            },
        ) => Abandoned,
        (
            Negotiation,
            Decision {
                gate: WinLoss,
                outcome: Go,
            },
        ) if !won => Negotiation,
        (
            Negotiation,
            Decision {
                gate: WinLoss,
                outcome: NoGo,
            },
        ) if !won => Abandoned,
        (Negotiation, ContractSigned) if won => Implementation,
        (Implementation, PlanEstablished | TasksCompleted | TestsPassed) => Implementation,
        (Implementation, DeliveredToCustomer) => Delivered,
        (Delivered, ContractClosed) => Closed,
        _ => return Err(LifecycleError::IllegalTransition { phase, event: kind }),
    };
    Ok(next)
}

/// The persisted unit: lifecycle state plus the plan and progress data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: Serialize",
    deserialize = "S: Scalar + Deserialize<'de>"
))]
pub struct ProjectRecord<S> {
    pub project_id: ProjectId,
    pub phase: ProjectPhase,
    pub history: Vec<HistoryEntry>,
    pub baseline: Option<Baseline<S>>,
    /// Baselines replaced by an explicit re-baseline, oldest first.
    pub archived_baselines: Vec<Baseline<S>>,
    pub snapshots: Vec<ProgressSnapshot<S>>,
}

impl<S: Scalar> ProjectRecord<S> {
    pub fn new(project_id: ProjectId) -> Self {
        Self {
            project_id,
            phase: ProjectPhase::Opportunity,
            history: Vec::new(),
            baseline: None,
            archived_baselines: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    fn contract_won(&self) -> bool {
        self.history.iter().any(|h| {
            h.event.kind
                == EventKind::Decision {
                    gate: Gate::WinLoss,
                    outcome: Outcome::Go,
                }
        })
    }

    pub fn last_event_time(&self) -> Option<TimePoint> {
        self.history.last().map(|h| h.at)
    }

    pub fn decisions(&self) -> Vec<GateDecision> {
        self.history
            .iter()
            .filter_map(|h| match h.event.kind {
                EventKind::Decision { gate, outcome } => Some(GateDecision {
                    gate,
                    outcome,
                    decided_by: h.event.actor,
                    decided_at: h.at,
                }),
                _ => None,
            })
            .collect()
    }

    /// Applies `event` at time `at`, returning the updated record.
    pub fn advance(&self, event: LifecycleEvent, at: TimePoint) -> Result<Self, LifecycleError> {
        let phase = next_phase(self.phase, self.contract_won(), event.kind)?;
        if let Some(last) = self.last_event_time() {
            if at < last {
                return Err(LifecycleError::TimeWentBackwards { last, at });
            }
        }
        let mut next = self.clone();
        next.phase = phase;
        next.history.push(HistoryEntry { event, at });
        Ok(next)
    }

    /// Event kinds for which [`advance`](Self::advance) would succeed.
    pub fn allowed_events(&self) -> BTreeSet<EventKind> {
        let won = self.contract_won();
        EventKind::ALL
            .into_iter()
            .filter(|k| next_phase(self.phase, won, *k).is_ok())
            .collect()
    }

    fn check_project(&self, found: &ProjectId) -> Result<(), LifecycleError> {
        if found != &self.project_id {
            return Err(LifecycleError::ProjectMismatch {
                expected: self.project_id.clone(),
                found: found.clone(),
            });
        }
        Ok(())
    }

    /// Sets or replaces the baseline. Once progress exists the old baseline is
    /// only replaced with `rebaseline`, and is archived.
    pub fn set_baseline(
        &self,
        baseline: Baseline<S>,
        rebaseline: bool,
    ) -> Result<Self, LifecycleError> {
        if self.phase.is_terminal() {
            return Err(LifecycleError::TerminalState(self.phase));
        }
        self.check_project(baseline.project_id())?;
        let mut next = self.clone();
        if !self.snapshots.is_empty() {
            if !rebaseline {
                return Err(LifecycleError::BaselineLocked(
                    "progress has been recorded; replacing the baseline requires an explicit re-baseline",
                ));
            }
            for snap in &self.snapshots {
                if let Err(EvmError::UnknownTask(t)) = snap.check_against(&baseline) {
                    return Err(LifecycleError::RebaselineDropsTask(t));
                }
            }
            next.archived_baselines.extend(next.baseline.take());
        }
        next.baseline = Some(baseline);
        Ok(next)
    }

    pub fn clear_baseline(&self) -> Result<Self, LifecycleError> {
        if self.phase.is_terminal() {
            return Err(LifecycleError::TerminalState(self.phase));
        }
        if self.baseline.is_none() {
            return Err(LifecycleError::NoBaseline);
        }
        if !self.snapshots.is_empty() {
            return Err(LifecycleError::BaselineLocked(
                "progress has been recorded; the baseline can no longer be removed",
            ));
        }
        let mut next = self.clone();
        next.baseline = None;
        Ok(next)
    }

    /// Appends a progress snapshot; only during Implementation, against the
    /// current baseline, with strictly increasing status dates.
    pub fn record_snapshot(&self, snapshot: ProgressSnapshot<S>) -> Result<Self, LifecycleError> {
        if self.phase != ProjectPhase::Implementation {
            return Err(LifecycleError::PhaseViolation(self.phase));
        }
        self.check_project(snapshot.project_id())?;
        let baseline = self.baseline.as_ref().ok_or(LifecycleError::NoBaseline)?;
        snapshot.check_against(baseline)?;
        if let Some(last) = self.snapshots.last() {
            if snapshot.status_date() <= last.status_date() {
                return Err(LifecycleError::SnapshotOrder {
                    last: last.status_date(),
                    at: snapshot.status_date(),
                });
            }
        }
        let mut next = self.clone();
        next.snapshots.push(snapshot);
        Ok(next)
    }

    pub fn latest_snapshot(&self) -> Option<&ProgressSnapshot<S>> {
        self.snapshots.last()
    }

    /// Latest snapshot whose status date is not after `t`.
    pub fn snapshot_at_or_before(&self, t: TimePoint) -> Option<&ProgressSnapshot<S>> {
        self.snapshots.iter().rev().find(|s| s.status_date() <= t)
    }

    /// Tasks whose percent complete dropped relative to the previous snapshot.
    pub fn progress_regressions(&self, snapshot: &ProgressSnapshot<S>) -> Vec<(TaskId, S, S)> {
        let Some(prev) = self.snapshots.last() else {
            return Vec::new();
        };
        let before: HashMap<&TaskId, S> = prev
            .entries()
            .iter()
            .map(|e| (&e.task_id, e.percent_complete))
            .collect();
        let zero = S::zero();
        let mut out = Vec::new();
        for (id, was) in &before {
            let now = snapshot.entry(id).map_or(zero, |e| e.percent_complete);
            if now < *was {
                out.push(((*id).clone(), *was, now));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}
