//! Service operations behind the HTTP routes and the CLI.
//!
//! Operations are grouped the way routes are: trade CRUD and indices (data
//! layer), EAC models (technique layer), indicators and the lifecycle
//! (action layer), and the feed.

use pmdss_core::diagnostics::{self, FALLBACK_VARIANT};
use pmdss_core::evm::{self, compute_ac, compute_ev, compute_pv};
use pmdss_core::lifecycle::GateDecision;
use pmdss_core::{
    Baseline, DiagnosticReport, EacVariant, EventKind, EvmMetrics, LifecycleEvent, Money, NextStep,
    ProgressSnapshot, ProjectId, ProjectPhase, Role, RuleTable, Thresholds, TimePoint,
};
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;
use crate::error::{Result, ServiceError};
use crate::roles::RoleMap;
use crate::store::{Change, FeedEvent, Store, StoredProject};

/// Raw earned value inputs at a status date; nothing derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicesView {
    pub project_id: ProjectId,
    pub status_date: TimePoint,
    pub snapshot_date: TimePoint,
    pub pv: Money,
    pub ev: Money,
    pub ac: Money,
    pub bac: Money,
}

/// Forecast for one EAC variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelView {
    pub project_id: ProjectId,
    pub status_date: TimePoint,
    pub variant: EacVariant,
    pub eac: Money,
    pub etc: Money,
    pub vac: Money,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: TimePoint,
    pub value: Money,
}

/// Cumulative PV at every plan date, EV and AC at every snapshot date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SCurve {
    pub pv: Vec<SeriesPoint>,
    pub ev: Vec<SeriesPoint>,
    pub ac: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    pub project_id: ProjectId,
    pub revision: u64,
    pub metrics: EvmMetrics,
    pub diagnostics: DiagnosticReport,
    pub next_step: NextStep,
    pub s_curve: SCurve,
}

/// One row of the exported S-curve table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SCurveRow {
    pub t: TimePoint,
    pub pv: Money,
    pub ev: Option<Money>,
    pub ac: Option<Money>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleView {
    pub project_id: ProjectId,
    pub revision: u64,
    pub phase: ProjectPhase,
    pub allowed_events: Vec<EventKind>,
    pub decisions: Vec<GateDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotReceipt {
    pub project_id: ProjectId,
    pub revision: u64,
    pub status_date: TimePoint,
    /// Non-fatal findings, such as a task whose percent complete went down.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReceipt {
    pub project_id: ProjectId,
    pub revision: u64,
    pub bac: Money,
    pub tasks: usize,
}

/// Lifecycle event as submitted; the actor comes from the caller's role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRequest {
    #[serde(flatten)]
    pub kind: EventKind,
    /// Defaults to the time of the previous event.
    #[serde(default)]
    pub at: Option<TimePoint>,
}

pub struct Service {
    store: Store,
    thresholds: Thresholds,
    rules: RuleTable,
    roles: RoleMap,
}

impl Service {
    pub fn new(store: Store, thresholds: Thresholds, rules: RuleTable, roles: RoleMap) -> Self {
        Self {
            store,
            thresholds,
            rules,
            roles,
        }
    }

    pub fn in_memory() -> Self {
        Self::new(
            Store::in_memory(),
            Thresholds::default(),
            RuleTable::default(),
            RoleMap::default(),
        )
    }

    pub fn open(config: &ServiceConfig) -> Result<Self> {
        Ok(Self::new(
            Store::open(&config.data_dir)?,
            config.thresholds,
            config.rules.clone(),
            config.roles.clone(),
        ))
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn rules(&self) -> &RuleTable {
        &self.rules
    }

    // ---- data / trade ------------------------------------------------------

    pub fn create_project(&self, id: ProjectId) -> Result<StoredProject> {
        self.store.create(id)
    }

    pub fn get_project(&self, id: &ProjectId) -> Result<StoredProject> {
        self.store.get(id)
    }

    pub fn list_projects(&self) -> Vec<ProjectId> {
        self.store.list()
    }

    pub fn delete_project(&self, id: &ProjectId) -> Result<()> {
        self.store.delete(id)
    }

    pub fn put_baseline(
        &self,
        id: &ProjectId,
        baseline: Baseline,
        expected_revision: Option<u64>,
        rebaseline: bool,
    ) -> Result<BaselineReceipt> {
        let bac = baseline.bac();
        let tasks = baseline.tasks().len();
        let (stored, _) = self.store.commit(id, expected_revision, |_| {
            Ok(Change::BaselineSet {
                baseline,
                rebaseline,
            })
        })?;
        Ok(BaselineReceipt {
            project_id: id.clone(),
            revision: stored.revision,
            bac,
            tasks,
        })
    }

    pub fn get_baseline(&self, id: &ProjectId) -> Result<Baseline> {
        self.store
            .get(id)?
            .record
            .baseline
            .ok_or(ServiceError::NoBaseline)
    }

    pub fn delete_baseline(
        &self,
        id: &ProjectId,
        expected_revision: Option<u64>,
    ) -> Result<StoredProject> {
        Ok(self
            .store
            .commit(id, expected_revision, |_| Ok(Change::BaselineCleared))?
            .0)
    }

    pub fn record_snapshot(
        &self,
        id: &ProjectId,
        snapshot: ProgressSnapshot,
        expected_revision: Option<u64>,
    ) -> Result<SnapshotReceipt> {
        let status_date = snapshot.status_date();
        let mut warnings = Vec::new();
        let (stored, _) = self.store.commit(id, expected_revision, |current| {
            warnings = current
                .record
                .progress_regressions(&snapshot)
                .into_iter()
                .map(|(task, was, now)| {
                    format!("task {task}: percent complete fell from {was} to {now}")
                })
                .collect();
            Ok(Change::SnapshotRecorded { snapshot })
        })?;
        for w in &warnings {
            tracing::warn!(project = %id, "{w}");
        }
        Ok(SnapshotReceipt {
            project_id: id.clone(),
            revision: stored.revision,
            status_date,
            warnings,
        })
    }

    pub fn list_snapshots(&self, id: &ProjectId) -> Result<Vec<ProgressSnapshot>> {
        Ok(self.store.get(id)?.record.snapshots)
    }

    pub fn get_snapshot(&self, id: &ProjectId, status_date: TimePoint) -> Result<ProgressSnapshot> {
        self.store
            .get(id)?
            .record
            .snapshots
            .into_iter()
            .find(|s| s.status_date() == status_date)
            .ok_or_else(|| ServiceError::NotFound(format!("no snapshot at {status_date}")))
    }

    // ---- data / indices ----------------------------------------------------

    /// PV at `status_date` (default: latest snapshot date); EV and AC from the
    /// latest snapshot at or before it.
    pub fn indices(&self, id: &ProjectId, status_date: Option<TimePoint>) -> Result<IndicesView> {
        let stored = self.store.get(id)?;
        let record = &stored.record;
        let baseline = record.baseline.as_ref().ok_or(ServiceError::NoBaseline)?;
        let status_date = match status_date {
            Some(t) => t,
            None => record
                .latest_snapshot()
                .ok_or(ServiceError::NoSnapshot)?
                .status_date(),
        };
        let snapshot = record
            .snapshot_at_or_before(status_date)
            .ok_or(ServiceError::NoSnapshot)?;
        Ok(IndicesView {
            project_id: id.clone(),
            status_date,
            snapshot_date: snapshot.status_date(),
            pv: compute_pv(baseline, status_date),
            ev: compute_ev(baseline, snapshot)?,
            ac: compute_ac(snapshot)?,
            bac: baseline.bac(),
        })
    }

    // ---- technique / models ------------------------------------------------

    pub fn model(
        &self,
        id: &ProjectId,
        variant: EacVariant,
        new_etc: Option<Money>,
    ) -> Result<ModelView> {
        let stored = self.store.get(id)?;
        let record = &stored.record;
        let baseline = record.baseline.as_ref().ok_or(ServiceError::NoBaseline)?;
        let snapshot = record.latest_snapshot().ok_or(ServiceError::NoSnapshot)?;
        let bac = baseline.bac();
        let ev = compute_ev(baseline, snapshot)?;
        let ac = compute_ac(snapshot)?;
        let eac = evm::eac(variant, bac, ac, ev, new_etc)?;
        Ok(ModelView {
            project_id: id.clone(),
            status_date: snapshot.status_date(),
            variant,
            eac,
            etc: evm::etc(eac, ac)?,
            vac: evm::vac(bac, eac)?,
        })
    }

    // ---- action / indicators -----------------------------------------------

    pub fn indicators(&self, id: &ProjectId) -> Result<IndicatorReport> {
        let stored = self.store.get(id)?;
        let record = &stored.record;
        let baseline = record.baseline.as_ref().ok_or(ServiceError::NoBaseline)?;
        let (latest, earlier) = record
            .snapshots
            .split_last()
            .ok_or(ServiceError::NoSnapshot)?;
        let history = earlier
            .iter()
            .map(|s| evm::compute_metrics(baseline, s, FALLBACK_VARIANT, None))
            .collect::<Result<Vec<_>, _>>()?;
        let outcome =
            diagnostics::evaluate_cycle(baseline, latest, &history, &self.thresholds, &self.rules)?;
        Ok(IndicatorReport {
            project_id: id.clone(),
            revision: stored.revision,
            metrics: outcome.metrics,
            diagnostics: outcome.report,
            next_step: outcome.next_step,
            s_curve: s_curve(baseline, &record.snapshots)?,
        })
    }

    /// Table of PV, EV and AC over the union of plan and snapshot dates.
    pub fn s_curve_rows(&self, id: &ProjectId) -> Result<Vec<SCurveRow>> {
        let record = self.store.get(id)?.record;
        let baseline = record.baseline.as_ref().ok_or(ServiceError::NoBaseline)?;
        s_curve_rows(baseline, &record.snapshots)
    }

    // ---- lifecycle ---------------------------------------------------------

    pub fn lifecycle(&self, id: &ProjectId) -> Result<LifecycleView> {
        Ok(lifecycle_view(&self.store.get(id)?))
    }

    /// Records a lifecycle event on behalf of `role`.
    pub fn apply_event(
        &self,
        id: &ProjectId,
        role: Option<Role>,
        request: EventRequest,
        expected_revision: Option<u64>,
    ) -> Result<LifecycleView> {
        let role = role.ok_or(ServiceError::MissingRole)?;
        if !self.roles.permits(role, request.kind) {
            return Err(ServiceError::Unauthorized {
                role,
                event: request.kind,
            });
        }
        let (stored, _) = self.store.commit(id, expected_revision, |current| {
            let at = request
                .at
                .or_else(|| current.record.last_event_time())
                .unwrap_or(TimePoint(0));
            Ok(Change::Advanced {
                event: LifecycleEvent::new(request.kind, role),
                at,
            })
        })?;
        Ok(lifecycle_view(&stored))
    }

    // ---- feed --------------------------------------------------------------

    pub fn feed(&self, id: &ProjectId, from_sequence: u64) -> Result<Vec<FeedEvent>> {
        self.store.feed_since(id, from_sequence)
    }
}

/// S-curve rows for `baseline`; EV and AC are blank on dates without a snapshot.
pub fn s_curve_rows(baseline: &Baseline, snapshots: &[ProgressSnapshot]) -> Result<Vec<SCurveRow>> {
    let mut dates = baseline.plan_dates();
    dates.extend(snapshots.iter().map(|s| s.status_date()));
    dates.sort_unstable();
    dates.dedup();
    dates
        .into_iter()
        .map(|t| {
            let snap = snapshots.iter().find(|s| s.status_date() == t);
            Ok(SCurveRow {
                t,
                pv: compute_pv(baseline, t),
                ev: snap.map(|s| compute_ev(baseline, s)).transpose()?,
                ac: snap.map(compute_ac).transpose()?,
            })
        })
        .collect()
}

fn lifecycle_view(stored: &StoredProject) -> LifecycleView {
    LifecycleView {
        project_id: stored.record.project_id.clone(),
        revision: stored.revision,
        phase: stored.record.phase,
        allowed_events: stored.record.allowed_events().into_iter().collect(),
        decisions: stored.record.decisions(),
    }
}

fn s_curve(baseline: &Baseline, snapshots: &[ProgressSnapshot]) -> Result<SCurve> {
    let pv = baseline
        .plan_dates()
        .into_iter()
        .map(|t| SeriesPoint {
            t,
            value: compute_pv(baseline, t),
        })
        .collect();
    let mut ev = Vec::with_capacity(snapshots.len());
    let mut ac = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        let t = s.status_date();
        ev.push(SeriesPoint {
            t,
            value: compute_ev(baseline, s)?,
        });
        ac.push(SeriesPoint {
            t,
            value: compute_ac(s)?,
        });
    }
    Ok(SCurve { pv, ev, ac })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pmdss_core::testkit;
    use pmdss_core::{Decimal, Gate, Outcome, PerformanceQuadrant, Severity};

    fn ev(kind: EventKind, role: Role) -> (Option<Role>, EventRequest) {
        (Some(role), EventRequest { kind, at: None })
    }

    fn to_implementation(svc: &Service, id: &ProjectId) {
        let steps = [
            ev(EventKind::OpportunityQualified, Role::BusinessEngineer),
            ev(
                EventKind::Decision {
                    gate: Gate::BidNoBid,
                    outcome: Outcome::Go,
                },
                Role::BusinessManager,
            ),
            ev(
                EventKind::Decision {
                    gate: Gate::WinLoss,
                    outcome: Outcome::Go,
                },
                Role::BusinessManager,
            ),
            ev(EventKind::ContractSigned, Role::Customer),
        ];
        for (role, req) in steps {
            svc.apply_event(id, role, req, None).unwrap();
        }
    }

    #[test]
    fn snapshot_outside_implementation_is_a_phase_violation() {
        let svc = Service::in_memory();
        let id: ProjectId = "P".into();
        svc.create_project(id.clone()).unwrap();
        svc.put_baseline(&id, testkit::single_task_baseline("P"), None, false)
            .unwrap();
        let err = svc
            .record_snapshot(&id, testkit::single_task_snapshot("P"), None)
            .unwrap_err();
        assert!(matches!(err, ServiceError::PhaseViolation(_)), "{err}");
    }

    #[test]
    fn single_task_views() {
        let svc = Service::in_memory();
        let id: ProjectId = "P".into();
        svc.create_project(id.clone()).unwrap();
        assert!(matches!(
            svc.indices(&id, None),
            Err(ServiceError::NoBaseline)
        ));
        svc.put_baseline(&id, testkit::single_task_baseline("P"), None, false)
            .unwrap();
        assert!(matches!(
            svc.indices(&id, None),
            Err(ServiceError::NoSnapshot)
        ));
        to_implementation(&svc, &id);
        svc.record_snapshot(&id, testkit::single_task_snapshot("P"), None)
            .unwrap();

        let ix = svc.indices(&id, None).unwrap();
        assert_eq!(
            (ix.pv, ix.ev, ix.ac),
            (Decimal::from(500), Decimal::from(400), Decimal::from(500))
        );
        // before the first snapshot there is nothing to measure
        assert!(matches!(
            svc.indices(&id, Some(TimePoint(4))),
            Err(ServiceError::NoSnapshot)
        ));

        let m = svc.model(&id, EacVariant::TypicalVariance, None).unwrap();
        assert_eq!(
            (m.eac, m.etc, m.vac),
            (Decimal::from(1250), Decimal::from(750), Decimal::from(-250))
        );
        let m = svc
            .model(&id, EacVariant::NewEstimate, Some(Decimal::from(600)))
            .unwrap();
        assert_eq!(m.eac, Decimal::from(1100));
        assert!(matches!(
            svc.model(&id, EacVariant::NewEstimate, None),
            Err(ServiceError::Evm(pmdss_core::EvmError::MissingEstimate))
        ));

        let r = svc.indicators(&id).unwrap();
        assert_eq!(
            r.diagnostics.quadrant,
            PerformanceQuadrant::OverBudgetBehindSchedule
        );
        assert_eq!(r.diagnostics.severity, Severity::Critical);
        assert_eq!(r.next_step, NextStep::InvestigateAndCorrect);
        assert_eq!(r.s_curve.pv.len(), 2);
        assert_eq!(r.s_curve.ev.len(), 1);
    }

    #[test]
    fn zero_start_report() {
        let svc = Service::in_memory();
        let id: ProjectId = "Z".into();
        svc.create_project(id.clone()).unwrap();
        svc.put_baseline(&id, testkit::single_task_baseline("Z"), None, false)
            .unwrap();
        to_implementation(&svc, &id);
        let zero = ProgressSnapshot::new(id.clone(), TimePoint(0), vec![]).unwrap();
        svc.record_snapshot(&id, zero, None).unwrap();
        let r = svc.indicators(&id).unwrap();
        assert_eq!(r.diagnostics.quadrant, PerformanceQuadrant::OnTrack);
        assert_eq!(r.diagnostics.severity, Severity::Info);
        assert_eq!((r.metrics.cpi, r.metrics.spi), (None, None));
        assert_eq!((r.s_curve.ev.len(), r.s_curve.ac.len()), (1, 1));
        let ix = svc.indices(&id, None).unwrap();
        assert!(ix.pv.is_zero() && ix.ev.is_zero() && ix.ac.is_zero());
        assert!(matches!(
            svc.model(&id, EacVariant::PerformanceRate, None),
            Err(ServiceError::Evm(pmdss_core::EvmError::UndefinedIndex(_)))
        ));
    }

    #[test]
    fn roles_are_enforced() {
        let svc = Service::in_memory();
        let id: ProjectId = "R".into();
        svc.create_project(id.clone()).unwrap();
        let (_, req) = ev(EventKind::OpportunityQualified, Role::BusinessEngineer);
        assert!(matches!(
            svc.apply_event(&id, None, req, None),
            Err(ServiceError::MissingRole)
        ));
        svc.apply_event(&id, Some(Role::BusinessEngineer), req, None)
            .unwrap();
        let bid = EventRequest {
            kind: EventKind::Decision {
                gate: Gate::BidNoBid,
                outcome: Outcome::Go,
            },
            at: None,
        };
        assert!(matches!(
            svc.apply_event(&id, Some(Role::TeamMember), bid, None),
            Err(ServiceError::Unauthorized { .. })
        ));
        let view = svc
            .apply_event(&id, Some(Role::BusinessManager), bid, None)
            .unwrap();
        assert_eq!(view.phase, ProjectPhase::Negotiation);
        assert_eq!(view.decisions.len(), 1);
    }

    #[test]
    fn regressions_are_warnings() {
        let svc = Service::in_memory();
        let id: ProjectId = "W".into();
        svc.create_project(id.clone()).unwrap();
        svc.put_baseline(&id, testkit::single_task_baseline("W"), None, false)
            .unwrap();
        to_implementation(&svc, &id);
        svc.record_snapshot(&id, testkit::single_task_snapshot("W"), None)
            .unwrap();
        let lower = ProgressSnapshot::new(
            id.clone(),
            TimePoint(6),
            vec![pmdss_core::TaskProgress {
                task_id: "T1".into(),
                percent_complete: Decimal::new(3, 1),
                actual_cost: Decimal::from(600),
            }],
        )
        .unwrap();
        let receipt = svc.record_snapshot(&id, lower, None).unwrap();
        assert_eq!(receipt.warnings.len(), 1);
        assert_eq!(svc.list_snapshots(&id).unwrap().len(), 2);
    }

    #[test]
    fn s_curve_rows_cover_plan_and_snapshots() {
        let svc = Service::in_memory();
        let id: ProjectId = "S".into();
        svc.create_project(id.clone()).unwrap();
        svc.put_baseline(&id, testkit::single_task_baseline("S"), None, false)
            .unwrap();
        let rows = svc.s_curve_rows(&id).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.ev.is_none() && r.ac.is_none()));
        to_implementation(&svc, &id);
        svc.record_snapshot(&id, testkit::single_task_snapshot("S"), None)
            .unwrap();
        let rows = svc.s_curve_rows(&id).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.t.0).collect::<Vec<_>>(),
            vec![0, 5, 10]
        );
        assert_eq!(rows[1].ev, Some(Decimal::from(400)));
    }
}
