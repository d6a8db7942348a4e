//! Earned value analysis.
//!
//! Every quantity is computed from two inputs: a [`Baseline`] (the
//! time-phased budget of each task) and a [`ProgressSnapshot`] (percent
//! complete and actual cost per task at a status date).
//!
//! | symbol | meaning                         | formula                      |
//! |--------|---------------------------------|------------------------------|
//! | PV     | planned value (BCWS)            | cumulative budget at date    |
//! | EV     | earned value (BCWP)             | Σ percent complete × budget  |
//! | AC     | actual cost (ACWP)              | Σ actual cost                |
//! | BAC    | budget at completion            | Σ task budgets               |
//! | CV, SV | cost / schedule variance        | EV − AC, EV − PV             |
//! | CPI    | cost performance index          | EV / AC                      |
//! | SPI    | schedule performance index      | EV / PV                      |
//! | EAC    | estimate at completion          | see [`EacVariant`]           |
//! | ETC    | estimate to complete            | EAC − AC                     |
//! | VAC    | variance at completion          | BAC − EAC                    |

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::id::{ProjectId, TaskId, TimePoint};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvmError {
    #[error("task `{0}` is not part of the baseline")]
    UnknownTask(TaskId),
    #[error("{index} is undefined: {reason}", index = .0, reason = .0.reason())]
    UndefinedIndex(Index),
    #[error("the new-estimate EAC variant needs an estimate to complete")]
    MissingEstimate,
    #[error("arithmetic overflow while computing {0}")]
    Overflow(&'static str),
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl EvmError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        EvmError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = EvmError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Index {
    Cpi,
    Spi,
}

impl Index {
    fn reason(self) -> &'static str {
        match self {
            Index::Cpi => "no actual cost or no earned value recorded",
            Index::Spi => "no planned value at the status date",
        }
    }
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Index::Cpi => "CPI",
            Index::Spi => "SPI",
        })
    }
}

/// The four ways of estimating the total cost at completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EacVariant {
    /// `BAC / CPI`. Used when no variances from the BAC have occurred.
    PerformanceRate,
    /// `AC + ETC` with a fresh estimate of the remaining work. Used when the
    /// original estimate was fundamentally flawed.
    NewEstimate,
    /// `AC + BAC − EV`. Used when current variances are atypical.
    AtypicalVariance,
    /// `AC + (BAC − EV) / CPI`. Used when current variances are typical.
    TypicalVariance,
}

impl EacVariant {
    pub const ALL: [EacVariant; 4] = [
        EacVariant::PerformanceRate,
        EacVariant::NewEstimate,
        EacVariant::AtypicalVariance,
        EacVariant::TypicalVariance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EacVariant::PerformanceRate => "performance_rate",
            EacVariant::NewEstimate => "new_estimate",
            EacVariant::AtypicalVariance => "atypical_variance",
            EacVariant::TypicalVariance => "typical_variance",
        }
    }
}

impl fmt::Display for EacVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EacVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        EacVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown EAC variant `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint<S> {
    pub t: TimePoint,
    pub cumulative: S,
}

/// Cumulative planned cost of one task over time.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TimePhasedBudget<S> {
    points: Vec<CurvePoint<S>>,
}

impl<S: Scalar> TimePhasedBudget<S> {
    pub fn new(points: Vec<CurvePoint<S>>) -> Result<Self> {
        Self::validated(points, "curve")
    }

    /// Straight-line spread of `budget` from `start` to `finish`.
    pub fn linear(start: TimePoint, finish: TimePoint, budget: S) -> Result<Self> {
        Self::new(vec![
            CurvePoint {
                t: start,
                cumulative: S::zero(),
            },
            CurvePoint {
                t: finish,
                cumulative: budget,
            },
        ])
    }

    fn validated(points: Vec<CurvePoint<S>>, field: &str) -> Result<Self> {
        if points.is_empty() {
            return Err(EvmError::invalid(field, "needs at least one point"));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.t.in_range() {
                return Err(EvmError::invalid(format!("{field}[{i}].t"), "out of range"));
            }
            if !p.cumulative.is_finite_value() || p.cumulative < S::zero() {
                return Err(EvmError::invalid(
                    format!("{field}[{i}].cumulative"),
                    "must be finite and non-negative",
                ));
            }
        }
        for (i, w) in points.windows(2).enumerate() {
            if w[1].t <= w[0].t {
                return Err(EvmError::invalid(
                    format!("{field}[{}].t", i + 1),
                    "points must be strictly increasing in time",
                ));
            }
            if w[1].cumulative < w[0].cumulative {
                return Err(EvmError::invalid(
                    format!("{field}[{}].cumulative", i + 1),
                    "cumulative cost must be non-decreasing",
                ));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[CurvePoint<S>] {
        &self.points
    }

    pub fn start(&self) -> TimePoint {
        self.points[0].t
    }

    pub fn finish(&self) -> TimePoint {
        self.points[self.points.len() - 1].t
    }

    pub fn total(&self) -> S {
        self.points[self.points.len() - 1].cumulative
    }

    /// Cumulative planned cost at `t`, linear between points, zero before the
    /// first point and the full budget after the last.
    pub fn value_at(&self, t: TimePoint) -> S {
        let pts = &self.points;
        if t < pts[0].t {
            return S::zero();
        }
        // index of the first point strictly after t
        let after = pts.partition_point(|p| p.t <= t);
        if after == pts.len() {
            return self.total();
        }
        let lo = pts[after - 1];
        let hi = pts[after];
        if lo.t == t {
            return lo.cumulative;
        }
        // |t - lo.t| < |hi.t - lo.t| ≤ 2·LIMIT, and the fraction is below one,
        // so neither step can overflow.
        let elapsed = S::from_period(t.0 - lo.t.0).expect("period within range");
        let span = S::from_period(hi.t.0 - lo.t.0).expect("period within range");
        let rise = hi.cumulative - lo.cumulative;
        let fraction = elapsed.try_div(span).expect("span is positive");
        let accrued = rise.try_mul(fraction).expect("bounded by rise");
        lo.cumulative + accrued
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskPlan<S> {
    pub task_id: TaskId,
    pub budget: S,
    #[serde(rename = "curve")]
    pub distribution: TimePhasedBudget<S>,
}

impl<S: Scalar> TaskPlan<S> {
    pub fn new(task_id: TaskId, budget: S, distribution: TimePhasedBudget<S>) -> Result<Self> {
        Self::validated(task_id, budget, distribution.points, "task")
    }

    pub fn linear(task_id: impl Into<TaskId>, budget: S, start: i64, finish: i64) -> Result<Self> {
        let distribution = TimePhasedBudget::linear(TimePoint(start), TimePoint(finish), budget)?;
        Self::new(task_id.into(), budget, distribution)
    }

    fn validated(
        task_id: TaskId,
        budget: S,
        points: Vec<CurvePoint<S>>,
        field: &str,
    ) -> Result<Self> {
        if task_id.as_str().is_empty() {
            return Err(EvmError::invalid(
                format!("{field}.task_id"),
                "must not be empty",
            ));
        }
        if !budget.is_finite_value() || budget <= S::zero() {
            return Err(EvmError::invalid(
                format!("{field}.budget"),
                "must be positive",
            ));
        }
        let distribution = TimePhasedBudget::validated(points, &format!("{field}.curve"))?;
        if distribution.total() != budget {
            return Err(EvmError::invalid(
                format!("{field}.curve"),
                format!(
                    "final cumulative {} differs from budget {}",
                    distribution.total(),
                    budget
                ),
            ));
        }
        Ok(Self {
            task_id,
            budget,
            distribution,
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename = "task plan")]
struct RawTaskPlan<S> {
    task_id: TaskId,
    budget: S,
    curve: Vec<CurvePoint<S>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename = "baseline")]
struct RawBaseline<S> {
    project_id: ProjectId,
    tasks: Vec<RawTaskPlan<S>>,
}

impl<S: Scalar> TryFrom<RawBaseline<S>> for Baseline<S> {
    type Error = EvmError;

    fn try_from(raw: RawBaseline<S>) -> Result<Self> {
        let tasks = raw
            .tasks
            .into_iter()
            .enumerate()
            .map(|(i, t)| TaskPlan::validated(t.task_id, t.budget, t.curve, &format!("tasks[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        Baseline::new(raw.project_id, tasks)
    }
}

/// The plan progress is measured against.
///
/// Deserialization validates every invariant, so a `Baseline` value is always
/// well formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawBaseline<S>",
    bound(
        serialize = "S: Serialize",
        deserialize = "S: Scalar + Deserialize<'de>"
    )
)]
pub struct Baseline<S> {
    project_id: ProjectId,
    tasks: Vec<TaskPlan<S>>,
    #[serde(skip)]
    bac: S,
}

impl<S: Scalar> Baseline<S> {
    pub fn new(project_id: ProjectId, tasks: Vec<TaskPlan<S>>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(EvmError::invalid(
                "tasks",
                "a baseline needs at least one task",
            ));
        }
        let mut seen = HashSet::new();
        for (i, t) in tasks.iter().enumerate() {
            if !seen.insert(&t.task_id) {
                return Err(EvmError::invalid(
                    format!("tasks[{i}].task_id"),
                    format!("duplicate task `{}`", t.task_id),
                ));
            }
        }
        let bac = tasks
            .iter()
            .try_fold(S::zero(), |acc, t| acc.try_add(t.budget))
            .ok_or(EvmError::Overflow("BAC"))?;
        Ok(Self {
            project_id,
            tasks,
            bac,
        })
    }

    pub fn project_id(&self) -> &ProjectId {
        &self.project_id
    }

    pub fn tasks(&self) -> &[TaskPlan<S>] {
        &self.tasks
    }

    pub fn task(&self, id: &TaskId) -> Option<&TaskPlan<S>> {
        self.tasks.iter().find(|t| &t.task_id == id)
    }

    /// Budget at completion.
    pub fn bac(&self) -> S {
        self.bac
    }

    pub fn planned_start(&self) -> TimePoint {
        self.tasks
            .iter()
            .map(|t| t.distribution.start())
            .min()
            .expect("non-empty")
    }

    pub fn planned_finish(&self) -> TimePoint {
        self.tasks
            .iter()
            .map(|t| t.distribution.finish())
            .max()
            .expect("non-empty")
    }

    /// Every distinct curve date across all tasks, ascending.
    pub fn plan_dates(&self) -> Vec<TimePoint> {
        let mut dates: Vec<_> = self
            .tasks
            .iter()
            .flat_map(|t| t.distribution.points().iter().map(|p| p.t))
            .collect();
        dates.sort_unstable();
        dates.dedup();
        dates
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskProgress<S> {
    pub task_id: TaskId,
    pub percent_complete: S,
    pub actual_cost: S,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename = "progress snapshot")]
struct RawSnapshot<S> {
    project_id: ProjectId,
    status_date: TimePoint,
    entries: Vec<TaskProgress<S>>,
}

impl<S: Scalar> TryFrom<RawSnapshot<S>> for ProgressSnapshot<S> {
    type Error = EvmError;

    fn try_from(raw: RawSnapshot<S>) -> Result<Self> {
        ProgressSnapshot::new(raw.project_id, raw.status_date, raw.entries)
    }
}

/// Measured progress at a status date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawSnapshot<S>",
    bound(
        serialize = "S: Serialize",
        deserialize = "S: Scalar + Deserialize<'de>"
    )
)]
pub struct ProgressSnapshot<S> {
    project_id: ProjectId,
    status_date: TimePoint,
    entries: Vec<TaskProgress<S>>,
}

impl<S: Scalar> ProgressSnapshot<S> {
    pub fn new(
        project_id: ProjectId,
        status_date: TimePoint,
        entries: Vec<TaskProgress<S>>,
    ) -> Result<Self> {
        if !status_date.in_range() {
            return Err(EvmError::invalid("status_date", "out of range"));
        }
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if !seen.insert(&e.task_id) {
                return Err(EvmError::invalid(
                    format!("entries[{i}].task_id"),
                    format!("duplicate task `{}`", e.task_id),
                ));
            }
            let pct = e.percent_complete;
            if !pct.is_finite_value() || pct < S::zero() || pct > S::one() {
                return Err(EvmError::invalid(
                    format!("entries[{i}].percent_complete"),
                    "must lie in [0, 1]",
                ));
            }
            if !e.actual_cost.is_finite_value() || e.actual_cost < S::zero() {
                return Err(EvmError::invalid(
                    format!("entries[{i}].actual_cost"),
                    "must be non-negative",
                ));
            }
        }
        Ok(Self {
            project_id,
            status_date,
            entries,
        })
    }

    pub fn project_id(&self) -> &ProjectId {
        &self.project_id
    }

    pub fn status_date(&self) -> TimePoint {
        self.status_date
    }

    pub fn entries(&self) -> &[TaskProgress<S>] {
        &self.entries
    }

    pub fn entry(&self, id: &TaskId) -> Option<&TaskProgress<S>> {
        self.entries.iter().find(|e| &e.task_id == id)
    }

    /// Fails on the first entry whose task is missing from `baseline`.
    pub fn check_against(&self, baseline: &Baseline<S>) -> Result<()> {
        match self
            .entries
            .iter()
            .find(|e| baseline.task(&e.task_id).is_none())
        {
            Some(e) => Err(EvmError::UnknownTask(e.task_id.clone())),
            None => Ok(()),
        }
    }
}

/// Planned value at `status_date`.
pub fn compute_pv<S: Scalar>(baseline: &Baseline<S>, status_date: TimePoint) -> S {
    baseline
        .tasks
        .iter()
        .map(|t| t.distribution.value_at(status_date))
        .fold(S::zero(), |acc, v| acc + v)
}

/// Earned value; tasks missing from the snapshot count as not started.
pub fn compute_ev<S: Scalar>(baseline: &Baseline<S>, snapshot: &ProgressSnapshot<S>) -> Result<S> {
    snapshot.entries.iter().try_fold(S::zero(), |acc, e| {
        let task = baseline
            .task(&e.task_id)
            .ok_or_else(|| EvmError::UnknownTask(e.task_id.clone()))?;
        // percent ≤ 1, so the product never exceeds the task budget
        let earned = e
            .percent_complete
            .try_mul(task.budget)
            .ok_or(EvmError::Overflow("EV"))?;
        acc.try_add(earned).ok_or(EvmError::Overflow("EV"))
    })
}

pub fn compute_ac<S: Scalar>(snapshot: &ProgressSnapshot<S>) -> Result<S> {
    snapshot
        .entries
        .iter()
        .try_fold(S::zero(), |acc, e| acc.try_add(e.actual_cost))
        .ok_or(EvmError::Overflow("AC"))
}

pub fn cost_variance<S: Scalar>(ev: S, ac: S) -> Result<S> {
    ev.try_sub(ac).ok_or(EvmError::Overflow("CV"))
}

pub fn schedule_variance<S: Scalar>(ev: S, pv: S) -> Result<S> {
    ev.try_sub(pv).ok_or(EvmError::Overflow("SV"))
}

pub fn cpi<S: Scalar>(ev: S, ac: S) -> Result<S> {
    if ac.is_zero() {
        return Err(EvmError::UndefinedIndex(Index::Cpi));
    }
    ev.try_div(ac).ok_or(EvmError::Overflow("CPI"))
}

pub fn spi<S: Scalar>(ev: S, pv: S) -> Result<S> {
    if pv.is_zero() {
        return Err(EvmError::UndefinedIndex(Index::Spi));
    }
    ev.try_div(pv).ok_or(EvmError::Overflow("SPI"))
}

/// Estimate at completion under `variant`.
///
/// The CPI-based variants divide by `EV/AC`; they are evaluated as
/// `BAC·AC/EV` and `AC + (BAC − EV)·AC/EV` so the result is rounded once.
/// The estimate is then trimmed so that [`etc`] and [`vac`] are exact.
pub fn eac<S: Scalar>(variant: EacVariant, bac: S, ac: S, ev: S, new_etc: Option<S>) -> Result<S> {
    raw_eac(variant, bac, ac, ev, new_etc).map(|e| e.fit_for_subtraction(&[bac, ac]))
}

fn raw_eac<S: Scalar>(variant: EacVariant, bac: S, ac: S, ev: S, new_etc: Option<S>) -> Result<S> {
    let overflow = || EvmError::Overflow("EAC");
    let cpi_defined = || {
        if ac.is_zero() || ev.is_zero() {
            Err(EvmError::UndefinedIndex(Index::Cpi))
        } else {
            Ok(())
        }
    };
    match variant {
        EacVariant::PerformanceRate => {
            cpi_defined()?;
            bac.try_mul(ac)
                .and_then(|x| x.try_div(ev))
                .ok_or_else(overflow)
        }
        EacVariant::NewEstimate => {
            let remaining = new_etc.ok_or(EvmError::MissingEstimate)?;
            if !remaining.is_finite_value() || remaining < S::zero() {
                return Err(EvmError::invalid("new_etc", "must be non-negative"));
            }
            ac.try_add(remaining).ok_or_else(overflow)
        }
        EacVariant::AtypicalVariance => bac
            .try_sub(ev)
            .and_then(|rest| ac.try_add(rest))
            .ok_or_else(overflow),
        EacVariant::TypicalVariance => {
            cpi_defined()?;
            bac.try_sub(ev)
                .and_then(|rest| rest.try_mul(ac))
                .and_then(|x| x.try_div(ev))
                .and_then(|x| ac.try_add(x))
                .ok_or_else(overflow)
        }
    }
}

pub fn etc<S: Scalar>(eac: S, ac: S) -> Result<S> {
    eac.try_sub(ac).ok_or(EvmError::Overflow("ETC"))
}

pub fn vac<S: Scalar>(bac: S, eac: S) -> Result<S> {
    bac.try_sub(eac).ok_or(EvmError::Overflow("VAC"))
}

/// The complete indicator set at one status date.
///
/// Indices and EAC variants whose preconditions fail are `None` rather than
/// errors, so a report at project start is always producible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvmMetrics<S> {
    pub status_date: TimePoint,
    pub pv: S,
    pub ev: S,
    pub ac: S,
    pub bac: S,
    pub cv: S,
    pub sv: S,
    pub cpi: Option<S>,
    pub spi: Option<S>,
    pub eac_by_variant: BTreeMap<EacVariant, S>,
    /// Variant that `eac`, `etc` and `vac` are derived from.
    pub policy: EacVariant,
    pub eac: Option<S>,
    pub etc: Option<S>,
    pub vac: Option<S>,
}

impl<S: Scalar> EvmMetrics<S> {
    pub fn eac_for(&self, variant: EacVariant) -> Option<S> {
        self.eac_by_variant.get(&variant).copied()
    }
}

fn defined<S>(r: Result<S>) -> Result<Option<S>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(EvmError::UndefinedIndex(_) | EvmError::MissingEstimate) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn compute_metrics<S: Scalar>(
    baseline: &Baseline<S>,
    snapshot: &ProgressSnapshot<S>,
    policy: EacVariant,
    new_etc: Option<S>,
) -> Result<EvmMetrics<S>> {
    snapshot.check_against(baseline)?;
    let bac = baseline.bac();
    let pv = compute_pv(baseline, snapshot.status_date());
    let ev = compute_ev(baseline, snapshot)?;
    let ac = compute_ac(snapshot)?;

    let mut eac_by_variant = BTreeMap::new();
    for variant in EacVariant::ALL {
        if let Some(v) = defined(eac(variant, bac, ac, ev, new_etc))? {
            eac_by_variant.insert(variant, v);
        }
    }
    let selected = eac_by_variant.get(&policy).copied();

    Ok(EvmMetrics {
        status_date: snapshot.status_date(),
        pv,
        ev,
        ac,
        bac,
        cv: cost_variance(ev, ac)?,
        sv: schedule_variance(ev, pv)?,
        cpi: defined(cpi(ev, ac))?,
        spi: defined(spi(ev, pv))?,
        eac_by_variant,
        policy,
        eac: selected,
        etc: selected.map(|e| etc(e, ac)).transpose()?,
        vac: selected.map(|e| vac(bac, e)).transpose()?,
    })
}
