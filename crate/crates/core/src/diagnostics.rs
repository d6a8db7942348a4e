//! Interpretation of earned value metrics: where the project stands, how bad
//! it is, which EAC formula fits the cost history, and what to do about it.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evm::{self, Baseline, EacVariant, EvmMetrics, ProgressSnapshot};
use crate::id::TimePoint;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiagnosticsError {
    #[error("no snapshot in the history has a defined, positive CPI")]
    NoDefinedIndex,
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(&'static str),
}

/// Position of the project on the cost and schedule axes.
///
/// A zero variance on one axis collapses the label to the other axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerformanceQuadrant {
    OnTrack,
    UnderBudgetAheadOfSchedule,
    UnderBudgetBehindSchedule,
    OverBudgetAheadOfSchedule,
    OverBudgetBehindSchedule,
    UnderBudget,
    OverBudget,
    AheadOfSchedule,
    BehindSchedule,
}

impl PerformanceQuadrant {
    /// `cost` is the sign of CV, `schedule` the sign of SV.
    pub fn from_signs(cost: Ordering, schedule: Ordering) -> Self {
        use Ordering::*;
        use PerformanceQuadrant::*;
        match (cost, schedule) {
            (Equal, Equal) => OnTrack,
            (Greater, Greater) => UnderBudgetAheadOfSchedule,
            (Greater, Less) => UnderBudgetBehindSchedule,
            (Less, Greater) => OverBudgetAheadOfSchedule,
            (Less, Less) => OverBudgetBehindSchedule,
            (Greater, Equal) => UnderBudget,
            (Less, Equal) => OverBudget,
            (Equal, Greater) => AheadOfSchedule,
            (Equal, Less) => BehindSchedule,
        }
    }

    pub fn of<S: Scalar>(cv: S, sv: S) -> Self {
        let sign = |v: S| v.partial_cmp(&S::zero()).unwrap_or(Ordering::Equal);
        Self::from_signs(sign(cv), sign(sv))
    }

    pub fn label(self) -> &'static str {
        use PerformanceQuadrant::*;
        match self {
            OnTrack => "on track",
            UnderBudgetAheadOfSchedule => "under budget / ahead of schedule",
            UnderBudgetBehindSchedule => "under budget / behind schedule",
            OverBudgetAheadOfSchedule => "over budget / ahead of schedule",
            OverBudgetBehindSchedule => "over budget / behind schedule",
            UnderBudget => "under budget",
            OverBudget => "over budget",
            AheadOfSchedule => "ahead of schedule",
            BehindSchedule => "behind schedule",
        }
    }
}

impl fmt::Display for PerformanceQuadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Critical,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Critical => "critical",
        })
    }
}

/// Variance ratios are measured against BAC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub warn_ratio: f64,
    pub critical_ratio: f64,
    /// Largest CPI coefficient of variation still considered typical.
    pub typicality_cv: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            warn_ratio: 0.05,
            critical_ratio: 0.10,
            typicality_cv: 0.10,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        if !(self.warn_ratio > 0.0
            && self.warn_ratio < self.critical_ratio
            && self.critical_ratio < 1.0)
        {
            return Err(DiagnosticsError::InvalidThresholds(
                "need 0 < warn_ratio < critical_ratio < 1",
            ));
        }
        if !(self.typicality_cv > 0.0 && self.typicality_cv.is_finite()) {
            return Err(DiagnosticsError::InvalidThresholds(
                "typicality_cv must be positive",
            ));
        }
        Ok(())
    }

    pub fn severity_of(&self, ratio: f64) -> Severity {
        if ratio >= self.critical_ratio {
            Severity::Critical
        } else if ratio >= self.warn_ratio {
            Severity::Warning
        } else {
            Severity::Info
        }
    }
}

/// One record of the corrective-action rules table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRule {
    pub id: String,
    pub quadrant: PerformanceQuadrant,
    pub min_severity: Severity,
    pub description: String,
}

impl ActionRule {
    pub fn matches(&self, quadrant: PerformanceQuadrant, severity: Severity) -> bool {
        self.quadrant == quadrant && severity >= self.min_severity
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trigger {
    pub quadrant: PerformanceQuadrant,
    pub min_severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectiveAction {
    pub id: String,
    pub trigger: Trigger,
    pub description: String,
}

impl From<&ActionRule> for CorrectiveAction {
    fn from(rule: &ActionRule) -> Self {
        CorrectiveAction {
            id: rule.id.clone(),
            trigger: Trigger {
                quadrant: rule.quadrant,
                min_severity: rule.min_severity,
            },
            description: rule.description.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTable {
    #[serde(rename = "rule", default)]
    pub rules: Vec<ActionRule>,
}

impl RuleTable {
    pub fn new(rules: Vec<ActionRule>) -> Self {
        Self { rules }
    }

    pub fn matching(
        &self,
        quadrant: PerformanceQuadrant,
        severity: Severity,
    ) -> Vec<CorrectiveAction> {
        self.rules
            .iter()
            .filter(|r| r.matches(quadrant, severity))
            .map(CorrectiveAction::from)
            .collect()
    }
}

impl Default for RuleTable {
    fn default() -> Self {
        use PerformanceQuadrant::*;
        use Severity::*;
        let rule = |id: &str, quadrant, min_severity, description: &str| ActionRule {
            id: id.to_owned(),
            quadrant,
            min_severity,
            description: description.to_owned(),
        };
        RuleTable::new(vec![
            rule(
                "obbs-staffing",
                OverBudgetBehindSchedule,
                Warning,
                "Review critical-path staffing and productivity; renegotiate scope or dates with the customer",
            ),
            rule(
                "obbs-recovery",
                OverBudgetBehindSchedule,
                Critical,
                "Escalate to the business manager with a recovery plan and a fresh estimate of the remaining work",
            ),
            rule(
                "obas-acceleration",
                OverBudgetAheadOfSchedule,
                Warning,
                "Check whether overtime or extra crews drive the overrun; pace non-critical work back to plan",
            ),
            rule(
                "ubbs-resources",
                UnderBudgetBehindSchedule,
                Warning,
                "Add resources to lagging activities; confirm the under-spend is not deferred invoicing",
            ),
            rule(
                "ubas-baseline",
                UnderBudgetAheadOfSchedule,
                Critical,
                "Confirm the baseline is not overly conservative before releasing contingency",
            ),
            rule(
                "ob-cost-accounts",
                OverBudget,
                Warning,
                "Audit cost accounts for overruns; compare rates and material prices with the estimate",
            ),
            rule(
                "bs-resequence",
                BehindSchedule,
                Warning,
                "Re-sequence or fast-track remaining activities and clear blocked tasks",
            ),
            rule(
                "ub-cost-capture",
                UnderBudget,
                Warning,
                "Verify that actual costs are captured completely",
            ),
            rule(
                "as-progress-check",
                AheadOfSchedule,
                Warning,
                "Verify progress measurement and the quality of accelerated work",
            ),
        ])
    }
}

/// Completion-date extrapolation: planned duration divided by SPI, anchored
/// at the planned start. Not a cost formula; reports carry `basis` to say so.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeForecast {
    pub basis: String,
    pub planned_start: TimePoint,
    pub planned_duration: i64,
    pub forecast_duration: f64,
    pub forecast_completion: f64,
}

pub const TIME_FORECAST_BASIS: &str = "extrapolation: planned duration / SPI";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub quadrant: PerformanceQuadrant,
    pub severity: Severity,
    pub recommended_variant: EacVariant,
    pub actions: Vec<CorrectiveAction>,
    pub time_forecast: Option<TimeForecast>,
}

/// Largest of |CV| and |SV| as a fraction of BAC.
pub fn variance_ratio<S: Scalar>(metrics: &EvmMetrics<S>) -> f64 {
    let worst = if metrics.cv.abs() >= metrics.sv.abs() {
        metrics.cv.abs()
    } else {
        metrics.sv.abs()
    };
    match worst.try_div(metrics.bac) {
        Some(r) => r.as_f64(),
        None => f64::INFINITY,
    }
}

/// Quadrant, severity and matching actions. The recommended variant is the
/// one the metrics were computed with; no time forecast is attached.
pub fn classify<S: Scalar>(
    metrics: &EvmMetrics<S>,
    thresholds: &Thresholds,
    rules: &RuleTable,
) -> DiagnosticReport {
    let quadrant = PerformanceQuadrant::of(metrics.cv, metrics.sv);
    let severity = thresholds.severity_of(variance_ratio(metrics));
    DiagnosticReport {
        quadrant,
        severity,
        recommended_variant: metrics.policy,
        actions: rules.matching(quadrant, severity),
        time_forecast: None,
    }
}

/// Population coefficient of variation; `None` when the mean is zero.
fn coefficient_of_variation(values: &[f64]) -> Option<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return None;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(var.sqrt() / mean.abs())
}

/// Chooses between the CPI-based EAC formulas from the dispersion of CPI over
/// `history`. `NewEstimate` is never chosen; it needs a human estimate.
pub fn select_eac_variant<S: Scalar>(
    history: &[EvmMetrics<S>],
    typicality_cv: f64,
) -> Result<EacVariant, DiagnosticsError> {
    let cpis: Vec<f64> = history
        .iter()
        .filter_map(|m| m.cpi)
        .filter(|c| *c > S::zero())
        .map(Scalar::as_f64)
        .collect();
    match cpis.len() {
        0 => Err(DiagnosticsError::NoDefinedIndex),
        1 => Ok(EacVariant::PerformanceRate),
        _ => match coefficient_of_variation(&cpis) {
            Some(cov) if cov <= typicality_cv => Ok(EacVariant::TypicalVariance),
            _ => Ok(EacVariant::AtypicalVariance),
        },
    }
}

pub fn forecast_time<S: Scalar>(
    baseline: &Baseline<S>,
    metrics: &EvmMetrics<S>,
) -> Option<TimeForecast> {
    let spi = metrics.spi?.as_f64();
    if !(spi > 0.0 && spi.is_finite()) {
        return None;
    }
    let start = baseline.planned_start();
    let planned_duration = baseline.planned_finish().0 - start.0;
    let forecast_duration = planned_duration as f64 / spi;
    Some(TimeForecast {
        basis: TIME_FORECAST_BASIS.to_owned(),
        planned_start: start,
        planned_duration,
        forecast_duration,
        forecast_completion: start.0 as f64 + forecast_duration,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NextStep {
    ProceedNextCycle,
    InvestigateAndCorrect,
}

impl NextStep {
    /// Proceed only when neither variance is negative.
    pub fn from_variances<S: Scalar>(cv: S, sv: S) -> Self {
        if cv >= S::zero() && sv >= S::zero() {
            NextStep::ProceedNextCycle
        } else {
            NextStep::InvestigateAndCorrect
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleOutcome<S> {
    pub metrics: EvmMetrics<S>,
    pub report: DiagnosticReport,
    pub next_step: NextStep,
}

/// Fallback when no CPI in the history is usable: the only formula that does
/// not divide by an index.
pub const FALLBACK_VARIANT: EacVariant = EacVariant::AtypicalVariance;

/// One pass of the control cycle for `snapshot`.
///
/// `history` holds the metrics of earlier snapshots in chronological order;
/// the EAC variant is selected over `history` plus the current snapshot.
pub fn evaluate_cycle<S: Scalar>(
    baseline: &Baseline<S>,
    snapshot: &ProgressSnapshot<S>,
    history: &[EvmMetrics<S>],
    thresholds: &Thresholds,
    rules: &RuleTable,
) -> Result<CycleOutcome<S>, evm::EvmError> {
    let provisional = evm::compute_metrics(baseline, snapshot, FALLBACK_VARIANT, None)?;
    let mut series = history.to_vec();
    series.push(provisional.clone());
    let variant = select_eac_variant(&series, thresholds.typicality_cv).unwrap_or(FALLBACK_VARIANT);
    let metrics = if variant == FALLBACK_VARIANT {
        provisional
    } else {
        evm::compute_metrics(baseline, snapshot, variant, None)?
    };

    let mut report = classify(&metrics, thresholds, rules);
    report.time_forecast = forecast_time(baseline, &metrics);
    let next_step = NextStep::from_variances(metrics.cv, metrics.sv);
    Ok(CycleOutcome {
        metrics,
        report,
        next_step,
    })
}
