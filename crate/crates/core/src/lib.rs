//! Project-controls decision support: earned value analysis, variance
//! diagnostics and the project lifecycle state machine.
//!
//! The computational modules are generic over a [`Scalar`]. The aliases at
//! the crate root fix the scalar to [`Money`], the fixed-point decimal used
//! for stored and reported amounts.

pub mod diagnostics;
pub mod evm;
pub mod id;
pub mod lifecycle;
pub mod scalar;

pub use diagnostics::{
    classify, evaluate_cycle, forecast_time, select_eac_variant, ActionRule, CorrectiveAction,
    DiagnosticReport, NextStep, PerformanceQuadrant, RuleTable, Severity, Thresholds, TimeForecast,
};
pub use evm::{EacVariant, EvmError, Index};
pub use id::{ProjectId, TaskId, TimePoint};
pub use lifecycle::{EventKind, Gate, LifecycleError, LifecycleEvent, Outcome, ProjectPhase, Role};
pub use scalar::Scalar;

pub use rust_decimal::Decimal;

/// Monetary amounts, fractions and indices in stored and reported data.
pub type Money = Decimal;

pub type Baseline = evm::Baseline<Money>;
pub type TaskPlan = evm::TaskPlan<Money>;
pub type TimePhasedBudget = evm::TimePhasedBudget<Money>;
pub type CurvePoint = evm::CurvePoint<Money>;
pub type ProgressSnapshot = evm::ProgressSnapshot<Money>;
pub type TaskProgress = evm::TaskProgress<Money>;
pub type EvmMetrics = evm::EvmMetrics<Money>;
pub type CycleOutcome = diagnostics::CycleOutcome<Money>;
pub type ProjectRecord = lifecycle::ProjectRecord<Money>;

/// Binary floating-point instantiation, for exploratory analysis.
pub type EvmMetricsF64 = evm::EvmMetrics<f64>;
pub type BaselineF64 = evm::Baseline<f64>;

/// Exact rational instantiation.
pub type Rational = num_rational::Ratio<i128>;

#[cfg(feature = "testkit")]
pub mod testkit;
