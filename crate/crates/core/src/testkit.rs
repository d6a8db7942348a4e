//! Fixed scenarios shared by the service and CLI test suites.

use rust_decimal::Decimal;

use crate::{Baseline, ProgressSnapshot, ProjectId, TaskPlan, TaskProgress, TimePoint};

/// One task, budget 1000 spread linearly over periods 0..10.
pub fn single_task_baseline(project: &str) -> Baseline {
    Baseline::new(
        ProjectId::new(project),
        vec![TaskPlan::linear("T1", Decimal::from(1000), 0, 10).expect("valid task")],
    )
    .expect("valid baseline")
}

/// Status date 5, 40 % complete, 500 spent: PV 500, EV 400, AC 500.
pub fn single_task_snapshot(project: &str) -> ProgressSnapshot {
    ProgressSnapshot::new(
        ProjectId::new(project),
        TimePoint(5),
        vec![TaskProgress {
            task_id: "T1".into(),
            percent_complete: Decimal::new(4, 1),
            actual_cost: Decimal::from(500),
        }],
    )
    .expect("valid snapshot")
}

/// Ten staggered tasks; task `i` has budget `1000·i` over `[2(i−1), 2(i−1)+6+i mod 3]`.
pub fn desk_baseline(project: &str) -> Baseline {
    let tasks = (1..=10i64)
        .map(|i| {
            let start = 2 * (i - 1);
            let finish = start + 6 + i % 3;
            TaskPlan::linear(
                format!("T{i:02}").as_str(),
                Decimal::from(1000 * i),
                start,
                finish,
            )
            .expect("valid task")
        })
        .collect();
    Baseline::new(ProjectId::new(project), tasks).expect("valid baseline")
}

/// Twelve snapshots at periods 2, 4, …, 24. Progress runs at 90 % of plan and
/// costs 10 % more than earned, so the project ends over budget and late.
pub fn desk_snapshots(project: &str) -> Vec<ProgressSnapshot> {
    let baseline = desk_baseline(project);
    (1..=12i64)
        .map(|k| {
            let t = TimePoint(2 * k);
            let entries = baseline
                .tasks()
                .iter()
                .filter_map(|task| {
                    let planned = task.distribution.value_at(t) / task.budget;
                    if planned.is_zero() {
                        return None;
                    }
                    let pct = (planned * Decimal::new(9, 1)).round_dp(4);
                    let cost = (pct * task.budget * Decimal::new(11, 1)).round_dp(4);
                    Some(TaskProgress {
                        task_id: task.task_id.clone(),
                        percent_complete: pct,
                        actual_cost: cost,
                    })
                })
                .collect();
            ProgressSnapshot::new(ProjectId::new(project), t, entries).expect("valid snapshot")
        })
        .collect()
}
