use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use pmdss_core::evm::{
    self, compute_ev, compute_metrics, compute_pv, eac, CurvePoint, TimePhasedBudget,
};
use pmdss_core::lifecycle::ProjectRecord as Record;
use pmdss_core::{
    classify, select_eac_variant, Baseline, Decimal, EacVariant, EventKind, LifecycleEvent,
    ProgressSnapshot, ProjectPhase, Role, RuleTable, TaskPlan, TaskProgress, Thresholds, TimePoint,
};
use proptest::prelude::*;

fn amount(units: i64) -> Decimal {
    Decimal::new(units, 4)
}

/// Budget in units of 1e-4, start period, and (time step, weight) per curve segment.
type TaskShape = (i64, i64, Vec<(i64, i64)>);

fn task_strategy() -> impl Strategy<Value = TaskShape> {
    (
        1i64..100_000_000_000,
        0i64..30,
        prop::collection::vec((1i64..12, 0i64..100), 1..5),
    )
}

fn build_baseline(shape: &[TaskShape]) -> Baseline {
    let tasks = shape
        .iter()
        .enumerate()
        .map(|(i, (budget, start, steps))| {
            let total_w: i64 = steps.iter().map(|s| s.1).sum::<i64>().max(1);
            let mut t = *start;
            let mut w = 0;
            let mut points = vec![CurvePoint {
                t: TimePoint(t),
                cumulative: Decimal::ZERO,
            }];
            for (k, (dt, weight)) in steps.iter().enumerate() {
                t += dt;
                w += weight;
                let units = if k + 1 == steps.len() {
                    *budget
                } else {
                    (*budget as i128 * w as i128 / total_w as i128) as i64
                };
                points.push(CurvePoint {
                    t: TimePoint(t),
                    cumulative: amount(units),
                });
            }
            TaskPlan::new(
                format!("T{i}").as_str().into(),
                amount(*budget),
                TimePhasedBudget::new(points).unwrap(),
            )
            .unwrap()
        })
        .collect();
    Baseline::new("P".into(), tasks).unwrap()
}

fn baseline_strategy() -> impl Strategy<Value = Baseline> {
    prop::collection::vec(task_strategy(), 1..8).prop_map(|s| build_baseline(&s))
}

fn snapshot_for(b: &Baseline, date: i64, progress: &[(u32, i64, bool)]) -> ProgressSnapshot {
    let entries = b
        .tasks()
        .iter()
        .zip(progress.iter().cycle())
        .filter(|(_, p)| p.2)
        .map(|(t, (pct, cost, _))| TaskProgress {
            task_id: t.task_id.clone(),
            percent_complete: Decimal::new(*pct as i64, 4),
            actual_cost: amount(*cost),
        })
        .collect();
    ProgressSnapshot::new("P".into(), TimePoint(date), entries).unwrap()
}

fn instance() -> impl Strategy<Value = (Baseline, ProgressSnapshot)> {
    (
        baseline_strategy(),
        -5i64..80,
        prop::collection::vec((0u32..=10_000, 0i64..100_000_000_000, any::<bool>()), 1..8),
    )
        .prop_map(|(b, date, progress)| {
            let s = snapshot_for(&b, date, &progress);
            (b, s)
        })
}

fn sign(d: Decimal) -> Ordering {
    d.cmp(&Decimal::ZERO)
}

proptest! {
    #[test]
    fn pv_is_monotone_and_reaches_bac(b in baseline_strategy()) {
        let finish = b.planned_finish().0;
        let mut prev = Decimal::ZERO;
        for t in (b.planned_start().0 - 2)..=(finish + 2) {
            let pv = compute_pv(&b, TimePoint(t));
            prop_assert!(pv >= prev, "pv fell at t={t}: {prev} -> {pv}");
            prop_assert!(pv <= b.bac());
            prev = pv;
        }
        prop_assert_eq!(compute_pv(&b, TimePoint(finish)), b.bac());
    }

    #[test]
    fn ev_is_bounded((b, s) in instance()) {
        let ev = compute_ev(&b, &s).unwrap();
        prop_assert!(ev >= Decimal::ZERO && ev <= b.bac());
    }

    #[test]
    fn index_signs_follow_variances((b, s) in instance()) {
        let m = compute_metrics(&b, &s, EacVariant::AtypicalVariance, None).unwrap();
        if let Some(cpi) = m.cpi {
            prop_assert_eq!(sign(m.cv), sign(cpi - Decimal::ONE));
        }
        if let Some(spi) = m.spi {
            prop_assert_eq!(sign(m.sv), sign(spi - Decimal::ONE));
        }
    }

    #[test]
    fn etc_and_vac_close_exactly((b, s) in instance(), new_etc in 0i64..1_000_000_000) {
        for policy in EacVariant::ALL {
            let m = compute_metrics(&b, &s, policy, Some(amount(new_etc))).unwrap();
            if let Some(e) = m.eac {
                prop_assert_eq!(m.etc.unwrap() + m.ac, e);
                prop_assert_eq!(m.vac.unwrap(), m.bac - e);
            }
        }
    }

    #[test]
    fn typical_equals_performance_rate(bac in 1i64..1_000_000_000_000, ac in 1i64..1_000_000_000_000, frac in 1u32..=10_000) {
        let bac = amount(bac);
        let ev = bac * Decimal::new(frac as i64, 4);
        prop_assume!(!ev.is_zero());
        let typical = eac(EacVariant::TypicalVariance, bac, amount(ac), ev, None).unwrap();
        let rate = eac(EacVariant::PerformanceRate, bac, amount(ac), ev, None).unwrap();
        let diff = (typical - rate).abs();
        prop_assert!(diff <= rate.abs() * Decimal::new(1, 9), "{typical} vs {rate}");
    }

    #[test]
    fn classification_is_scale_free((b, s) in instance(), k in 1i64..10_000) {
        let t = Thresholds::default();
        let rules = RuleTable::default();
        let m = compute_metrics(&b, &s, EacVariant::AtypicalVariance, None).unwrap();
        let scale = Decimal::new(k, 2);
        let mut scaled = m.clone();
        scaled.cv *= scale;
        scaled.sv *= scale;
        scaled.bac *= scale;
        let a = classify(&m, &t, &rules);
        let z = classify(&scaled, &t, &rules);
        prop_assert_eq!(a.quadrant, z.quadrant);
        prop_assert_eq!(a.severity, z.severity);
    }

    #[test]
    fn constant_cpi_history_is_typical(cpi in 1i64..50_000, n in 2usize..12) {
        let m = metrics_with_cpi(Some(Decimal::new(cpi, 4)));
        prop_assert_eq!(select_eac_variant(&vec![m; n], 0.1), Ok(EacVariant::TypicalVariance));
    }

    #[test]
    fn history_order_is_irrelevant(cpis in prop::collection::vec(1i64..30_000, 1..10), seed in any::<u64>()) {
        let history: Vec<_> = cpis.iter().map(|c| metrics_with_cpi(Some(Decimal::new(*c, 4)))).collect();
        let mut shuffled = history.clone();
        // deterministic rotation + reversal as the permutation
        let r = (seed as usize) % shuffled.len();
        shuffled.rotate_left(r);
        if seed % 2 == 0 { shuffled.reverse(); }
        prop_assert_eq!(select_eac_variant(&history, 0.1), select_eac_variant(&shuffled, 0.1));
    }

    #[test]
    fn float_instantiation_agrees((b, s) in instance()) {
        let m = compute_metrics(&b, &s, EacVariant::AtypicalVariance, None).unwrap();
        let bf = to_f64_baseline(&b);
        let sf = to_f64_snapshot(&s);
        let mf = evm::compute_metrics(&bf, &sf, EacVariant::AtypicalVariance, None).unwrap();
        for (d, f) in [(m.pv, mf.pv), (m.ev, mf.ev), (m.ac, mf.ac), (m.bac, mf.bac)] {
            let d: f64 = d.try_into().unwrap();
            prop_assert!((d - f).abs() <= 1e-9 * d.abs().max(f.abs()), "{d} vs {f}");
        }
    }
}

fn metrics_with_cpi(cpi: Option<Decimal>) -> pmdss_core::EvmMetrics {
    pmdss_core::EvmMetrics {
        status_date: TimePoint(0),
        pv: Decimal::ZERO,
        ev: Decimal::ZERO,
        ac: Decimal::ZERO,
        bac: Decimal::ONE,
        cv: Decimal::ZERO,
        sv: Decimal::ZERO,
        cpi,
        spi: None,
        eac_by_variant: BTreeMap::new(),
        policy: EacVariant::AtypicalVariance,
        eac: None,
        etc: None,
        vac: None,
    }
}

fn f(d: Decimal) -> f64 {
    d.try_into().unwrap()
}

fn to_f64_baseline(b: &Baseline) -> evm::Baseline<f64> {
    let tasks = b
        .tasks()
        .iter()
        .map(|t| {
            let pts = t
                .distribution
                .points()
                .iter()
                .map(|p| CurvePoint {
                    t: p.t,
                    cumulative: f(p.cumulative),
                })
                .collect();
            evm::TaskPlan::new(
                t.task_id.clone(),
                f(t.budget),
                evm::TimePhasedBudget::new(pts).unwrap(),
            )
            .unwrap()
        })
        .collect();
    evm::Baseline::new("P".into(), tasks).unwrap()
}

fn to_f64_snapshot(s: &ProgressSnapshot) -> evm::ProgressSnapshot<f64> {
    let entries = s
        .entries()
        .iter()
        .map(|e| evm::TaskProgress {
            task_id: e.task_id.clone(),
            percent_complete: f(e.percent_complete),
            actual_cost: f(e.actual_cost),
        })
        .collect();
    evm::ProgressSnapshot::new("P".into(), s.status_date(), entries).unwrap()
}

/// Every record reachable from a fresh project, explored breadth-first.
fn reachable() -> Vec<Record<Decimal>> {
    let mut out = vec![Record::new("P".into())];
    let mut i = 0;
    while i < out.len() {
        let r = out[i].clone();
        for k in EventKind::ALL {
            if let Ok(next) = r.advance(
                LifecycleEvent::new(k, Role::ProjectManager),
                TimePoint(i as i64),
            ) {
                let key = (next.phase, next.allowed_events());
                if !out.iter().any(|o| (o.phase, o.allowed_events()) == key) {
                    out.push(next);
                }
            }
        }
        i += 1;
    }
    out
}

#[test]
fn allowed_events_match_advance_on_reachable_records() {
    let states = reachable();
    let phases: BTreeSet<_> = states.iter().map(|r| r.phase).collect();
    assert_eq!(
        phases.len(),
        ProjectPhase::ALL.len(),
        "every phase is reachable"
    );
    for r in &states {
        let accepted: BTreeSet<_> = EventKind::ALL
            .into_iter()
            .filter(|k| {
                r.advance(LifecycleEvent::new(*k, Role::Customer), TimePoint(1_000))
                    .is_ok()
            })
            .collect();
        assert_eq!(accepted, r.allowed_events(), "phase {:?}", r.phase);
    }
}

#[test]
fn history_is_append_only() {
    for r in reachable() {
        for k in r.allowed_events() {
            let next = r
                .advance(LifecycleEvent::new(k, Role::Architect), TimePoint(1_000))
                .unwrap();
            assert_eq!(next.history.len(), r.history.len() + 1);
            assert_eq!(&next.history[..r.history.len()], &r.history[..]);
        }
    }
}
