use std::io::Write;

use pmdss_core::{Money, NextStep};
use pmdss_service::{IndicatorReport, LifecycleView, SCurveRow};

/// Shown where an index is undefined (zero denominator).
pub const UNDEFINED: &str = "—";

fn money(v: Money) -> String {
    v.normalize().to_string()
}

fn ratio(v: Option<Money>) -> String {
    v.map_or_else(
        || UNDEFINED.to_owned(),
        |v| v.round_dp(4).normalize().to_string(),
    )
}

fn opt_money(v: Option<Money>) -> String {
    v.map_or_else(|| UNDEFINED.to_owned(), money)
}

pub fn report_table(out: &mut dyn Write, r: &IndicatorReport) -> std::io::Result<()> {
    let m = &r.metrics;
    let d = &r.diagnostics;
    writeln!(
        out,
        "project {}  status date {}  revision {}",
        r.project_id, m.status_date, r.revision
    )?;
    writeln!(out)?;
    let rows = [
        ("PV", money(m.pv)),
        ("EV", money(m.ev)),
        ("AC", money(m.ac)),
        ("BAC", money(m.bac)),
        ("CV", money(m.cv)),
        ("SV", money(m.sv)),
        ("CPI", ratio(m.cpi)),
        ("SPI", ratio(m.spi)),
        ("EAC", opt_money(m.eac)),
        ("ETC", opt_money(m.etc)),
        ("VAC", opt_money(m.vac)),
    ];
    for (name, value) in rows {
        writeln!(out, "  {name:<4} {value:>16}")?;
    }
    writeln!(out)?;
    writeln!(out, "EAC by method (selected: {}):", m.policy)?;
    for variant in pmdss_core::EacVariant::ALL {
        writeln!(
            out,
            "  {:<19} {:>16}",
            variant.as_str(),
            opt_money(m.eac_for(variant))
        )?;
    }
    writeln!(out)?;
    writeln!(
        out,
        "performance: {}  severity: {}",
        d.quadrant.label(),
        d.severity
    )?;
    match &d.time_forecast {
        Some(f) => writeln!(
            out,
            "time forecast: duration {:.2} (planned {}), completion at {:.2}",
            f.forecast_duration, f.planned_duration, f.forecast_completion
        )?,
        None => writeln!(out, "time forecast: {UNDEFINED}")?,
    }
    if !d.actions.is_empty() {
        writeln!(out, "corrective actions:")?;
        for a in &d.actions {
            writeln!(out, "  [{}] {}", a.id, a.description)?;
        }
    }
    let step = match r.next_step {
        NextStep::ProceedNextCycle => "proceed to next cycle",
        NextStep::InvestigateAndCorrect => "investigate and correct",
    };
    writeln!(out, "next step: {step}")
}

pub fn lifecycle_table(out: &mut dyn Write, v: &LifecycleView) -> std::io::Result<()> {
    writeln!(
        out,
        "project {}  phase {}  revision {}",
        v.project_id, v.phase, v.revision
    )?;
    for d in &v.decisions {
        writeln!(
            out,
            "  decision {:?} {:?} by {} at {}",
            d.gate, d.outcome, d.decided_by, d.decided_at
        )?;
    }
    if v.allowed_events.is_empty() {
        writeln!(out, "no further events")
    } else {
        let names: Vec<String> = v.allowed_events.iter().map(ToString::to_string).collect();
        writeln!(out, "allowed: {}", names.join(", "))
    }
}

/// `t,pv,ev,ac`; EV and AC are empty where there is no snapshot.
pub fn s_curve_csv(out: &mut dyn Write, rows: &[SCurveRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "pv", "ev", "ac"])?;
    for r in rows {
        w.write_record([
            r.t.0.to_string(),
            money(r.pv),
            r.ev.map(money).unwrap_or_default(),
            r.ac.map(money).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn json(out: &mut dyn Write, value: &impl serde::Serialize) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)
}
