use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::{Outcome, RunManifest, StudyReport};
use crate::allocation::{coalition_members, ReportError};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Files written by [`emit_report`], per format.
pub const REPORT_FILES: [(ReportFormat, &[&str]); 2] = [
    (
        ReportFormat::Csv,
        &["bills.csv", "costs.csv", "schedules.csv", "coalitions.csv", "manifest.json"],
    ),
    (
        ReportFormat::Json,
        &["bills.json", "costs.json", "schedules.json", "coalitions.json", "manifest.json"],
    ),
];

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One value of a schedule time series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub approach: &'static str,
    /// Member id, `branch <from>-<to>`, `node <k>` or `interface`.
    pub entity: String,
    pub quantity: String,
    pub slot: usize,
    pub value: f64,
}

fn approaches(r: &StudyReport) -> [(&'static str, &Outcome); 3] {
    [
        ("global", &r.global),
        ("co_aggregate", &r.co_aggregate),
        ("par_aggregate", &r.par_aggregate),
    ]
}

/// Every time series of the three schedules, in a fixed order.
pub fn schedule_rows(s: &Scenario, r: &StudyReport) -> Vec<ScheduleRow> {
    let mut rows = Vec::new();
    for (approach, outcome) in approaches(r) {
        let mut push = |entity: &str, quantity: &str, series: &[f64]| {
            for (slot, value) in series.iter().enumerate() {
                rows.push(ScheduleRow {
                    approach,
                    entity: entity.to_string(),
                    quantity: quantity.to_string(),
                    slot,
                    value: *value,
                });
            }
        };
        for m in &outcome.schedule.members {
            let p = &s.prosumers[m.member];
            for (a, series) in m.appliances.iter().enumerate() {
                push(&p.id, &format!("appliance:{}", p.appliances[a].id), series);
            }
            push(&p.id, "store_ind_kw", &m.store_ind);
            push(&p.id, "store_host_kw", &m.store_host);
            push(&p.id, "store_mut_kw", &m.store_mut);
            push(&p.id, "excess_kw", &m.excess);
            push(&p.id, "energy_ind_kwh", &m.energy_ind);
            push(&p.id, "energy_host_kwh", &m.energy_host);
            push(&p.id, "energy_mut_kwh", &m.energy_mut);
            push(&p.id, "load_pos_kw", &m.load_pos);
            push(&p.id, "load_neg_kw", &m.load_neg);
            push(&p.id, "physical_load_kw", &m.physical_load(s));
        }
        if let Some(net) = &outcome.schedule.network {
            for b in &net.branches {
                let br = &s.network.branches[b.branch];
                let entity = format!("branch {}-{}", br.from, br.to);
                push(&entity, "p_from_pu", &b.p_from);
                push(&entity, "p_to_pu", &b.p_to);
                push(&entity, "q_from_pu", &b.q_from);
                push(&entity, "q_to_pu", &b.q_to);
                push(&entity, "current_sq_pu", &b.current_sq);
            }
            for (node, v) in net.voltages.iter().enumerate() {
                push(&format!("node {node}"), "voltage_sq_pu", v);
            }
            push("interface", "p_kw", &net.interface_kw);
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CostRow {
    approach: &'static str,
    /// Member id or `TOTAL`.
    member: String,
    category: &'static str,
    eur: f64,
}

fn cost_rows(r: &StudyReport) -> Vec<CostRow> {
    let mut rows = Vec::new();
    for (approach, outcome) in approaches(r) {
        let c = &outcome.costs;
        for (i, m) in c.members.iter().enumerate() {
            rows.push(CostRow {
                approach,
                member: r.members[*m].clone(),
                category: "commodity",
                eur: c.member_commodity[i],
            });
        }
        let total = |category, eur| CostRow {
            approach,
            member: "TOTAL".into(),
            category,
            eur,
        };
        rows.push(total("commodity", c.commodity));
        if let Some(n) = &c.network {
            rows.push(total("upstream", n.upstream));
            rows.push(total("local_loss", n.local_loss));
            rows.push(total("local_flow", n.local_flow));
        }
        rows.push(total("total", c.total));
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CoalitionRow {
    mask: usize,
    members: String,
    commodity_optimum_eur: Option<f64>,
    value_eur: f64,
}

fn coalition_rows(r: &StudyReport) -> Vec<CoalitionRow> {
    let Some(t) = &r.coalitions else {
        return Vec::new();
    };
    (1..t.value.len())
        .map(|mask| CoalitionRow {
            mask,
            members: coalition_members(mask)
                .iter()
                .map(|m| r.members[*m].as_str())
                .collect::<Vec<_>>()
                .join("+"),
            commodity_optimum_eur: t.optimum.as_ref().map(|o| o[mask]),
            value_eur: t.value[mask],
        })
        .collect()
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, EmitError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|source| EmitError::Io { path, source })
}

fn finish(mut w: BufWriter<File>, dir: &Path, name: &str) -> Result<(), EmitError> {
    w.flush().map_err(|source| EmitError::Io {
        path: dir.join(name),
        source,
    })
}

/// Header written even when there are no rows.
fn write_rows<T: Serialize>(dir: &Path, name: &str, header: &[&str], rows: &[T]) -> Result<(), EmitError> {
    let mut out = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(dir, name)?);
    out.write_record(header)?;
    for row in rows {
        out.serialize(row)?;
    }
    let w = out.into_inner().map_err(|e| EmitError::Io {
        path: dir.join(name),
        source: e.into_error(),
    })?;
    finish(w, dir, name)
}

fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<(), EmitError> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|source| EmitError::Io {
        path: dir.join(name),
        source,
    })?;
    finish(w, dir, name)
}

/// Writes the report files into `dir`, which must exist. The output depends
/// only on the report contents.
pub fn emit_report(s: &Scenario, r: &StudyReport, dir: &Path, format: ReportFormat) -> Result<(), EmitError> {
    let schedules = schedule_rows(s, r);
    let costs = cost_rows(r);
    let coalitions = coalition_rows(r);
    match format {
        ReportFormat::Csv => {
            let mut w = create(dir, "bills.csv")?;
            r.billing.write_csv(&mut w)?;
            finish(w, dir, "bills.csv")?;
            write_rows(dir, "costs.csv", &["approach", "member", "category", "eur"], &costs)?;
            write_rows(
                dir,
                "schedules.csv",
                &["approach", "entity", "quantity", "slot", "value"],
                &schedules,
            )?;
            write_rows(
                dir,
                "coalitions.csv",
                &["mask", "members", "commodity_optimum_eur", "value_eur"],
                &coalitions,
            )?;
        }
        ReportFormat::Json => {
            let mut w = create(dir, "bills.json")?;
            w.write_all(r.billing.to_json()?.as_bytes())
                .and_then(|_| writeln!(w))
                .map_err(|source| EmitError::Io {
                    path: dir.join("bills.json"),
                    source,
                })?;
            finish(w, dir, "bills.json")?;
            write_json(dir, "costs.json", &costs)?;
            write_json(dir, "schedules.json", &schedules)?;
            write_json(dir, "coalitions.json", &coalitions)?;
        }
    }
    write_json(dir, "manifest.json", &r.manifest)
}

#[derive(Serialize)]
struct TraceRow<'a> {
    subproblem: &'a str,
    iteration: usize,
    primal_cost: f64,
    gap: f64,
    primal_residual: f64,
    dual_residual: f64,
    step: f64,
    sigma: f64,
}

/// Interior-point iterations of every recorded sub-problem, as CSV.
pub fn write_iteration_trace(manifest: &RunManifest, path: &Path) -> Result<(), EmitError> {
    let file = File::create(path).map_err(|source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = csv::Writer::from_writer(BufWriter::new(file));
    for sp in &manifest.subproblems {
        for it in &sp.trace {
            out.serialize(TraceRow {
                subproblem: &sp.name,
                iteration: it.iteration,
                primal_cost: it.primal_cost,
                gap: it.gap,
                primal_residual: it.primal_residual,
                dual_residual: it.dual_residual,
                step: it.step,
                sigma: it.sigma,
            })?;
        }
    }
    out.flush().map_err(|source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    })
}
