use std::io::Write;
use std::path::Path;

use cgtc_core::{Estimate, ExperimentMetrics, LabelTable, PredictionSet};

use crate::error::{CliError, Result};

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn headline(m: &ExperimentMetrics) -> [(&'static str, Estimate); 5] {
    [
        ("coverage", m.coverage),
        ("avg_cardinality", m.avg_cardinality),
        ("joker_rate", m.joker_rate),
        ("seen_miscoverage", m.seen_miscoverage),
        ("new_label_rate", m.new_label_rate),
    ]
}

/// Long format: `method,variant,theta,n,rep,metric,value,se`. Aggregates use
/// `rep = all`; tuned allocations add one row per repetition and component.
pub fn write_metrics(path: &Path, results: &[ExperimentMetrics], tuned: bool) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| csv_err(path, e);
    w.write_record(["method", "variant", "theta", "n", "rep", "metric", "value", "se"])
        .map_err(err)?;
    for m in results {
        let key = [m.method.to_string(), m.variant.to_string(), opt(m.theta), m.n.to_string()];
        let mut row = |rep: &str, metric: &str, value: f64, se: Option<f64>| {
            let mut r = key.to_vec();
            r.extend([rep.to_string(), metric.to_string(), value.to_string(), opt(se)]);
            w.write_record(&r)
        };
        for (name, e) in headline(m) {
            row("all", name, e.mean, Some(e.se)).map_err(err)?;
        }
        for b in &m.stratified {
            row("all", &format!("coverage[{}]", b.name), b.coverage.mean, Some(b.coverage.se)).map_err(err)?;
            row("all", &format!("points[{}]", b.name), b.points as f64, None).map_err(err)?;
        }
        if tuned && m.method.uses_joker() {
            for (i, r) in m.reps.iter().enumerate() {
                if let Some(a) = r.allocation {
                    let rep = i.to_string();
                    row(&rep, "alpha_class", a.alpha_class, None).map_err(err)?;
                    row(&rep, "alpha_unseen", a.alpha_unseen, None).map_err(err)?;
                    row(&rep, "alpha_seen", a.alpha_seen, None).map_err(err)?;
                }
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Wide format for plotting against the concentration: one row per method and
/// grid point with mean and standard error columns.
pub fn write_plot(path: &Path, results: &[ExperimentMetrics]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| csv_err(path, e);
    let Some(first) = results.first() else {
        return w.flush().map_err(|e| CliError::io(path, e));
    };
    let mut header: Vec<String> = ["method", "variant", "theta", "n"].map(String::from).to_vec();
    for (name, _) in headline(first) {
        header.push(name.to_string());
        header.push(format!("{name}_se"));
    }
    for b in &first.stratified {
        header.push(format!("coverage[{}]", b.name));
        header.push(format!("coverage[{}]_se", b.name));
    }
    w.write_record(&header).map_err(err)?;
    for m in results {
        let mut r = vec![m.method.to_string(), m.variant.to_string(), opt(m.theta), m.n.to_string()];
        for (_, e) in headline(m) {
            r.push(e.mean.to_string());
            r.push(e.se.to_string());
        }
        for b in &m.stratified {
            r.push(b.coverage.mean.to_string());
            r.push(b.coverage.se.to_string());
        }
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn print_summary(out: &mut impl Write, results: &[ExperimentMetrics]) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<20} {:>8} {:>6} {:>18} {:>18} {:>18}",
        "method", "theta", "n", "coverage", "size", "joker"
    )?;
    let cell = |e: Estimate| format!("{:.3} ± {:.3}", e.mean, e.se);
    for m in results {
        let theta = m.theta.map(|t| t.to_string()).unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "{:<20} {:>8} {:>6} {:>18} {:>18} {:>18}",
            m.method.name(),
            theta,
            m.n,
            cell(m.coverage),
            cell(m.avg_cardinality),
            cell(m.joker_rate)
        )?;
    }
    Ok(())
}

/// `{a, b, *}` with the joker rendered as `*`.
pub fn render_set(set: &PredictionSet, table: &LabelTable) -> String {
    let mut items: Vec<String> = set.seen.iter().map(|&y| table.display(y)).collect();
    if set.joker {
        items.push("*".into());
    }
    format!("{{{}}}", items.join(", "))
}

pub struct PredictionRow {
    pub set: PredictionSet,
    pub psi_unseen: f64,
    pub psi_seen: f64,
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow], table: &LabelTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| csv_err(path, e);
    w.write_record(["query", "labels", "joker", "psi_unseen", "psi_seen"])
        .map_err(err)?;
    for (i, r) in rows.iter().enumerate() {
        let labels: Vec<String> = r.set.seen.iter().map(|&y| table.display(y)).collect();
        w.write_record([
            (i + 1).to_string(),
            labels.join(";"),
            r.set.joker.to_string(),
            r.psi_unseen.to_string(),
            r.psi_seen.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
