use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{FairnessReport, Metric};

use super::run::{write_json, AuditReport};

pub fn read_report(path: &Path) -> Result<AuditReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// `report.json` and `report.csv` in `dir`.
pub fn write_report_files(report: &AuditReport, dir: &Path) -> Result<()> {
    write_json(&dir.join("report.json"), report)?;
    let path = dir.join("report.csv");
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_report_csv(report, std::io::BufWriter::new(f))
}

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long format: one row per (method, attribute, metric, statistic).
pub fn write_report_csv<W: std::io::Write>(report: &AuditReport, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["method", "attribute", "metric", "statistic", "value"])?;
    let fairness_rows = |w: &mut csv::Writer<W>, method: &str, f: &FairnessReport| -> Result<()> {
        for e in &f.entries {
            let m = e.metric.name();
            w.write_record([method, &e.attr, m, "point", &num(e.point)])?;
            if let Some(b) = &e.bootstrap {
                for (stat, v) in [
                    ("bootstrap_mean", b.mean),
                    ("bootstrap_std", b.std),
                    ("p2.5", b.p2_5),
                    ("p25", b.p25),
                    ("p50", b.p50),
                    ("p75", b.p75),
                    ("p97.5", b.p97_5),
                ] {
                    w.write_record([method, &e.attr, m, stat, &v.to_string()])?;
                }
            }
            w.write_record([method, &e.attr, m, "skipped", &e.skipped.to_string()])?;
        }
        Ok(())
    };
    fairness_rows(&mut w, "real", &report.real_fairness)?;
    for r in &report.methods {
        let name = r.method.name();
        let Some(o) = &r.outcome else {
            w.write_record([name, "", "", "error", r.error.as_deref().unwrap_or("")])?;
            continue;
        };
        let fid = &o.fidelity;
        for s in &fid.tvd_complement {
            w.write_record([name, &s.attr, "1-TVD", "value", &s.value.to_string()])?;
        }
        w.write_record([name, "", "1-TVD", "mean", &fid.mean_tvd_complement.to_string()])?;
        for s in &fid.contingency_similarity {
            w.write_record([name, &format!("{}|{}", s.a, s.b), "CS", "value", &s.value.to_string()])?;
        }
        w.write_record([name, "", "CS", "mean", &fid.mean_contingency_similarity.to_string()])?;
        if let Some(d) = &fid.discriminator {
            w.write_record([name, "", "DM", "mean", &d.mean.to_string()])?;
            w.write_record([name, "", "DM", "std", &d.std.to_string()])?;
        }
        for s in &fid.kl {
            w.write_record([name, &s.attr, "KL", "value", &s.value.to_string()])?;
        }
        fairness_rows(&mut w, name, &o.fairness)?;
        for d in &o.differences {
            w.write_record([name, &d.attr, d.metric.name(), "abs_diff", &num(d.abs_diff)])?;
        }
    }
    w.flush().map_err(|e| Error::io("<report.csv>", e))?;
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

/// Aligned text: a fidelity table (one row per method) and a table of
/// absolute differences between synthetic and real bootstrap means.
pub fn render_text(report: &AuditReport) -> String {
    let mut s = String::new();
    let protected: Vec<&str> = report.protected.iter().map(|g| g.attr.as_str()).collect();
    let _ = writeln!(
        s,
        "{} / {} (overlap: {}); {} train, {} test rows; classifier accuracy {:.3}",
        report.dataset,
        report.separation,
        report.overlap.join(", "),
        report.n_train,
        report.n_test,
        report.classifier.test_accuracy
    );
    let _ = writeln!(s);

    let mut header = vec!["method".to_string(), "1-TVD".into(), "CS".into(), "DM".into()];
    header.extend(protected.iter().map(|p| format!("KL({p})")));
    let mut rows = vec![header];
    for r in &report.methods {
        let mut row = vec![r.method.name().to_string()];
        match &r.outcome {
            Some(o) => {
                let f = &o.fidelity;
                row.push(cell(Some(f.mean_tvd_complement)));
                row.push(cell(Some(f.mean_contingency_similarity)));
                row.push(cell(f.discriminator.as_ref().map(|d| d.mean)));
                for p in &protected {
                    row.push(cell(f.kl.iter().find(|k| k.attr == *p).map(|k| k.value)));
                }
            }
            None => row.push(format!("failed: {}", r.error.as_deref().unwrap_or("?"))),
        }
        rows.push(row);
    }
    table(&mut s, &rows);
    let _ = writeln!(s);

    let cols: Vec<(&str, Metric)> = protected
        .iter()
        .flat_map(|p| Metric::ALL.into_iter().map(move |m| (*p, m)))
        .collect();
    let mut header = vec!["|synthetic - real|".to_string()];
    header.extend(cols.iter().map(|(p, m)| format!("{}({p})", m.name())));
    let mut rows = vec![header];
    let mut real = vec!["real (bootstrap mean)".to_string()];
    real.extend(cols.iter().map(|(p, m)| cell(report.real_fairness.bootstrap_mean(p, *m))));
    rows.push(real);
    for r in &report.methods {
        let Some(o) = &r.outcome else { continue };
        let mut row = vec![r.method.name().to_string()];
        row.extend(cols.iter().map(|(p, m)| {
            cell(o.differences.iter().find(|d| d.attr == *p && d.metric == *m).and_then(|d| d.abs_diff))
        }));
        rows.push(row);
    }
    table(&mut s, &rows);
    s
}

fn table(out: &mut String, rows: &[Vec<String>]) {
    let n = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..n)
        .map(|j| rows.iter().filter_map(|r| r.get(j)).map(|c| c.chars().count()).max().unwrap_or(0))
        .collect();
    for r in rows {
        let mut line = String::new();
        for (j, c) in r.iter().enumerate() {
            if j == 0 {
                let _ = write!(line, "{c:<w$}", w = widths[0]);
            } else {
                let _ = write!(line, "  {c:>w$}", w = widths[j]);
            }
        }
        let _ = writeln!(out, "{}", line.trim_end());
    }
}
