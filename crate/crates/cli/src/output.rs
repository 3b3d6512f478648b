//! Reports (TOML key-value text) and CSV tables.

use std::path::Path;

use anyhow::{Context, Result};
use synthtx::data::{format_float, LoadRecord};
use synthtx::estimator::EstimateReport;
use synthtx::simulation::{MonteCarloConfig, MonteCarloOutput, SimulatedStudy};
use toml::{Table, Value};

use crate::config::RunConfig;

pub fn float(v: f64) -> String {
    format_float(v)
}

/// `[config]` plus result sections; the whole file parses as TOML, so it can be fed back
/// through `--config`.
pub struct Report {
    doc: Table,
}

impl Report {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let mut doc = Table::new();
        doc.insert("config".into(), Value::try_from(cfg)?);
        Ok(Self { doc })
    }

    fn section(&mut self, name: &str) -> &mut Table {
        self.doc
            .entry(name)
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .expect("report sections are tables")
    }

    pub fn load_record(&mut self, r: &LoadRecord) {
        let d = self.section("diagnostics");
        d.insert("data_rows".into(), Value::String(r.rows.to_string()));
        d.insert("data_asinh_columns".into(), Value::String(r.asinh_columns.join(",")));
        if let Some((m, s)) = r.standardization {
            d.insert("data_standardization_mean".into(), Value::String(format_float(m)));
            d.insert("data_standardization_sd".into(), Value::String(format_float(s)));
        }
    }

    pub fn estimate(&mut self, est: &EstimateReport) {
        let r = self.section("result");
        r.insert("method".into(), Value::String(est.method.to_string()));
        r.insert("theta_hat".into(), Value::Float(est.theta_hat));
        r.insert("ate_hat".into(), Value::Float(est.ate_hat));
        r.insert("n_total".into(), Value::Integer(est.n_total as i64));
        r.insert("variance_available".into(), Value::Boolean(est.variance.is_some()));
        if let Some(v) = est.variance {
            r.insert("variance".into(), Value::Float(v));
        }
        if let Some(ci) = &est.ci {
            r.insert("ci_level".into(), Value::Float(ci.level));
            r.insert("ci_lo".into(), Value::Float(ci.lo));
            r.insert("ci_hi".into(), Value::Float(ci.hi));
        }
        let d = self.section("diagnostics");
        for (k, v) in &est.diagnostics {
            d.insert(k.clone(), Value::String(v.clone()));
        }
    }

    pub fn error(&mut self, message: &str) {
        self.section("error").insert("message".into(), Value::String(message.to_string()));
    }

    pub fn truth(&mut self, study: &SimulatedStudy) {
        let p = &study.params;
        let t = self.section("truth");
        t.insert("true_theta".into(), Value::Float(study.true_theta));
        t.insert("population_theta".into(), Value::Float(p.population_theta()));
        let list = |v: &[f64]| Value::Array(v.iter().map(|x| Value::Float(*x)).collect());
        t.insert("a".into(), list(&p.a));
        t.insert("b".into(), list(&p.b));
        t.insert("c".into(), list(&p.c));
        t.insert("d".into(), list(&p.d));
        t.insert("e".into(), Value::Array(p.e.iter().map(|r| list(r)).collect()));
        t.insert("f".into(), Value::Array(p.f.iter().map(|r| list(r)).collect()));
        t.insert("g".into(), list(&[p.g1, p.g2, p.g3]));
        t.insert("noise_sd".into(), Value::Float(p.noise_sd));
    }

    pub fn mc(&mut self, out: &MonteCarloOutput) {
        let r = self.section("result");
        for row in &out.mre_table {
            if let Some(s) = row.summary {
                r.insert(format!("mre_{}", row.method), Value::Float(s.mre));
                r.insert(format!("mre_sd_{}", row.method), Value::Float(s.sd));
            }
            r.insert(format!("failures_{}", row.method), Value::Integer(row.failures as i64));
        }
        for row in &out.coverage_table {
            if let Some(c) = row.coverage {
                r.insert(format!("coverage_{}_{}", row.method, row.level), Value::Float(c));
            }
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(&self.doc)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn write_mc(dir: &Path, cfg: &MonteCarloConfig, out: &MonteCarloOutput) -> Result<()> {
    let header = ["method", "mre", "mre_sd", "used", "dropped", "failures"].map(String::from);
    let rows: Vec<Vec<String>> = out
        .mre_table
        .iter()
        .map(|r| {
            vec![
                r.method.to_string(),
                opt(r.summary.map(|s| s.mre)),
                opt(r.summary.map(|s| s.sd)),
                r.summary.map_or(0, |s| s.used).to_string(),
                r.summary.map_or(0, |s| s.dropped).to_string(),
                r.failures.to_string(),
            ]
        })
        .collect();
    write_csv(&dir.join("mre_table.csv"), &header, &rows)?;

    let header = ["method", "level", "coverage", "covered", "evaluated", "failures"].map(String::from);
    let rows: Vec<Vec<String>> = out
        .coverage_table
        .iter()
        .map(|r| {
            vec![
                r.method.to_string(),
                format_float(r.level),
                opt(r.coverage),
                r.covered.to_string(),
                r.evaluated.to_string(),
                r.failures.to_string(),
            ]
        })
        .collect();
    write_csv(&dir.join("coverage_table.csv"), &header, &rows)?;

    let mut header = ["replicate", "master_seed", "method", "true_theta", "theta_hat", "variance"].map(String::from).to_vec();
    for level in &cfg.coverage_levels {
        header.push(format!("ci_lo_{level}"));
        header.push(format!("ci_hi_{level}"));
    }
    header.push("error".into());
    let mut rows = Vec::new();
    for rec in &out.records {
        for &method in &cfg.methods {
            let o = rec.outcome(method);
            let mut row = vec![
                rec.replicate.to_string(),
                rec.master_seed.to_string(),
                method.to_string(),
                format_float(rec.true_theta),
                opt(o.and_then(|o| o.theta_hat)),
                opt(o.and_then(|o| o.variance)),
            ];
            for &level in &cfg.coverage_levels {
                let ci = rec.interval(method, level);
                row.push(opt(ci.map(|c| c.0)));
                row.push(opt(ci.map(|c| c.1)));
            }
            row.push(rec.error.clone().or_else(|| o.and_then(|o| o.error.clone())).unwrap_or_default());
            rows.push(row);
        }
    }
    write_csv(&dir.join("replicates.csv"), &header, &rows)
}
