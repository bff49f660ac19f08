//! Per-user metrics, aggregates, significance and report files.

use std::fmt::Write as _;
use std::path::Path;

use stacp_core::{ndcg_at, precision_at, recall_at};

use crate::error::{Error, Result};
use crate::pipeline::{Exclusion, Method, MethodRun, Prepared};
use crate::stats::{paired_ttest, TTest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Precision,
    Recall,
    Ndcg,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Precision, Metric::Recall, Metric::Ndcg];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::Ndcg => "ndcg",
        }
    }

    fn compute(self, recs: &[usize], relevant: &[usize], n: usize) -> stacp_core::Result<f64> {
        match self {
            Metric::Precision => precision_at(recs, relevant, n),
            Metric::Recall => recall_at(recs, relevant, n),
            Metric::Ndcg => ndcg_at(recs, relevant, n),
        }
    }
}

/// One metric at one cutoff for one method, over the evaluated users.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub method: Method,
    pub metric: Metric,
    pub cutoff: usize,
    pub per_user: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Significance {
    pub method: Method,
    pub competitor: Method,
    pub metric: Metric,
    pub cutoff: usize,
    pub test: TTest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub cutoffs: Vec<usize>,
    pub methods: Vec<Method>,
    /// Ids of the users the averages run over, aligned with `Series::per_user`.
    pub users: Vec<String>,
    pub excluded: Vec<(String, Exclusion)>,
    pub series: Vec<Series>,
    pub significance: Vec<Significance>,
    /// Users whose PFMPD score fell back to PFM.
    pub fallback_users: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
}

impl EvalReport {
    pub fn series(&self, method: Method, metric: Metric, cutoff: usize) -> Option<&Series> {
        self.series.iter().find(|s| s.method == method && s.metric == metric && s.cutoff == cutoff)
    }

    pub fn mean(&self, method: Method, metric: Metric, cutoff: usize) -> Option<f64> {
        self.series(method, metric, cutoff).map(|s| s.mean)
    }

    pub fn significance(&self, method: Method, competitor: Method, metric: Metric, cutoff: usize) -> Option<&TTest> {
        self.significance
            .iter()
            .find(|s| s.method == method && s.competitor == competitor && s.metric == metric && s.cutoff == cutoff)
            .map(|s| &s.test)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Scores every run at every cutoff over the users `prep` does not exclude.
/// The first method is the reference: it is t-tested against every other
/// method for each metric and cutoff.
pub fn evaluate(prep: &Prepared, runs: &[MethodRun], cutoffs: &[usize], config_hash: &str, seed: u64) -> Result<EvalReport> {
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(Error::Config("cutoffs must be non-empty and positive".into()));
    }
    let users = prep.evaluated_users();
    let mut series = Vec::new();
    for run in runs {
        for &cutoff in cutoffs {
            for metric in Metric::ALL {
                let per_user = users
                    .iter()
                    .map(|&u| metric.compute(&run.recommendations[u].pois, &prep.relevant[u], cutoff))
                    .collect::<stacp_core::Result<Vec<f64>>>()?;
                series.push(Series { method: run.method, metric, cutoff, mean: mean(&per_user), per_user });
            }
        }
    }
    let mut significance = Vec::new();
    if let Some((reference, others)) = runs.split_first() {
        if users.len() >= 2 {
            for other in others {
                for &cutoff in cutoffs {
                    for metric in Metric::ALL {
                        let find = |m| series.iter().find(|s: &&Series| s.method == m && s.metric == metric && s.cutoff == cutoff).expect("series computed");
                        let test = paired_ttest(&find(reference.method).per_user, &find(other.method).per_user)?;
                        significance.push(Significance { method: reference.method, competitor: other.method, metric, cutoff, test });
                    }
                }
            }
        }
    }
    let id = |u: usize| prep.split.users.id(u).unwrap_or_default().to_string();
    let mut fallback: Vec<usize> = runs.iter().flat_map(|r| r.fallback_users.iter().copied()).collect();
    fallback.sort_unstable();
    fallback.dedup();
    Ok(EvalReport {
        cutoffs: cutoffs.to_vec(),
        methods: runs.iter().map(|r| r.method).collect(),
        users: users.iter().map(|&u| id(u)).collect(),
        excluded: prep.exclusions.iter().enumerate().filter_map(|(u, e)| e.map(|e| (id(u), e))).collect(),
        series,
        significance,
        fallback_users: fallback.into_iter().map(id).collect(),
        config_hash: config_hash.to_string(),
        seed,
    })
}

/// Fixed-width table of means; `*` marks a significant difference from the
/// reference method in the same column.
pub fn render_text(r: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "config {}  seed {}", r.config_hash, r.seed);
    let _ = writeln!(out, "users evaluated {}  excluded {}", r.users.len(), r.excluded.len());
    let _ = write!(out, "{:<12}", "method");
    for &n in &r.cutoffs {
        for m in Metric::ALL {
            let _ = write!(out, " {:>14}", format!("{}@{n}", m.name()));
        }
    }
    out.push('\n');
    for &method in &r.methods {
        let _ = write!(out, "{:<12}", method.name());
        for &n in &r.cutoffs {
            for m in Metric::ALL {
                let v = r.mean(method, m, n).unwrap_or(f64::NAN);
                let mark = r.significance.iter().any(|s| s.competitor == method && s.metric == m && s.cutoff == n && s.test.significant);
                let _ = write!(out, " {:>14}", format!("{v:.6}{}", if mark { "*" } else { " " }));
            }
        }
        out.push('\n');
    }
    if let Some(first) = r.significance.first() {
        let _ = writeln!(out, "* p < 0.05, two-tailed paired t-test against {}", first.method);
    }
    if !r.fallback_users.is_empty() {
        let _ = writeln!(out, "pfmpd fell back to pfm for {} users", r.fallback_users.len());
    }
    out
}

/// `method,metric,cutoff,user,value` records, per user and then one `ALL`
/// row holding the mean.
pub fn render_csv(r: &EvalReport) -> String {
    let mut out = String::from("method,metric,cutoff,user,value\n");
    for s in &r.series {
        for (user, v) in r.users.iter().zip(&s.per_user) {
            let _ = writeln!(out, "{},{},{},{},{}", s.method, s.metric.name(), s.cutoff, user, v);
        }
        let _ = writeln!(out, "{},{},{},ALL,{}", s.method, s.metric.name(), s.cutoff, s.mean);
    }
    out
}

pub fn render_significance_csv(r: &EvalReport) -> String {
    let mut out = String::from("method,competitor,metric,cutoff,n,mean_diff,t,p,significant,degenerate\n");
    for s in &r.significance {
        let t = &s.test;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.method, s.competitor, s.metric.name(), s.cutoff, t.n, t.mean_diff, t.t, t.p, t.significant, t.degenerate
        );
    }
    out
}

pub fn render_excluded(r: &EvalReport) -> String {
    let mut out = String::new();
    for (u, why) in &r.excluded {
        let _ = writeln!(out, "{u}\t{}", why.name());
    }
    out
}

/// Writes `report.txt`, `report.csv`, `significance.csv` and `excluded.tsv`.
pub fn write_report(dir: &Path, r: &EvalReport) -> Result<()> {
    for (name, body) in [
        ("report.txt", render_text(r)),
        ("report.csv", render_csv(r)),
        ("significance.csv", render_significance_csv(r)),
        ("excluded.tsv", render_excluded(r)),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
