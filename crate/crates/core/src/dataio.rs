//! CSV ingestion, the per-cutoff empirical workflow, and its result tables.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{self, BandwidthRule};
use crate::error::{FrdError, Result};
use crate::estimators::{self, EstimatorSpec};
use crate::inference::{self, CiSpec, VarianceSpec};
use crate::localpoly::{self, Sample};
use crate::output;

/// Tokens read as missing, compared case-insensitively after trimming.
const MISSING: [&str; 5] = ["", "na", "nan", ".", "null"];

/// Column mapping for an input file. Rows with a missing value in any
/// mapped column are dropped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub x: String,
    pub y: String,
    pub d: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub cluster: Option<String>,
}

impl DatasetSchema {
    pub fn new(x: &str, y: &str, d: &str) -> Self {
        DatasetSchema {
            x: x.into(),
            y: y.into(),
            d: d.into(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub sample: Sample,
    /// Rows skipped because a mapped field was missing.
    pub dropped_count: usize,
    /// Cluster index per retained row, numbered by first appearance.
    pub clusters: Option<Vec<u64>>,
}

fn is_missing(s: &str) -> bool {
    let t = s.trim();
    MISSING.iter().any(|m| t.eq_ignore_ascii_case(m))
}

pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<LoadedData> {
    let file = std::fs::File::open(path).map_err(|e| FrdError::Io(format!("{}: {e}", path.display())))?;
    read_csv(file, schema)
}

/// Parse delimited text with a header row.
pub fn read_csv<R: std::io::Read>(reader: R, schema: &DatasetSchema) -> Result<LoadedData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FrdError::MissingColumn(name.to_string()))
    };
    let ix = find(&schema.x)?;
    let iy = find(&schema.y)?;
    let id = find(&schema.d)?;
    let iw = schema.covariates.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let ic = schema.cluster.as_deref().map(find).transpose()?;

    let (mut x, mut y, mut d) = (Vec::new(), Vec::new(), Vec::new());
    let mut w: Vec<Vec<f64>> = vec![Vec::new(); iw.len()];
    let mut clusters = Vec::new();
    let mut cluster_ids: HashMap<String, u64> = HashMap::new();
    let mut dropped = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // Data rows are numbered from 1, after the header.
        let row = r + 1;
        let mut cols = vec![ix, iy, id];
        cols.extend(&iw);
        cols.extend(ic);
        if cols.iter().any(|&c| rec.get(c).is_none_or(is_missing)) {
            dropped += 1;
            continue;
        }
        let num = |c: usize, name: &str| -> Result<f64> {
            let raw = &rec[c];
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(FrdError::Parse {
                    column: name.to_string(),
                    row,
                    value: raw.to_string(),
                }),
            }
        };
        let dv = num(id, &schema.d).map_err(|_| FrdError::NonBinaryTreatment {
            row,
            value: rec[id].to_string(),
        })?;
        if dv != 0.0 && dv != 1.0 {
            return Err(FrdError::NonBinaryTreatment {
                row,
                value: rec[id].to_string(),
            });
        }
        x.push(num(ix, &schema.x)?);
        y.push(num(iy, &schema.y)?);
        d.push(dv);
        for (k, (&c, name)) in iw.iter().zip(&schema.covariates).enumerate() {
            w[k].push(num(c, name)?);
        }
        if let Some(c) = ic {
            let next = cluster_ids.len() as u64;
            clusters.push(*cluster_ids.entry(rec[c].to_string()).or_insert(next));
        }
    }
    if x.is_empty() {
        return Err(FrdError::InvalidInput(format!(
            "no complete rows ({dropped} dropped for missing values)"
        )));
    }
    let sample = Sample::new(x, y, d)?.with_covariates(w)?;
    Ok(LoadedData {
        sample,
        dropped_count: dropped,
        clusters: ic.map(|_| clusters),
    })
}

/// Write a sample as CSV with columns `x, y, d` and `w1, w2, ...`.
/// Values use the shortest representation that parses back to the same
/// double.
pub fn write_csv(path: &Path, sample: &Sample) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    let k = sample.n_covariates();
    let mut header = vec!["x".to_string(), "y".into(), "d".into()];
    header.extend((1..=k).map(|j| format!("w{j}")));
    wtr.write_record(&header)?;
    for i in 0..sample.len() {
        let mut rec = vec![
            sample.x()[i].to_string(),
            sample.y()[i].to_string(),
            sample.d()[i].to_string(),
        ];
        if let Some(w) = sample.covariates() {
            rec.extend((0..k).map(|j| w[(i, j)].to_string()));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// One (cutoff, bandwidth, estimator) cell. Failed cells keep the same
/// columns with empty estimates and a reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub cutoff: f64,
    pub bandwidth_rule: String,
    pub h: Option<f64>,
    pub estimator: String,
    pub kernel: String,
    pub p: usize,
    pub n_h: Option<usize>,
    pub n_plus: Option<usize>,
    pub n_minus: Option<usize>,
    pub tau_hat: Option<f64>,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub ci_level: f64,
    pub lambda: Option<f64>,
    pub tau_d: Option<f64>,
    pub near_zero_denominator: Option<bool>,
    pub status: String,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffRun {
    pub cutoff: f64,
    /// Resolved bandwidth per rule, `None` where selection failed.
    pub bandwidths: Vec<Option<f64>>,
    pub estimators: Vec<String>,
    pub results: Vec<ResultRow>,
}

struct Cell<'a> {
    cutoff: f64,
    rule: &'a BandwidthRule,
    h: Result<f64>,
    est: &'a EstimatorSpec,
}

fn evaluate(sample: &Sample, clusters: Option<&[u64]>, cell: &Cell<'_>, ci: &CiSpec) -> ResultRow {
    let mut row = ResultRow {
        cutoff: cell.cutoff,
        bandwidth_rule: cell.rule.to_string(),
        h: cell.h.as_ref().ok().copied(),
        estimator: cell.est.label.clone(),
        kernel: cell.est.kernel.to_string(),
        p: cell.est.p,
        n_h: None,
        n_plus: None,
        n_minus: None,
        tau_hat: None,
        se: None,
        ci_lo: None,
        ci_hi: None,
        ci_level: ci.level,
        lambda: None,
        tau_d: None,
        near_zero_denominator: None,
        status: "ok".into(),
        reason: None,
    };
    let fail = |mut row: ResultRow, e: FrdError| {
        row.status = e.category().to_string();
        row.reason = Some(e.to_string());
        row
    };
    let h = match &cell.h {
        Ok(h) => *h,
        Err(e) => return fail(row, e.clone()),
    };
    let es = match localpoly::split_effective(sample, cell.cutoff, h) {
        Ok(es) => es,
        Err(e) => return fail(row, e),
    };
    row.n_h = Some(es.n_h);
    row.n_plus = Some(es.n_plus);
    row.n_minus = Some(es.n_minus);
    let need = 2 * (cell.est.p + 1);
    if es.n_h <= need {
        let e = FrdError::InsufficientSample(format!("n_h = {} <= 2(p + 1) = {need}", es.n_h));
        return fail(row, e);
    }
    let fit = match estimators::fit(sample, &cell.est.fit_spec(cell.cutoff, h)) {
        Ok(f) => f,
        Err(e) => return fail(row, e),
    };
    // The fit drops zero-weight rows, so report its counts.
    row.n_h = Some(fit.data.n_h());
    row.n_plus = Some(fit.data.n_plus);
    row.n_minus = Some(fit.data.n_minus);
    row.lambda = Some(fit.result.lambda_used);
    row.tau_d = Some(fit.result.tau_d_std);
    row.near_zero_denominator = Some(fit.result.near_zero_denominator);
    row.tau_hat = Some(fit.result.tau_hat);
    let vspec = VarianceSpec {
        flavor: ci.variance,
        cluster_ids: clusters.map(|c| fit.data.rows.iter().map(|&i| c[i]).collect()),
    };
    match inference::infer(&fit, &vspec, ci.level, ci.crit_law) {
        Ok(inf) => {
            row.se = Some(inf.se);
            row.ci_lo = Some(inf.ci.lo);
            row.ci_hi = Some(inf.ci.hi);
        }
        Err(e) => {
            row.status = e.category().to_string();
            row.reason = Some(format!("interval unavailable: {e}"));
        }
    }
    row
}

/// Estimate every (cutoff, bandwidth, estimator) cell. Failures are
/// recorded in the affected rows; output order is cutoff, bandwidth,
/// estimator as given.
pub fn run_cutoffs(
    sample: &Sample,
    clusters: Option<&[u64]>,
    cutoffs: &[f64],
    bandwidths: &[BandwidthRule],
    estimators: &[EstimatorSpec],
    ci: &CiSpec,
) -> Result<Vec<CutoffRun>> {
    if cutoffs.is_empty() || bandwidths.is_empty() || estimators.is_empty() {
        return Err(FrdError::InvalidInput(
            "need at least one cutoff, bandwidth and estimator".into(),
        ));
    }
    if let Some(c) = clusters {
        if c.len() != sample.len() {
            return Err(FrdError::InvalidInput("cluster ids do not match the sample".into()));
        }
    }
    if !(ci.level > 0.0 && ci.level < 1.0) {
        return Err(FrdError::InvalidInput(format!("ci level {} outside (0, 1)", ci.level)));
    }
    let p_max = estimators.iter().map(|e| e.p).max().unwrap_or(1);
    cutoffs
        .iter()
        .map(|&cutoff| {
            if !cutoff.is_finite() {
                return Err(FrdError::InvalidInput(format!("cutoff {cutoff} is not finite")));
            }
            let hs: Vec<Result<f64>> = bandwidths
                .iter()
                .map(|rule| bandwidth::select(rule, sample, cutoff, p_max))
                .collect();
            let cells: Vec<Cell<'_>> = bandwidths
                .iter()
                .zip(&hs)
                .flat_map(|(rule, h)| {
                    estimators.iter().map(move |est| Cell {
                        cutoff,
                        rule,
                        h: h.clone(),
                        est,
                    })
                })
                .collect();
            let results = cells
                .par_iter()
                .map(|cell| evaluate(sample, clusters, cell, ci))
                .collect();
            Ok(CutoffRun {
                cutoff,
                bandwidths: hs.iter().map(|h| h.as_ref().ok().copied()).collect(),
                estimators: estimators.iter().map(|e| e.label.clone()).collect(),
                results,
            })
        })
        .collect()
}

pub fn results_csv(runs: &[CutoffRun]) -> Result<String> {
    let rows: Vec<&ResultRow> = runs.iter().flat_map(|r| &r.results).collect();
    output::to_csv(&rows)
}

/// Input description echoed into `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateInputs {
    pub data: String,
    pub schema: DatasetSchema,
    pub rows_used: usize,
    pub rows_dropped: usize,
    pub cutoffs: Vec<f64>,
    pub bandwidths: Vec<String>,
    pub estimators: Vec<EstimatorSpec>,
    pub ci: CiSpec,
}

pub fn results_json(inputs: &EstimateInputs, runs: &[CutoffRun]) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a> {
        metadata: output::Metadata,
        inputs: &'a EstimateInputs,
        runs: &'a [CutoffRun],
    }
    output::to_json(&Doc {
        metadata: output::Metadata::new("estimate"),
        inputs,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, schema: &DatasetSchema) -> Result<LoadedData> {
        read_csv(text.as_bytes(), schema)
    }

    #[test]
    fn missing_outcome_dropped() {
        let s = DatasetSchema::new("x", "y", "d");
        let data = load("x,y,d\n-1,2.5,0\n0.5,NA,1\n1,3,1\n", &s).unwrap();
        assert_eq!(data.sample.len(), 2);
        assert_eq!(data.dropped_count, 1);
        assert_eq!(data.sample.y(), &[2.5, 3.0]);
    }

    #[test]
    fn missing_tokens() {
        let s = DatasetSchema::new("x", "y", "d");
        let data = load("x,y,d\n1,,0\n1,nan,0\n1,.,0\n1,NULL,0\n1,2,0\n", &s).unwrap();
        assert_eq!((data.sample.len(), data.dropped_count), (1, 4));
    }

    #[test]
    fn data_errors() {
        let s = DatasetSchema::new("x", "y", "d");
        let e = load("x,y,d\n1,2,2\n", &s).unwrap_err();
        assert!(matches!(e, FrdError::NonBinaryTreatment { row: 1, .. }), "{e:?}");
        let e = load("x,y,d\n1,2,yes\n", &s).unwrap_err();
        assert!(matches!(e, FrdError::NonBinaryTreatment { .. }));
        let e = load("x,y,d\n1,abc,1\n", &s).unwrap_err();
        assert!(matches!(e, FrdError::Parse { ref column, row: 1, .. } if column == "y"));
        let e = load("x,outcome,d\n1,2,1\n", &s).unwrap_err();
        assert_eq!(e, FrdError::MissingColumn("y".into()));
        assert_eq!(e.category(), "data");
        assert!(load("x,y,d\n1,NA,1\n", &s).is_err());
    }

    #[test]
    fn covariates_and_clusters() {
        let mut s = DatasetSchema::new("x", "y", "d");
        s.covariates = vec!["w".into()];
        s.cluster = Some("school".into());
        let data = load("x,y,d,w,school\n1,2,1,0.5,a\n2,3,0,NA,b\n3,4,1,1.5,c\n4,5,0,2,a\n", &s).unwrap();
        assert_eq!(data.sample.n_covariates(), 1);
        assert_eq!(data.clusters, Some(vec![0, 1, 0]));
        assert_eq!(data.dropped_count, 1);
    }
}
