//! Per-head test metrics and the unseen-class clustering score.
//!
//! Time is scored as mean absolute error in days, classification heads as
//! percent agreement. The unseen-class score clusters embedded points from
//! classes the model never saw and checks how well clusters line up with
//! the true varieties.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_store::FeatureSet;
use crate::pretext::{check_labels, ModelError, Predictions, PretextModel};
use crate::trajectory::{fit_gmm, MixturePrior, TrajError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mixture(#[from] TrajError),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Mean and population standard deviation of `|pred - label| * span_days`.
pub fn mae_days(pred_norm: &[f64], label_norm: &[f64], span_days: f64) -> Result<(f64, f64), EvalError> {
    check_lengths(pred_norm.len(), label_norm.len())?;
    let errs: Vec<f64> = pred_norm.iter().zip(label_norm).map(|(p, l)| (p - l).abs() * span_days).collect();
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Percentage of positions where the two label lists agree.
pub fn percent_agreement<T: PartialEq>(pred: &[T], truth: &[T]) -> Result<f64, EvalError> {
    check_lengths(pred.len(), truth.len())?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

fn check_lengths(a: usize, b: usize) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::Input(format!("length mismatch: {a} predictions, {b} labels")));
    }
    if a == 0 {
        return Err(EvalError::Input("nothing to evaluate".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScore {
    pub mae_days: f64,
    pub std_days: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub percent: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    /// Backbone the features came from, when known.
    pub backbone: Option<String>,
    pub n_records: usize,
    pub time: Option<TimeScore>,
    pub variety: Option<Agreement>,
    pub fungicide: Option<Agreement>,
    pub rot: Option<Agreement>,
    pub unseen: Option<Agreement>,
}

/// Scores precomputed predictions against the labels of `set`, record by
/// record. Rot is only scored where a rot label exists.
pub fn eval_predictions(preds: &[Predictions], set: &FeatureSet) -> Result<EvalReport, EvalError> {
    check_lengths(preds.len(), set.records.len())?;
    let mut report = EvalReport {
        backbone: (!set.backbone.is_empty()).then(|| set.backbone.clone()),
        n_records: set.records.len(),
        ..EvalReport::default()
    };
    let span = set.span_days;

    let time: Vec<(f64, f64)> = preds
        .iter()
        .zip(&set.records)
        .filter_map(|(p, r)| p.time_days.map(|d| (d / span, f64::from(r.time_norm))))
        .collect();
    if !time.is_empty() {
        let (p, l): (Vec<f64>, Vec<f64>) = time.into_iter().unzip();
        let (mae, std) = mae_days(&p, &l, span)?;
        report.time = Some(TimeScore {
            mae_days: mae,
            std_days: std,
            count: p.len(),
        });
    }

    let variety: Vec<(u16, u16)> = preds
        .iter()
        .zip(&set.records)
        .filter_map(|(p, r)| p.variety.map(|v| (v as u16, r.variety_id)))
        .collect();
    report.variety = agreement(variety)?;
    let fungicide: Vec<(bool, bool)> = preds
        .iter()
        .zip(&set.records)
        .filter_map(|(p, r)| p.fungicide.map(|f| (f, r.fungicide)))
        .collect();
    report.fungicide = agreement(fungicide)?;
    let rot: Vec<(bool, bool)> = preds
        .iter()
        .zip(&set.records)
        .filter_map(|(p, r)| Some((p.rot?, r.rot?)))
        .collect();
    report.rot = agreement(rot)?;
    Ok(report)
}

fn agreement<T: PartialEq>(pairs: Vec<(T, T)>) -> Result<Option<Agreement>, EvalError> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let (p, t): (Vec<T>, Vec<T>) = pairs.into_iter().unzip();
    Ok(Some(Agreement {
        percent: percent_agreement(&p, &t)?,
        count: p.len(),
    }))
}

/// Runs the model on every record of `test` and scores each enabled head.
pub fn eval_heads(model: &PretextModel, test: &FeatureSet) -> Result<EvalReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::Input("test set has no records".into()));
    }
    check_labels(model, test)?;
    let preds = test
        .records
        .iter()
        .map(|r| model.predict(&r.features_f64(), test.span_days))
        .collect::<Result<Vec<_>, _>>()?;
    eval_predictions(&preds, test)
}

/// Fits an `n`-component mixture to `points`, labels each component with the
/// most common variety among the points it claims (ties to the lower id) and
/// returns per-point agreement between component labels and true varieties.
pub fn eval_unseen_classes(points: &[[f64; 2]], varieties: &[u16], n: usize, seed: u64) -> Result<f64, EvalError> {
    check_lengths(points.len(), varieties.len())?;
    if n == 0 || n > points.len() {
        return Err(EvalError::Input(format!("cannot fit {n} components to {} points", points.len())));
    }
    let data: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
    let gmm = fit_gmm(&data, n, seed, &MixturePrior::default())?;
    let assigned = data.iter().map(|x| gmm.assign(x)).collect::<Result<Vec<_>, _>>()?;

    let mut counts: BTreeMap<usize, BTreeMap<u16, usize>> = BTreeMap::new();
    for (&c, &v) in assigned.iter().zip(varieties) {
        *counts.entry(c).or_default().entry(v).or_default() += 1;
    }
    let label: BTreeMap<usize, u16> = counts
        .into_iter()
        .map(|(c, by_variety)| {
            // Iteration is in ascending id, so strict `>` keeps the lower id on ties.
            let mut best = (0u16, 0usize);
            for (v, k) in by_variety {
                if k > best.1 {
                    best = (v, k);
                }
            }
            (c, best.0)
        })
        .collect();
    let predicted: Vec<u16> = assigned.iter().map(|c| label[c]).collect();
    percent_agreement(&predicted, varieties)
}

impl EvalReport {
    pub fn to_writer<W: Write>(&self, w: W) -> Result<(), EvalError> {
        serde_json::to_writer_pretty(w, self).map_err(|e| EvalError::Io(e.to_string()))
    }

    /// Aligned plain-text table: one header row and one value row.
    pub fn table(&self) -> String {
        let pa = |a: &Option<Agreement>| a.map_or("-".to_string(), |a| format!("{:.1}%", a.percent));
        let mut header = Vec::new();
        let mut row = Vec::new();
        if let Some(b) = &self.backbone {
            header.push("Backbone".to_string());
            row.push(b.clone());
        }
        header.extend(["Time MAE(d)", "Class PA", "Fungicide PA", "Rot PA"].map(String::from));
        row.push(self.time.map_or("-".to_string(), |t| format!("{:.2} ± {:.2}", t.mae_days, t.std_days)));
        row.push(pa(&self.variety));
        row.push(pa(&self.fungicide));
        row.push(pa(&self.rot));
        if self.unseen.is_some() {
            header.push("Unseen PA".into());
            row.push(pa(&self.unseen));
        }
        let widths: Vec<usize> = header
            .iter()
            .zip(&row)
            .map(|(h, r)| h.chars().count().max(r.chars().count()))
            .collect();
        let mut out = String::new();
        for line in [&header, &row] {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}
