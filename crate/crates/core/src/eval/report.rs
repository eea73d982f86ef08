use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::recall::RetrievalReport;
use crate::{Error, Result, FORMAT_VERSION};

/// `(1/N) * sum 1[pred_i == label_i]`.
pub fn accuracy<T: PartialEq>(predictions: &[T], labels: &[T]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictions vs {} labels", predictions.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty set".into()));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: String,
    pub support: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Accuracy per true class, sorted by class name.
pub fn per_class_accuracy(predictions: &[String], labels: &[String]) -> Vec<ClassAccuracy> {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (p, l) in predictions.iter().zip(labels) {
        let e = counts.entry(l.as_str()).or_default();
        e.0 += 1;
        e.1 += usize::from(p == l);
    }
    counts
        .into_iter()
        .map(|(class, (support, correct))| ClassAccuracy {
            class: class.to_string(),
            support,
            correct,
            accuracy: correct as f64 / support as f64,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    Retrieval,
    Zeroshot,
    Probe,
}

impl EvalTask {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalTask::Retrieval => "retrieval",
            EvalTask::Zeroshot => "zeroshot",
            EvalTask::Probe => "probe",
        }
    }
}

/// Machine-readable result of one evaluation run.
///
/// `metrics` holds flat named values: `accuracy` for classification,
/// `train_accuracy` and `val_accuracy` for probes, and `i2t_r@K`, `t2i_r@K`
/// and `mean_recall` for retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: EvalTask,
    pub format_version: u32,
    pub fingerprint: String,
    pub samples: usize,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_class: Vec<ClassAccuracy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn new(task: EvalTask, fingerprint: impl Into<String>, samples: usize) -> Self {
        Self {
            task,
            format_version: FORMAT_VERSION,
            fingerprint: fingerprint.into(),
            samples,
            metrics: BTreeMap::new(),
            per_class: Vec::new(),
            retrieval: None,
            warnings: Vec::new(),
        }
    }

    pub fn from_retrieval(report: RetrievalReport, fingerprint: impl Into<String>) -> Self {
        let mut out = Self::new(EvalTask::Retrieval, fingerprint, report.pairs);
        for r in &report.image_to_text.recall {
            out.metrics.insert(format!("i2t_r@{}", r.k), r.recall);
        }
        for r in &report.text_to_image.recall {
            out.metrics.insert(format!("t2i_r@{}", r.k), r.recall);
        }
        out.metrics.insert("mean_recall".into(), report.mean_recall);
        out.warnings = report.warnings.clone();
        out.retrieval = Some(report);
        out
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn all_finite(&self) -> bool {
        self.metrics.values().all(|v| v.is_finite()) && self.per_class.iter().all(|c| c.accuracy.is_finite())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn summary_row(&self) -> SummaryRow {
        SummaryRow {
            task: self.task.as_str().to_string(),
            format_version: self.format_version,
            fingerprint: self.fingerprint.clone(),
            samples: self.samples,
            metrics: self.metrics.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";"),
        }
    }
}

/// Flat CSV row for aggregation. Columns: `task,format_version,fingerprint,samples,metrics`,
/// where `metrics` is `name=value` pairs joined by `;`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: String,
    pub format_version: u32,
    pub fingerprint: String,
    pub samples: usize,
    pub metrics: String,
}

impl SummaryRow {
    pub fn parsed_metrics(&self) -> Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        for part in self.metrics.split(';').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("metric `{part}` is not name=value")))?;
            let v: f64 = v.parse().map_err(|_| Error::Format(format!("metric `{k}` has non-numeric value `{v}`")))?;
            out.insert(k.to_string(), v);
        }
        Ok(out)
    }

    /// Writes the header and this row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        w.serialize(self).map_err(|e| Error::Format(e.to_string()))?;
        w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<Self>> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
        r.deserialize().map(|row| row.map_err(|e| Error::parse(path, e.to_string()))).collect()
    }
}
