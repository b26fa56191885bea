use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EpochLoss, TrainConfig};
use crate::model::Variant;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphScore {
    pub graph_id: usize,
    pub fold: usize,
    pub score: f64,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldHistory {
    pub fold: usize,
    pub losses: Vec<EpochLoss>,
}

/// Outcome of one cross-validation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub dataset: String,
    pub variant: Variant,
    pub node_blocks: usize,
    pub graph_blocks: usize,
    pub tau_percent: f64,
    pub folds: usize,
    pub seed: u64,
    pub per_fold_auc: Vec<f64>,
    pub mean_auc: f64,
    /// Population standard deviation of `per_fold_auc`.
    pub std_auc: f64,
    /// Sorted by graph id.
    pub per_graph_scores: Vec<GraphScore>,
    pub loss_history: Vec<FoldHistory>,
    pub config: TrainConfig,
    pub wall_clock_seconds: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    /// Pretty JSON with keys in lexicographic order.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string_pretty(&value).expect("value serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Equal in everything but timing.
    pub fn same_results(&self, other: &Self) -> bool {
        let strip = |r: &Self| Self {
            wall_clock_seconds: 0.0,
            ..r.clone()
        };
        strip(self) == strip(other)
    }

    /// Checks fold count, AUC range, mean/std consistency and that every
    /// graph id in `dataset_ids` is scored exactly once.
    pub fn check(&self, dataset_ids: &[usize]) -> Result<(), String> {
        if self.per_fold_auc.len() != self.folds {
            return Err(format!(
                "{} fold AUCs for {} folds",
                self.per_fold_auc.len(),
                self.folds
            ));
        }
        if let Some(a) = self.per_fold_auc.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(format!("AUC {a} outside [0, 1]"));
        }
        let (mean, std) = mean_std(&self.per_fold_auc);
        if (mean - self.mean_auc).abs() > 1e-12 || (std - self.std_auc).abs() > 1e-12 {
            return Err("mean/std disagree with per-fold AUCs".into());
        }
        let mut seen = HashSet::new();
        for s in &self.per_graph_scores {
            if !seen.insert(s.graph_id) {
                return Err(format!("graph {} scored twice", s.graph_id));
            }
        }
        let expected: HashSet<usize> = dataset_ids.iter().copied().collect();
        if seen != expected {
            return Err("scored graphs differ from the dataset".into());
        }
        Ok(())
    }
}

/// `dataset,variant,P,Q,tau,fold,auc` rows for every fold of every report.
pub fn summary_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("dataset,variant,P,Q,tau,fold,auc\n");
    for r in reports {
        for (fold, auc) in r.per_fold_auc.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{fold},{auc}",
                r.dataset, r.variant, r.node_blocks, r.graph_blocks, r.tau_percent
            )
            .expect("string write");
        }
    }
    out
}

/// `fold,epoch,total,rec_structure,rec_attribute,approximation,entropy`.
pub fn loss_history_csv(report: &EvalReport) -> String {
    let mut out = String::from("fold,epoch,total,rec_structure,rec_attribute,approximation,entropy\n");
    for h in &report.loss_history {
        for l in &h.losses {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                h.fold, l.epoch, l.total, l.rec_structure, l.rec_attribute, l.approximation, l.entropy
            )
            .expect("string write");
        }
    }
    out
}
