use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::mean_std;
use super::{
    evaluate_auc, train, EvalReport, FoldHistory, GraphScore, Precision, TrainConfig, TrainError,
    REPORT_SCHEMA_VERSION,
};
use crate::diffkernel::Real;
use crate::graph_io::{inject_contamination, make_folds, FoldSplit, Graph, GraphDataset};
use crate::model::{score_graphs, Variant};

/// Protocol settings shared by the experiment drivers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub folds: usize,
    /// Fold assignment seed; fold `i` trains with `seed + i`.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub tau_percent: Vec<f64>,
    pub p_values: Vec<usize>,
    pub q_values: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: String::new(),
            folds: 5,
            seed: 0,
            jobs: 0,
            tau_percent: vec![0.0, 2.0, 4.0, 8.0, 16.0],
            p_values: (1..=6).collect(),
            q_values: (1..=6).collect(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.folds < 2 {
            return Err(TrainError::Config(format!(
                "need at least 2 folds, got {}",
                self.folds
            )));
        }
        if let Some(t) = self.tau_percent.iter().find(|t| !(0.0..=100.0).contains(*t)) {
            return Err(TrainError::Config(format!(
                "contamination rate {t} outside [0, 100]"
            )));
        }
        for (name, values) in [("P", &self.p_values), ("Q", &self.q_values)] {
            if values.is_empty() || values.contains(&0) {
                return Err(TrainError::Config(format!(
                    "{name} values must be nonempty and at least 1"
                )));
            }
        }
        Ok(())
    }
}

/// One (P, Q) cell of the memory-size sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryCell {
    pub node_blocks: usize,
    pub graph_blocks: usize,
    pub report: EvalReport,
}

struct FoldOutcome {
    auc: f64,
    scores: Vec<GraphScore>,
    history: FoldHistory,
}

fn run_fold<T: Real>(
    split: &FoldSplit,
    n_max: usize,
    config: &TrainConfig,
) -> Result<FoldOutcome, TrainError> {
    let out = train::<T>(&split.train_graphs, n_max, config)?;
    let scores = score_graphs(&split.test_graphs, &out.params)?;
    let labels: Vec<u8> = split.test_graphs.iter().map(Graph::label).collect();
    let auc = evaluate_auc(&scores, &labels)?;
    Ok(FoldOutcome {
        auc,
        scores: split
            .test_graphs
            .iter()
            .zip(scores)
            .map(|(g, score)| GraphScore {
                graph_id: g.graph_id(),
                fold: split.fold_index,
                score,
                label: g.label(),
            })
            .collect(),
        history: FoldHistory {
            fold: split.fold_index,
            losses: out.history,
        },
    })
}

fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R, TrainError> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| TrainError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// k-fold CV at contamination `tau`: each fold trains a fresh model on its
/// (possibly contaminated) training split and scores its test split.
fn cross_validate(
    dataset: &GraphDataset,
    config: &TrainConfig,
    exp: &ExperimentConfig,
    tau: f64,
) -> Result<EvalReport, TrainError> {
    exp.validate()?;
    config.validate()?;
    let start = Instant::now();
    let folds = make_folds(dataset, exp.folds, exp.seed)?;
    let n_max = dataset.n_max();
    let run = |split: &FoldSplit| -> Result<FoldOutcome, TrainError> {
        let fold_seed = exp.seed.wrapping_add(split.fold_index as u64);
        let wrap = |e: TrainError| TrainError::Fold {
            fold: split.fold_index,
            source: Box::new(e),
        };
        let split =
            inject_contamination(split, &split.anomaly_pool, tau, fold_seed).map_err(|e| wrap(e.into()))?;
        let cfg = TrainConfig {
            seed: fold_seed,
            ..config.clone()
        };
        match cfg.precision {
            Precision::Single => run_fold::<f32>(&split, n_max, &cfg),
            Precision::Double => run_fold::<f64>(&split, n_max, &cfg),
        }
        .map_err(wrap)
    };
    let outcomes = with_jobs(exp.jobs, || folds.par_iter().map(run).collect::<Vec<_>>())?
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let per_fold_auc: Vec<f64> = outcomes.iter().map(|o| o.auc).collect();
    let (mean_auc, std_auc) = mean_std(&per_fold_auc);
    let mut per_graph_scores = Vec::new();
    let mut loss_history = Vec::new();
    for o in outcomes {
        per_graph_scores.extend(o.scores);
        loss_history.push(o.history);
    }
    per_graph_scores.sort_by_key(|s| s.graph_id);
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset: dataset.name().to_string(),
        variant: config.variant,
        node_blocks: config.node_blocks,
        graph_blocks: config.graph_blocks,
        tau_percent: tau,
        folds: exp.folds,
        seed: exp.seed,
        per_fold_auc,
        mean_auc,
        std_auc,
        per_graph_scores,
        loss_history,
        config: config.clone(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Stratified k-fold CV, training on normal graphs only.
pub fn run_cv(
    dataset: &GraphDataset,
    config: &TrainConfig,
    exp: &ExperimentConfig,
) -> Result<EvalReport, TrainError> {
    cross_validate(dataset, config, exp, 0.0)
}

/// One CV report per contamination rate in `exp.tau_percent`, in order.
/// Fold assignment is the same for every rate.
pub fn run_contamination_sweep(
    dataset: &GraphDataset,
    config: &TrainConfig,
    exp: &ExperimentConfig,
) -> Result<Vec<EvalReport>, TrainError> {
    exp.tau_percent
        .iter()
        .map(|&tau| cross_validate(dataset, config, exp, tau))
        .collect()
}

/// Cells (p, 1) for each p, then (1, q) for each q, without repeats.
pub fn memory_cells(p_values: &[usize], q_values: &[usize]) -> Vec<(usize, usize)> {
    let mut cells: Vec<(usize, usize)> = Vec::new();
    for cell in p_values
        .iter()
        .map(|&p| (p, 1))
        .chain(q_values.iter().map(|&q| (1, q)))
    {
        if !cells.contains(&cell) {
            cells.push(cell);
        }
    }
    cells
}

/// Varies P with Q = 1, then Q with P = 1. Every cell uses the same folds.
pub fn run_memory_sweep(
    dataset: &GraphDataset,
    config: &TrainConfig,
    exp: &ExperimentConfig,
) -> Result<Vec<MemoryCell>, TrainError> {
    exp.validate()?;
    memory_cells(&exp.p_values, &exp.q_values)
        .into_iter()
        .map(|(p, q)| {
            let cfg = TrainConfig {
                node_blocks: p,
                graph_blocks: q,
                ..config.clone()
            };
            Ok(MemoryCell {
                node_blocks: p,
                graph_blocks: q,
                report: cross_validate(dataset, &cfg, exp, 0.0)?,
            })
        })
        .collect()
}

/// CV with one of the ablated architectures.
pub fn run_ablation(
    dataset: &GraphDataset,
    config: &TrainConfig,
    variant: Variant,
    exp: &ExperimentConfig,
) -> Result<EvalReport, TrainError> {
    let cfg = TrainConfig {
        variant,
        ..config.clone()
    };
    cross_validate(dataset, &cfg, exp, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::synthetic::density_dataset;

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 16,
            encoder_dims: vec![8, 8, 4],
            decoder_hidden: 4,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        }
    }

    fn exp() -> ExperimentConfig {
        ExperimentConfig {
            dataset: "synthetic".into(),
            folds: 3,
            seed: 4,
            tau_percent: vec![0.0, 50.0],
            p_values: vec![1, 2],
            q_values: vec![1, 3],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn cv_report_is_consistent_and_reproducible() {
        let ds = density_dataset(24, 9, 1);
        let a = run_cv(&ds, &quick(), &exp()).unwrap();
        let ids: Vec<usize> = ds.graphs().iter().map(Graph::graph_id).collect();
        a.check(&ids).unwrap();
        assert_eq!(a.loss_history.len(), 3);
        let b = run_cv(&ds, &quick(), &exp()).unwrap();
        assert!(a.same_results(&b));
        let single = ExperimentConfig { jobs: 1, ..exp() };
        assert!(a.same_results(&run_cv(&ds, &quick(), &single).unwrap()));
    }

    #[test]
    fn zero_contamination_equals_plain_cv() {
        let ds = density_dataset(24, 9, 2);
        let reports = run_contamination_sweep(&ds, &quick(), &exp()).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].tau_percent, 0.0);
        assert_eq!(reports[1].tau_percent, 50.0);
        let plain = run_cv(&ds, &quick(), &exp()).unwrap();
        assert!(reports[0].same_results(&plain));
        assert!(!reports[1].same_results(&plain));
    }

    #[test]
    fn memory_cells_follow_the_protocol() {
        assert_eq!(memory_cells(&[1], &[1]), vec![(1, 1)]);
        assert_eq!(memory_cells(&[1, 2, 3], &[1]), vec![(1, 1), (2, 1), (3, 1)]);
        assert_eq!(memory_cells(&[1, 2], &[1, 3]), vec![(1, 1), (2, 1), (1, 3)]);
        let ds = density_dataset(24, 9, 3);
        let cells = run_memory_sweep(&ds, &quick(), &exp()).unwrap();
        assert_eq!(cells.len(), 3);
        assert_eq!((cells[2].node_blocks, cells[2].graph_blocks), (1, 3));
        assert_eq!(cells[2].report.graph_blocks, 3);
        let one = TrainConfig {
            node_blocks: 1,
            graph_blocks: 1,
            ..quick()
        };
        assert!(cells[0].report.same_results(&run_cv(&ds, &one, &exp()).unwrap()));
    }

    #[test]
    fn full_ablation_equals_cv() {
        let ds = density_dataset(24, 9, 5);
        let full = run_ablation(&ds, &quick(), Variant::Full, &exp()).unwrap();
        assert!(full.same_results(&run_cv(&ds, &quick(), &exp()).unwrap()));
        let gae = run_ablation(&ds, &quick(), Variant::GaeOnly, &exp()).unwrap();
        assert_eq!(gae.variant, Variant::GaeOnly);
        assert!(gae
            .loss_history
            .iter()
            .flat_map(|h| &h.losses)
            .all(|l| l.approximation == 0.0 && l.entropy == 0.0));
    }

    #[test]
    fn invalid_experiments_are_rejected() {
        let ds = density_dataset(24, 9, 5);
        let bad = ExperimentConfig {
            tau_percent: vec![120.0],
            ..exp()
        };
        assert!(matches!(run_cv(&ds, &quick(), &bad), Err(TrainError::Config(_))));
        let bad = ExperimentConfig {
            p_values: vec![0],
            ..exp()
        };
        assert!(run_memory_sweep(&ds, &quick(), &bad).is_err());
        let bad = ExperimentConfig { folds: 1, ..exp() };
        assert!(run_cv(&ds, &quick(), &bad).is_err());
    }
}
