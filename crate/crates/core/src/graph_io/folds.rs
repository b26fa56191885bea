use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, GraphDataset, GraphError};

/// Maps raw class values to anomaly labels: the rarest class is anomalous
/// (1), everything else normal (0). Count ties go to the smaller raw value.
pub fn label_anomalies(raw_labels: &[i64]) -> Result<Vec<u8>, GraphError> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &r in raw_labels {
        *counts.entry(r).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(GraphError::Config(format!(
            "anomaly labeling needs at least two classes, found {}",
            counts.len()
        )));
    }
    // BTreeMap iterates in ascending raw value, so min_by_key keeps the
    // smallest value among equally rare classes.
    let (&minority, _) = counts
        .iter()
        .min_by_key(|(_, &c)| c)
        .expect("at least two classes");
    Ok(raw_labels.iter().map(|&r| u8::from(r == minority)).collect())
}

/// One cross-validation fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub seed: u64,
    /// Normal graphs outside the test fold, plus any injected anomalies.
    pub train_graphs: Vec<Graph>,
    pub test_graphs: Vec<Graph>,
    /// Anomalous graphs outside the test fold that are not in training.
    pub anomaly_pool: Vec<Graph>,
}

/// Stratified k-fold split.
///
/// Each class is shuffled under `seed`; the shuffled anomalies followed by
/// the shuffled normals are dealt round-robin into the k test folds, so
/// every fold gets ⌊n/k⌋ or ⌈n/k⌉ graphs and ≈1/k of each class.
pub fn make_folds(dataset: &GraphDataset, k: usize, seed: u64) -> Result<Vec<FoldSplit>, GraphError> {
    if k < 2 {
        return Err(GraphError::Config(format!("need at least 2 folds, got {k}")));
    }
    let graphs = dataset.graphs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut anomalies: Vec<usize> = (0..graphs.len()).filter(|&i| graphs[i].label() == 1).collect();
    let mut normals: Vec<usize> = (0..graphs.len()).filter(|&i| graphs[i].label() == 0).collect();
    for (name, class) in [("normal", &normals), ("anomalous", &anomalies)] {
        if class.len() < k {
            return Err(GraphError::Config(format!(
                "{k} folds requested but only {} {name} graphs",
                class.len()
            )));
        }
    }
    anomalies.shuffle(&mut rng);
    normals.shuffle(&mut rng);

    let mut fold_of = vec![0usize; graphs.len()];
    for (pos, &idx) in anomalies.iter().chain(&normals).enumerate() {
        fold_of[idx] = pos % k;
    }

    Ok((0..k)
        .map(|fold| {
            let mut split = FoldSplit {
                fold_index: fold,
                seed,
                train_graphs: Vec::new(),
                test_graphs: Vec::new(),
                anomaly_pool: Vec::new(),
            };
            for (idx, g) in graphs.iter().enumerate() {
                let bucket = if fold_of[idx] == fold {
                    &mut split.test_graphs
                } else if g.label() == 0 {
                    &mut split.train_graphs
                } else {
                    &mut split.anomaly_pool
                };
                bucket.push(g.clone());
            }
            split
        })
        .collect())
}

/// Appends ⌊τ/100 · |pool|⌋ anomalies, drawn without replacement under
/// `seed`, to the training set. The test set is untouched.
pub fn inject_contamination(
    split: &FoldSplit,
    anomaly_pool: &[Graph],
    tau_percent: f64,
    seed: u64,
) -> Result<FoldSplit, GraphError> {
    if !(0.0..=100.0).contains(&tau_percent) {
        return Err(GraphError::Config(format!(
            "contamination rate {tau_percent} outside [0, 100]"
        )));
    }
    let test_ids: HashSet<usize> = split.test_graphs.iter().map(Graph::graph_id).collect();
    if let Some(g) = anomaly_pool.iter().find(|g| test_ids.contains(&g.graph_id())) {
        return Err(GraphError::Structural(format!(
            "anomaly pool graph {} is also in the test set",
            g.graph_id()
        )));
    }
    // τ·|pool| is an exact integer product for integral τ; divide last.
    let count = ((tau_percent * anomaly_pool.len() as f64) / 100.0 + 1e-9).floor() as usize;
    let count = count.min(anomaly_pool.len());
    if count == 0 {
        return Ok(split.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, anomaly_pool.len(), count);
    let chosen_set: HashSet<usize> = chosen.iter().collect();
    let mut out = split.clone();
    out.train_graphs
        .extend(chosen.iter().map(|i| anomaly_pool[i].clone()));
    let injected: HashSet<usize> = chosen_set.iter().map(|&i| anomaly_pool[i].graph_id()).collect();
    out.anomaly_pool.retain(|g| !injected.contains(&g.graph_id()));
    Ok(out)
}

/// `graph_id,fold,role` rows; role is `train`, `test` or `pool`.
pub fn folds_csv(folds: &[FoldSplit]) -> String {
    let mut out = String::from("graph_id,fold,role\n");
    for f in folds {
        for (role, graphs) in [
            ("train", &f.train_graphs),
            ("test", &f.test_graphs),
            ("pool", &f.anomaly_pool),
        ] {
            for g in graphs {
                writeln!(out, "{},{},{role}", g.graph_id(), f.fold_index).expect("string write");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(normals: usize, anomalies: usize) -> GraphDataset {
        let graphs = (0..normals + anomalies)
            .map(|i| Graph::from_edges(i, 3, &[(0, 1)], None, u8::from(i >= normals)).unwrap())
            .collect();
        GraphDataset::new("toy", graphs).unwrap()
    }

    #[test]
    fn minority_class_is_anomalous() {
        let mut raw = vec![7i64; 900];
        raw.extend(vec![3i64; 100]);
        let labels = label_anomalies(&raw).unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 100);
        assert!(labels[..900].iter().all(|&l| l == 0));
    }

    #[test]
    fn tie_goes_to_smaller_raw_value() {
        let raw: Vec<i64> = (0..100).map(|i| i % 2).collect();
        let labels = label_anomalies(&raw).unwrap();
        for (r, l) in raw.iter().zip(&labels) {
            assert_eq!(*l, u8::from(*r == 0));
        }
    }

    #[test]
    fn single_class_is_config_error() {
        assert!(matches!(label_anomalies(&[1, 1, 1]), Err(GraphError::Config(_))));
    }

    #[test]
    fn ten_graphs_five_folds_two_each() {
        let folds = make_folds(&dataset(5, 5), 5, 1).unwrap();
        assert_eq!(folds.len(), 5);
        for f in &folds {
            assert_eq!(f.test_graphs.len(), 2);
            assert!(f.train_graphs.iter().all(|g| g.label() == 0));
        }
    }

    #[test]
    fn folds_are_deterministic_and_seed_dependent() {
        let ds = dataset(40, 10);
        let a = folds_csv(&make_folds(&ds, 5, 9).unwrap());
        let b = folds_csv(&make_folds(&ds, 5, 9).unwrap());
        let c = folds_csv(&make_folds(&ds, 5, 10).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn stratification_spreads_anomalies() {
        let folds = make_folds(&dataset(80, 10), 5, 3).unwrap();
        for f in &folds {
            let anomalies = f.test_graphs.iter().filter(|g| g.label() == 1).count();
            assert_eq!(anomalies, 2);
            assert_eq!(f.anomaly_pool.len(), 8);
        }
    }

    #[test]
    fn too_many_folds_is_config_error() {
        assert!(matches!(
            make_folds(&dataset(20, 3), 5, 0),
            Err(GraphError::Config(_))
        ));
        assert!(matches!(
            make_folds(&dataset(20, 5), 1, 0),
            Err(GraphError::Config(_))
        ));
    }

    #[test]
    fn contamination_counts() {
        let ds = dataset(100, 70);
        let folds = make_folds(&ds, 5, 0).unwrap();
        let split = &folds[0];
        assert!(split.anomaly_pool.len() >= 50);
        let mut pool = split.anomaly_pool.clone();
        pool.truncate(50);

        let zero = inject_contamination(split, &pool, 0.0, 4).unwrap();
        assert_eq!(&zero, split);

        let sixteen = inject_contamination(split, &pool, 16.0, 4).unwrap();
        assert_eq!(sixteen.train_graphs.len(), split.train_graphs.len() + 8);
        assert_eq!(sixteen.test_graphs, split.test_graphs);

        let all = inject_contamination(split, &pool, 100.0, 4).unwrap();
        assert_eq!(all.train_graphs.len(), split.train_graphs.len() + 50);
    }

    #[test]
    fn contamination_sampling_has_no_repeats() {
        let ds = dataset(100, 60);
        let split = &make_folds(&ds, 5, 0).unwrap()[0];
        let out = inject_contamination(split, &split.anomaly_pool, 50.0, 8).unwrap();
        let ids: HashSet<usize> = out.train_graphs.iter().map(Graph::graph_id).collect();
        assert_eq!(ids.len(), out.train_graphs.len());
    }

    #[test]
    fn pool_overlapping_test_set_is_rejected() {
        let ds = dataset(20, 10);
        let split = &make_folds(&ds, 5, 0).unwrap()[0];
        let bad: Vec<Graph> = split.test_graphs.clone();
        assert!(matches!(
            inject_contamination(split, &bad, 10.0, 0),
            Err(GraphError::Structural(_))
        ));
    }
}
