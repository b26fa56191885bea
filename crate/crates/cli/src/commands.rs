use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use himnet::diffkernel::suite::check_all_primitives;
use himnet::diffkernel::Primitive;
use himnet::graph_io::{parse_tudataset, resolve_dataset_dir, write_tudataset, GraphDataset};
use himnet::model::{check_model_gradients, toy_model_config};
use himnet::train::synthetic::density_dataset;
use himnet::train::{
    loss_history_csv, run_ablation, run_contamination_sweep, run_cv, run_memory_sweep, summary_csv,
    EvalReport,
};
use serde::Serialize;

use crate::config::{Command, Resolved, Settings};
use crate::manifest::{dataset_checksum, RunManifest, MANIFEST_FILE, MANIFEST_VERSION};
use crate::CliError;

pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const REPORT_FILE: &str = "report.json";
pub const INDEX_FILE: &str = "index.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const GRADCHECK_FILE: &str = "gradcheck.json";

fn pretty<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("serializable");
    serde_json::to_string_pretty(&value).expect("value serializes") + "\n"
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn create(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self {
            dir,
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: String, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(&name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name);
        Ok(())
    }
}

#[derive(Serialize)]
struct IndexCell {
    label: String,
    variant: String,
    node_blocks: usize,
    graph_blocks: usize,
    tau_percent: f64,
    mean_auc: f64,
    std_auc: f64,
    report: String,
    loss_history: String,
}

#[derive(Serialize)]
struct Index {
    command: String,
    dataset: String,
    cells: Vec<IndexCell>,
}

#[derive(Serialize)]
struct GradcheckReport {
    eps: f64,
    seeds: usize,
    tolerance: f64,
    primitives: BTreeMap<String, f64>,
    model: BTreeMap<String, f64>,
    max_relative_error: f64,
    offenders: Vec<String>,
    passed: bool,
}

fn tau_label(tau: f64) -> String {
    format!("tau_{tau}").replace('.', "_")
}

/// Runs `command` and writes its outputs plus a manifest. When
/// `expect_checksum` is set, the dataset must hash to it.
pub fn execute(
    command: Command,
    resolved: Resolved,
    config_file: Option<PathBuf>,
    fault: Option<Primitive>,
    expect_checksum: Option<&str>,
) -> Result<RunManifest, CliError> {
    let s = Settings::from_resolved(command, &resolved)?;
    let mut manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        command: command.name().into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        dataset: s.dataset.clone(),
        dataset_checksum: None,
        seed: s.exp.seed,
        config_file,
        config: resolved,
        outputs: Vec::new(),
    };
    if command == Command::Gradcheck {
        return gradcheck(&s, fault, manifest);
    }

    let name = s.dataset.clone().expect("validated");
    let dir = resolve_dataset_dir(&s.data_dir, &name)?;
    let checksum = dataset_checksum(&dir, &name)?;
    if let Some(expected) = expect_checksum {
        if expected != checksum {
            return Err(CliError::Usage(format!(
                "dataset {name} under {} changed since the recorded run",
                dir.display()
            )));
        }
    }
    let ds = parse_tudataset(&s.data_dir, &name)?;
    manifest.dataset_checksum = Some(checksum);

    let cells: Vec<(String, EvalReport)> = match command {
        Command::Cv => {
            let report = if s.exp.tau_percent == [0.0] {
                run_cv(&ds, &s.train, &s.exp)?
            } else {
                run_contamination_sweep(&ds, &s.train, &s.exp)?.remove(0)
            };
            vec![("report".into(), report)]
        }
        Command::Contamination => run_contamination_sweep(&ds, &s.train, &s.exp)?
            .into_iter()
            .map(|r| (tau_label(r.tau_percent), r))
            .collect(),
        Command::Memory => run_memory_sweep(&ds, &s.train, &s.exp)?
            .into_iter()
            .map(|c| (format!("p{}_q{}", c.node_blocks, c.graph_blocks), c.report))
            .collect(),
        Command::Ablation => s
            .variants
            .iter()
            .map(|&v| Ok((format!("variant_{v}"), run_ablation(&ds, &s.train, v, &s.exp)?)))
            .collect::<Result<_, CliError>>()?,
        Command::Gradcheck => unreachable!(),
    };

    let mut out = Outputs::create(s.out_dir.clone())?;
    let mut index = Vec::new();
    for (label, report) in &cells {
        let (report_file, history_file) = if command == Command::Cv {
            (REPORT_FILE.to_string(), "loss_history.csv".to_string())
        } else {
            (format!("{label}.json"), format!("{label}_loss_history.csv"))
        };
        out.write(report_file.clone(), &(report.to_json() + "\n"))?;
        out.write(history_file.clone(), &loss_history_csv(report))?;
        println!(
            "{} {} {label}: mean AUC {:.4} ± {:.4} over {} folds",
            command,
            ds.name(),
            report.mean_auc,
            report.std_auc,
            report.folds
        );
        index.push(IndexCell {
            label: label.clone(),
            variant: report.variant.to_string(),
            node_blocks: report.node_blocks,
            graph_blocks: report.graph_blocks,
            tau_percent: report.tau_percent,
            mean_auc: report.mean_auc,
            std_auc: report.std_auc,
            report: report_file,
            loss_history: history_file,
        });
    }
    let reports: Vec<EvalReport> = cells.into_iter().map(|(_, r)| r).collect();
    out.write(SUMMARY_FILE.into(), &summary_csv(&reports))?;
    if command != Command::Cv {
        out.write(
            INDEX_FILE.into(),
            &pretty(&Index {
                command: command.name().into(),
                dataset: ds.name().into(),
                cells: index,
            }),
        )?;
    }
    manifest.outputs = out.files;
    manifest.write(&out.dir)?;
    Ok(manifest)
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn gradcheck(
    s: &Settings,
    fault: Option<Primitive>,
    mut manifest: RunManifest,
) -> Result<RunManifest, CliError> {
    let prims =
        check_all_primitives(s.seeds as u64, s.eps, fault).map_err(|e| CliError::Run(e.to_string()))?;
    let model = check_model_gradients(&toy_model_config(), s.seeds, s.eps, fault)
        .map_err(|e| CliError::Run(e.to_string()))?;
    let primitives: BTreeMap<String, f64> = prims
        .into_iter()
        .map(|p| (p.primitive, p.max_relative_error))
        .collect();
    let model: BTreeMap<String, f64> = model.tensors.into_iter().collect();
    let offenders: Vec<String> = primitives
        .iter()
        .chain(&model)
        .filter(|(_, e)| !(**e < GRAD_TOLERANCE))
        .map(|(n, e)| format!("{n} ({e:.3e})"))
        .collect();
    let report = GradcheckReport {
        eps: s.eps,
        seeds: s.seeds,
        tolerance: GRAD_TOLERANCE,
        max_relative_error: primitives
            .values()
            .chain(model.values())
            .copied()
            .fold(0.0, f64::max),
        primitives,
        model,
        passed: offenders.is_empty(),
        offenders: offenders.clone(),
    };
    let text = pretty(&report);
    print!("{text}");
    let mut out = Outputs::create(s.out_dir.clone())?;
    out.write(GRADCHECK_FILE.into(), &text)?;
    manifest.outputs = out.files;
    manifest.write(&out.dir)?;
    if offenders.is_empty() {
        Ok(manifest)
    } else {
        Err(CliError::GradientCheck(offenders))
    }
}

/// Reports compare equal apart from timing; other files byte for byte.
fn same_output(name: &str, old: &str, new: &str) -> bool {
    if name.ends_with(".json") && name != INDEX_FILE && name != GRADCHECK_FILE {
        if let (Ok(a), Ok(b)) = (EvalReport::from_json(old), EvalReport::from_json(new)) {
            return a.same_results(&b);
        }
    }
    old == new
}

pub fn replay(manifest_path: &Path, out_dir: Option<String>, verify: bool) -> Result<(), CliError> {
    let recorded = RunManifest::read(manifest_path)?;
    let command: Command = recorded.command.parse()?;
    let original_dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let originals: Vec<(String, String)> = if verify {
        recorded
            .outputs
            .iter()
            .map(|name| {
                let path = original_dir.join(name);
                fs::read_to_string(&path)
                    .map(|t| (name.clone(), t))
                    .map_err(|e| CliError::io(&path, e))
            })
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    let mut flags = BTreeMap::new();
    if let Some(dir) = out_dir {
        flags.insert("out-dir".to_string(), dir);
    }
    let resolved = Resolved::new(command, &flags, &recorded.config.values());
    let new = execute(
        command,
        resolved,
        Some(manifest_path.to_path_buf()),
        None,
        recorded.dataset_checksum.as_deref(),
    )?;
    if verify {
        let new_dir = PathBuf::from(new.config.raw("out-dir").unwrap_or("."));
        let mut differing = Vec::new();
        for (name, old) in &originals {
            let path = new_dir.join(name);
            let fresh = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            if !same_output(name, old, &fresh) {
                differing.push(name.clone());
            }
        }
        if new.outputs != recorded.outputs {
            differing.push(MANIFEST_FILE.into());
        }
        if !differing.is_empty() {
            return Err(CliError::ReplayMismatch(differing));
        }
        println!("replay matches {} recorded outputs", originals.len());
    }
    Ok(())
}

pub fn synth(
    out_dir: &Path,
    name: &str,
    normals: usize,
    anomalies: usize,
    seed: u64,
) -> Result<(), CliError> {
    if normals == 0 || anomalies == 0 {
        return Err(CliError::Usage(
            "--normals and --anomalies must be positive".into(),
        ));
    }
    let base = density_dataset(normals, anomalies, seed);
    let ds = GraphDataset::new(name, base.graphs().to_vec())?;
    let dir = out_dir.join(name);
    write_tudataset(&ds, &dir)?;
    println!(
        "wrote {} graphs ({} anomalous) to {}",
        ds.len(),
        ds.anomaly_count(),
        dir.display()
    );
    Ok(())
}
