use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use himnet::model::Variant;
use himnet::train::{ExperimentConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every configurable key, spelled like its flag.
pub const KEYS: [&str; 19] = [
    "dataset",
    "data-dir",
    "folds",
    "seed",
    "epochs",
    "lr",
    "batch-size",
    "alpha",
    "shrink-lambda",
    "p",
    "q",
    "tau",
    "variant",
    "jobs",
    "out-dir",
    "eps",
    "seeds",
    "unmasked-losses",
    "normalize-losses",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Flag,
    File,
    Default,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub value: String,
    pub source: Source,
}

/// What a run does; decides command-specific defaults.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Cv,
    Contamination,
    Memory,
    Ablation,
    Gradcheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Cv => "cv",
            Command::Contamination => "sweep contamination",
            Command::Memory => "sweep memory",
            Command::Ablation => "sweep ablation",
            Command::Gradcheck => "gradcheck",
        }
    }

    fn default_for(self, key: &str) -> Option<&'static str> {
        Some(match (key, self) {
            ("data-dir", _) => "data",
            ("folds", _) => "5",
            ("seed", _) => "0",
            ("epochs", _) => "100",
            ("lr", _) => "0.001",
            ("batch-size", _) => "300",
            ("alpha", _) => "0.01",
            ("shrink-lambda", _) => "0.01",
            ("p" | "q", Command::Memory) => "1..6",
            ("p" | "q", _) => "2",
            ("tau", Command::Contamination) => "0,2,4,8,16",
            ("tau", _) => "0",
            ("variant", Command::Ablation) => "full,no_node,no_graph,gae_only",
            ("variant", _) => "full",
            ("jobs", _) => "0",
            ("out-dir", _) => "out",
            ("eps", _) => "1e-5",
            ("seeds", _) => "10",
            ("unmasked-losses" | "normalize-losses", _) => "false",
            _ => return None,
        })
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "cv" => Command::Cv,
            "sweep contamination" => Command::Contamination,
            "sweep memory" => Command::Memory,
            "sweep ablation" => Command::Ablation,
            "gradcheck" => Command::Gradcheck,
            other => return Err(CliError::Usage(format!("unknown command `{other}`"))),
        })
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// keys may carry a leading `--`.
pub fn parse_config_file(text: &str, path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| CliError::Usage(format!("{}:{}: {msg}", path.display(), no + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim().trim_start_matches("--");
        if !KEYS.contains(&key) {
            return Err(bad(format!("unknown key `{key}`")));
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(bad(format!("duplicate key `{key}`")));
        }
    }
    Ok(out)
}

/// Every key with its value and where the value came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Resolved(pub BTreeMap<String, Entry>);

impl Resolved {
    /// Flag over file over default.
    pub fn new(command: Command, flags: &BTreeMap<String, String>, file: &BTreeMap<String, String>) -> Self {
        let mut map = BTreeMap::new();
        for key in KEYS {
            let entry = if let Some(v) = flags.get(key) {
                Some((v.clone(), Source::Flag))
            } else if let Some(v) = file.get(key) {
                Some((v.clone(), Source::File))
            } else {
                command.default_for(key).map(|v| (v.to_string(), Source::Default))
            };
            if let Some((value, source)) = entry {
                map.insert(key.to_string(), Entry { value, source });
            }
        }
        Self(map)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|e| e.value.as_str())
    }

    /// Plain values, for replaying as a config file.
    pub fn values(&self) -> BTreeMap<String, String> {
        self.0.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect()
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        let raw = self
            .raw(key)
            .ok_or_else(|| CliError::Usage(format!("--{key} is required")))?;
        raw.parse()
            .map_err(|e| CliError::Usage(format!("--{key} `{raw}`: {e}")))
    }

    fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key) {
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") | None => Ok(false),
            Some(other) => Err(CliError::Usage(format!(
                "--{key} expects true or false, got `{other}`"
            ))),
        }
    }

    fn single<T: Copy>(&self, key: &str, values: Vec<T>) -> Result<T, CliError> {
        match values.as_slice() {
            [v] => Ok(*v),
            _ => Err(CliError::Usage(format!(
                "--{key} takes a single value for this command"
            ))),
        }
    }
}

/// `3`, `1..6` (inclusive) or comma lists of either.
pub fn parse_usize_list(text: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim) {
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a
                .trim()
                .parse()
                .map_err(|_| format!("bad range start in `{part}`"))?;
            let b: usize = b
                .trim()
                .parse()
                .map_err(|_| format!("bad range end in `{part}`"))?;
            if a > b {
                return Err(format!("empty range `{part}`"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad integer `{part}`"))?);
        }
    }
    Ok(out)
}

pub fn parse_f64_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(str::trim)
        .map(|p| {
            p.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("bad number `{p}`"))
        })
        .collect()
}

fn list<T>(
    resolved: &Resolved,
    key: &str,
    parse: fn(&str) -> Result<Vec<T>, String>,
) -> Result<Vec<T>, CliError> {
    let raw = resolved.raw(key).unwrap_or_default();
    parse(raw).map_err(|e| CliError::Usage(format!("--{key}: {e}")))
}

/// Typed settings for one run.
#[derive(Clone, Debug)]
pub struct Settings {
    pub dataset: Option<String>,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
    pub exp: ExperimentConfig,
    pub variants: Vec<Variant>,
    pub eps: f64,
    pub seeds: usize,
}

impl Settings {
    pub fn from_resolved(command: Command, r: &Resolved) -> Result<Self, CliError> {
        let p = list(r, "p", parse_usize_list)?;
        let q = list(r, "q", parse_usize_list)?;
        let tau = list(r, "tau", parse_f64_list)?;
        let variants = r
            .raw("variant")
            .unwrap_or_default()
            .split(',')
            .map(|v| v.trim().parse::<Variant>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Usage(format!("--variant: {e}")))?;
        if p.contains(&0) || q.contains(&0) {
            return Err(CliError::Usage(
                "--p and --q need at least one memory block".into(),
            ));
        }
        let (node_blocks, graph_blocks) = match command {
            Command::Memory => (1, 1),
            _ => (r.single("p", p.clone())?, r.single("q", q.clone())?),
        };
        let variant = match command {
            Command::Ablation => Variant::Full,
            _ => r.single("variant", variants.clone())?,
        };
        if !matches!(command, Command::Cv | Command::Contamination) && tau.iter().any(|&t| t != 0.0) {
            return Err(CliError::Usage(format!("--tau does not apply to `{command}`")));
        }
        if command == Command::Cv {
            r.single("tau", tau.clone())?;
        }
        let seed = r.get("seed")?;
        let train = TrainConfig {
            epochs: r.get("epochs")?,
            batch_size: r.get("batch-size")?,
            learning_rate: r.get("lr")?,
            alpha: r.get("alpha")?,
            shrink_lambda: r.get("shrink-lambda")?,
            node_blocks,
            graph_blocks,
            seed,
            variant,
            unmasked_losses: r.flag("unmasked-losses")?,
            normalize_losses: r.flag("normalize-losses")?,
            ..TrainConfig::default()
        };
        let exp = ExperimentConfig {
            dataset: r.raw("dataset").unwrap_or_default().to_string(),
            folds: r.get("folds")?,
            seed,
            jobs: r.get("jobs")?,
            tau_percent: tau,
            p_values: p,
            q_values: q,
        };
        let eps: f64 = r.get("eps")?;
        let seeds: usize = r.get("seeds")?;
        if command == Command::Gradcheck {
            if !(eps > 0.0 && eps.is_finite()) || seeds == 0 {
                return Err(CliError::Usage(
                    "--eps must be positive and --seeds at least 1".into(),
                ));
            }
        } else {
            if r.raw("dataset").is_none() {
                return Err(CliError::Usage("--dataset is required".into()));
            }
            train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            exp.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(Self {
            dataset: r.raw("dataset").map(str::to_string),
            data_dir: r.get("data-dir")?,
            out_dir: r.get("out-dir")?,
            train,
            exp,
            variants,
            eps,
            seeds,
        })
    }
}
