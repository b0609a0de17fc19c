//! Experiment configuration files (TOML).
//!
//! ```toml
//! version = 1
//! seeds = [0, 1, 2, 3, 4]
//! out = "runs/desk"
//! budget_preset = "desk"        # smoke | desk | full; [budget] overrides single fields
//!
//! [dataset]
//! source = "idx"                # or "synthetic"
//! train_subset = 10000
//! test_subset = 1000
//!
//! [surrogates]
//! count = 3
//!
//! [attacks]
//! kinds = ["sam", "cse", "cw"]
//!
//! [[scenarios]]
//! kind = "D_AOS"
//! nodes = [3, 5, 7]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use distrobust_core::attacks::{AttackKind, AttackSpec, DEFAULT_EPSILON, DEFAULT_ITERATIONS};
use distrobust_core::data::{synth_blobs_sized, Dataset, PartitionScheme, Split};
use distrobust_core::ensemble::VotingScheme;
use distrobust_core::trainer::{Budget, ScenarioKind, ScenarioSpec};

use crate::io;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BudgetPreset {
    Smoke,
    Desk,
    Full,
}

impl BudgetPreset {
    pub fn budget(self) -> Budget {
        match self {
            BudgetPreset::Smoke => Budget {
                trials: 3,
                tune_epochs: 2,
                epochs: 10,
                batch_size: 16,
                holdout: 0.2,
                augment: false,
            },
            BudgetPreset::Desk => Budget {
                trials: 3,
                tune_epochs: 1,
                epochs: 10,
                ..Budget::default()
            },
            BudgetPreset::Full => Budget::default(),
        }
    }
}

/// Field-by-field overrides on top of the preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetOverrides {
    pub trials: Option<usize>,
    pub tune_epochs: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub holdout: Option<f64>,
    pub augment: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// IDX files in `root`, or in the data-root environment directory.
    Idx {
        root: Option<PathBuf>,
        train_subset: Option<usize>,
        test_subset: Option<usize>,
        /// Seed of the stratified subsets; fixed across run seeds.
        #[serde(default)]
        subset_seed: u64,
    },
    Synthetic {
        classes: usize,
        train_per_class: usize,
        test_per_class: usize,
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default = "default_side")]
        side: usize,
        #[serde(default)]
        data_seed: u64,
    },
}

fn default_spread() -> f64 {
    0.3
}

fn default_side() -> usize {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionName {
    Uniform,
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub nodes: Vec<usize>,
    #[serde(default = "default_partition")]
    pub partition: PartitionName,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Master to diversify from; by default `seed mod surrogates.count`.
    pub master: Option<usize>,
    #[serde(default = "default_voting")]
    pub voting: VotingScheme,
}

fn default_partition() -> PartitionName {
    PartitionName::Uniform
}

fn default_alpha() -> f64 {
    PartitionScheme::DEFAULT_ALPHA
}

fn default_voting() -> VotingScheme {
    VotingScheme::Average
}

impl ScenarioConfig {
    pub fn scheme(&self) -> PartitionScheme {
        match self.partition {
            PartitionName::Uniform => PartitionScheme::Uniform,
            PartitionName::Dirichlet => PartitionScheme::Dirichlet { alpha: self.alpha },
        }
    }

    pub fn spec(&self, nodes: usize, seed: u64, masters: usize) -> ScenarioSpec {
        ScenarioSpec {
            kind: self.kind,
            nodes,
            master: self.master.unwrap_or((seed % masters as u64) as usize),
            partition: self.scheme(),
            voting: self.voting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    pub count: usize,
    /// Seed the masters are tuned and trained with; shared by all run seeds.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub kinds: Vec<AttackKind>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}

impl AttackConfig {
    pub fn spec(&self, kind: AttackKind) -> AttackSpec {
        AttackSpec {
            iterations: self.iterations,
            ..AttackSpec::new(kind, self.epsilon)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradsimConfig {
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub budget_preset: BudgetPreset,
    #[serde(default)]
    pub budget: BudgetOverrides,
    pub dataset: DatasetConfig,
    pub surrogates: SurrogateConfig,
    pub attacks: AttackConfig,
    pub scenarios: Vec<ScenarioConfig>,
    #[serde(default = "default_gradsim")]
    pub gradsim: GradsimConfig,
}

fn default_gradsim() -> GradsimConfig {
    GradsimConfig { samples: 500 }
}

/// A validation failure at a dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid config:\n  {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n  "))]
pub struct ConfigError(pub Vec<FieldError>);

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Hash of everything that determines results; `out` is excluded so the
    /// same experiment in two directories hashes alike.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut err = |path: String, message: &str| {
            errs.push(FieldError {
                path,
                message: message.to_string(),
            })
        };
        if self.version != CONFIG_VERSION {
            err("version".into(), &format!("unsupported version {} (expected {})", self.version, CONFIG_VERSION));
        }
        if self.seeds.is_empty() {
            err("seeds".into(), "must list at least one seed");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            err("seeds".into(), "seeds repeat");
        }
        let b = self.resolved_budget();
        if b.trials == 0 {
            err("budget.trials".into(), "must be at least 1");
        }
        if b.batch_size == 0 {
            err("budget.batch_size".into(), "must be at least 1");
        }
        if !(b.holdout > 0.0 && b.holdout < 1.0) {
            err("budget.holdout".into(), "must lie in (0, 1)");
        }
        match &self.dataset {
            DatasetConfig::Idx {
                train_subset, test_subset, ..
            } => {
                if *train_subset == Some(0) {
                    err("dataset.train_subset".into(), "must be positive");
                }
                if *test_subset == Some(0) {
                    err("dataset.test_subset".into(), "must be positive");
                }
            }
            DatasetConfig::Synthetic {
                classes,
                train_per_class,
                test_per_class,
                spread,
                side,
                ..
            } => {
                if *classes < 2 {
                    err("dataset.classes".into(), "needs at least 2 classes");
                }
                if *train_per_class == 0 {
                    err("dataset.train_per_class".into(), "must be positive");
                }
                if *test_per_class == 0 {
                    err("dataset.test_per_class".into(), "must be positive");
                }
                if !(*spread > 0.0) {
                    err("dataset.spread".into(), "must be positive");
                }
                if *side < 4 {
                    err("dataset.side".into(), "must be at least 4");
                }
            }
        }
        if self.surrogates.count == 0 || self.surrogates.count > 5 {
            err("surrogates.count".into(), "must be between 1 and 5");
        }
        let mut kinds = self.attacks.kinds.clone();
        kinds.sort_unstable();
        kinds.dedup();
        if kinds.len() != self.attacks.kinds.len() {
            err("attacks.kinds".into(), "kinds repeat");
        }
        if !(self.attacks.epsilon > 0.0 && self.attacks.epsilon < 1.0) {
            err("attacks.epsilon".into(), "must lie in (0, 1)");
        }
        if self.attacks.iterations == 0 {
            err("attacks.iterations".into(), "must be at least 1");
        }
        if self.scenarios.is_empty() {
            err("scenarios".into(), "must list at least one scenario");
        }
        let mut seen = Vec::new();
        for (i, s) in self.scenarios.iter().enumerate() {
            if s.nodes.is_empty() {
                err(format!("scenarios[{}].nodes", i), "must list at least one node count");
            }
            for (j, &n) in s.nodes.iter().enumerate() {
                if n == 0 {
                    err(format!("scenarios[{}].nodes[{}]", i, j), "must be at least 1");
                }
                let key = (s.label(), n);
                if seen.contains(&key) {
                    err(format!("scenarios[{}].nodes[{}]", i, j), &format!("{} N={} listed twice", key.0, n));
                }
                seen.push(key);
            }
            if !(s.alpha > 0.0) {
                err(format!("scenarios[{}].alpha", i), "must be positive");
            }
            if let Some(m) = s.master {
                if m >= self.surrogates.count {
                    err(
                        format!("scenarios[{}].master", i),
                        &format!("refers to master {} but surrogates.count is {}", m, self.surrogates.count),
                    );
                }
            }
            if s.kind == ScenarioKind::Ens && s.partition == PartitionName::Dirichlet {
                err(format!("scenarios[{}].partition", i), "ENS members train on the full set");
            }
        }
        if self.gradsim.samples == 0 {
            err("gradsim.samples".into(), "must be positive");
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(errs))
        }
    }

    pub fn resolved_budget(&self) -> Budget {
        let mut b = self.budget_preset.budget();
        let o = &self.budget;
        b.trials = o.trials.unwrap_or(b.trials);
        b.tune_epochs = o.tune_epochs.unwrap_or(b.tune_epochs);
        b.epochs = o.epochs.unwrap_or(b.epochs);
        b.batch_size = o.batch_size.unwrap_or(b.batch_size);
        b.holdout = o.holdout.unwrap_or(b.holdout);
        b.augment = o.augment.unwrap_or(b.augment);
        b
    }

    /// Train and test splits after subsetting.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        match &self.dataset {
            DatasetConfig::Idx {
                root,
                train_subset,
                test_subset,
                subset_seed,
            } => {
                let root = match root {
                    Some(r) => r.clone(),
                    None => io::data_root().with_context(|| {
                        format!("dataset.root is unset and {} names no directory with IDX files", io::DATA_ROOT_ENV)
                    })?,
                };
                let (mut train, mut test) = io::load_pair(&root)?;
                if let Some(n) = *train_subset {
                    if n < train.len() {
                        train = train.stratified_subset(n, *subset_seed);
                    }
                }
                if let Some(n) = *test_subset {
                    if n < test.len() {
                        test = test.stratified_subset(n, subset_seed.wrapping_add(1));
                    }
                }
                Ok((train, test))
            }
            DatasetConfig::Synthetic {
                classes,
                train_per_class,
                test_per_class,
                spread,
                side,
                data_seed,
            } => {
                let total = train_per_class + test_per_class;
                let all = synth_blobs_sized(*classes, total, *spread, *side, *data_seed)?;
                let (mut tr, mut te) = (Vec::new(), Vec::new());
                let mut seen = vec![0usize; *classes];
                for (i, &y) in all.labels().iter().enumerate() {
                    if seen[y] < *train_per_class {
                        tr.push(i);
                    } else {
                        te.push(i);
                    }
                    seen[y] += 1;
                }
                let split = |idx: &[usize], s: Split| {
                    let d = all.subset(idx);
                    Dataset::new(d.images().to_vec(), d.sample_shape(), d.labels().to_vec(), d.classes(), s)
                };
                Ok((split(&tr, Split::Train)?, split(&te, Split::Test)?))
            }
        }
    }

    /// Every `(scenario, N)` pair in config order.
    pub fn scenario_runs(&self) -> Vec<(usize, usize)> {
        self.scenarios
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.nodes.iter().map(move |&n| (i, n)))
            .collect()
    }

    /// The small synthetic pipeline: blobs, N=3, one seed, smoke budget.
    pub fn smoke() -> Self {
        Self::from_toml(SMOKE).expect("smoke preset is valid")
    }

    /// FashionMNIST desk scale: 10k-train subset, N ∈ {3,5,7}, five seeds.
    pub fn desk() -> Self {
        Self::from_toml(DESK).expect("desk preset is valid")
    }
}

impl ScenarioConfig {
    pub fn label(&self) -> distrobust_core::trainer::ScenarioLabel {
        distrobust_core::trainer::ScenarioLabel {
            kind: self.kind,
            dirichlet: self.kind.is_tuned() && self.partition == PartitionName::Dirichlet,
        }
    }
}

pub const SMOKE: &str = include_str!("../configs/smoke.toml");
pub const DESK: &str = include_str!("../configs/desk.toml");
pub const FULL: &str = include_str!("../configs/full.toml");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_configs_parse() {
        for text in [SMOKE, DESK, FULL] {
            let c = ExperimentConfig::from_toml(text).unwrap();
            assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        }
        assert_eq!(ExperimentConfig::desk().seeds.len(), 5);
    }

    #[test]
    fn errors_name_field_paths() {
        let bad = SMOKE
            .replace("nodes = [3]", "nodes = [0]")
            .replace("count = 2", "count = 9")
            .replace("seeds = [0]", "seeds = []");
        let msg = format!("{:#}", ExperimentConfig::from_toml(&bad).unwrap_err());
        assert!(msg.contains("scenarios[0].nodes[0]"), "{}", msg);
        assert!(msg.contains("surrogates.count"), "{}", msg);
        assert!(msg.contains("seeds"), "{}", msg);
    }

    #[test]
    fn unknown_ids_are_rejected() {
        assert!(ExperimentConfig::from_toml(&SMOKE.replace("\"IT\"", "\"D_X\"")).is_err());
        assert!(ExperimentConfig::from_toml(&SMOKE.replace("\"cw\"", "\"fgsm\"")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{}\nbogus = 1\n", SMOKE)).is_err());
    }

    #[test]
    fn budget_overrides_apply() {
        let mut c = ExperimentConfig::smoke();
        c.budget.epochs = Some(7);
        let b = c.resolved_budget();
        assert_eq!((b.epochs, b.trials), (7, BudgetPreset::Smoke.budget().trials));
    }

    #[test]
    fn hash_ignores_output_directory() {
        let mut a = ExperimentConfig::smoke();
        let h = a.hash();
        a.out = "elsewhere".into();
        assert_eq!(a.hash(), h);
        a.seeds = vec![9];
        assert_ne!(a.hash(), h);
    }

    #[test]
    fn synthetic_split_is_disjoint_and_sized() {
        let (tr, te) = ExperimentConfig::smoke().load_data().unwrap();
        let c = tr.classes();
        assert!(tr.class_counts().iter().all(|&n| n == tr.len() / c));
        assert!(te.class_counts().iter().all(|&n| n == te.len() / c));
        for i in 0..te.len() {
            assert!((0..tr.len()).all(|j| tr.image(j) != te.image(i)));
        }
    }
}
