//! Stage orchestration over a run directory.
//!
//! ```text
//! <out>/config.toml, manifest.json
//! <out>/surrogates/master_<k>.dlwl
//! <out>/attacks/<kind>/{perturbation.f32, manifest.json}
//! <out>/seed-<s>/partitions/N<n>-<scheme>.json
//! <out>/seed-<s>/<scenario>-N<n>/{node_<i>.dlwl, records.csv, heatmap.csv}
//! <out>/gradsim/seed-<s>.csv
//! <out>/pareto/{points.csv, frontier.dat}
//! <out>/regress/{complete,dirichlet,dirichlet-seed-<s>}.{csv,txt}
//! <out>/report/{records.csv, table3.csv, voting.csv, similarity.csv}
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{bail, Context, Result};

use distrobust_core::attacks::{attack, AdversarialBatch};
use distrobust_core::data::{Dataset, PartitionScheme, PartitionSpec};
use distrobust_core::ensemble::VotingScheme;
use distrobust_core::metrics::{evaluate_all, pareto_frontier, similarity_heatmap, EvaluationRecord};
use distrobust_core::rng::{derive_seed, tag};
use distrobust_core::stats::{build_design, ols, Column, RegressionResult, Response};
use distrobust_core::trainer::{master_configs, plan_scenario, train_node, NodePlan, ScenarioKind, TrainedModel, WeakLearnerConfig};
use distrobust_core::{Error as CoreError, Network, Tensor};

use crate::artifacts::{self, AdversarialManifest, PartitionFile};
use crate::checkpoint;
use crate::config::ExperimentConfig;
use crate::manifest::{unix_now, RunManifest};
use crate::report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Surrogates,
    Partition,
    Train,
    Attack,
    Evaluate,
    Gradsim,
    Pareto,
    Regress,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Surrogates,
        Stage::Partition,
        Stage::Train,
        Stage::Attack,
        Stage::Evaluate,
        Stage::Gradsim,
        Stage::Pareto,
        Stage::Regress,
        Stage::Report,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Surrogates => "surrogates",
            Stage::Partition => "partition",
            Stage::Train => "train",
            Stage::Attack => "attack",
            Stage::Evaluate => "evaluate",
            Stage::Gradsim => "gradsim",
            Stage::Pareto => "pareto",
            Stage::Regress => "regress",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("missing {path}: run the `{stage}` stage first")]
pub struct MissingArtifact {
    pub path: String,
    pub stage: Stage,
}

/// One `(scenario entry, N, seed)` work unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unit {
    pub scenario: usize,
    pub nodes: usize,
    pub seed: u64,
}

pub struct Run {
    pub config: ExperimentConfig,
    pub root: PathBuf,
    pub jobs: usize,
    pub quiet: bool,
    pub train: Dataset,
    pub test: Dataset,
    masters: Vec<WeakLearnerConfig>,
    manifest: Mutex<RunManifest>,
}

/// Everything but the output directory and the seed list; seeds live in
/// their own subdirectories, so one run directory can grow seed by seed.
fn experiment_hash(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.seeds.clear();
    c.hash()
}

impl Run {
    pub fn open(config: ExperimentConfig, root: &Path, jobs: usize) -> Result<Self> {
        config.validate()?;
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let manifest = RunManifest::open(root, &experiment_hash(&config))?;
        let (train, test) = config.load_data()?;
        let masters = master_configs(config.surrogates.count, config.surrogates.seed)?;
        let run = Self {
            config,
            root: root.to_path_buf(),
            jobs: jobs.max(1),
            quiet: false,
            train,
            test,
            masters,
            manifest: Mutex::new(manifest),
        };
        let mut snapshot = run.config.clone();
        snapshot.seeds.clear();
        snapshot.out = PathBuf::from(".");
        run.commit("config.toml", snapshot.to_toml().as_bytes())?;
        Ok(run)
    }

    pub fn manifest(&self) -> RunManifest {
        self.manifest.lock().unwrap().clone()
    }

    fn log(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{}", msg);
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn exists(&self, rel: &str) -> bool {
        self.path(rel).is_file()
    }

    fn require(&self, rel: &str, stage: Stage) -> Result<PathBuf> {
        let p = self.path(rel);
        if p.is_file() {
            Ok(p)
        } else {
            Err(MissingArtifact {
                path: rel.to_string(),
                stage,
            }
            .into())
        }
    }

    /// Writes `rel` and records its hash.
    fn commit(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        artifacts::write(&self.path(rel), bytes)?;
        let mut m = self.manifest.lock().unwrap();
        m.record_file(&self.root, rel)?;
        m.save(&self.root)
    }

    fn timed<R>(&self, unit: &str, f: impl FnOnce() -> Result<R>) -> Result<R> {
        let started = unix_now();
        let t = Instant::now();
        let r = f()?;
        let secs = t.elapsed().as_secs_f64();
        {
            let mut m = self.manifest.lock().unwrap();
            m.record_stage(unit, started, secs);
            m.save(&self.root)?;
        }
        self.log(&format!("{:>8.1}s  {}", secs, unit));
        Ok(r)
    }

    fn par_for<T: Sync>(&self, items: &[T], f: impl Fn(&T) -> Result<()> + Sync) -> Result<()> {
        if self.jobs == 1 || items.len() < 2 {
            return items.iter().try_for_each(f);
        }
        let next = AtomicUsize::new(0);
        let first_err: Mutex<Option<anyhow::Error>> = Mutex::new(None);
        std::thread::scope(|s| {
            for _ in 0..self.jobs.min(items.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= items.len() || first_err.lock().unwrap().is_some() {
                        break;
                    }
                    if let Err(e) = f(&items[i]) {
                        first_err.lock().unwrap().get_or_insert(e);
                    }
                });
            }
        });
        match first_err.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    // ----------------------------------------------------------- naming

    pub fn units(&self) -> Vec<Unit> {
        let mut v = Vec::new();
        for &seed in &self.config.seeds {
            for (scenario, nodes) in self.config.scenario_runs() {
                v.push(Unit { scenario, nodes, seed });
            }
        }
        v
    }

    pub fn label(&self, u: &Unit) -> String {
        self.config.scenarios[u.scenario].label().to_string()
    }

    pub fn unit_dir(&self, u: &Unit) -> String {
        format!("seed-{}/{}-N{}", u.seed, self.label(u), u.nodes)
    }

    fn describe(&self, u: &Unit) -> String {
        format!("{} N={} seed {}", self.label(u), u.nodes, u.seed)
    }

    pub fn master_path(k: usize) -> String {
        format!("surrogates/master_{}.dlwl", k)
    }

    pub fn attack_dir(kind: &str) -> String {
        format!("attacks/{}", kind)
    }

    fn partition_path(seed: u64, nodes: usize, scheme: &PartitionScheme) -> String {
        format!("seed-{}/partitions/N{}-{}.json", seed, nodes, scheme.name())
    }

    pub fn node_path(&self, u: &Unit, i: usize) -> String {
        format!("{}/node_{}.dlwl", self.unit_dir(u), i)
    }

    pub fn records_path(&self, u: &Unit) -> String {
        format!("{}/records.csv", self.unit_dir(u))
    }

    fn plans(&self, u: &Unit) -> Result<Vec<NodePlan>> {
        let spec = self.config.scenarios[u.scenario].spec(u.nodes, u.seed, self.masters.len());
        Ok(plan_scenario(&spec, &self.train, &self.masters, u.seed)?)
    }

    // ----------------------------------------------------------- stages

    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Surrogates => self.surrogates(),
            Stage::Partition => self.partition(),
            Stage::Train => self.train_stage(),
            Stage::Attack => self.attack_stage(),
            Stage::Evaluate => self.evaluate(),
            Stage::Gradsim => self.gradsim(),
            Stage::Pareto => self.pareto(),
            Stage::Regress => self.regress(),
            Stage::Report => self.report(),
        }
    }

    pub fn run_all(&self) -> Result<()> {
        Stage::ALL.iter().try_for_each(|s| self.run_stage(*s))
    }

    fn surrogates(&self) -> Result<()> {
        let ks: Vec<usize> = (0..self.masters.len()).collect();
        self.par_for(&ks, |&k| {
            let rel = Self::master_path(k);
            if self.exists(&rel) {
                return Ok(());
            }
            let config = self.masters[k];
            let model = self.timed(&format!("surrogates master {} ({})", k, config.describe()), || {
                Ok(train_node::<f32>(&NodePlan::master(config, &self.train), &self.train, &self.config.resolved_budget(), None)?)
            })?;
            self.commit(&rel, &checkpoint::encode(&model))
        })
    }

    pub fn load_surrogates(&self) -> Result<Vec<TrainedModel<f32>>> {
        (0..self.masters.len())
            .map(|k| checkpoint::load(&self.require(&Self::master_path(k), Stage::Surrogates)?))
            .collect()
    }

    fn partition(&self) -> Result<()> {
        for &seed in &self.config.seeds {
            for (i, n) in self.config.scenario_runs() {
                let u = Unit { scenario: i, nodes: n, seed };
                let sc = &self.config.scenarios[i];
                if sc.kind == ScenarioKind::Ens {
                    continue;
                }
                let scheme = sc.scheme();
                let rel = Self::partition_path(seed, n, &scheme);
                if self.exists(&rel) {
                    continue;
                }
                let plans = self.timed(&format!("partition N={} {} seed {}", n, scheme.name(), seed), || self.plans(&u))?;
                let file = PartitionFile {
                    spec: PartitionSpec {
                        nodes: n,
                        scheme,
                        seed: derive_seed(seed, &[tag("partition"), n as u64, tag(scheme.name())]),
                    },
                    partition: distrobust_core::data::DataPartition {
                        nodes: plans.into_iter().map(|p| p.shard).collect(),
                    },
                };
                file.partition.check_cover(self.train.len())?;
                let mut json = serde_json::to_string(&file)?;
                json.push('\n');
                self.commit(&rel, json.as_bytes())?;
            }
        }
        Ok(())
    }

    fn train_stage(&self) -> Result<()> {
        let units = self.units();
        self.par_for(&units, |u| self.train_unit(u))
    }

    /// ENS members do not depend on `N`, so a member already trained for
    /// another ENS size is reused.
    fn reuse_ens_member(&self, u: &Unit, i: usize) -> Result<Option<Vec<u8>>> {
        for (j, m) in self.config.scenario_runs() {
            if self.config.scenarios[j].kind != ScenarioKind::Ens || m <= i || m == u.nodes {
                continue;
            }
            let other = Unit {
                scenario: j,
                nodes: m,
                seed: u.seed,
            };
            let p = self.path(&self.node_path(&other, i));
            if p.is_file() {
                return Ok(Some(std::fs::read(p)?));
            }
        }
        Ok(None)
    }

    fn train_unit(&self, u: &Unit) -> Result<()> {
        let n = u.nodes;
        if (0..n).all(|i| self.exists(&self.node_path(u, i))) {
            return Ok(());
        }
        let sc = &self.config.scenarios[u.scenario];
        let mut plans = self.plans(u)?;
        if sc.kind != ScenarioKind::Ens {
            let rel = Self::partition_path(u.seed, n, &sc.scheme());
            let file: PartitionFile = artifacts::read_json(&self.require(&rel, Stage::Partition)?)?;
            if file.partition.nodes.len() != n {
                bail!("{} has {} shards, expected {}", rel, file.partition.nodes.len(), n);
            }
            for (p, shard) in plans.iter_mut().zip(file.partition.nodes) {
                p.shard = shard;
            }
        }
        let budget = self.config.resolved_budget();
        for (i, plan) in plans.iter().enumerate() {
            let rel = self.node_path(u, i);
            if self.exists(&rel) {
                continue;
            }
            if sc.kind == ScenarioKind::Ens {
                if let Some(bytes) = self.reuse_ens_member(u, i)? {
                    self.commit(&rel, &bytes)?;
                    continue;
                }
            }
            let model = self.timed(&format!("train {} node {} ({})", self.describe(u), i, plan.config.describe()), || {
                train_node::<f32>(plan, &self.train, &budget, None).with_context(|| format!("{} node {}", self.describe(u), i))
            })?;
            self.commit(&rel, &checkpoint::encode(&model))?;
        }
        Ok(())
    }

    pub fn load_models(&self, u: &Unit) -> Result<Vec<TrainedModel<f32>>> {
        (0..u.nodes)
            .map(|i| checkpoint::load(&self.require(&self.node_path(u, i), Stage::Train)?))
            .collect()
    }

    fn attack_stage(&self) -> Result<()> {
        let kinds = self.config.attacks.kinds.clone();
        let mut surrogates = None;
        for kind in kinds {
            let dir = Self::attack_dir(kind.name());
            if self.exists(&format!("{}/manifest.json", dir)) {
                continue;
            }
            if surrogates.is_none() {
                surrogates = Some(self.load_surrogates()?);
            }
            let models = surrogates.as_ref().unwrap();
            let nets: Vec<&Network<f32>> = models.iter().map(|m| &m.network).collect();
            let spec = self.config.attacks.spec(kind);
            let (x, y) = self.test.all::<f32>();
            let mut adv = self.timed(&format!("attack {}", kind.name()), || Ok(attack(&nets, &x, &y, &spec)?))?;
            artifacts::canonicalize(&mut adv);
            let manifest = AdversarialManifest {
                spec,
                indices: (0..self.test.len()).collect(),
                labels: y,
                seed: self.config.surrogates.seed,
                surrogates: (0..nets.len()).map(Self::master_path).collect(),
                loss_trace: adv.loss_trace.clone(),
            };
            let mut bytes = Vec::with_capacity(4 * adv.perturbed.len());
            for d in adv.perturbation() {
                bytes.extend(d.to_le_bytes());
            }
            self.commit(&format!("{}/perturbation.f32", dir), &bytes)?;
            let mut json = serde_json::to_string(&manifest)?;
            json.push('\n');
            self.commit(&format!("{}/manifest.json", dir), json.as_bytes())?;
        }
        Ok(())
    }

    pub fn load_attacks(&self) -> Result<Vec<AdversarialBatch<f32>>> {
        self.config
            .attacks
            .kinds
            .iter()
            .map(|k| {
                let dir = Self::attack_dir(k.name());
                self.require(&format!("{}/manifest.json", dir), Stage::Attack)?;
                Ok(artifacts::load_adversarial(&self.path(&dir), &self.test)?.0)
            })
            .collect()
    }

    fn evaluate(&self) -> Result<()> {
        let units: Vec<Unit> = self.units().into_iter().filter(|u| !self.exists(&self.records_path(u))).collect();
        if units.is_empty() {
            return Ok(());
        }
        let advs = self.load_attacks()?;
        let (x, y) = self.test.all::<f32>();
        self.par_for(&units, |u| {
            let models = self.load_models(u)?;
            let nets: Vec<&Network<f32>> = models.iter().map(|m| &m.network).collect();
            let label = self.label(u);
            let records = self.timed(&format!("evaluate {}", self.describe(u)), || {
                let mut r = evaluate_all(&nets, (&x, &y), None, &label, u.seed)?;
                for adv in &advs {
                    r.extend(evaluate_all(&nets, (&x, &y), Some(adv), &label, u.seed)?);
                }
                Ok(r)
            })?;
            self.commit(&self.records_path(u), artifacts::records_csv(&records)?.as_bytes())
        })
    }

    pub fn load_records(&self) -> Result<Vec<EvaluationRecord>> {
        let mut all = Vec::new();
        for u in self.units() {
            let p = self.require(&self.records_path(&u), Stage::Evaluate)?;
            all.extend(artifacts::parse_records(&artifacts::read_string(&p)?)?);
        }
        Ok(all)
    }

    /// Evenly spaced test rows used for gradient similarity.
    pub fn gradsim_batch(&self) -> (Tensor<f32>, Vec<usize>) {
        let n = self.test.len();
        let k = self.config.gradsim.samples.min(n);
        let idx: Vec<usize> = (0..k).map(|j| j * n / k).collect();
        self.test.batch(&idx)
    }

    fn gradsim(&self) -> Result<()> {
        let summaries: Vec<u64> = self
            .config
            .seeds
            .iter()
            .copied()
            .filter(|s| !self.exists(&format!("gradsim/seed-{}.csv", s)))
            .collect();
        if summaries.is_empty() {
            return Ok(());
        }
        let surrogates = self.load_surrogates()?;
        let snets: Vec<&Network<f32>> = surrogates.iter().map(|m| &m.network).collect();
        let srows: Vec<String> = surrogates.iter().map(|m| m.config.describe()).collect();
        let (x, y) = self.gradsim_batch();
        let units: Vec<Unit> = self.units().into_iter().filter(|u| summaries.contains(&u.seed)).collect();
        self.par_for(&units, |u| {
            let rel = format!("{}/heatmap.csv", self.unit_dir(u));
            if self.exists(&rel) {
                return Ok(());
            }
            let models = self.load_models(u)?;
            let nets: Vec<&Network<f32>> = models.iter().map(|m| &m.network).collect();
            let h = self.timed(&format!("gradsim {}", self.describe(u)), || Ok(similarity_heatmap(&snets, &nets, &x, &y)?))?;
            let cols: Vec<String> = models.iter().map(|m| format!("node{}:{}", m.config.node, m.config.describe())).collect();
            self.commit(&rel, artifacts::heatmap_csv(&h, &srows, &cols).as_bytes())
        })?;
        for seed in summaries {
            let mut s = String::from("scenario,N,S\n");
            for u in self.units().into_iter().filter(|u| u.seed == seed) {
                let p = self.path(&format!("{}/heatmap.csv", self.unit_dir(&u)));
                let (h, _, _) = artifacts::parse_heatmap(&artifacts::read_string(&p)?)?;
                s.push_str(&format!("{},{},{}\n", self.label(&u), u.nodes, h.grand_mean()));
            }
            self.commit(&format!("gradsim/seed-{}.csv", seed), s.as_bytes())?;
        }
        Ok(())
    }

    fn pareto(&self) -> Result<()> {
        let records = self.load_records()?;
        let points = report::pareto_points(&records);
        let frontier = pareto_frontier(&points);
        self.commit("pareto/points.csv", artifacts::pareto_csv(&points, &frontier).as_bytes())?;
        self.commit("pareto/frontier.dat", artifacts::frontier_plot_data(&frontier).as_bytes())
    }

    fn regress(&self) -> Result<()> {
        let records = self.load_records()?;
        if !records.iter().any(|r| r.attack.is_some()) {
            self.log("regress: no attack records, nothing to fit");
            return Ok(());
        }
        let kinds = scenario_kinds(&records)?;
        let others: Vec<ScenarioKind> = kinds.iter().copied().filter(|k| *k != ScenarioKind::Ens).collect();
        if kinds.contains(&ScenarioKind::Ens) {
            let fit = fit_dropping_constants(&records, ScenarioKind::Ens, &others, &Column::COMPLETE);
            self.commit_regression("regress/complete", fit)?;
        }
        let has_dir = records.iter().any(|r| r.scenario.ends_with("+dir"));
        if kinds.contains(&ScenarioKind::It) && has_dir {
            // One row per ensemble: the other voting schemes reuse the same
            // models and would enter as pseudo-replicates.
            let voting = self
                .config
                .scenarios
                .iter()
                .find(|s| s.label().kind == ScenarioKind::It)
                .map_or(VotingScheme::Average, |s| s.voting);
            let records: Vec<EvaluationRecord> = records.into_iter().filter(|r| r.voting == voting).collect();
            let cols = [Column::N, Column::Dirichlet];
            self.commit_regression("regress/dirichlet", fit_dropping_constants(&records, ScenarioKind::It, &[], &cols))?;
            for &seed in &self.config.seeds {
                let per: Vec<EvaluationRecord> = records.iter().filter(|r| r.seed == seed).cloned().collect();
                let fit = fit_dropping_constants(&per, ScenarioKind::It, &[], &cols);
                self.commit_regression(&format!("regress/dirichlet-seed-{}", seed), fit)?;
            }
        }
        Ok(())
    }

    fn commit_regression(&self, stem: &str, fit: Result<RegressionResult>) -> Result<()> {
        match fit {
            Ok(r) => {
                self.commit(&format!("{}.csv", stem), r.csv().as_bytes())?;
                self.commit(&format!("{}.txt", stem), r.table().as_bytes())
            }
            Err(e) => self.commit(&format!("{}.txt", stem), format!("not fitted: {:#}\n", e).as_bytes()),
        }
    }

    pub fn load_regression(&self, stem: &str) -> Result<RegressionResult> {
        let p = self.require(&format!("regress/{}.csv", stem), Stage::Regress)?;
        artifacts::parse_regression_csv(&artifacts::read_string(&p)?)
    }

    fn report(&self) -> Result<()> {
        let records = self.load_records()?;
        self.commit("report/records.csv", artifacts::records_csv(&records)?.as_bytes())?;
        self.commit("report/table3.csv", report::table3(&records).as_bytes())?;
        self.commit("report/voting.csv", report::voting_table(&records).as_bytes())?;
        let mut rows = Vec::new();
        for &seed in &self.config.seeds {
            let Ok(text) = artifacts::read_string(&self.path(&format!("gradsim/seed-{}.csv", seed))) else {
                continue;
            };
            for line in text.lines().skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                rows.push((f[0].to_string(), f[1].parse()?, seed, f[2].parse()?));
            }
        }
        if !rows.is_empty() {
            self.commit("report/similarity.csv", report::similarity_table(&rows).as_bytes())?;
        }
        Ok(())
    }
}

fn scenario_kinds(records: &[EvaluationRecord]) -> Result<Vec<ScenarioKind>> {
    let mut kinds = Vec::new();
    for r in records {
        let l: distrobust_core::trainer::ScenarioLabel = r.scenario.parse()?;
        if !kinds.contains(&l.kind) {
            kinds.push(l.kind);
        }
    }
    Ok(kinds)
}

/// OLS with every constant column removed first (for instance `N` when a
/// run covers a single node count).
pub fn fit_dropping_constants(records: &[EvaluationRecord], baseline: ScenarioKind, include: &[ScenarioKind], columns: &[Column]) -> Result<RegressionResult> {
    let mut cols = columns.to_vec();
    loop {
        match build_design(records, baseline, include, &cols, Response::MeanOverAttacks) {
            Ok(d) => return Ok(ols(&d)?),
            Err(CoreError::DegenerateColumn(name)) if cols.len() > 1 => cols.retain(|c| c.name() != name),
            Err(e) => return Err(e.into()),
        }
    }
}
