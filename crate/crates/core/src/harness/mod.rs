//! Experiment commands behind the `forler` binary and the Python module.
//!
//! Every command writes into its own output directory and is deterministic
//! given (config, seeds); only the `elapsed_ms` log column varies.

mod config;

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{parse_seeds, AblationConfig, DataConfig, DatasetSpec, ExperimentConfig, Study, VerifyConfig};

use crate::env_suite::io::{dataset_file_name, read_dataset, write_dataset, write_dataset_csv};
use crate::env_suite::{generate_dataset, make_env, value_iteration, OfflineDataset, Quality};
use crate::error::{Error, Result};
use crate::federation::checkpoint::write_checkpoint;
use crate::federation::{run_federation, Algorithm, MetricsRecord, METRICS_HEADER};
use crate::verify::{
    check_theorem1, check_theorem1_with_model, default_action_embedding, empirical_behavior, empirical_mdp,
    tabular_forler, BoundOutcome, TabularPolicy,
};

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";

/// Caps the global rayon pool at `FORLER_THREADS` when it is set.
/// Returns the cap that was applied.
pub fn init_threads_from_env() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var("FORLER_THREADS") else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("FORLER_THREADS must be a positive integer, got '{raw}'")))?;
    // a second initialisation in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

/// Device datasets and the server dataset of one run.
#[derive(Clone, Debug)]
pub struct RunData {
    pub devices: Vec<Arc<OfflineDataset>>,
    pub server: Arc<OfflineDataset>,
}

fn materialize(env_id: &str, spec: DatasetSpec, dir: Option<&Path>) -> Result<OfflineDataset> {
    match dir {
        Some(dir) => {
            let path = dir.join(dataset_file_name(env_id, spec.quality, spec.seed));
            let ds = read_dataset(&path).map_err(|e| match e {
                Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
                other => other,
            })?;
            if ds.len() != spec.size || ds.env_id() != env_id {
                return Err(Error::Format {
                    what: "dataset",
                    reason: format!("{} does not match the configured size or environment", path.display()),
                });
            }
            Ok(ds)
        }
        None => generate_dataset(&make_env(env_id, spec.seed)?, spec.quality, spec.size, spec.seed),
    }
}

/// Reads the run's datasets from `data.dir`, or generates them in memory.
pub fn load_run_data(cfg: &ExperimentConfig, seed: u64) -> Result<RunData> {
    let dir = cfg.data.dir.as_deref();
    let devices = cfg
        .data
        .device_specs(seed)
        .into_iter()
        .map(|s| materialize(&cfg.env_id, s, dir).map(Arc::new))
        .collect::<Result<_>>()?;
    let server = Arc::new(materialize(&cfg.env_id, cfg.data.server_spec(seed), dir)?);
    Ok(RunData { devices, server })
}

/// Writes every device and server dataset of every seed as `.ford` plus a
/// CSV copy under `csv/`. Returns the `.ford` paths.
pub fn gen_data(cfg: &ExperimentConfig, out: &Path, seeds: &[u64]) -> Result<Vec<PathBuf>> {
    let csv_dir = out.join("csv");
    fs::create_dir_all(&csv_dir)?;
    let mut specs = Vec::new();
    for &seed in seeds {
        specs.extend(cfg.data.device_specs(seed));
        specs.push(cfg.data.server_spec(seed));
    }
    specs.dedup();
    specs
        .par_iter()
        .map(|spec| {
            let ds = materialize(&cfg.env_id, *spec, None)?;
            let name = dataset_file_name(&cfg.env_id, spec.quality, spec.seed);
            let path = out.join(&name);
            write_dataset(&path, &ds)?;
            write_dataset_csv(&csv_dir.join(name.replace(".ford", ".csv")), &ds)?;
            Ok(path)
        })
        .collect()
}

/// Append-only training log, flushed after every row.
pub struct LogWriter {
    inner: csv::Writer<File>,
}

impl LogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path)?;
        inner.write_record(METRICS_HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn append(&mut self, r: &MetricsRecord) -> Result<()> {
        self.inner.write_record([
            r.round.to_string(),
            r.algorithm.as_str().to_string(),
            r.seed.to_string(),
            r.global_return.to_string(),
            r.device_id.clone(),
            r.device_return.map(|v| v.to_string()).unwrap_or_default(),
            r.q_evals.to_string(),
            r.elapsed_ms.to_string(),
        ])?;
        self.inner.flush()?;
        Ok(())
    }
}

/// Outcome of one (config, seed) training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub final_global_return: f64,
    /// Mean over devices that finished the last round, if any did.
    pub final_device_mean_return: Option<f64>,
    pub q_evals_total: u64,
    pub log_path: PathBuf,
    /// Global return after every round, starting with round 0.
    pub global_curve: Vec<f64>,
}

pub fn log_file_name(algorithm: Algorithm, seed: u64) -> String {
    format!("{algorithm}-seed{seed}.csv")
}

fn write_effective_config(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    fs::create_dir_all(out)?;
    let text = cfg.to_toml()?;
    fs::write(out.join(EFFECTIVE_CONFIG), &text)?;
    Ok(text)
}

/// One seed: datasets, federation, log and checkpoint.
pub fn train_seed(cfg: &ExperimentConfig, config_text: &str, out: &Path, seed: u64) -> Result<RunSummary> {
    let data = load_run_data(cfg, seed)?;
    let log_path = out.join(log_file_name(cfg.algorithm, seed));
    let mut log = LogWriter::create(&log_path)?;
    let outcome = run_federation(
        cfg.algorithm,
        &data.devices,
        &data.server,
        &cfg.federation_config(seed),
        &mut |r| log.append(r),
    )?;
    let ckpt = out.join("checkpoints").join(format!("{}-seed{seed}", cfg.algorithm));
    write_checkpoint(&ckpt, cfg.algorithm, &[seed], config_text, &outcome.models)?;
    let last_round = outcome.models.round;
    let last: Vec<&MetricsRecord> = outcome.records.iter().filter(|r| r.round == last_round).collect();
    let device_returns: Vec<f64> = last.iter().filter_map(|r| r.device_return).collect();
    let mut global_curve = Vec::new();
    for r in &outcome.records {
        if global_curve.len() as u64 == r.round {
            global_curve.push(r.global_return);
        }
    }
    Ok(RunSummary {
        algorithm: cfg.algorithm,
        seed,
        final_global_return: last.first().map_or(f64::NAN, |r| r.global_return),
        final_device_mean_return: (!device_returns.is_empty())
            .then(|| device_returns.iter().sum::<f64>() / device_returns.len() as f64),
        q_evals_total: outcome.records.iter().map(|r| r.q_evals).sum(),
        log_path,
        global_curve,
    })
}

/// Runs every seed, writing the effective config, one log per seed and
/// one checkpoint per seed under `out`.
pub fn train(cfg: &ExperimentConfig, out: &Path, seeds: &[u64]) -> Result<Vec<RunSummary>> {
    let text = write_effective_config(cfg, out)?;
    seeds.par_iter().map(|s| train_seed(cfg, &text, out, *s)).collect()
}

/// Named variants of the base config compared by a study.
pub fn study_arms(cfg: &ExperimentConfig, study: Study) -> Vec<(String, ExperimentConfig)> {
    let a = &cfg.ablation;
    let forler = || ExperimentConfig {
        algorithm: Algorithm::Forler,
        ..cfg.clone()
    };
    match study {
        Study::DeltaSweep => a
            .deltas
            .iter()
            .map(|d| {
                let mut c = forler();
                c.rectifier.delta = *d;
                (format!("delta-{d}"), c)
            })
            .collect(),
        Study::RectificationOnoff => [("on", true), ("off", false)]
            .into_iter()
            .map(|(name, on)| {
                let mut c = forler();
                c.rectifier.enabled = on;
                (name.to_string(), c)
            })
            .collect(),
        Study::Pollution => {
            let mut qualities = vec![a.pollution_high_quality; a.pollution_high];
            qualities.extend(vec![Quality::Random; a.pollution_low]);
            let continuous = crate::env_suite::env_spec(&cfg.env_id)
                .map(|s| s.action_kind == crate::env_suite::ActionKind::Continuous)
                .unwrap_or(false);
            [Algorithm::Forler, Algorithm::FedCql, Algorithm::FedTd3bc]
                .into_iter()
                .filter(|alg| continuous || *alg != Algorithm::FedTd3bc)
                .map(|algorithm| {
                    let mut c = cfg.clone();
                    c.algorithm = algorithm;
                    c.data.n_devices = qualities.len();
                    c.data.qualities = qualities.clone();
                    (algorithm.as_str().to_string(), c)
                })
                .collect()
        }
        Study::AlphaGrid => {
            let mut arms = Vec::new();
            for a1 in &a.alpha_1_grid {
                for a2 in &a.alpha_2_grid {
                    let mut c = forler();
                    c.loss.alpha_1 = *a1;
                    c.loss.alpha_2 = *a2;
                    arms.push((format!("alpha_1-{a1}_alpha_2-{a2}"), c));
                }
            }
            arms
        }
        Study::DeviceCount => a
            .device_counts
            .iter()
            .map(|k| {
                let mut c = forler();
                c.data.n_devices = *k;
                c.data.qualities.clear();
                (format!("devices-{k}"), c)
            })
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: String,
    pub runs: Vec<RunSummary>,
}

impl ArmResult {
    pub fn mean_std_final(&self) -> (f64, f64) {
        let xs: Vec<f64> = self.runs.iter().map(|r| r.final_global_return).collect();
        mean_std(&xs)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub const SUMMARY_FILE: &str = "summary.csv";
pub const ARM_SUMMARY_FILE: &str = "summary_arms.csv";

/// Runs every arm of `study` for every seed. Each arm gets its own
/// directory; `summary.csv` has one row per (arm, seed) and
/// `summary_arms.csv` one mean/std row per arm.
pub fn ablate(cfg: &ExperimentConfig, study: Study, out: &Path, seeds: &[u64]) -> Result<Vec<ArmResult>> {
    write_effective_config(cfg, out)?;
    let arms = study_arms(cfg, study);
    let mut prepared = Vec::with_capacity(arms.len());
    for (name, arm_cfg) in &arms {
        arm_cfg.validate()?;
        let dir = out.join(name);
        let text = write_effective_config(arm_cfg, &dir)?;
        prepared.push((dir, text));
    }
    let jobs: Vec<(usize, u64)> = (0..arms.len()).flat_map(|i| seeds.iter().map(move |s| (i, *s))).collect();
    let runs: Vec<RunSummary> = jobs
        .par_iter()
        .map(|(i, s)| train_seed(&arms[*i].1, &prepared[*i].1, &prepared[*i].0, *s))
        .collect::<Result<_>>()?;
    let mut results: Vec<ArmResult> = arms
        .iter()
        .map(|(name, _)| ArmResult {
            arm: name.clone(),
            runs: Vec::new(),
        })
        .collect();
    for ((i, _), run) in jobs.iter().zip(runs) {
        results[*i].runs.push(run);
    }

    let mut rows = csv::Writer::from_path(out.join(SUMMARY_FILE))?;
    rows.write_record([
        "study",
        "arm",
        "algorithm",
        "seed",
        "final_global_return",
        "final_device_mean_return",
        "q_evals_total",
    ])?;
    let mut arm_rows = csv::Writer::from_path(out.join(ARM_SUMMARY_FILE))?;
    arm_rows.write_record([
        "study",
        "arm",
        "algorithm",
        "n_seeds",
        "mean_final_return",
        "std_final_return",
        "mean_q_evals_total",
    ])?;
    for (result, (_, arm_cfg)) in results.iter().zip(&arms) {
        for r in &result.runs {
            rows.write_record([
                study.as_str().to_string(),
                result.arm.clone(),
                r.algorithm.to_string(),
                r.seed.to_string(),
                r.final_global_return.to_string(),
                r.final_device_mean_return.map(|v| v.to_string()).unwrap_or_default(),
                r.q_evals_total.to_string(),
            ])?;
        }
        let (mean, std) = result.mean_std_final();
        let q: Vec<f64> = result.runs.iter().map(|r| r.q_evals_total as f64).collect();
        arm_rows.write_record([
            study.as_str().to_string(),
            result.arm.clone(),
            arm_cfg.algorithm.to_string(),
            result.runs.len().to_string(),
            mean.to_string(),
            std.to_string(),
            mean_std(&q).0.to_string(),
        ])?;
    }
    rows.flush()?;
    arm_rows.flush()?;
    Ok(results)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    /// Learned policy equal to a deterministic behavior policy.
    Identical,
    /// α = 0 and η near zero, optimal policy against the true behavior.
    Degenerate,
    /// Tabular conservative learner against the empirical behavior.
    Learned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCell {
    pub kind: CellKind,
    pub alpha: f64,
    pub eta: f64,
    pub outcome: BoundOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTable {
    pub env_id: String,
    pub seed: u64,
    pub dataset_quality: Quality,
    pub dataset_size: usize,
    /// Greedy action of the learned policy per state.
    pub learned_policy: Vec<usize>,
    pub cells: Vec<BoundCell>,
}

pub fn bound_file_name(seed: u64) -> String {
    format!("bound_report-seed{seed}.toml")
}

/// Bound grid for one seed.
pub fn bound_table(cfg: &VerifyConfig, seed: u64) -> Result<BoundTable> {
    let env = make_env(&cfg.env_id, seed)?;
    let mdp = env
        .tabular_mdp()
        .ok_or_else(|| Error::Config(format!("{} is not tabular", cfg.env_id)))?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let embedding = default_action_embedding(na);
    let ds = generate_dataset(&env, cfg.dataset_quality, cfg.dataset_size, seed)?;
    let model = empirical_mdp(&ds, mdp)?;
    let behavior_hat = empirical_behavior(&ds, ns, na)?;
    let optimal = TabularPolicy::deterministic(&value_iteration(mdp, 1e-12, 100_000).greedy, na)?;
    let true_behavior = TabularPolicy::epsilon_greedy(
        &optimal.as_deterministic().expect("deterministic by construction"),
        na,
        ds.behavior_epsilon(),
    )?;
    let learned = tabular_forler(&model, &behavior_hat, &embedding, &cfg.tabular)?;

    let mut cells = Vec::new();
    for &alpha in &cfg.alphas {
        for &eta in &cfg.etas {
            cells.push(BoundCell {
                kind: CellKind::Identical,
                alpha,
                eta,
                outcome: check_theorem1(mdp, &optimal, &optimal, &embedding, alpha, eta)?,
            });
        }
    }
    cells.push(BoundCell {
        kind: CellKind::Degenerate,
        alpha: 0.0,
        eta: cfg.degenerate_eta,
        outcome: check_theorem1(mdp, &optimal, &true_behavior, &embedding, 0.0, cfg.degenerate_eta)?,
    });
    for &alpha in &cfg.alphas {
        for &eta in &cfg.etas {
            cells.push(BoundCell {
                kind: CellKind::Learned,
                alpha,
                eta,
                outcome: check_theorem1_with_model(mdp, &model, &learned, &behavior_hat, &embedding, alpha, eta)?,
            });
        }
    }
    Ok(BoundTable {
        env_id: cfg.env_id.clone(),
        seed,
        dataset_quality: cfg.dataset_quality,
        dataset_size: cfg.dataset_size,
        learned_policy: learned.as_deterministic().expect("tabular learner is deterministic"),
        cells,
    })
}

/// Writes one bound table per seed as TOML.
pub fn verify(cfg: &ExperimentConfig, out: &Path, seeds: &[u64]) -> Result<Vec<BoundTable>> {
    write_effective_config(cfg, out)?;
    let tables: Vec<BoundTable> = seeds
        .par_iter()
        .map(|s| bound_table(&cfg.verify, *s))
        .collect::<Result<_>>()?;
    for t in &tables {
        let text = toml::to_string(t).map_err(|e| Error::Format {
            what: "bound report",
            reason: e.to_string(),
        })?;
        fs::write(out.join(bound_file_name(t.seed)), text)?;
    }
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(text: &str) -> ExperimentConfig {
        let base = "rounds = 1\nhidden = [8]\neval_episodes = 1\n\
                    [data]\nn_devices = 2\ndevice_size = 300\nserver_size = 300\n\
                    [local]\nlocal_steps = 3\nbatch_size = 8\n\
                    [loss]\nmu_samples = 2\n\
                    [rectifier]\npopulation = 4\niterations = 1\ndelta = 2\n\
                    [server]\ngrad_steps = 2\nbatch_size = 8\nmu_samples = 2\nprobe_size = 8\n";
        let mut cfg = ExperimentConfig::from_toml(base).unwrap();
        let extra: toml::Table = toml::from_str(text).unwrap();
        let mut merged: toml::Table = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        for (k, v) in extra {
            match (merged.get_mut(&k), v) {
                (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => dst.extend(src),
                (_, v) => {
                    merged.insert(k, v);
                }
            }
        }
        cfg = ExperimentConfig::from_toml(&toml::to_string(&merged).unwrap()).unwrap();
        cfg
    }

    fn strip_elapsed(path: &Path) -> String {
        fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn gen_data_writes_one_file_per_dataset_and_is_deterministic() {
        let cfg = small("[data]\nn_devices = 6\nqualities = [\"expert\",\"expert\",\"expert\",\"expert\",\"random\",\"random\"]\n");
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let files = gen_data(&cfg, a.path(), &[0]).unwrap();
        assert_eq!(files.len(), 7);
        gen_data(&cfg, b.path(), &[0]).unwrap();
        for f in &files {
            let name = f.file_name().unwrap();
            assert_eq!(fs::read(f).unwrap(), fs::read(b.path().join(name)).unwrap());
        }
        assert!(a.path().join("pointmass-2d-random-5.ford").exists());
        assert!(a.path().join("csv/pointmass-2d-medium-0.csv").exists());
    }

    #[test]
    fn train_reads_generated_data() {
        let data = tempfile::tempdir().unwrap();
        let mut cfg = small("");
        gen_data(&cfg, data.path(), &[3]).unwrap();
        let in_memory = tempfile::tempdir().unwrap();
        let from_disk = tempfile::tempdir().unwrap();
        let a = train(&cfg, in_memory.path(), &[3]).unwrap();
        cfg.data.dir = Some(data.path().to_path_buf());
        let b = train(&cfg, from_disk.path(), &[3]).unwrap();
        assert_eq!(a[0].final_global_return, b[0].final_global_return);
        assert_eq!(strip_elapsed(&a[0].log_path), strip_elapsed(&b[0].log_path));
    }

    #[test]
    fn train_writes_log_checkpoint_and_effective_config() {
        let out = tempfile::tempdir().unwrap();
        let runs = train(&small(""), out.path(), &[0, 1]).unwrap();
        assert_eq!(runs.len(), 2);
        let text = fs::read_to_string(out.path().join("forler-seed1.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "round,algorithm,seed,global_return,device_id,device_return,q_evals,elapsed_ms"
        );
        assert_eq!(lines.count(), 4);
        assert_eq!(runs[0].global_curve.len(), 2);
        let manifest = crate::federation::checkpoint::read_manifest(&out.path().join("checkpoints/forler-seed0")).unwrap();
        assert_eq!(manifest.seeds, vec![0]);
        let effective = fs::read_to_string(out.path().join(EFFECTIVE_CONFIG)).unwrap();
        assert_eq!(manifest.config_hash, crate::federation::checkpoint::config_hash(&effective));
    }

    #[test]
    fn centralized_log_is_single_agent() {
        let out = tempfile::tempdir().unwrap();
        let runs = train(&small("algorithm = \"centralized_cql\"\n"), out.path(), &[0]).unwrap();
        let text = fs::read_to_string(&runs[0].log_path).unwrap();
        assert!(text.lines().skip(1).all(|l| l.split(',').nth(4) == Some("pooled")));
    }

    #[test]
    fn delta_sweep_evaluations_fall_with_delta() {
        let out = tempfile::tempdir().unwrap();
        let cfg = small("[local]\nlocal_steps = 20\n");
        let arms = ablate(&cfg, Study::DeltaSweep, out.path(), &[0]).unwrap();
        assert_eq!(arms.len(), 5);
        let totals: Vec<u64> = arms.iter().map(|a| a.runs[0].q_evals_total).collect();
        assert!(totals.windows(2).all(|w| w[0] > w[1]), "{totals:?}");
        let rows = fs::read_to_string(out.path().join(SUMMARY_FILE)).unwrap();
        assert_eq!(rows.lines().count(), 1 + 5);
    }

    #[test]
    fn study_arms_have_expected_shapes() {
        let cfg = small("");
        assert_eq!(study_arms(&cfg, Study::RectificationOnoff).len(), 2);
        assert_eq!(study_arms(&cfg, Study::AlphaGrid).len(), 9);
        let pollution = study_arms(&cfg, Study::Pollution);
        assert_eq!(pollution.len(), 3);
        assert_eq!(pollution[0].1.data.qualities.len(), 6);
        assert_eq!(pollution[0].1.data.qualities[5], Quality::Random);
        let counts: Vec<usize> = study_arms(&cfg, Study::DeviceCount).iter().map(|a| a.1.data.n_devices).collect();
        assert_eq!(counts, vec![2, 4, 6]);
    }

    #[test]
    fn verify_grid_has_expected_cells() {
        let out = tempfile::tempdir().unwrap();
        let tables = verify(&small(""), out.path(), &[0]).unwrap();
        let cells = &tables[0].cells;
        let count = |k: CellKind| cells.iter().filter(|c| c.kind == k).count();
        assert_eq!((count(CellKind::Identical), count(CellKind::Degenerate), count(CellKind::Learned)), (4, 1, 4));
        for c in cells.iter().filter(|c| c.kind != CellKind::Learned) {
            assert!(c.outcome.report().unwrap().holds, "{:?}", c.kind);
        }
        let text = fs::read_to_string(out.path().join(bound_file_name(0))).unwrap();
        let back: BoundTable = toml::from_str(&text).unwrap();
        assert_eq!(back.cells.len(), cells.len());
    }

    #[test]
    fn threads_variable_is_validated() {
        // only the parse path is exercised; the global pool is left alone
        std::env::set_var("FORLER_THREADS", "zero");
        assert!(matches!(init_threads_from_env(), Err(Error::Config(_))));
        std::env::remove_var("FORLER_THREADS");
        assert_eq!(init_threads_from_env().unwrap(), None);
    }
}
