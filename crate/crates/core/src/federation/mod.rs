//! Round orchestration for the federated learner and its baselines.
//!
//! Each round the server broadcasts its model, devices train in parallel
//! on their own data, and the server aggregates the uploads. Every random
//! draw comes from a stream keyed by (seed, round, device), so results do
//! not depend on which device finishes first.

pub mod checkpoint;
mod device;
pub mod envelope;
mod fedavg;
mod features;
mod server;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approximator::ApproximatorParams;
use crate::env_suite::{env_spec, evaluate_policy, make_env, ActionKind, OfflineDataset};
use crate::error::{Error, Result};
use crate::offline_core::{actor_layers, CriticPair};
use crate::rng;

pub use device::{
    critic_greedy_action, device_round, mean_dataset_q, DeviceConfig, DeviceState, LocalObjective, LocalTrainConfig,
};
pub use envelope::{ParamEnvelope, PayloadKind};
pub use fedavg::{fedavg_aggregate, fedavg_weights};
pub use features::{ActorPolicy, FeatureMap};
pub use server::{
    ensemble_critic_loss, ensemble_targets, gaussian_log_prob, log_std_from_params, log_std_params,
    server_actor_loss, server_ensemble_update, AggregationSummary, EnsembleCriticLoss, ServerActorLoss, ServerConfig,
    ServerState,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Forler,
    FedCql,
    FedTd3bc,
    CentralizedCql,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Forler,
        Algorithm::FedCql,
        Algorithm::FedTd3bc,
        Algorithm::CentralizedCql,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Forler => "forler",
            Algorithm::FedCql => "fed_cql",
            Algorithm::FedTd3bc => "fed_td3bc",
            Algorithm::CentralizedCql => "centralized_cql",
        }
    }

    fn objective(self) -> LocalObjective {
        match self {
            Algorithm::Forler => LocalObjective::Rectified,
            Algorithm::FedCql | Algorithm::CentralizedCql => LocalObjective::Cql,
            Algorithm::FedTd3bc => LocalObjective::Td3bc,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}'")))
    }
}

/// Everything a run needs besides its datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct FederationConfig {
    pub env_id: String,
    /// T, communication rounds.
    pub rounds: u64,
    pub device: DeviceConfig,
    pub server: ServerConfig,
    /// Hidden widths shared by actors and critics.
    pub hidden: Vec<usize>,
    pub eval_episodes: usize,
    pub seed: u64,
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub round: u64,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub global_return: f64,
    pub device_id: String,
    /// Empty when the device aborted the round.
    pub device_return: Option<f64>,
    pub q_evals: u64,
    pub elapsed_ms: u64,
}

pub const METRICS_HEADER: [&str; 8] = [
    "round",
    "algorithm",
    "seed",
    "global_return",
    "device_id",
    "device_return",
    "q_evals",
    "elapsed_ms",
];

/// Final models of a run.
#[derive(Clone, Debug)]
pub struct FinalModels {
    pub round: u64,
    pub global_actor: ApproximatorParams,
    pub log_std: Option<Vec<f64>>,
    /// Server ensemble heads, or the averaged pair for the baselines.
    pub global_heads: Vec<ApproximatorParams>,
    pub global_targets: Vec<ApproximatorParams>,
    pub devices: Vec<(u32, ApproximatorParams, CriticPair)>,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub records: Vec<MetricsRecord>,
    pub models: FinalModels,
}

/// Id used in the log for the pooled single learner.
pub const POOLED_DEVICE: &str = "pooled";

const EVAL_SEED_OFFSET: u64 = 0x0e7a_1000;
const DOMAIN_INIT: u16 = 0;
const DOMAIN_DEVICE: u16 = 1;
const DOMAIN_SERVER: u16 = 2;

struct Ctx<'a> {
    algorithm: Algorithm,
    cfg: &'a FederationConfig,
    features: FeatureMap,
    env: crate::env_suite::Environment,
    eval_seed: u64,
}

impl Ctx<'_> {
    fn evaluate(&self, actor: &ApproximatorParams) -> Result<f64> {
        let policy = ActorPolicy {
            actor,
            features: &self.features,
        };
        Ok(evaluate_policy(&self.env, &policy, self.cfg.eval_episodes, self.eval_seed)?.mean)
    }
}

/// Runs `cfg.rounds` rounds and reports each row to `observer` as soon as
/// it is produced, so a failing run still leaves a partial log.
pub fn run_federation(
    algorithm: Algorithm,
    devices: &[Arc<OfflineDataset>],
    server_data: &Arc<OfflineDataset>,
    cfg: &FederationConfig,
    observer: &mut dyn FnMut(&MetricsRecord) -> Result<()>,
) -> Result<TrainingOutcome> {
    validate(algorithm, devices, cfg)?;
    let spec = env_spec(&cfg.env_id)?;
    let ctx = Ctx {
        algorithm,
        cfg,
        features: FeatureMap::for_spec(&spec),
        env: make_env(&cfg.env_id, cfg.seed)?,
        eval_seed: cfg.seed.wrapping_add(EVAL_SEED_OFFSET),
    };
    let mut records = Vec::new();
    let mut emit = |r: MetricsRecord, records: &mut Vec<MetricsRecord>| -> Result<()> {
        observer(&r)?;
        records.push(r);
        Ok(())
    };

    let (sf, af) = (ctx.features.state_features(), ctx.features.action_features());
    let mut init_rng = rng::stream(cfg.seed, rng::stream_id(DOMAIN_INIT, 0, 0));
    let actor = ApproximatorParams::init(actor_layers(sf, af, &cfg.hidden), &mut init_rng)?;
    let pair = CriticPair::init(sf, af, &cfg.hidden, &mut init_rng)?;

    match algorithm {
        Algorithm::CentralizedCql => {
            let parts: Vec<&OfflineDataset> = devices.iter().map(|d| d.as_ref()).collect();
            let pooled = Arc::new(OfflineDataset::pooled(&parts)?);
            let mut learner = DeviceState::new(0, pooled, ctx.features.clone(), actor, pair, &cfg.device.train);
            let start = ctx.evaluate(&learner.actor)?;
            emit(row(&ctx, 0, start, POOLED_DEVICE.into(), Some(start), 0, 0), &mut records)?;
            for t in 1..=cfg.rounds {
                let clock = Instant::now();
                learner.round = t - 1;
                learner.step = 0;
                let mut r = rng::stream(cfg.seed, rng::stream_id(DOMAIN_DEVICE, t - 1, 0));
                device_round(&mut learner, LocalObjective::Cql, &cfg.device, &mut r)?;
                let ret = ctx.evaluate(&learner.actor)?;
                let ms = clock.elapsed().as_millis() as u64;
                emit(row(&ctx, t, ret, POOLED_DEVICE.into(), Some(ret), 0, ms), &mut records)?;
            }
            let models = FinalModels {
                round: cfg.rounds,
                global_actor: learner.actor.clone(),
                log_std: None,
                global_heads: vec![learner.critics.q1.clone(), learner.critics.q2.clone()],
                global_targets: vec![learner.critics.q1_target.clone(), learner.critics.q2_target.clone()],
                devices: Vec::new(),
            };
            Ok(TrainingOutcome { records, models })
        }
        Algorithm::Forler => {
            let mut server = ServerState::new(
                actor.clone(),
                pair.clone(),
                Arc::clone(server_data),
                ctx.features.clone(),
                &cfg.server,
                cfg.seed,
            )?;
            let mut states = make_devices(&ctx, devices, &actor, &pair);
            let start = ctx.evaluate(&server.actor)?;
            for d in &states {
                emit(row(&ctx, 0, start, d.device_id.to_string(), Some(start), 0, 0), &mut records)?;
            }
            for t in 1..=cfg.rounds {
                let clock = Instant::now();
                let actor_env = ParamEnvelope::from_bytes(&server.actor_envelope()?.to_bytes())?;
                let critic_env = ParamEnvelope::from_bytes(&server.critic_envelope()?.to_bytes())?;
                let results = run_devices(&ctx, &mut states, t - 1, |d| {
                    d.receive_envelopes(&actor_env, &critic_env, &cfg.device.train)
                });
                let uploads: Vec<ParamEnvelope> = results.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
                if uploads.is_empty() {
                    return Err(first_error(results));
                }
                let mut r = rng::stream(cfg.seed, rng::stream_id(DOMAIN_SERVER, t - 1, 0));
                server_ensemble_update(&mut server, &uploads, &cfg.server, cfg.device.loss.gamma, &mut r)?;
                let global = ctx.evaluate(&server.actor)?;
                emit_devices(&ctx, &states, t, global, clock, &mut |r| emit(r, &mut records))?;
            }
            let models = FinalModels {
                round: cfg.rounds,
                global_actor: server.actor.clone(),
                log_std: Some(server.log_std.clone()),
                global_heads: server.heads.clone(),
                global_targets: server.targets.clone(),
                devices: device_models(&states),
            };
            Ok(TrainingOutcome { records, models })
        }
        Algorithm::FedCql | Algorithm::FedTd3bc => {
            let mut global_actor = actor.clone();
            let mut global_pair = pair.clone();
            let mut states = make_devices(&ctx, devices, &actor, &pair);
            let start = ctx.evaluate(&global_actor)?;
            for d in &states {
                emit(row(&ctx, 0, start, d.device_id.to_string(), Some(start), 0, 0), &mut records)?;
            }
            for t in 1..=cfg.rounds {
                let clock = Instant::now();
                let actor_env = wire(ParamEnvelope::new(
                    envelope::SERVER_ID,
                    t - 1,
                    PayloadKind::GlobalActor,
                    vec![global_actor.clone()],
                ))?;
                let critic_env = wire(ParamEnvelope::new(
                    envelope::SERVER_ID,
                    t - 1,
                    PayloadKind::GlobalCritic,
                    vec![
                        global_pair.q1.clone(),
                        global_pair.q2.clone(),
                        global_pair.q1_target.clone(),
                        global_pair.q2_target.clone(),
                    ],
                ))?;
                let results = run_devices(&ctx, &mut states, t - 1, |d| {
                    d.receive_envelopes(&actor_env, &critic_env, &cfg.device.train)
                });
                let ok: Vec<usize> = (0..states.len()).filter(|i| results[*i].is_ok()).collect();
                if ok.is_empty() {
                    return Err(first_error(results));
                }
                let sizes: Vec<usize> = ok.iter().map(|i| states[*i].dataset.len()).collect();
                let avg = |f: &dyn Fn(&DeviceState) -> &ApproximatorParams| {
                    let uploads: Vec<&ApproximatorParams> = ok.iter().map(|i| f(&states[*i])).collect();
                    fedavg_aggregate(&uploads, &sizes)
                };
                global_actor = avg(&|d| &d.actor)?;
                global_pair = CriticPair::with_targets(
                    avg(&|d| &d.critics.q1)?,
                    avg(&|d| &d.critics.q2)?,
                    avg(&|d| &d.critics.q1_target)?,
                    avg(&|d| &d.critics.q2_target)?,
                )?;
                let global = ctx.evaluate(&global_actor)?;
                emit_devices(&ctx, &states, t, global, clock, &mut |r| emit(r, &mut records))?;
            }
            let models = FinalModels {
                round: cfg.rounds,
                global_actor,
                log_std: None,
                global_heads: vec![global_pair.q1, global_pair.q2],
                global_targets: vec![global_pair.q1_target, global_pair.q2_target],
                devices: device_models(&states),
            };
            Ok(TrainingOutcome { records, models })
        }
    }
}

fn validate(algorithm: Algorithm, devices: &[Arc<OfflineDataset>], cfg: &FederationConfig) -> Result<()> {
    if devices.is_empty() {
        return Err(Error::Config("at least one device dataset is required".into()));
    }
    if cfg.eval_episodes == 0 {
        return Err(Error::Config("eval_episodes must be at least 1".into()));
    }
    let spec = env_spec(&cfg.env_id)?;
    if algorithm == Algorithm::FedTd3bc && spec.action_kind == ActionKind::Discrete {
        return Err(Error::Config("fed_td3bc needs a continuous-action environment".into()));
    }
    if let Some(d) = devices.iter().find(|d| d.env_id() != cfg.env_id) {
        return Err(Error::Config(format!("dataset for {} used in a {} run", d.env_id(), cfg.env_id)));
    }
    cfg.device.loss.validate()?;
    cfg.device.rectifier.validate()?;
    cfg.device.train.validate()?;
    cfg.server.validate()
}

fn wire(env: ParamEnvelope) -> Result<ParamEnvelope> {
    ParamEnvelope::from_bytes(&env.to_bytes())
}

fn row(ctx: &Ctx<'_>, round: u64, global: f64, device_id: String, device: Option<f64>, q_evals: u64, ms: u64) -> MetricsRecord {
    MetricsRecord {
        round,
        algorithm: ctx.algorithm,
        seed: ctx.cfg.seed,
        global_return: global,
        device_id,
        device_return: device,
        q_evals,
        elapsed_ms: ms,
    }
}

fn make_devices(ctx: &Ctx<'_>, data: &[Arc<OfflineDataset>], actor: &ApproximatorParams, pair: &CriticPair) -> Vec<DeviceState> {
    data.iter()
        .enumerate()
        .map(|(k, d)| {
            DeviceState::new(
                k as u32,
                Arc::clone(d),
                ctx.features.clone(),
                actor.clone(),
                pair.clone(),
                &ctx.cfg.device.train,
            )
        })
        .collect()
}

/// Receives the broadcast and runs one local round on every device in parallel.
fn run_devices(
    ctx: &Ctx<'_>,
    states: &mut [DeviceState],
    round: u64,
    receive: impl Fn(&mut DeviceState) -> Result<()> + Sync,
) -> Vec<Result<ParamEnvelope>> {
    let objective = ctx.algorithm.objective();
    let cfg = ctx.cfg;
    states
        .par_iter_mut()
        .map(|d| {
            receive(d)?;
            let mut r = rng::stream(cfg.seed, rng::stream_id(DOMAIN_DEVICE, round, d.device_id));
            device_round(d, objective, &cfg.device, &mut r)
        })
        .collect()
}

fn first_error(results: Vec<Result<ParamEnvelope>>) -> Error {
    results
        .into_iter()
        .find_map(|r| r.err())
        .unwrap_or(Error::NoEnvelopes(0))
}

fn emit_devices(
    ctx: &Ctx<'_>,
    states: &[DeviceState],
    round: u64,
    global: f64,
    clock: Instant,
    emit: &mut dyn FnMut(MetricsRecord) -> Result<()>,
) -> Result<()> {
    let returns: Vec<Option<f64>> = states
        .par_iter()
        .map(|d| if d.flagged { Ok(None) } else { ctx.evaluate(&d.actor).map(Some) })
        .collect::<Result<_>>()?;
    let ms = clock.elapsed().as_millis() as u64;
    for (d, ret) in states.iter().zip(returns) {
        emit(row(ctx, round, global, d.device_id.to_string(), ret, d.round_q_evals(), ms))?;
    }
    Ok(())
}

fn device_models(states: &[DeviceState]) -> Vec<(u32, ApproximatorParams, CriticPair)> {
    states
        .iter()
        .map(|d| (d.device_id, d.actor.clone(), d.critics.clone()))
        .collect()
}
