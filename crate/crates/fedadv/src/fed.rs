//! Simulated federation: per-round local adversarial training on every
//! client, size-weighted parameter averaging, broadcast, repeat.

use crate::attack::AttackConfig;
use crate::data::LabeledBatch;
use crate::error::{Error, Result};
use crate::eval::{eval_natural, eval_robust, EvalConfig};
use crate::nn::optim::SgdState;
use crate::nn::Network;
use crate::partition::PartitionPlan;
use crate::rng::stream_key;
use crate::train::{train_epochs, TrainConfig};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::time::Instant;

const CLIENT_TAG: u64 = 0x4645_0001;
const ROUND_TAG: u64 = 0x4645_0002;
const EVAL_TAG: u64 = 0x4645_0003;

#[derive(Debug, Clone)]
pub struct FedConfig {
    /// K: number of clients; all of them participate every round.
    pub n_clients: usize,
    /// R: communication rounds.
    pub rounds: usize,
    /// E: local epochs per round.
    pub local_epochs: usize,
    pub batch_size: usize,
    /// Evaluate the global model every n-th round (and always after the
    /// last); 0 disables evaluation entirely.
    pub eval_every: usize,
    /// Train clients on worker threads. Results are identical to the
    /// serial path; only wall time changes.
    pub parallel: bool,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            n_clients: 5,
            rounds: 10,
            local_epochs: 3,
            batch_size: 128,
            eval_every: 1,
            parallel: false,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("K", self.n_clients),
            ("R", self.rounds),
            ("E", self.local_epochs),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// One client's fixed identity for a run: its data (already combined with
/// the shared sample) and its private seed.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub indices: Vec<usize>,
    pub seed: u64,
}

/// Builds the K clients from a partition plan, deriving a distinct seed
/// per client id.
pub fn make_clients(plan: &PartitionPlan, seed: u64) -> Result<Vec<ClientState>> {
    (0..plan.n_clients())
        .map(|id| {
            Ok(ClientState {
                id,
                indices: plan.client_set(id)?,
                seed: stream_key(seed, &[CLIENT_TAG, id as u64]),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundTiming {
    pub wall_time_s: f64,
}

/// Per-round record. Everything outside `timing` is a pure function of
/// (config, seed); `timing` is the one nondeterministic field.
#[derive(Debug, Clone, Serialize)]
pub struct RoundReport {
    pub round: usize,
    /// Mean over clients of their final-epoch mean training loss.
    pub mean_local_loss: f64,
    pub natural_acc: Option<f64>,
    pub robust_acc: BTreeMap<String, f64>,
    pub attack_failures: BTreeMap<String, usize>,
    pub timing: RoundTiming,
}

/// Size-weighted average of congruent parameter vectors. Weights are
/// normalized first and the sum runs in client order, so the result is
/// deterministic and a single client averages to itself exactly.
pub fn fedavg(params: &[Vec<f64>], sizes: &[usize]) -> Result<Vec<f64>> {
    if params.is_empty() || params.len() != sizes.len() {
        return Err(Error::Fed(format!(
            "{} parameter vectors vs {} sizes",
            params.len(),
            sizes.len()
        )));
    }
    let dim = params[0].len();
    for (k, p) in params.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::Fed(format!(
                "client {k} has {} parameters, expected {dim}",
                p.len()
            )));
        }
    }
    if sizes.iter().any(|&n| n == 0) {
        return Err(Error::Fed("client dataset sizes must be positive".into()));
    }
    let total: f64 = sizes.iter().map(|&n| n as f64).sum();
    let mut out = vec![0.0; dim];
    for (p, &n) in params.iter().zip(sizes) {
        let w = n as f64 / total;
        for (o, &v) in out.iter_mut().zip(p) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// E local epochs of augmented SGD starting from the current global model.
/// Momentum starts from zero each round; the schedule index continues
/// across rounds as (round - 1) * E + e.
pub fn local_adv_train(
    client: &ClientState,
    global: &Network,
    data: &LabeledBatch,
    fed: &FedConfig,
    train: &TrainConfig,
    round: usize,
) -> Result<LocalModel> {
    if client.indices.is_empty() {
        return Err(Error::Fed(format!("client {} has no data", client.id)));
    }
    let local_data = data.select(&client.indices)?;
    let mut net = global.clone();
    let mut state = SgdState::new(net.params.len());
    let cfg = TrainConfig {
        epochs: fed.local_epochs,
        batch_size: fed.batch_size,
        ..train.clone()
    };
    let stats = train_epochs(
        &mut net,
        &mut state,
        &local_data,
        &cfg,
        stream_key(client.seed, &[ROUND_TAG, round as u64]),
        (round - 1) * fed.local_epochs,
    )?;
    Ok(LocalModel {
        bn: net.bn_state_vector(),
        params: net.params,
        size: client.indices.len(),
        last_loss: stats.last().map_or(f64::NAN, |s| s.mean_loss),
    })
}

/// What a client returns to the aggregator.
#[derive(Debug, Clone)]
pub struct LocalModel {
    pub params: Vec<f64>,
    pub bn: Vec<f64>,
    pub size: usize,
    pub last_loss: f64,
}

/// Everything a federated run needs beyond the model itself.
pub struct FedRun<'a> {
    pub data: &'a LabeledBatch,
    /// Test split for the per-round accuracy snapshots; None skips them.
    pub test: Option<&'a LabeledBatch>,
    pub plan: &'a PartitionPlan,
    pub fed: &'a FedConfig,
    pub train: &'a TrainConfig,
    pub eval: &'a EvalConfig,
    pub attack: &'a AttackConfig,
    pub seed: u64,
}

/// Runs R rounds, mutating `net` into the final global model. Client
/// work depends only on (global snapshot, client seed, round index) and
/// aggregation walks clients in id order, so the serial and parallel paths
/// produce bit-identical models.
pub fn run_rounds(net: &mut Network, run: &FedRun) -> Result<Vec<RoundReport>> {
    run.fed.validate()?;
    if run.plan.n_clients() != run.fed.n_clients {
        return Err(Error::Fed(format!(
            "plan has {} clients, config says {}",
            run.plan.n_clients(),
            run.fed.n_clients
        )));
    }
    let clients = make_clients(run.plan, run.seed)?;
    let mut reports = Vec::with_capacity(run.fed.rounds);
    for round in 1..=run.fed.rounds {
        let start = Instant::now();
        let global = &*net;
        let train_one = |c: &ClientState| {
            local_adv_train(c, global, run.data, run.fed, run.train, round)
                .map_err(|e| Error::Fed(format!("client {}: {e}", c.id)))
        };
        let outcomes: Vec<LocalModel> = if run.fed.parallel {
            clients
                .par_iter()
                .map(train_one)
                .collect::<Result<Vec<_>>>()?
        } else {
            clients.iter().map(train_one).collect::<Result<Vec<_>>>()?
        };

        let sizes: Vec<usize> = outcomes.iter().map(|o| o.size).collect();
        let params: Vec<Vec<f64>> = outcomes.iter().map(|o| o.params.clone()).collect();
        net.params = fedavg(&params, &sizes)?;
        if !net.bn_states().is_empty() {
            let bns: Vec<Vec<f64>> = outcomes.iter().map(|o| o.bn.clone()).collect();
            net.load_bn_state_vector(&fedavg(&bns, &sizes)?)?;
        }
        let mean_local_loss =
            outcomes.iter().map(|o| o.last_loss).sum::<f64>() / outcomes.len() as f64;

        let evaluate = run.fed.eval_every > 0
            && (round % run.fed.eval_every == 0 || round == run.fed.rounds);
        let (mut natural_acc, mut robust_acc, mut attack_failures) =
            (None, BTreeMap::new(), BTreeMap::new());
        if evaluate {
            if let Some(test) = run.test {
                let eval_seed = stream_key(run.seed, &[EVAL_TAG, round as u64]);
                natural_acc = Some(eval_natural(net, test, run.eval, eval_seed)?);
                for &kind in &run.eval.attacks {
                    let r = eval_robust(net, test, kind, run.attack, run.eval, eval_seed)?;
                    robust_acc.insert(kind.name().to_string(), r.accuracy);
                    attack_failures.insert(kind.name().to_string(), r.attack_failures);
                }
            }
        }
        reports.push(RoundReport {
            round,
            mean_local_loss,
            natural_acc,
            robust_acc,
            attack_failures,
            timing: RoundTiming {
                wall_time_s: start.elapsed().as_secs_f64(),
            },
        });
    }
    Ok(reports)
}
