//! Run artifacts: the versioned binary model format, the schema-stable JSON
//! run report, CSV emitters, and the pipeline dispatcher behind the CLI.

use crate::config::{ExperimentConfig, Pipeline};
use crate::error::{Error, Result};
use crate::eval::eval_natural;
use crate::eval::eval_robust;
use crate::fed::{run_rounds, FedRun, RoundReport};
use crate::nn::{LayerSpec, Network};
use crate::partition::PartitionPlan;
use crate::regression::{fit_log_regression, RegressionFit};
use crate::train::{train, EpochStats};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

const MODEL_MAGIC: &[u8; 8] = b"FEDADVM\0";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    param_count: usize,
    bn_len: usize,
}

/// Writes `net` as magic, format version, a JSON architecture header, and
/// the little-endian f64 parameter and batch-norm state vectors.
pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    let bn = net.bn_state_vector();
    let header = ModelHeader {
        input_shape: net.input_shape.clone(),
        layers: net.layers.clone(),
        param_count: net.params.len(),
        bn_len: bn.len(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut buf =
        Vec::with_capacity(16 + header_bytes.len() + 8 * (net.params.len() + bn.len()));
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_bytes);
    for v in net.params.iter().chain(bn.iter()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a model written by [`save_model`], rebuilding the network in test
/// mode. Errors name the first malformed field (magic, version, header,
/// body length).
pub fn load_model(path: &Path) -> Result<Network> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::ModelFormat(format!("cannot read {}: {e}", path.display())))?;
    if bytes.len() < 16 {
        return Err(Error::ModelFormat(format!(
            "file is {} bytes, shorter than the fixed 16-byte prelude",
            bytes.len()
        )));
    }
    if &bytes[..8] != MODEL_MAGIC {
        return Err(Error::ModelFormat("bad magic; not a model file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {version}, expected {MODEL_VERSION}"
        )));
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body_start = 16 + header_len;
    if bytes.len() < body_start {
        return Err(Error::ModelFormat(format!(
            "header claims {header_len} bytes but only {} remain",
            bytes.len() - 16
        )));
    }
    let header: ModelHeader = serde_json::from_slice(&bytes[16..body_start])
        .map_err(|e| Error::ModelFormat(format!("bad header: {e}")))?;
    let body = &bytes[body_start..];
    let expect = 8 * (header.param_count + header.bn_len);
    if body.len() != expect {
        return Err(Error::ModelFormat(format!(
            "body holds {} bytes, header promises {expect}",
            body.len()
        )));
    }
    let mut net = Network::new(&header.input_shape, header.layers, 0)?;
    if net.params.len() != header.param_count {
        return Err(Error::ModelFormat(format!(
            "layer chain yields {} parameters, header claims {}",
            net.params.len(),
            header.param_count
        )));
    }
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for p in net.params.iter_mut() {
        *p = values.next().unwrap();
    }
    let bn: Vec<f64> = values.collect();
    net.load_bn_state_vector(&bn)
        .map_err(|e| Error::ModelFormat(format!("bad batch-norm state: {e}")))?;
    Ok(net)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportTiming {
    pub wall_time_s: f64,
    pub started_unix_ms: u128,
}

/// One federated run at a fixed sharing level.
#[derive(Debug, Clone, Serialize)]
pub struct FedLevel {
    pub alpha_share: f64,
    pub rounds: Vec<RoundReport>,
}

/// Final accuracy of one sweep level.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub alpha_share: f64,
    pub sharing_percent: f64,
    pub natural_acc: f64,
    pub robust_acc: BTreeMap<String, f64>,
    /// Mean over the configured attacks; the y value the sweep regression
    /// fits.
    pub robust_mean: f64,
}

/// Everything a pipeline produces. The field set never varies with the
/// pipeline: sections a pipeline does not touch stay `null` or empty, so
/// downstream readers can rely on one schema. `timing` is the only field
/// that differs between reruns of the same config and seed.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub pipeline: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub natural_acc: Option<f64>,
    pub robust_acc: BTreeMap<String, f64>,
    pub attack_failures: BTreeMap<String, usize>,
    pub epochs: Vec<EpochStats>,
    pub fed: Vec<FedLevel>,
    pub sweep: Vec<SweepPoint>,
    pub regression: Vec<RegressionFit>,
    pub partition: Option<serde_json::Value>,
    /// Relative to the report's own directory, so reruns into different
    /// directories stay byte-identical.
    pub model_path: Option<String>,
    pub timing: ReportTiming,
}

impl RunReport {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            pipeline: cfg.pipeline.name().to_string(),
            seed: cfg.seed,
            config: serde_json::to_value(cfg)?,
            natural_acc: None,
            robust_acc: BTreeMap::new(),
            attack_failures: BTreeMap::new(),
            epochs: Vec::new(),
            fed: Vec::new(),
            sweep: Vec::new(),
            regression: Vec::new(),
            partition: None,
            model_path: None,
            timing: ReportTiming {
                wall_time_s: 0.0,
                started_unix_ms: 0,
            },
        })
    }
}

/// Recursively removes every `"timing"` key so two reports of the same run
/// can be compared byte for byte.
pub fn strip_timing(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.remove("timing");
            for v in map.values_mut() {
                strip_timing(v);
            }
        }
        serde_json::Value::Array(items) => {
            for v in items {
                strip_timing(v);
            }
        }
        _ => {}
    }
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for line in lines {
        writeln!(f, "{line}")?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_epochs_csv(path: &Path, epochs: &[EpochStats]) -> Result<()> {
    let mut lines = vec!["epoch,lr,mean_loss".to_string()];
    for e in epochs {
        lines.push(format!("{},{},{}", e.epoch, e.lr, e.mean_loss));
    }
    write_lines(path, &lines)
}

pub fn write_rounds_csv(path: &Path, levels: &[FedLevel]) -> Result<()> {
    let mut attacks: Vec<String> = Vec::new();
    for level in levels {
        for round in &level.rounds {
            for name in round.robust_acc.keys() {
                if !attacks.contains(name) {
                    attacks.push(name.clone());
                }
            }
        }
    }
    attacks.sort();
    let mut header = "alpha_share,round,mean_local_loss,natural_acc".to_string();
    for a in &attacks {
        header.push_str(&format!(",robust_{a}"));
    }
    let mut lines = vec![header];
    for level in levels {
        for round in &level.rounds {
            let mut line = format!(
                "{},{},{},{}",
                level.alpha_share,
                round.round,
                round.mean_local_loss,
                fmt_opt(round.natural_acc)
            );
            for a in &attacks {
                line.push(',');
                line.push_str(&fmt_opt(round.robust_acc.get(a).copied()));
            }
            lines.push(line);
        }
    }
    write_lines(path, &lines)
}

pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut lines = vec!["sharing_percent,natural_acc,robust_acc".to_string()];
    for p in points {
        lines.push(format!(
            "{},{},{}",
            p.sharing_percent, p.natural_acc, p.robust_mean
        ));
    }
    write_lines(path, &lines)
}

pub fn write_attacks_csv(
    path: &Path,
    natural: f64,
    robust: &BTreeMap<String, f64>,
    failures: &BTreeMap<String, usize>,
) -> Result<()> {
    let mut lines = vec!["attack,accuracy,attack_failures".to_string()];
    lines.push(format!("natural,{natural},0"));
    for (name, acc) in robust {
        lines.push(format!(
            "{name},{acc},{}",
            failures.get(name).copied().unwrap_or(0)
        ));
    }
    write_lines(path, &lines)
}

pub fn write_regression_csv(path: &Path, fits: &[RegressionFit]) -> Result<()> {
    let mut lines = vec!["x_domain,a,b,r_squared,excluded".to_string()];
    for f in fits {
        lines.push(format!(
            "{},{},{},{},{}",
            f.x_domain, f.a, f.b, f.r_squared, f.excluded
        ));
    }
    write_lines(path, &lines)
}

fn write_clients_csv(path: &Path, plan: &PartitionPlan, labels: &[usize], n_classes: usize) -> Result<()> {
    let mut header = "client,size".to_string();
    for c in 0..n_classes {
        header.push_str(&format!(",class_{c}"));
    }
    let mut lines = vec![header];
    for client in 0..plan.n_clients() {
        let set = plan.client_set(client)?;
        let mut hist = vec![0usize; n_classes];
        for &i in &set {
            hist[labels[i]] += 1;
        }
        let mut line = format!("{client},{}", set.len());
        for h in hist {
            line.push_str(&format!(",{h}"));
        }
        lines.push(line);
    }
    write_lines(path, &lines)
}

fn eval_into(
    net: &Network,
    test: &crate::data::LabeledBatch,
    cfg: &ExperimentConfig,
) -> Result<(f64, BTreeMap<String, f64>, BTreeMap<String, usize>)> {
    let ec = cfg.eval_config()?;
    let natural = eval_natural(net, test, &ec, cfg.seed)?;
    let mut robust = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for kind in &ec.attacks {
        let r = eval_robust(net, test, *kind, &cfg.attack, &ec, cfg.seed)?;
        robust.insert(kind.name().to_string(), r.accuracy);
        failures.insert(kind.name().to_string(), r.attack_failures);
    }
    Ok((natural, robust, failures))
}

fn run_train_central(cfg: &ExperimentConfig, out: &Path, report: &mut RunReport) -> Result<()> {
    let (train_set, test_set) = cfg.datasets()?;
    let mut net = cfg.network()?;
    let stats = train(&mut net, &train_set, &cfg.train_config(), cfg.seed)?;
    let (natural, robust, failures) = eval_into(&net, &test_set, cfg)?;
    write_epochs_csv(&out.join("epochs.csv"), &stats)?;
    save_model(&net, &out.join("model.bin"))?;
    report.epochs = stats;
    report.natural_acc = Some(natural);
    report.robust_acc = robust;
    report.attack_failures = failures;
    report.model_path = Some("model.bin".into());
    Ok(())
}

fn run_train_fed(cfg: &ExperimentConfig, out: &Path, report: &mut RunReport) -> Result<()> {
    let (train_set, test_set) = cfg.datasets()?;
    let strategy = cfg.strategy()?;
    let fed_cfg = cfg.fed_config();
    let train_cfg = cfg.train_config();
    let eval_cfg = cfg.eval_config()?;
    let sweeping = cfg.partition.alpha_share_sweep.is_some();
    let levels = cfg
        .partition
        .alpha_share_sweep
        .clone()
        .unwrap_or_else(|| vec![cfg.partition.alpha_share]);

    let mut last_net = None;
    for &alpha in &levels {
        // Same seed for every level: the shared pool and the client split
        // are identical across the sweep, only the drawn sample grows.
        let plan = PartitionPlan::build(
            &train_set.labels,
            cfg.data.classes,
            fed_cfg.n_clients,
            strategy,
            alpha,
            cfg.partition.shared_per_class,
            cfg.seed,
        )?;
        let mut net = cfg.network()?;
        let rounds = run_rounds(
            &mut net,
            &FedRun {
                data: &train_set,
                test: Some(&test_set),
                plan: &plan,
                fed: &fed_cfg,
                train: &train_cfg,
                eval: &eval_cfg,
                attack: &cfg.attack,
                seed: cfg.seed,
            },
        )?;
        let (natural, robust, failures) = eval_into(&net, &test_set, cfg)?;
        let robust_mean = if robust.is_empty() {
            0.0
        } else {
            robust.values().sum::<f64>() / robust.len() as f64
        };
        report.sweep.push(SweepPoint {
            alpha_share: alpha,
            sharing_percent: 100.0 * alpha,
            natural_acc: natural,
            robust_acc: robust.clone(),
            robust_mean,
        });
        report.fed.push(FedLevel {
            alpha_share: alpha,
            rounds,
        });
        report.natural_acc = Some(natural);
        report.robust_acc = robust;
        report.attack_failures = failures;
        report.partition = Some(plan.summary(&train_set.labels, cfg.data.classes)?);
        last_net = Some(net);
    }

    if sweeping {
        let percent: Vec<(f64, f64)> = report
            .sweep
            .iter()
            .map(|p| (p.sharing_percent, p.robust_mean))
            .collect();
        let fraction: Vec<(f64, f64)> = report
            .sweep
            .iter()
            .map(|p| (p.alpha_share, p.robust_mean))
            .collect();
        for (pts, domain) in [(percent, "percent"), (fraction, "fraction")] {
            if pts.iter().filter(|&&(x, _)| x > 0.0).count() >= 2 {
                report.regression.push(fit_log_regression(&pts, domain)?);
            }
        }
        write_sweep_csv(&out.join("sweep.csv"), &report.sweep)?;
        write_regression_csv(&out.join("regression.csv"), &report.regression)?;
    }
    write_rounds_csv(&out.join("rounds.csv"), &report.fed)?;
    if let Some(net) = last_net {
        save_model(&net, &out.join("model.bin"))?;
        report.model_path = Some("model.bin".into());
    }
    Ok(())
}

fn run_attack_eval(cfg: &ExperimentConfig, out: &Path, report: &mut RunReport) -> Result<()> {
    let (train_set, test_set) = cfg.datasets()?;
    let net = match &cfg.model_path {
        Some(p) => load_model(Path::new(p))?,
        // No stored model given: train one in place so the pipeline is
        // usable standalone.
        None => {
            let mut net = cfg.network()?;
            report.epochs = train(&mut net, &train_set, &cfg.train_config(), cfg.seed)?;
            net
        }
    };
    let (natural, robust, failures) = eval_into(&net, &test_set, cfg)?;
    write_attacks_csv(&out.join("attacks.csv"), natural, &robust, &failures)?;
    report.natural_acc = Some(natural);
    report.robust_acc = robust;
    report.attack_failures = failures;
    report.model_path = cfg.model_path.clone();
    Ok(())
}

fn run_partition_inspect(cfg: &ExperimentConfig, out: &Path, report: &mut RunReport) -> Result<()> {
    let (train_set, _) = cfg.datasets()?;
    let plan = PartitionPlan::build(
        &train_set.labels,
        cfg.data.classes,
        cfg.fed.k,
        cfg.strategy()?,
        cfg.partition.alpha_share,
        cfg.partition.shared_per_class,
        cfg.seed,
    )?;
    write_clients_csv(
        &out.join("clients.csv"),
        &plan,
        &train_set.labels,
        cfg.data.classes,
    )?;
    report.partition = Some(plan.summary(&train_set.labels, cfg.data.classes)?);
    Ok(())
}

fn run_fit_regression(cfg: &ExperimentConfig, out: &Path, report: &mut RunReport) -> Result<()> {
    let domain = cfg.regression.x_domain.as_deref().unwrap_or("percent");
    let fit = fit_log_regression(&cfg.regression.points, domain)?;
    report.regression.push(fit);
    write_regression_csv(&out.join("regression.csv"), &report.regression)?;
    Ok(())
}

/// Runs the configured pipeline, writes its artifacts (always
/// `report.json`, plus pipeline-specific CSVs and `model.bin`) under
/// `out_dir`, and returns the report.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let clock = Instant::now();
    let mut report = RunReport::new(cfg)?;
    match cfg.pipeline {
        Pipeline::TrainCentral => run_train_central(cfg, out_dir, &mut report)?,
        Pipeline::TrainFed => run_train_fed(cfg, out_dir, &mut report)?,
        Pipeline::AttackEval => run_attack_eval(cfg, out_dir, &mut report)?,
        Pipeline::PartitionInspect => run_partition_inspect(cfg, out_dir, &mut report)?,
        Pipeline::FitRegression => run_fit_regression(cfg, out_dir, &mut report)?,
    }
    report.timing = ReportTiming {
        wall_time_s: clock.elapsed().as_secs_f64(),
        started_unix_ms: started,
    };
    let json = std::fs::File::create(out_dir.join("report.json"))?;
    serde_json::to_writer_pretty(json, &report)?;
    Ok(report)
}
