//! Data-sharing sweep, twice over.
//!
//! First a log-linear fit of a reference sweep: robust accuracy of a
//! CIFAR-10 scale federated adversarial training run at increasing sharing
//! percentages. The coefficients published with that sweep leave the x
//! convention (percent vs fraction) unstated, so both fits are shown.
//!
//! Then the same analysis end to end on this machine: a config-driven
//! train-fed run with `alpha_share_sweep` produces sweep.csv and
//! regression.csv next to the report.
//!
//!     cargo run --release --example sharing_sweep

use fedadv::config::ExperimentConfig;
use fedadv::regression::{fit_log_regression, predict};
use fedadv::report::run_experiment;

const REFERENCE_SWEEP: [(f64, f64); 11] = [
    (0.0, 0.2454),
    (10.0, 0.5092),
    (20.0, 0.5114),
    (30.0, 0.5199),
    (40.0, 0.5479),
    (50.0, 0.5413),
    (60.0, 0.5554),
    (70.0, 0.5599),
    (80.0, 0.5151),
    (90.0, 0.5664),
    (100.0, 0.5616),
];

fn main() {
    let percent = fit_log_regression(&REFERENCE_SWEEP, "percent").unwrap();
    let fraction_points: Vec<(f64, f64)> =
        REFERENCE_SWEEP.iter().map(|&(x, y)| (x / 100.0, y)).collect();
    let fraction = fit_log_regression(&fraction_points, "fraction").unwrap();

    println!("reference sweep, robust accuracy vs sharing level ({} points, x=0 excluded):", REFERENCE_SWEEP.len());
    for fit in [&percent, &fraction] {
        println!(
            "  x as {:<8}  a = {:+.4}  b = {:+.4}  r2 = {:.4}",
            fit.x_domain, fit.a, fit.b, fit.r_squared
        );
    }
    println!("  published with the sweep: a = +0.0996  b = +0.3529  r2 = 0.6648 (x convention unstated)");
    println!(
        "  percent-domain curve predicts {:.3} at 40% sharing; the sweep observed 0.548\n",
        predict(&percent, 40.0)
    );

    // The live counterpart: a small federated sweep driven entirely by one
    // config document. Every level reuses the same pool and split draws, so
    // only alpha_share moves. The dim blobs (amplitude 0.18 against default
    // noise-scale attacks) put the task where two-class clients fit filters
    // the plain average cancels; the shared sample is what rescues it.
    let doc = r#"
pipeline = "train-fed"
seed = 1
parallel = true

[nn]
channels = 6
batch_size = 16
lr = 0.05

[data]
classes = 5
per_class = 100
test_per_class = 40
hflip_prob = 0.0
jitter = 0.2
noise_sigma = 0.08
amplitude = 0.18

[partition]
strategy = "two_class"
shared_per_class = 30
alpha_share_sweep = [0.0, 0.05, 0.15, 0.4, 1.0]

[fed]
K = 5
R = 10
E = 3
eval_every = 0

[eval]
attacks = ["fgsm"]
"#;
    let cfg = ExperimentConfig::from_str(doc).unwrap();
    let out = std::env::temp_dir().join("fedadv_sharing_sweep");
    let report = run_experiment(&cfg, &out).unwrap();

    println!("live sweep (5 clients, 10 rounds; written to {}):", out.display());
    println!("  {:>7} {:>9} {:>8}", "share%", "natural", "fgsm");
    for p in &report.sweep {
        println!(
            "  {:>7.0} {:>9.3} {:>8.3}",
            p.sharing_percent, p.natural_acc, p.robust_mean
        );
    }
    for fit in &report.regression {
        println!(
            "  fit on x as {:<8}  a = {:+.4}  b = {:+.4}  r2 = {:.4}",
            fit.x_domain, fit.a, fit.b, fit.r_squared
        );
    }
    println!("  the benefit is front-loaded: the first shared examples per class un-stick");
    println!("  the average, and extra sharing moves little. a log fit summarizes that");
    println!("  threshold crudely, which keeps r2 modest here and in the reference sweep.");
    println!("  files: report.json, rounds.csv, sweep.csv, regression.csv, model.bin");
}
