//! Adversarial training against a standard-training twin on a task built to
//! separate them: each class mixes a wide, attack-surviving blob with a tiny
//! blob whose amplitude is close to the attack budget. Standard training
//! happily uses the fragile feature; adversarial training cannot, so the two
//! models end up far apart under attack while staying close on clean data.
//!
//! Also demonstrates the model container: the robust net is saved, reloaded,
//! and re-evaluated to show the round trip preserves behavior.
//!
//!     cargo run --release --example train_adversarial

use fedadv::activation::ActKind;
use fedadv::attack::{AttackConfig, AttackKind};
use fedadv::data::{AugmentPlan, Blob, SyntheticSpec};
use fedadv::eval::{eval_natural, eval_robust, EvalConfig};
use fedadv::nn::optim::{Schedule, SgdConfig};
use fedadv::nn::resnet::{build_mini_resnet, MiniResNetConfig};
use fedadv::report::{load_model, save_model};
use fedadv::rng::stream_key;
use fedadv::train::{train, TrainConfig};
use std::time::Instant;

fn main() {
    let seed = 2;
    let epsilon = AttackConfig::default().epsilon;

    // Robust feature: overlapping wide blobs (amplitude 0.28 >> epsilon).
    // Fragile feature: clean side blobs at amplitude 0.06, about 2 epsilon,
    // which a sign attack can erase or counterfeit.
    let mut spec = SyntheticSpec::grid(2, 100);
    spec.noise_sigma = 0.1;
    spec.center_jitter = 0.2;
    spec.class_blobs = vec![
        vec![
            Blob { cx: 3.5, cy: 2.5, sigma: 1.4, amplitude: 0.28 },
            Blob { cx: 1.3, cy: 3.5, sigma: 0.7, amplitude: 0.06 },
        ],
        vec![
            Blob { cx: 3.5, cy: 4.5, sigma: 1.4, amplitude: 0.28 },
            Blob { cx: 6.2, cy: 3.5, sigma: 0.7, amplitude: 0.06 },
        ],
    ];
    let train_set = spec.generate(stream_key(seed, &[1])).unwrap();
    let mut test_spec = spec.clone();
    test_spec.per_class = 150;
    let test_set = test_spec.generate(stream_key(seed, &[2])).unwrap();
    println!(
        "two-class 8x8 task: {} train / {} test, attack budget epsilon = {epsilon}\n",
        train_set.len(),
        test_set.len()
    );

    let ec = EvalConfig {
        attacks: vec![AttackKind::Fgsm],
        test_noise_sigma: 0.0,
        test_noise_mu: 0.0,
        subsample: None,
        noisy_natural: false,
    };
    let mut robust_net = None;
    println!("{:<12} {:>8} {:>8} {:>8}", "training", "natural", "fgsm", "seconds");
    for adversarial in [false, true] {
        let t0 = Instant::now();
        let mut net = build_mini_resnet(&MiniResNetConfig {
            in_ch: 1,
            height: 8,
            width: 8,
            depth: 1,
            channels: 12,
            n_classes: 2,
            act: ActKind::Relu,
            batch_norm: false,
            init_seed: seed,
        })
        .unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 32,
            n_classes: 2,
            sgd: SgdConfig {
                lr: 0.05,
                momentum: 0.9,
                weight_decay: 5e-4,
                schedule: Schedule::Fixed,
            },
            augment: AugmentPlan {
                crop_size: 8,
                crop_padding: 1,
                // Flips would swap the position-coded classes.
                hflip_prob: 0.0,
                include_pgd: adversarial,
                include_gaussian: false,
                attack: AttackConfig::default(),
                alpha_sl: 0.05,
            },
            regen_per_epoch: true,
        };
        train(&mut net, &train_set, &cfg, stream_key(seed, &[3])).unwrap();
        let nat = eval_natural(&net, &test_set, &ec, seed).unwrap();
        let rob = eval_robust(&net, &test_set, AttackKind::Fgsm, &AttackConfig::default(), &ec, seed)
            .unwrap();
        println!(
            "{:<12} {:>8.3} {:>8.3} {:>8.0}",
            if adversarial { "adversarial" } else { "standard" },
            nat,
            rob.accuracy,
            t0.elapsed().as_secs_f64()
        );
        if adversarial {
            robust_net = Some(net);
        }
    }

    // Round-trip the robust model through the on-disk container.
    let net = robust_net.expect("adversarial twin trained");
    let dir = std::env::temp_dir().join("fedadv_example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("robust_model.bin");
    save_model(&net, &path).unwrap();
    let reloaded = load_model(&path).unwrap();
    let before = eval_natural(&net, &test_set, &ec, seed).unwrap();
    let after = eval_natural(&reloaded, &test_set, &ec, seed).unwrap();
    assert_eq!(before, after);
    println!(
        "\nsaved robust model to {} ({} bytes); reloaded copy scores identically ({after:.3})",
        path.display(),
        std::fs::metadata(&path).unwrap().len()
    );
}
