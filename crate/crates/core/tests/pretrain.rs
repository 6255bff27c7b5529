use sslscene::datasets::*;
use sslscene::models::{EncoderConfig, Pretext};
use sslscene::pretrain::*;

/// Desk-scale loss curve on the 4-class, 3-band, 64×64 synthetic set (200 per class).
/// Seed 1, tiny encoder, τ = 0.2, lr 3e-3: the pilot ratio was 0.75.
#[test]
fn instance_loss_falls_below_four_fifths_in_twenty_epochs() {
    let tmp = tempfile::tempdir().unwrap();
    let m = synth_generate(&SynthSpec::new(4, 3, 64, 200, 11), tmp.path()).unwrap();
    let m = split(&m, &SplitSpec::default()).unwrap();
    let cfg = PretrainConfig {
        task: Pretext::Instance,
        epochs: 20,
        base_lr: 3e-3,
        tau: 0.2,
        seed: 1,
        ..PretrainConfig::default()
    };
    let run = pretrain(&m, &EncoderConfig::tiny(3), &cfg, None).unwrap();
    let losses: Vec<f64> = run.history.iter().map(|h| h.mean_loss).collect();
    let ratio = losses[19] / losses[0];
    assert!(ratio < 0.8, "{losses:?}");

    // Least-squares slope of loss against epoch.
    let n = losses.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = losses.iter().sum::<f64>() / n;
    let cov: f64 = losses.iter().enumerate().map(|(i, y)| (i as f64 - mean_x) * (y - mean_y)).sum();
    assert!(cov < 0.0);
    let head: f64 = losses[..5].iter().sum();
    let tail: f64 = losses[15..].iter().sum();
    assert!(tail < head);
}
