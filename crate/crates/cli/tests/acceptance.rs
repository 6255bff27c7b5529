//! Acceptance run: one pass/fail line per criterion.
//!
//! `SSLSCENE_ACCEPTANCE_DIR` keeps datasets and checkpoints in a fixed directory so a rerun
//! reuses finished cells; `SSLSCENE_ACCEPTANCE_ONLY=7,8` runs a subset.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use ndarray::{array, Array2, Array3};
use rand::seq::SliceRandom;
use rand::Rng;

use common::*;
use sslscene::augment::{batch_views, corrupt, make_jigsaw, make_views, reassemble, AugmentPolicy, MaskSpec};
use sslscene::datasets::{
    few_shot_sample, load_manifest, split, subsample_fraction, synth_generate, RasterSample, SplitSpec,
    SplitTag, SynthSpec,
};
use sslscene::eval::{run_experiment, ExperimentConfig, ResultRecord, SourceSpec};
use sslscene::losses::*;
use sslscene::models::{build_encoder, load_checkpoint, save_checkpoint, CheckpointMeta, EncoderConfig, Mode, Pretext};
use sslscene::pretrain::PretrainConfig;
use sslscene::transfer::{finetune, TransferConfig, TransferMode};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- loss properties

fn c1_oracle_equivalence(_: &mut Study) -> Check {
    let start = Instant::now();
    let mut rng = seeded(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (n, _, tau, e) = random_case(&mut rng);
        let b = EmbeddingBatch::new(e.clone()).unwrap();
        let cfg = ContrastiveConfig::new(tau);
        worst = worst.max(rel_err(nt_xent_batch(&b, &cfg).unwrap(), oracle_batch(&e, tau)));
        for i in 0..2 * n {
            let v = nt_xent_pair(&b, i, i ^ 1, &cfg).unwrap();
            worst = worst.max(rel_err(v, oracle_pair(&e, i, i ^ 1, tau)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst < 1e-9 && secs < 10.0, format!("max relative error {worst:.2e} in {secs:.2} s"))
}

fn c2_anchors(_: &mut Study) -> Check {
    let pair = array![[0.2, -1.0, 3.0], [4.0, 0.5, -0.1]];
    let single = nt_xent_batch(&EmbeddingBatch::new(pair).unwrap(), &ContrastiveConfig::new(0.5)).unwrap();
    let sym = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
    let sym_value = nt_xent_batch(&EmbeddingBatch::new(sym.clone()).unwrap(), &ContrastiveConfig::new(1.0)).unwrap();
    let sym_oracle = oracle_batch(&sym, 1.0);
    let uniform = Array2::from_elem((9, 9), 1.0 / 9.0);
    let positions: Vec<usize> = (0..9).collect();
    let jig = jigsaw_loss(uniform.view(), &positions, JigsawReduction::Sum).unwrap().value;
    let target = Array3::from_shape_fn((3, 4, 4), |(c, y, x)| (c * 16 + y * 4 + x) as f64 * 0.5);
    let mask = Array2::from_elem((4, 4), true);
    let zero = inpaint_loss(target.view(), target.view(), mask.view(), Region::Full).unwrap();
    let offset = inpaint_loss((&target + 1.0).view(), target.view(), mask.view(), Region::Full).unwrap();
    let half = inpaint_loss(
        array![[[1.0, 1.0], [0.0, 0.0]]].view(),
        Array3::zeros((1, 2, 2)).view(),
        Array2::from_elem((2, 2), true).view(),
        Region::Full,
    )
    .unwrap();
    let ok = single.abs() < 1e-12
        && (sym_value - sym_oracle).abs() < 1e-12
        && (sym_oracle - 0.5514).abs() < 1e-4
        && (jig - 9.0 * 9f64.ln()).abs() < 1e-9
        && zero == 0.0
        && offset == 1.0
        && half == 0.5;
    ensure(
        ok,
        format!(
            "N=1 {single:.1e}, symmetric {sym_value:.6} (oracle {sym_oracle:.6}), jigsaw {jig:.6}, inpaint {zero}/{offset}/{half}"
        ),
    )
}

fn c3_gradients(_: &mut Study) -> Check {
    let start = Instant::now();
    let mut rng = seeded(3);
    let (mut nt, mut jig, mut inp) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.random_range(1..=6);
        let (din, dout) = (rng.random_range(2..=8), rng.random_range(2..=8));
        let tau = rng.random_range(0.1..=1.0);
        let h = random_batch(&mut rng, n, din);
        let w = Array2::from_shape_fn((din, dout), |_| rng.random_range(-1.0..1.0));
        let (_, gz) = nt_xent_batch_with_grad(&EmbeddingBatch::new(h.dot(&w)).unwrap(), &ContrastiveConfig::new(tau)).unwrap();
        let analytic: Vec<f64> = gz.dot(&w.t()).iter().chain(h.t().dot(&gz).iter()).copied().collect();
        let flat: Vec<f64> = h.iter().chain(w.iter()).copied().collect();
        let rows = 2 * n;
        let f = |x: &[f64]| {
            let h = Array2::from_shape_vec((rows, din), x[..rows * din].to_vec()).unwrap();
            let w = Array2::from_shape_vec((din, dout), x[rows * din..].to_vec()).unwrap();
            nt_xent_batch(&EmbeddingBatch::new(h.dot(&w)).unwrap(), &ContrastiveConfig::new(tau)).unwrap()
        };
        nt = nt.max(grad_check(f, &analytic, &flat, 1e-6, Scheme::Central).unwrap().max_rel_error);

        let logits = Array2::from_shape_fn((9, 9), |_| rng.random_range(-3.0..3.0));
        let mut positions: Vec<usize> = (0..9).collect();
        positions.shuffle(&mut rng);
        let (_, g) = jigsaw_loss_from_logits(logits.view(), &positions, JigsawReduction::Sum).unwrap();
        let f = |x: &[f64]| {
            let l = Array2::from_shape_vec((9, 9), x.to_vec()).unwrap();
            jigsaw_loss(softmax_rows(l.view()).view(), &positions, JigsawReduction::Sum).unwrap().value
        };
        let x: Vec<f64> = logits.iter().copied().collect();
        jig = jig.max(grad_check(f, g.as_slice().unwrap(), &x, 1e-6, Scheme::Central).unwrap().max_rel_error);

        let target = Array3::from_shape_fn((3, 6, 6), |_| rng.random_range(-1.0..1.0));
        let pred = Array3::from_shape_fn((3, 6, 6), |_| rng.random_range(-1.0..1.0));
        let mask = Array2::from_shape_fn((6, 6), |(y, x)| (2..5).contains(&y) && x < 4);
        for region in [Region::Full, Region::Masked] {
            let (_, g) = inpaint_loss_with_grad(pred.view(), target.view(), mask.view(), region).unwrap();
            let f = |x: &[f64]| {
                let p = Array3::from_shape_vec((3, 6, 6), x.to_vec()).unwrap();
                inpaint_loss(p.view(), target.view(), mask.view(), region).unwrap()
            };
            let x: Vec<f64> = pred.iter().copied().collect();
            inp = inp.max(grad_check(f, g.as_slice().unwrap(), &x, 1e-6, Scheme::Central).unwrap().max_rel_error);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let worst = nt.max(jig).max(inp);
    ensure(
        worst <= 1e-4 && secs < 30.0,
        format!("max relative error NT-Xent {nt:.1e}, jigsaw {jig:.1e}, inpaint {inp:.1e} in {secs:.2} s"),
    )
}

fn c4_invariance(_: &mut Study) -> Check {
    let mut rng = seeded(4);
    let (mut scale, mut perm) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (n, _, tau, e) = random_case(&mut rng);
        let cfg = ContrastiveConfig::new(tau);
        let base = nt_xent_batch(&EmbeddingBatch::new(e.clone()).unwrap(), &cfg).unwrap();
        let c = rng.random_range(0.01..100.0);
        let scaled = nt_xent_batch(&EmbeddingBatch::new(&e * c).unwrap(), &cfg).unwrap();
        scale = scale.max((scaled - base).abs() / base.abs().max(1.0));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut p = Array2::<f64>::zeros(e.raw_dim());
        for (dst, &src) in order.iter().enumerate() {
            let flip = rng.random_bool(0.5) as usize;
            p.row_mut(2 * dst).assign(&e.row(2 * src + flip));
            p.row_mut(2 * dst + 1).assign(&e.row(2 * src + 1 - flip));
        }
        let permuted = nt_xent_batch(&EmbeddingBatch::new(p).unwrap(), &cfg).unwrap();
        perm = perm.max((permuted - base).abs() / base.abs().max(1.0));
    }
    ensure(scale <= 1e-9 && perm <= 1e-9, format!("scaling drift {scale:.1e}, pair permutation drift {perm:.1e}"))
}

fn ramp(id: &str, c: usize, h: usize, w: usize) -> RasterSample {
    RasterSample::new(id, Array3::from_shape_fn((c, h, w), |(b, y, x)| (b * h * w + y * w + x) as f32))
}

fn c5_augment(_: &mut Study) -> Check {
    let spec = MaskSpec::default();
    let img = ramp("mask", 3, 64, 64);
    let mut outside = 0;
    for seed in 0..1000 {
        let (_, mask) = corrupt(&img, &spec, seed).map_err(|e| e.to_string())?;
        let f = mask.iter().filter(|&&m| m).count() as f32 / 4096.0;
        if !(spec.coverage_range.0..=spec.coverage_range.1).contains(&f) {
            outside += 1;
        }
    }

    let small = ramp("grid", 1, 4, 4);
    let mut perms = BTreeSet::new();
    let mut bad_roundtrips = 0;
    for seed in 0..10_000u64 {
        let j = make_jigsaw(&small, (2, 2), 0, seed).map_err(|e| e.to_string())?;
        if perms.insert(j.positions.clone()) && reassemble(&j).map_err(|e| e.to_string())? != small.pixels {
            bad_roundtrips += 1;
        }
        if perms.len() == 24 {
            break;
        }
    }
    let big = ramp("nine", 3, 48, 48);
    for seed in 0..100 {
        let j = make_jigsaw(&big, (3, 3), 0, seed).map_err(|e| e.to_string())?;
        if reassemble(&j).map_err(|e| e.to_string())? != big.pixels {
            bad_roundtrips += 1;
        }
    }

    let mut rng = seeded(5);
    let mut bad_pairs = 0;
    for _ in 0..50 {
        let n = rng.random_range(1..=12);
        let samples: Vec<RasterSample> = (0..n).map(|i| ramp(&format!("v{i}"), 3, 24, 24)).collect();
        let b = batch_views(&samples, &AugmentPolicy::default(), rng.random()).map_err(|e| e.to_string())?;
        let matched = (0..2 * n).all(|i| {
            let j = b.pair_of[i];
            j != i && b.pair_of[j] == i && b.source_of(i) == b.source_of(j)
        });
        if !matched || b.len() != 2 * n {
            bad_pairs += 1;
        }
    }
    ensure(
        outside == 0 && perms.len() == 24 && bad_roundtrips == 0 && bad_pairs == 0,
        format!(
            "{outside}/1000 masks out of range, {} of 24 2x2 permutations seen, {bad_roundtrips} failed roundtrips, {bad_pairs}/50 bad pairings",
            perms.len()
        ),
    )
}

// ---------------------------------------------------------------- determinism

fn bits(m: &sslscene::models::Model, prefix: &str) -> Vec<(String, Vec<u32>)> {
    m.named_params()
        .into_iter()
        .filter(|(n, _)| n.starts_with(prefix))
        .map(|(n, p)| (n, p.value.iter().map(|v| v.to_bits()).collect()))
        .collect()
}

fn c6_determinism(study: &mut Study) -> Check {
    let dir = study.root.join("determinism");
    let m = match load_manifest(&dir) {
        Ok(m) => m,
        Err(_) => synth_generate(&SynthSpec::new(3, 3, 32, 20, 5), &dir).map_err(|e| e.to_string())?,
    };
    let spec = SplitSpec {
        seed: 9,
        ..SplitSpec::default()
    };
    let s1 = split(&m, &spec).map_err(|e| e.to_string())?;
    let s2 = split(&m, &spec).map_err(|e| e.to_string())?;
    let f1 = few_shot_sample(&s1, 5, 3).map_err(|e| e.to_string())?;
    let f2 = few_shot_sample(&s2, 5, 3).map_err(|e| e.to_string())?;
    let p1 = subsample_fraction(&s1, 0.5, 3).map_err(|e| e.to_string())?;
    let p2 = subsample_fraction(&s2, 0.5, 3).map_err(|e| e.to_string())?;
    let sample = m.read_sample(&m.entries()[0].id).map_err(|e| e.to_string())?;
    let v1 = make_views(&sample, &AugmentPolicy::default(), 11).map_err(|e| e.to_string())?;
    let v2 = make_views(&sample, &AugmentPolicy::default(), 11).map_err(|e| e.to_string())?;
    let same_data = s1.splits() == s2.splits() && f1.splits() == f2.splits() && p1.splits() == p2.splits() && v1 == v2;

    let enc = EncoderConfig::tiny(3);
    let a = build_encoder(&enc, 21).map_err(|e| e.to_string())?;
    let b = build_encoder(&enc, 21).map_err(|e| e.to_string())?;
    let same_init = bits(&a, "") == bits(&b, "");

    let mut model = sslscene::pretrain::pretext_model(&enc, &PretrainConfig::for_task(Pretext::Instance))
        .map_err(|e| e.to_string())?;
    let ck = dir.join("ck");
    save_checkpoint(&model, &CheckpointMeta::for_model(&model), &ck).map_err(|e| e.to_string())?;
    let (mut loaded, meta) = load_checkpoint(&ck, false).map_err(|e| e.to_string())?;
    let ids = f1.ids(SplitTag::Finetune).to_vec();
    let samples = f1.read_samples(&ids).map_err(|e| e.to_string())?;
    let views: Vec<_> = samples.iter().map(|s| s.pixels.view()).collect();
    let x = sslscene::models::stack(&views);
    let out_a = model.features(&x, Mode::Eval).map_err(|e| e.to_string())?;
    let out_b = loaded.features(&x, Mode::Eval).map_err(|e| e.to_string())?;
    let roundtrip = bits(&model, "") == bits(&loaded, "") && out_a == out_b;

    let before = bits(&loaded, "encoder.");
    let cfg = TransferConfig {
        mode: TransferMode::Linear,
        shots: 5,
        epochs: 10,
        base_lr: 1e-2,
        seed: 3,
        ..TransferConfig::default()
    };
    let tuned = finetune(Some((loaded, meta)), &f1, &cfg).map_err(|e| e.to_string())?;
    let frozen = bits(&tuned.model, "encoder.") == before;
    ensure(
        same_data && same_init && roundtrip && frozen,
        format!(
            "splits/few-shot/fraction/views identical: {same_data}, initial parameters identical: {same_init}, checkpoint roundtrip bitwise: {roundtrip}, linear probe leaves encoder unchanged: {frozen}"
        ),
    )
}

// ---------------------------------------------------------------- desk-scale trends

/// Shared datasets and sweep settings for the trend criteria. Every criterion runs its own
/// cells through `run_experiment` on one output directory, so pretrained checkpoints are
/// shared between criteria.
struct Study {
    root: PathBuf,
    a: Option<PathBuf>,
    b: Option<PathBuf>,
}

const SEEDS: [u64; 3] = [1, 2, 3];

impl Study {
    fn dataset(&mut self, family: u32) -> PathBuf {
        let slot = if family == 0 { &mut self.a } else { &mut self.b };
        if let Some(p) = slot {
            return p.clone();
        }
        let name = if family == 0 { "A" } else { "B" };
        let dir = self.root.join(name);
        if load_manifest(&dir).is_err() {
            let spec = SynthSpec {
                family,
                name: name.into(),
                ..SynthSpec::new(4, 3, 64, 200, 11 + family as u64)
            };
            synth_generate(&spec, &dir).expect("synthetic data");
        }
        let path = dir.join("manifest.json");
        *slot = Some(path.clone());
        path
    }

    fn sweep(&mut self, edit: impl FnOnce(&mut ExperimentConfig, &Path, &Path)) -> Result<Vec<ResultRecord>, String> {
        let a = self.dataset(0);
        let b = self.dataset(1);
        let epochs = std::env::var("SSLSCENE_ACCEPTANCE_EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(100);
        let mut cfg = ExperimentConfig {
            pretexts: vec![Pretext::Instance],
            include_scratch: false,
            sources: vec![SourceSpec::Single(a.clone())],
            targets: vec![a.clone()],
            fractions: vec![1.0],
            shots: vec![5],
            seeds: SEEDS.to_vec(),
            encoder: EncoderConfig::tiny(3),
            pretrain: PretrainConfig {
                epochs,
                batch_size: 64,
                base_lr: 3e-3,
                ..PretrainConfig::default()
            },
            transfer: TransferConfig {
                mode: TransferMode::Linear,
                epochs: 100,
                base_lr: 1e-2,
                ..TransferConfig::default()
            },
            split: SplitSpec::default(),
            out_dir: self.root.join("study"),
        };
        edit(&mut cfg, &a, &b);
        let records = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let failures = cfg.out_dir.join("failures.jsonl");
        if let Ok(text) = std::fs::read_to_string(&failures) {
            if !text.trim().is_empty() {
                return Err(format!("failed cells: {}", text.lines().next().unwrap_or_default()));
            }
        }
        Ok(records)
    }
}

fn mean_oa(records: &[ResultRecord], keep: impl Fn(&ResultRecord) -> bool) -> (f64, usize) {
    let v: Vec<f64> = records.iter().filter(|r| keep(r)).map(|r| r.oa).collect();
    (v.iter().sum::<f64>() / v.len().max(1) as f64, v.len())
}

fn c7_instance_beats_scratch(study: &mut Study) -> Check {
    let start = Instant::now();
    let records = study.sweep(|c, _, _| c.include_scratch = true)?;
    let (id, n_id) = mean_oa(&records, |r| r.pretext == "instance");
    let (scratch, n_s) = mean_oa(&records, |r| r.pretext == "scratch");
    let secs = start.elapsed().as_secs_f64();
    ensure(
        n_id == 3 && n_s == 3 && id >= scratch + 0.10 && secs <= 900.0,
        format!(
            "5-shot OA instance+linear {:.1}% vs scratch {:.1}% (gap {:+.1} points, need +10) in {secs:.0} s",
            100.0 * id,
            100.0 * scratch,
            100.0 * (id - scratch)
        ),
    )
}

fn c8_pretext_ordering(study: &mut Study) -> Check {
    let records = study.sweep(|c, _, _| c.pretexts = Pretext::ALL.to_vec())?;
    let (id, _) = mean_oa(&records, |r| r.pretext == "instance");
    let (jig, n_j) = mean_oa(&records, |r| r.pretext == "jigsaw");
    let (inp, n_i) = mean_oa(&records, |r| r.pretext == "inpainting");
    ensure(
        n_j == 3 && n_i == 3 && id >= jig - 0.02 && id >= inp - 0.02,
        format!("5-shot OA instance {:.1}%, jigsaw {:.1}%, inpainting {:.1}%", 100.0 * id, 100.0 * jig, 100.0 * inp),
    )
}

fn c9_pretraining_fraction(study: &mut Study) -> Check {
    let records = study.sweep(|c, _, _| c.fractions = vec![0.1, 0.5, 1.0])?;
    let at = |f: f64| mean_oa(&records, |r| (r.fraction - f).abs() < 1e-9);
    let ((f10, n10), (f50, n50), (f100, n100)) = (at(0.1), at(0.5), at(1.0));
    ensure(
        n10 == 3 && n50 == 3 && n100 == 3 && f100 >= f10 && f50 >= f10 - 0.02,
        format!("5-shot OA with 10% {:.1}%, 50% {:.1}%, 100% {:.1}% of the pool", 100.0 * f10, 100.0 * f50, 100.0 * f100),
    )
}

fn c10_in_domain_beats_cross_domain(study: &mut Study) -> Check {
    let records = study.sweep(|c, a, b| {
        c.sources = vec![SourceSpec::Single(a.to_path_buf()), SourceSpec::Single(b.to_path_buf())];
        c.targets = vec![a.to_path_buf(), b.to_path_buf()];
    })?;
    let cell = |s: &str, t: &str| mean_oa(&records, |r| r.source == s && r.target == t).0;
    let (aa, ba, bb, ab) = (cell("A", "A"), cell("B", "A"), cell("B", "B"), cell("A", "B"));
    ensure(
        aa > ba && bb > ab,
        format!(
            "target A: in-domain {:.1}% vs from B {:.1}%; target B: in-domain {:.1}% vs from A {:.1}%",
            100.0 * aa,
            100.0 * ba,
            100.0 * bb,
            100.0 * ab
        ),
    )
}

fn c11_shot_sensitivity(study: &mut Study) -> Check {
    let records = study.sweep(|c, _, _| {
        c.include_scratch = true;
        c.shots = vec![5, 20];
    })?;
    let at = |p: &str, k: usize| mean_oa(&records, |r| r.pretext == p && r.shots == k).0;
    let id_drop = at("instance", 20) - at("instance", 5);
    let scratch_drop = at("scratch", 20) - at("scratch", 5);
    ensure(
        id_drop < scratch_drop,
        format!(
            "20→5-shot drop: instance+linear {:.1} points ({:.1}% → {:.1}%), scratch {:.1} points ({:.1}% → {:.1}%)",
            100.0 * id_drop,
            100.0 * at("instance", 20),
            100.0 * at("instance", 5),
            100.0 * scratch_drop,
            100.0 * at("scratch", 20),
            100.0 * at("scratch", 5)
        ),
    )
}

// ---------------------------------------------------------------- command line

fn cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sslscene"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn c12_cli_smoke(study: &mut Study) -> Check {
    let start = Instant::now();
    let dir = study.root.join("cli");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    cli(&dir, &["data-synth", "--classes", "4", "--bands", "3", "--size", "64", "--per-class", "200", "--seed", "7", "--out", "d/"])?;
    cli(
        &dir,
        &["pretrain", "--task", "instance", "--data", "d/", "--epochs", "2", "--batch", "64", "--tau", "0.5", "--seed", "1", "--out", "ck/"],
    )?;
    cli(&dir, &["finetune", "--ckpt", "ck/", "--data", "d/", "--shots", "5", "--mode", "linear", "--seed", "1", "--out", "clf/"])?;
    let out = cli(&dir, &["eval", "--ckpt", "clf/", "--data", "d/"])?;
    let oa: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("oa="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format!("no oa line in {out:?}"))?;
    let csv = std::fs::read_to_string(dir.join("clf/results.csv")).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    let header_ok = lines.next() == Some("pretext,source,target,fraction,shots,seed,oa,wall_seconds,checkpoint");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let rows_ok = rows.len() == 1 && rows[0].len() == 9 && rows[0][6].parse::<f64>().ok() == Some(oa);
    let summary = std::fs::read_to_string(dir.join("clf/summary.md")).map_err(|e| e.to_string())?;
    let summary_ok = summary.contains("| pretext | source | fraction | shots |") && summary.contains("(1)");
    let secs = start.elapsed().as_secs_f64();
    ensure(
        (0.0..=1.0).contains(&oa) && header_ok && rows_ok && summary_ok && secs <= 300.0,
        format!("oa={oa:.4}, results.csv well-formed: {}, summary.md well-formed: {summary_ok}, {secs:.0} s", header_ok && rows_ok),
    )
}

type Criterion = (u32, &'static str, fn(&mut Study) -> Check);

const CRITERIA: [Criterion; 12] = [
    (1, "NT-Xent matches loop oracles", c1_oracle_equivalence),
    (2, "analytic loss anchors", c2_anchors),
    (3, "loss gradients match central differences", c3_gradients),
    (4, "NT-Xent scale and pair-permutation invariance", c4_invariance),
    (5, "mask coverage, jigsaw roundtrip, view pairing", c5_augment),
    (6, "determinism and checkpoint persistence", c6_determinism),
    (7, "instance pretraining beats scratch by 10 points", c7_instance_beats_scratch),
    (8, "instance discrimination leads the pretext tasks", c8_pretext_ordering),
    (9, "more pretraining data helps", c9_pretraining_fraction),
    (10, "in-domain pretraining beats cross-domain", c10_in_domain_beats_cross_domain),
    (11, "pretraining softens the shot drop", c11_shot_sensitivity),
    (12, "command-line sequence end to end", c12_cli_smoke),
];

fn main() -> ExitCode {
    let only: Option<Vec<u32>> = std::env::var("SSLSCENE_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let (_guard, root) = match std::env::var_os("SSLSCENE_ACCEPTANCE_DIR") {
        Some(d) => (None, PathBuf::from(d)),
        None => {
            let t = tempfile::tempdir().expect("temp dir");
            let p = t.path().to_path_buf();
            (Some(t), p)
        }
    };
    std::fs::create_dir_all(&root).expect("acceptance dir");
    let mut study = Study { root, a: None, b: None };
    let total = Instant::now();
    let (mut passed, mut ran) = (0, 0);
    for (id, name, check) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&mut study))).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &result {
            Ok(d) => {
                passed += 1;
                ("PASS", d)
            }
            Err(d) => ("FAIL", d),
        };
        println!("criterion {id:>2} {tag} {name} [{secs:.1} s]: {detail}");
    }
    println!("acceptance: {passed}/{ran} passed in {:.0} s", total.elapsed().as_secs_f64());
    if passed == ran {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
