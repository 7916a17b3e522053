//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. Run with
//! `cargo test -p lightloc-cli --test acceptance`.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lightloc_core::backbone::{BackboneSpec, FrozenBackbone};
use lightloc_core::fusion::{kf_update, run_fusion, simulate_odometry, DriftSpec, FusionConfig, KalmanState, Observation};
use lightloc_core::geometry::pose_error;
use lightloc_core::nn::{check_gradients, Mlp, SkipLink};
use lightloc_core::rsd::{RsdConfig, RsdState, StageEpochs};
use lightloc_core::scene::{blob_scene, Frame, SceneSpec, SyntheticScene};
use lightloc_core::scg::{
    build_hierarchy, leaf_accuracy, smoothed_cross_entropy, train_classifier, ClassifierHead, ClassifierTrainConfig,
    HierLabel,
};
use lightloc_core::solver::{ransac_pose, rigid_fit, CorrespondenceSet, RansacParams};
use lightloc_core::stats::{mean, spearman};
use lightloc_core::trainer::{
    evaluate, l1_scene_loss, scheduled_evaluations, train_scr, PruneStrategy, SceneRegressor, TrainConfig,
};
use lightloc_core::Pose;
use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, budget_s: f64) -> bool {
    elapsed.as_secs_f64() < budget_s
}

// ---------------------------------------------------------------- criterion 1

fn point_losses(seed: u64, id: usize, epoch: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((id as u64) << 20) ^ epoch as u64);
    (0..9).map(|_| (0.5 + (id % 7) as f64) * rng.random::<f64>()).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Replays the schedule directly: windows [7,10) and [13,16), keep the top
/// 3/4 by population variance (ties by id), restore everything at 21.
fn replay(n: usize, seed: u64) -> Vec<Vec<usize>> {
    let (e1, e2, es, s) = (7, 13, 21, 3);
    let mut active: Vec<usize> = (0..n).collect();
    let mut history: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut per_epoch = Vec::new();
    for epoch in 0..25 {
        if epoch == e1 + s || epoch == e2 + s {
            let mut scored: Vec<(f64, usize)> = active
                .iter()
                .map(|id| {
                    let w = &history[id][history[id].len() - s..];
                    let m = w.iter().sum::<f64>() / s as f64;
                    (w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / s as f64, *id)
                })
                .collect();
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            active = scored[..active.len() * 3 / 4].iter().map(|p| p.1).collect();
            active.sort_unstable();
            history.clear();
        }
        if epoch == es {
            active = (0..n).collect();
        }
        per_epoch.push(active.clone());
        if (e1..e1 + s).contains(&epoch) || (e2..e2 + s).contains(&epoch) {
            for &id in &active {
                history.entry(id).or_default().push(median(point_losses(seed, id, epoch)));
            }
        }
    }
    per_epoch
}

fn criterion_rsd_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = RsdConfig::default();
    let stages_ok = cfg.stage_epochs().ok()
        == Some(StageEpochs {
            first: 7,
            second: 13,
            stop: 21,
        });
    let survivors_ok = cfg.survivors(1000) == 750 && cfg.survivors(750) == 562;
    let mut mismatches = 0;
    for seed in 0..3 {
        let expected = replay(1000, seed);
        let mut state = RsdState::new(cfg, 0..1000).unwrap();
        for (epoch, want) in expected.iter().enumerate() {
            state.begin_epoch(epoch).unwrap();
            if &state.active() != want {
                mismatches += 1;
            }
            for id in state.active() {
                state.record_median_loss(id, &point_losses(seed, id, epoch)).unwrap();
            }
        }
    }
    let elapsed = start.elapsed();
    // the oracle replays three seeds; the budget applies to one
    let per_seed = elapsed / 3;
    outcome(
        stages_ok && survivors_ok && mismatches == 0 && within(per_seed, 1.0),
        format!(
            "stages (7,13,21) {stages_ok}, survivors 750/562 {survivors_ok}, epoch mismatches {mismatches}/75, {:.3}s per seed",
            per_seed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- criterion 2

fn criterion_losses() -> Outcome {
    let ce = smoothed_cross_entropy(&[0.9, 0.1], 0, 0.1).unwrap();
    let hand = -(0.95 * 0.9f64.ln() + 0.05 * 0.1f64.ln());
    let ce_ok = (ce - 0.215222).abs() <= 1e-6 && (ce - hand).abs() < 1e-15;

    let z = Vector3::zeros();
    let l1_ok = l1_scene_loss(&[z], &[z]).unwrap().0 == 0.0
        && l1_scene_loss(&[Vector3::new(1.0, 1.0, 1.0)], &[z]).unwrap().0 == 3.0
        && l1_scene_loss(&[Vector3::new(1.0, -2.0, 0.5), Vector3::new(0.0, 2.0, 0.0)], &[z, z])
            .unwrap()
            .0
            == 2.75;

    // a k-term sum carries up to k roundings of its total
    let mut worst_uniform = 0.0f64;
    let mut uniform_ok = true;
    for k in 2..=16 {
        for eps in [0.0, 0.1, 0.3] {
            let ln_k = (k as f64).ln();
            let diff = (smoothed_cross_entropy(&vec![1.0 / k as f64; k], 0, eps).unwrap() - ln_k).abs();
            worst_uniform = worst_uniform.max(diff);
            uniform_ok &= diff <= k as f64 * f64::EPSILON * ln_k;
        }
    }
    outcome(
        ce_ok && l1_ok && uniform_ok,
        format!("smoothed CE {ce:.9} (target 0.215222 ± 1e-6), L1 hand cases {l1_ok}, uniform CE vs ln k max diff {worst_uniform:.1e}"),
    )
}

// ---------------------------------------------------------------- criterion 3

fn perturb(params: Vec<&mut [f64]>, rng: &mut ChaCha8Rng, amount: f64) {
    for p in params {
        p.iter_mut().for_each(|v| *v += rng.random_range(-amount..amount));
    }
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
    let mut record = |r: lightloc_core::nn::GradCheck| {
        worst = worst.max(r.max_relative_error);
        checked += r.checked;
        skipped += r.skipped;
    };
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);

        let mut mlp = Mlp::new(&[4, 6, 6, 3], vec![SkipLink { from: 1, to: 1 }], seed).unwrap();
        perturb(mlp.param_slices_mut(), &mut rng, 0.3);
        let x = Array2::from_shape_simple_fn((6, 4), || rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_simple_fn((6, 3), || rng.random_range(-1.0..1.0));
        let cache = mlp.forward_cached(x.view()).unwrap();
        let (grads, _) = mlp.backward(&cache, w.view()).unwrap();
        let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|g| g.to_vec()).collect();
        record(
            check_gradients(&mut mlp, |m| m.param_slices_mut(), &analytic, |m| Ok((m.forward(x.view())? * &w).sum()), 1e-3)
                .unwrap(),
        );

        let mut reg = SceneRegressor::new(4, 3, &[6, 5, 5], [1.0, -2.0, 0.5], 3.0, seed).unwrap();
        perturb(reg.mlp_mut().param_slices_mut(), &mut rng, 0.3);
        let x = Array2::from_shape_simple_fn((10, 7), || rng.random_range(-1.0..1.0));
        let targets: Vec<Vector3<f64>> = (0..10).map(|_| Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0))).collect();
        let (_, _, grads) = reg.loss_and_grads(x.view(), &targets).unwrap();
        let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|g| g.to_vec()).collect();
        record(
            check_gradients(
                &mut reg,
                |r| r.mlp_mut().param_slices_mut(),
                &analytic,
                |r| Ok(l1_scene_loss(&r.predict_rows(x.view())?, &targets)?.0),
                1e-3,
            )
            .unwrap(),
        );

        let mut head = ClassifierHead::new(5, &[6], 3, 2, seed).unwrap();
        perturb(head.param_slices_mut(), &mut rng, 0.5);
        let x = Array2::from_shape_simple_fn((8, 5), || rng.random_range(-1.5..1.5));
        let labels: Vec<HierLabel> = (0..8)
            .map(|_| HierLabel {
                level1: rng.random_range(0..3),
                level2: rng.random_range(0..2),
            })
            .collect();
        let (_, grads) = head.loss_and_grads(x.view(), &labels, 0.1).unwrap();
        let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|g| g.to_vec()).collect();
        record(
            check_gradients(&mut head, |h| h.param_slices_mut(), &analytic, |h| h.loss(x.view(), &labels, 0.1), 1e-3)
                .unwrap(),
        );
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && skipped * 10 < checked && within(elapsed, 30.0),
        format!(
            "max relative error {worst:.2e} over {checked} coordinates ({skipped} skipped at ReLU kinks), 10 seeds, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- criterion 4

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let mut a = || rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let (roll, pitch, yaw) = (a(), a() / 2.0, a());
    Pose::from_euler(roll, pitch, yaw, Vector3::from_fn(|_, _| rng.random_range(-50.0..50.0)))
}

fn box_point(rng: &mut ChaCha8Rng, half: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-half..half))
}

fn criterion_solver() -> Outcome {
    let start = Instant::now();
    let mut worst_fit = 0.0f64;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_pose(&mut rng);
        let sensor: Vec<Vector3<f64>> = (0..10).map(|_| box_point(&mut rng, 20.0)).collect();
        let world: Vec<Vector3<f64>> = sensor.iter().map(|p| truth.apply(p)).collect();
        let fit = rigid_fit(&CorrespondenceSet::from_points(&sensor, &world).unwrap()).unwrap();
        worst_fit = worst_fit
            .max((fit.rotation() - truth.rotation()).abs().max())
            .max((fit.translation() - truth.translation()).norm());
    }
    let mut ok = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let truth = random_pose(&mut rng);
        let mut sensor = Vec::new();
        let mut world = Vec::new();
        for _ in 0..70 {
            let p = box_point(&mut rng, 50.0);
            sensor.push(p);
            world.push(truth.apply(&p));
        }
        for _ in 0..30 {
            sensor.push(box_point(&mut rng, 50.0));
            world.push(box_point(&mut rng, 50.0) + truth.translation());
        }
        let params = RansacParams {
            inlier_threshold: 0.1,
            max_iterations: 1024,
            seed,
            ..RansacParams::default()
        };
        let out = ransac_pose(&CorrespondenceSet::from_points(&sensor, &world).unwrap(), &params).unwrap();
        let err = pose_error(&out.pose, &truth);
        if err.position < 0.01 && err.orientation_deg < 0.1 {
            ok += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst_fit < 1e-9 && ok >= 99 && within(elapsed, 30.0),
        format!(
            "rigid_fit max deviation {worst_fit:.1e} over 100 poses, RANSAC 30% outliers {ok}/100 within (0.01 m, 0.1°), {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn criterion_classifier() -> Outcome {
    let start = Instant::now();
    let mut accs = Vec::new();
    for seed in 0..5 {
        let scene = blob_scene(50, 100.0, 1.0, 8, seed).unwrap();
        let (_, labels) = build_hierarchy(&scene.positions, 2, 2, seed, 100).unwrap();
        let cfg = ClassifierTrainConfig {
            epochs: 50,
            seed,
            ..ClassifierTrainConfig::default()
        };
        let (head, _) = train_classifier(scene.features.view(), &labels, 2, 2, &cfg).unwrap();
        accs.push(leaf_accuracy(&head, scene.features.view(), &labels).unwrap());
    }
    let worst = accs.iter().copied().fold(1.0, f64::min);
    let elapsed = start.elapsed();
    outcome(
        worst >= 0.99 && within(elapsed, 120.0),
        format!(
            "leaf accuracy after 50 epochs, 4 blobs, k1=k2=2: min {worst:.3} over 5 seeds {accs:?}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- criteria 6, 7

fn global_features(bb: &FrozenBackbone, frames: &[Frame]) -> Array2<f64> {
    let mut g = Array2::zeros((frames.len(), bb.width()));
    for (i, f) in frames.iter().enumerate() {
        g.row_mut(i).assign(&bb.features(&f.sensor).unwrap().global);
    }
    g
}

/// Final training loss, median test position error with failed frames counted
/// as infinitely wrong, and frame evaluations.
fn train_and_evaluate(scene: &SyntheticScene, bb: &FrozenBackbone, head: Option<&ClassifierHead>, cfg: &TrainConfig) -> (f64, f64, usize) {
    let out = train_scr(&scene.train, bb, head, cfg).unwrap();
    let eval = evaluate(&out.regressor, bb, head, &scene.test, &RansacParams::default()).unwrap();
    let errors: Vec<f64> = eval.frames.iter().map(|f| f.error.map_or(f64::INFINITY, |e| e.position)).collect();
    (out.final_loss(), median(errors), out.sample_evaluations)
}

fn criterion_scg() -> Outcome {
    let start = Instant::now();
    let bb = FrozenBackbone::new(BackboneSpec::default()).unwrap();
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 0..5 {
        // patches longer than the sensor radius make aliased points the
        // majority of frames near a patch, so aliasing can flip the consensus
        let scene = SyntheticScene::generate(&SceneSpec {
            aliasing_factor: 4,
            alias_patch_length: 22.0,
            sensor_range: 18.0,
            seed,
            ..SceneSpec::default()
        })
        .unwrap();
        let positions: Vec<Vec<f64>> = scene.train.iter().map(|f| f.position().iter().copied().collect()).collect();
        let (_, labels) = build_hierarchy(&positions, 4, 4, seed, 100).unwrap();
        let cls_cfg = ClassifierTrainConfig {
            seed,
            ..ClassifierTrainConfig::default()
        };
        let (head, _) = train_classifier(global_features(&bb, &scene.train).view(), &labels, 4, 4, &cls_cfg).unwrap();
        let base = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let (loss_off, med_off, _) = train_and_evaluate(&scene, &bb, None, &base);
        let with = TrainConfig {
            scg_enabled: true,
            ..base
        };
        let (loss_on, med_on, _) = train_and_evaluate(&scene, &bb, Some(&head), &with);
        if loss_on <= loss_off && med_on <= med_off {
            wins += 1;
        }
        rows.push(format!("{loss_on:.2}/{loss_off:.2} loss, {med_on:.3}/{med_off:.3} m"));
    }
    let elapsed = start.elapsed();
    outcome(
        wins >= 4 && within(elapsed, 900.0),
        format!(
            "aliasing factor 4 (22 m patches, 18 m range), SCG on/off: {wins}/5 seeds no worse in both loss and median error [{}], {:.0}s",
            rows.join("; "),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_rsd_ablation() -> Outcome {
    let start = Instant::now();
    let bb = FrozenBackbone::new(BackboneSpec::default()).unwrap();
    let (mut full_meds, mut rsd_meds) = (Vec::new(), Vec::new());
    let mut counts_ok = true;
    let mut random_worse = 0;
    let mut rows = Vec::new();
    for seed in 0..5 {
        let scene = SyntheticScene::generate(&SceneSpec {
            dense_arc_fraction: 0.1,
            dense_frame_share: 0.7,
            seed,
            ..SceneSpec::default()
        })
        .unwrap();
        let n = scene.train.len();
        let base = TrainConfig {
            batch_frames: 2,
            seed,
            ..TrainConfig::default()
        };
        let run = |strategy| {
            train_and_evaluate(
                &scene,
                &bb,
                None,
                &TrainConfig {
                    strategy,
                    ..base.clone()
                },
            )
        };
        let (_, full, full_evals) = run(PruneStrategy::Full);
        let (_, rsd, rsd_evals) = run(PruneStrategy::Rsd);
        let (_, random, random_evals) = run(PruneStrategy::Random);
        let expected = scheduled_evaluations(&base.rsd, n).unwrap();
        counts_ok &= full_evals == base.epochs * n && rsd_evals == expected && random_evals == expected;
        if random > rsd {
            random_worse += 1;
        }
        full_meds.push(full);
        rsd_meds.push(rsd);
        rows.push(format!("{full:.3}/{rsd:.3}/{random:.3}"));
    }
    let (full_mean, rsd_mean) = (mean(&full_meds).unwrap(), mean(&rsd_meds).unwrap());
    let retained = rsd_mean <= 1.10 * full_mean;
    let elapsed = start.elapsed();
    outcome(
        counts_ok && retained && random_worse >= 4 && within(elapsed, 1200.0),
        format!(
            "evaluation counts exact {counts_ok}; mean median error RSD {rsd_mean:.4} vs full {full_mean:.4} m (limit +10%) {retained}; \
             random worse than RSD in {random_worse}/5 seeds; full/rsd/random m [{}], {:.0}s",
            rows.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn criterion_fusion() -> Outcome {
    let start = Instant::now();
    let bb = FrozenBackbone::new(BackboneSpec::default()).unwrap();
    let mut rows = Vec::new();
    let mut ok = true;
    for seed in 0..5 {
        let scene = SyntheticScene::generate(&SceneSpec {
            seed,
            ..SceneSpec::default()
        })
        .unwrap();
        let positions: Vec<Vec<f64>> = scene.train.iter().map(|f| f.position().iter().copied().collect()).collect();
        let (model, labels) = build_hierarchy(&positions, 4, 5, seed, 100).unwrap();
        let cfg = ClassifierTrainConfig {
            seed,
            ..ClassifierTrainConfig::default()
        };
        let (head, _) = train_classifier(global_features(&bb, &scene.train).view(), &labels, 4, 5, &cfg).unwrap();
        let drive = scene.drive(5, 100).unwrap();
        let gt: Vec<Vector3<f64>> = drive.iter().map(Frame::position).collect();
        let obs: Vec<Option<Observation>> = head
            .predict(global_features(&bb, &drive).view())
            .unwrap()
            .iter()
            .map(|p| Some(Observation::from_prediction(&model, p).unwrap()))
            .collect();
        let steps = simulate_odometry(&gt, &DriftSpec::default(), seed).unwrap();
        let run = run_fusion(&gt, &steps, &obs, &FusionConfig::default()).unwrap();
        let conf: Vec<f64> = obs.iter().map(|o| o.unwrap().confidence).collect();
        let err: Vec<f64> = obs.iter().zip(&gt).map(|(o, g)| (o.unwrap().z - g).norm()).collect();
        let rho = spearman(&conf, &err).unwrap();
        let r = run.report;
        ok &= r.raw_terminal_drift >= 50.0 && r.improvement_percent() >= 80.0 && rho < 0.0;
        rows.push(format!(
            "drift {:.1} m, {:.1}%, rho {rho:.2}",
            r.raw_terminal_drift,
            r.improvement_percent()
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut exact = true;
    for _ in 0..100 {
        let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let prior = KalmanState::new(Vector3::from_fn(|_, _| rng.random_range(-50.0..50.0)), a * a.transpose()).unwrap();
        let z = Vector3::from_fn(|_, _| rng.random_range(-50.0..50.0));
        let post = kf_update(&prior, &Observation::new(z, 1.0).unwrap(), 1.0).unwrap();
        exact &= post.mean == z;
    }
    let elapsed = start.elapsed();
    outcome(
        ok && exact && within(elapsed, 120.0),
        format!(
            "5 seeds [{}]; c=1 update returns the measurement exactly {exact}, {:.1}s",
            rows.join("; "),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- criterion 9

fn pipeline(out: &Path) -> Result<(), String> {
    for args in [
        &["generate"][..],
        &["cluster"],
        &["train-classifier"],
        &["train-scr"],
        &["localize"],
        &["fuse"],
        &["report"],
    ] {
        let o = Command::new(env!("CARGO_BIN_EXE_lightloc"))
            .args(args)
            .args(["--seed", "0", "--out"])
            .arg(out)
            .env("LIGHTLOC_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)));
        }
    }
    Ok(())
}

fn report_bytes(out: &Path) -> Vec<Vec<u8>> {
    ["report.md", "summary.csv", "loss.svg", "trajectory.svg"]
        .iter()
        .map(|f| std::fs::read(out.join("report").join(f)).unwrap_or_default())
        .collect()
}

fn criterion_pipeline() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if let Err(e) = pipeline(&a).and_then(|_| pipeline(&b)) {
        return outcome(false, format!("pipeline failed: {e}"));
    }
    let identical = report_bytes(&a) == report_bytes(&b);
    let summary = lightloc_cli::artifacts::Artifacts::new(&a)
        .read_summary("localize/summary.csv")
        .unwrap();
    let med = summary.get_f64("median_position_error").unwrap_or(f64::NAN);
    let elapsed = start.elapsed();
    outcome(
        identical && med < 0.5 && within(elapsed / 2, 1800.0),
        format!(
            "two runs with seed 0: report bit-identical {identical}; median position error {med:.4} m; {:.0}s per run",
            (elapsed / 2).as_secs_f64()
        ),
    )
}

fn main() {
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("RSD oracle equivalence", criterion_rsd_oracle),
        ("loss formulas", criterion_losses),
        ("gradient correctness", criterion_gradients),
        ("pose solver", criterion_solver),
        ("classifier accuracy on blobs", criterion_classifier),
        ("SCG ablation on aliased scene", criterion_scg),
        ("RSD ablation", criterion_rsd_ablation),
        ("fusion", criterion_fusion),
        ("end-to-end pipeline", criterion_pipeline),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string()) {
            continue;
        }
        let o = run();
        println!("[criterion {n}] {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
