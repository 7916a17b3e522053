//! Pipeline stages. Each reads its inputs from the artifact directory, checks
//! that they were produced under the current config, and writes its outputs
//! plus a `summary.csv`.

use std::fmt::Write as _;

use lightloc_core::backbone::FrozenBackbone;
use lightloc_core::fusion::{run_fusion, simulate_odometry, Observation};
use lightloc_core::scene::{Frame, SyntheticScene};
use lightloc_core::scg::{build_hierarchy, leaf_accuracy, train_classifier, ClassifierHead, ClusterModel, HierLabel};
use lightloc_core::stats::spearman;
use lightloc_core::trainer::{evaluate, evaluate_with, train_scr, EvalSummary, SceneRegressor};
use nalgebra::Vector3;
use ndarray::Array2;

use crate::artifacts::{load_split, save_scene, Artifacts, Split, Summary, CONFIG_FILE};
use crate::config::{derive_seed, RunConfig, Stream};
use crate::error::{CliError, CliResult};
use crate::report;

pub struct Context {
    pub config: RunConfig,
    pub artifacts: Artifacts,
    pub hash: String,
}

impl Context {
    pub fn new(config: RunConfig) -> Self {
        let artifacts = Artifacts::new(config.output.clone());
        let hash = config.hash();
        Self {
            config,
            artifacts,
            hash,
        }
    }

    fn summary(&self) -> Summary {
        Summary::new(&self.hash)
    }

    fn frames(&self, split: Split) -> CliResult<Vec<Frame>> {
        load_split(&self.artifacts, &self.hash, split)
    }

    fn backbone(&self) -> CliResult<FrozenBackbone> {
        Ok(FrozenBackbone::new(self.config.backbone)?)
    }

    fn cluster_model(&self) -> CliResult<ClusterModel> {
        self.artifacts.checked_summary("cluster/summary.csv", &self.hash)?;
        Ok(ClusterModel::read_from(&self.artifacts.read("cluster/model.llcm")?[..])?)
    }

    fn classifier(&self) -> CliResult<ClassifierHead> {
        self.artifacts.checked_summary("classifier/summary.csv", &self.hash)?;
        Ok(ClassifierHead::read_from(&self.artifacts.read("classifier/head.llch")?[..])?)
    }
}

fn global_features(bb: &FrozenBackbone, frames: &[Frame]) -> CliResult<Array2<f64>> {
    let mut g = Array2::zeros((frames.len(), bb.width()));
    for (i, f) in frames.iter().enumerate() {
        g.row_mut(i).assign(&bb.features(&f.sensor)?.global);
    }
    Ok(g)
}

fn positions(frames: &[Frame]) -> Vec<Vec<f64>> {
    frames.iter().map(|f| f.position().iter().copied().collect()).collect()
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

pub fn generate(ctx: &Context, force: bool) -> CliResult<()> {
    let art = &ctx.artifacts;
    if art.has_outputs()? {
        if !force {
            return Err(CliError::OutputExists(art.root().to_path_buf()));
        }
        art.clear_stages()?;
    }
    ctx.config.validate()?;
    let cfg = &ctx.config;
    let scene = SyntheticScene::generate(&cfg.scene_spec())?;
    let drive = scene.drive(cfg.fusion.laps, cfg.fusion.frames_per_lap)?;
    save_scene(
        art,
        &ctx.hash,
        &[(Split::Train, &scene.train), (Split::Test, &scene.test), (Split::Drive, &drive)],
    )?;
    art.write(CONFIG_FILE, cfg.render().as_bytes())?;
    let points: usize = scene.train.iter().map(|f| f.sensor.len()).sum();
    let mut s = ctx.summary();
    s.push("train_frames", scene.train.len())
        .push("test_frames", scene.test.len())
        .push("drive_frames", drive.len())
        .push("poles", scene.poles().len())
        .push("alias_pairs", scene.alias_pairs().len())
        .push("mean_points_per_frame", points as f64 / scene.train.len() as f64);
    art.write_summary("scene/summary.csv", &s)?;
    log::info!("generated {} train, {} test, {} drive frames", scene.train.len(), scene.test.len(), drive.len());
    Ok(())
}

pub fn cluster(ctx: &Context) -> CliResult<()> {
    let cfg = &ctx.config;
    let train = ctx.frames(Split::Train)?;
    let (model, labels) = build_hierarchy(
        &positions(&train),
        cfg.scg.k1,
        cfg.scg.k2,
        derive_seed(cfg.seed, Stream::Cluster),
        cfg.scg.kmeans_iterations,
    )?;
    let art = &ctx.artifacts;
    art.write("cluster/model.llcm", &model.to_bytes())?;
    let rows = labels.iter().enumerate().map(|(i, l)| format!("{i},{},{}", l.level1, l.level2));
    art.write("cluster/labels.csv", csv("frame,level1,level2", rows).as_bytes())?;
    let mut sizes = vec![0usize; model.k1() * model.k2()];
    for l in &labels {
        sizes[model.leaf_index(*l)] += 1;
    }
    let mut s = ctx.summary();
    s.push("k1", model.k1())
        .push("k2", model.k2())
        .push("smallest_leaf", sizes.iter().min().copied().unwrap_or(0))
        .push("largest_leaf", sizes.iter().max().copied().unwrap_or(0));
    art.write_summary("cluster/summary.csv", &s)
}

fn read_labels(art: &Artifacts, n: usize) -> CliResult<Vec<HierLabel>> {
    let rel = "cluster/labels.csv";
    let text = art.read_text(rel)?;
    let labels = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<usize> = l.split(',').map(str::parse).collect::<Result<_, _>>().map_err(|e| art.malformed(rel, format!("{l:?}: {e}")))?;
            match f[..] {
                [_, level1, level2] => Ok(HierLabel { level1, level2 }),
                _ => Err(art.malformed(rel, format!("expected 3 fields in {l:?}"))),
            }
        })
        .collect::<CliResult<Vec<_>>>()?;
    if labels.len() != n {
        return Err(art.malformed(rel, format!("{} labels for {n} frames", labels.len())));
    }
    Ok(labels)
}

pub fn classifier(ctx: &Context) -> CliResult<()> {
    let cfg = &ctx.config;
    let art = &ctx.artifacts;
    let model = ctx.cluster_model()?;
    let train = ctx.frames(Split::Train)?;
    let test = ctx.frames(Split::Test)?;
    let labels = read_labels(art, train.len())?;
    let bb = ctx.backbone()?;
    let features = global_features(&bb, &train)?;
    let (head, history) = train_classifier(features.view(), &labels, model.k1(), model.k2(), &cfg.classifier_config())?;
    art.write("classifier/head.llch", &head.to_bytes())?;
    let rows = history.iter().map(|h| format!("{},{},{}", h.epoch, h.mean_loss, h.leaf_accuracy));
    art.write("classifier/history.csv", csv("epoch,mean_loss,leaf_accuracy", rows).as_bytes())?;
    let test_labels: Vec<HierLabel> = positions(&test).iter().map(|p| model.label_of(p)).collect();
    let mut s = ctx.summary();
    s.push("epochs", history.len())
        .push("final_loss", history.last().map_or(f64::NAN, |h| h.mean_loss))
        .push("train_leaf_accuracy", leaf_accuracy(&head, features.view(), &labels)?)
        .push(
            "test_leaf_accuracy",
            leaf_accuracy(&head, global_features(&bb, &test)?.view(), &test_labels)?,
        );
    art.write_summary("classifier/summary.csv", &s)
}

pub fn scr(ctx: &Context) -> CliResult<()> {
    let cfg = &ctx.config;
    let art = &ctx.artifacts;
    let train = ctx.frames(Split::Train)?;
    let classifier = if cfg.scg.enabled { Some(ctx.classifier()?) } else { None };
    let bb = ctx.backbone()?;
    let tc = cfg.train_config();
    let out = train_scr(&train, &bb, classifier.as_ref(), &tc)?;
    art.write("scr/head.llrh", &out.regressor.to_bytes())?;
    let rows = out
        .history
        .iter()
        .map(|h| format!("{},{},{},{}", h.epoch, h.mean_loss, h.active, h.lr));
    art.write("scr/loss.csv", csv("epoch,mean_loss,active,lr", rows).as_bytes())?;
    let rows = out
        .transitions
        .iter()
        .map(|t| format!("{},{:?},{},{}", t.epoch, t.action, t.active_before, t.active_after));
    art.write(
        "scr/transitions.csv",
        csv("epoch,action,active_before,active_after", rows).as_bytes(),
    )?;
    let full = tc.epochs * train.len();
    let mut s = ctx.summary();
    s.push("strategy", format!("{:?}", tc.strategy).to_lowercase())
        .push("guidance", cfg.scg.enabled)
        .push("epochs", tc.epochs)
        .push("final_loss", out.final_loss())
        .push("sample_evaluations", out.sample_evaluations)
        .push("full_evaluations", full)
        .push("saved_percent", 100.0 * (1.0 - out.sample_evaluations as f64 / full as f64));
    art.write_summary("scr/summary.csv", &s)
}

fn write_eval(ctx: &Context, dir: &str, eval: &EvalSummary) -> CliResult<()> {
    let rows = eval.frames.iter().map(|f| match f.error {
        Some(e) => format!("{},{},{},{},ok", f.id, e.position, e.orientation_deg, f.inliers),
        None => format!("{},,,0,failed", f.id),
    });
    ctx.artifacts.write(
        &format!("{dir}/frames.csv"),
        csv("frame,position_error,orientation_deg,inliers,status", rows).as_bytes(),
    )?;
    let mut s = ctx.summary();
    s.push("frames", eval.frames.len())
        .push("failures", eval.failures)
        .push("median_position_error", eval.median.position)
        .push("median_orientation_deg", eval.median.orientation_deg)
        .push("mean_position_error", eval.mean.position)
        .push("mean_orientation_deg", eval.mean.orientation_deg);
    ctx.artifacts.write_summary(&format!("{dir}/summary.csv"), &s)
}

/// Localizes the test frames. `oracle` feeds the true world coordinates to
/// RANSAC, which isolates the solver from the regressor.
pub fn localize(ctx: &Context, oracle: bool) -> CliResult<()> {
    let test = ctx.frames(Split::Test)?;
    let ransac = ctx.config.ransac_params();
    if oracle {
        let eval = evaluate_with(&test, &ransac, |f| Ok(f.world.points().to_vec()))?;
        return write_eval(ctx, "localize_oracle", &eval);
    }
    ctx.artifacts.checked_summary("scr/summary.csv", &ctx.hash)?;
    let regressor = SceneRegressor::read_from(&ctx.artifacts.read("scr/head.llrh")?[..])?;
    let classifier = if regressor.guidance_dim() > 0 { Some(ctx.classifier()?) } else { None };
    let eval = evaluate(&regressor, &ctx.backbone()?, classifier.as_ref(), &test, &ransac)?;
    log::info!(
        "median error {:.3} m / {:.2} deg, {} failures",
        eval.median.position,
        eval.median.orientation_deg,
        eval.failures
    );
    write_eval(ctx, "localize", &eval)
}

fn xyz(v: &Vector3<f64>) -> String {
    format!("{},{},{}", v.x, v.y, v.z)
}

/// Fuses drifting odometry along the drive with classifier observations.
pub fn fuse(ctx: &Context) -> CliResult<()> {
    let cfg = &ctx.config;
    let art = &ctx.artifacts;
    let model = ctx.cluster_model()?;
    let head = ctx.classifier()?;
    let drive = ctx.frames(Split::Drive)?;
    let preds = head.predict(global_features(&ctx.backbone()?, &drive)?.view())?;
    let observations = preds
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if i % cfg.fusion.stride == 0 {
                Observation::from_prediction(&model, p).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<lightloc_core::Result<Vec<_>>>()?;
    let gt: Vec<Vector3<f64>> = drive.iter().map(Frame::position).collect();
    let odometry = simulate_odometry(&gt, &cfg.fusion.drift, derive_seed(cfg.seed, Stream::Odometry))?;
    let run = run_fusion(&gt, &odometry, &observations, &cfg.fusion.filter)?;

    let rows = (0..gt.len()).map(|i| format!("{},{},{},{}", drive[i].arc, xyz(&gt[i]), xyz(&run.raw[i]), xyz(&run.fused[i])));
    art.write(
        "fuse/trajectory.csv",
        csv("arc,gt_x,gt_y,gt_z,raw_x,raw_y,raw_z,fused_x,fused_y,fused_z", rows).as_bytes(),
    )?;
    let mut conf = Vec::new();
    let mut err = Vec::new();
    let mut rows = String::from("frame,x,y,z,confidence,error\n");
    for (i, o) in observations.iter().enumerate() {
        if let Some(o) = o {
            let e = (o.z - gt[i]).norm();
            conf.push(o.confidence);
            err.push(e);
            writeln!(rows, "{i},{},{},{e}", xyz(&o.z), o.confidence).expect("writing to a String");
        }
    }
    art.write("fuse/observations.csv", rows.as_bytes())?;
    let r = run.report;
    let mut s = ctx.summary();
    s.push("frames", gt.len())
        .push("updates", r.updates)
        .push("raw_mean_error", r.raw_mean_error)
        .push("fused_mean_error", r.fused_mean_error)
        .push("improvement_percent", r.improvement_percent())
        .push("raw_terminal_drift", r.raw_terminal_drift)
        .push("spearman_confidence_error", spearman(&conf, &err).unwrap_or(f64::NAN));
    art.write_summary("fuse/summary.csv", &s)
}

pub fn report(ctx: &Context) -> CliResult<()> {
    report::write(&ctx.artifacts, &ctx.hash)
}
