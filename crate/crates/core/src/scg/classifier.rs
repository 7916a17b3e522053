use std::io::{Read, Write};

use log::debug;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::formats::{BinReader, BinWriter};
use crate::nn::{softmax_rows, ForwardCache, Mlp, MlpGrads, OneCycle, Optimizer, OptimizerKind};

use super::hierarchy::HierLabel;
use super::loss::{smoothed_target, PROB_FLOOR};

pub const CLASSIFIER_MAGIC: [u8; 4] = *b"LLCH";
pub const CLASSIFIER_VERSION: u16 = 1;

/// Two-level classifier on a global frame feature. The level-1 posterior
/// modulates the feature (per-channel scale and shift) before level 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    input_mean: Array1<f64>,
    input_scale: Array1<f64>,
    level1: Mlp,
    scale_w: Array2<f64>,
    scale_b: Array1<f64>,
    shift_w: Array2<f64>,
    shift_b: Array1<f64>,
    level2: Mlp,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    pub x: Array2<f64>,
    c1: ForwardCache,
    pub p1: Array2<f64>,
    c2: ForwardCache,
    pub p2: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct HeadGrads {
    level1: MlpGrads,
    scale_w: Array2<f64>,
    scale_b: Array1<f64>,
    shift_w: Array2<f64>,
    shift_b: Array1<f64>,
    level2: MlpGrads,
}

impl HeadGrads {
    /// Same order as [`ClassifierHead::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = self.level1.slices();
        out.push(self.scale_w.as_slice().expect("standard layout"));
        out.push(self.scale_b.as_slice().expect("standard layout"));
        out.push(self.shift_w.as_slice().expect("standard layout"));
        out.push(self.shift_b.as_slice().expect("standard layout"));
        out.extend(self.level2.slices());
        out
    }
}

/// Per-sample prediction of the head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadPrediction {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub label: HierLabel,
}

fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl ClassifierHead {
    /// Fresh head. `hidden` lists hidden widths of each level's network.
    /// The modulation starts as the identity (scale 1, shift 0).
    pub fn new(dim: usize, hidden: &[usize], k1: usize, k2: usize, seed: u64) -> Result<Self> {
        if dim == 0 || k1 == 0 || k2 == 0 {
            return Err(Error::ShapeMismatch("classifier dimensions must be positive".into()));
        }
        let dims = |k: usize| {
            let mut d = vec![dim];
            d.extend_from_slice(hidden);
            d.push(k);
            d
        };
        Ok(Self {
            input_mean: Array1::zeros(dim),
            input_scale: Array1::ones(dim),
            level1: Mlp::new(&dims(k1), vec![], seed)?,
            scale_w: Array2::zeros((k1, dim)),
            scale_b: Array1::ones(dim),
            shift_w: Array2::zeros((k1, dim)),
            shift_b: Array1::zeros(dim),
            level2: Mlp::new(&dims(k2), vec![], seed.wrapping_add(1))?,
        })
    }

    /// Head whose every weight is zero: both posteriors are uniform.
    pub fn zeros(dim: usize, hidden: &[usize], k1: usize, k2: usize) -> Result<Self> {
        let mut h = Self::new(dim, hidden, k1, k2, 0)?;
        for s in h.param_slices_mut() {
            s.fill(0.0);
        }
        Ok(h)
    }

    pub fn dim(&self) -> usize {
        self.input_mean.len()
    }

    pub fn k1(&self) -> usize {
        self.level1.out_dim()
    }

    pub fn k2(&self) -> usize {
        self.level2.out_dim()
    }

    /// Fixes the input standardization (not trained).
    pub fn set_standardization(&mut self, mean: Array1<f64>, scale: Array1<f64>) -> Result<()> {
        if mean.len() != self.dim() || scale.len() != self.dim() {
            return Err(Error::ShapeMismatch("standardization length".into()));
        }
        self.input_mean = mean;
        self.input_scale = scale;
        Ok(())
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.level1.param_slices_mut();
        out.push(self.scale_w.as_slice_mut().expect("standard layout"));
        out.push(self.scale_b.as_slice_mut().expect("standard layout"));
        out.push(self.shift_w.as_slice_mut().expect("standard layout"));
        out.push(self.shift_b.as_slice_mut().expect("standard layout"));
        out.extend(self.level2.param_slices_mut());
        out
    }

    pub fn forward_cached(&self, features: ArrayView2<f64>) -> Result<HeadCache> {
        if features.ncols() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "global feature has {} values, head expects {}",
                features.ncols(),
                self.dim()
            )));
        }
        let x = (&features - &self.input_mean) * &self.input_scale;
        let c1 = self.level1.forward_cached(x.view())?;
        let p1 = softmax_rows(c1.output());
        let scale = p1.dot(&self.scale_w) + &self.scale_b;
        let shift = p1.dot(&self.shift_w) + &self.shift_b;
        let modulated = &x * &scale + &shift;
        let c2 = self.level2.forward_cached(modulated.view())?;
        let p2 = softmax_rows(c2.output());
        Ok(HeadCache {
            x,
            c1,
            p1,
            c2,
            p2,
        })
    }

    /// Gradients given the loss gradients with respect to both logit blocks.
    /// The level-2 gradient flows back into level 1 through the modulation.
    pub fn backward(
        &self,
        cache: &HeadCache,
        grad_logits1: ArrayView2<f64>,
        grad_logits2: ArrayView2<f64>,
    ) -> Result<HeadGrads> {
        let (level2, grad_mod) = self.level2.backward(&cache.c2, grad_logits2)?;
        let grad_scale = &grad_mod * &cache.x;
        let scale_w = cache.p1.t().dot(&grad_scale);
        let scale_b = grad_scale.sum_axis(Axis(0));
        let shift_w = cache.p1.t().dot(&grad_mod);
        let shift_b = grad_mod.sum_axis(Axis(0));
        let grad_p1 = grad_scale.dot(&self.scale_w.t()) + grad_mod.dot(&self.shift_w.t());
        // softmax Jacobian: p ⊙ (g − ⟨g, p⟩)
        let inner = (&grad_p1 * &cache.p1).sum_axis(Axis(1)).insert_axis(Axis(1));
        let through_softmax = &cache.p1 * &(&grad_p1 - &inner);
        let total1 = &grad_logits1 + &through_softmax;
        let (level1, _) = self.level1.backward(&cache.c1, total1.view())?;
        Ok(HeadGrads {
            level1,
            scale_w,
            scale_b,
            shift_w,
            shift_b,
            level2,
        })
    }

    /// Mean over the batch of the summed smoothed cross-entropies of both
    /// levels, with exact gradients.
    pub fn loss_and_grads(
        &self,
        features: ArrayView2<f64>,
        labels: &[HierLabel],
        epsilon: f64,
    ) -> Result<(f64, HeadGrads)> {
        let cache = self.forward_cached(features)?;
        let (loss, g1, g2) = self.loss_terms(&cache, labels, epsilon)?;
        let grads = self.backward(&cache, g1.view(), g2.view())?;
        Ok((loss, grads))
    }

    pub fn loss(&self, features: ArrayView2<f64>, labels: &[HierLabel], epsilon: f64) -> Result<f64> {
        let cache = self.forward_cached(features)?;
        Ok(self.loss_terms(&cache, labels, epsilon)?.0)
    }

    fn loss_terms(
        &self,
        cache: &HeadCache,
        labels: &[HierLabel],
        epsilon: f64,
    ) -> Result<(f64, Array2<f64>, Array2<f64>)> {
        let n = cache.p1.nrows();
        if labels.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: labels.len(),
            });
        }
        let (k1, k2) = (self.k1(), self.k2());
        let mut g1 = cache.p1.clone();
        let mut g2 = cache.p2.clone();
        let mut loss = 0.0;
        for (r, l) in labels.iter().enumerate() {
            if l.level1 >= k1 || l.level2 >= k2 {
                return Err(Error::ShapeMismatch(format!("label {l:?} outside {k1}x{k2}")));
            }
            for c in 0..k1 {
                let t = smoothed_target(c, l.level1, epsilon, k1);
                loss -= t * cache.p1[[r, c]].max(PROB_FLOOR).ln();
                g1[[r, c]] -= t;
            }
            for c in 0..k2 {
                let t = smoothed_target(c, l.level2, epsilon, k2);
                loss -= t * cache.p2[[r, c]].max(PROB_FLOOR).ln();
                g2[[r, c]] -= t;
            }
        }
        let inv = 1.0 / n as f64;
        Ok((loss * inv, g1 * inv, g2 * inv))
    }

    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Vec<HeadPrediction>> {
        let cache = self.forward_cached(features)?;
        Ok((0..cache.p1.nrows())
            .map(|r| {
                let (a, b) = (cache.p1.row(r), cache.p2.row(r));
                HeadPrediction {
                    p1: a.to_vec(),
                    p2: b.to_vec(),
                    label: HierLabel {
                        level1: argmax(a),
                        level2: argmax(b),
                    },
                }
            })
            .collect())
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<W> {
        let mut w = BinWriter::new(out, CLASSIFIER_MAGIC, CLASSIFIER_VERSION)?;
        w.len(self.dim())?;
        w.len(self.k1())?;
        w.len(self.k2())?;
        w.f64s(self.input_mean.iter().copied())?;
        w.f64s(self.input_scale.iter().copied())?;
        self.level1.write(&mut w)?;
        for a in [&self.scale_w, &self.shift_w] {
            w.f64s(a.iter().copied())?;
        }
        for a in [&self.scale_b, &self.shift_b] {
            w.f64s(a.iter().copied())?;
        }
        self.level2.write(&mut w)?;
        Ok(w.finish())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.write_to(Vec::new()).expect("writing to memory cannot fail")
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = BinReader::new(input, CLASSIFIER_MAGIC, CLASSIFIER_VERSION)?;
        let dim = r.len()?;
        let k1 = r.len()?;
        let k2 = r.len()?;
        let input_mean = Array1::from(r.f64s(dim)?);
        let input_scale = Array1::from(r.f64s(dim)?);
        let level1 = Mlp::read(&mut r)?;
        let mat = |v: Vec<f64>| Array2::from_shape_vec((k1, dim), v).map_err(|e| Error::Parse(e.to_string()));
        let scale_w = mat(r.f64s(k1 * dim)?)?;
        let shift_w = mat(r.f64s(k1 * dim)?)?;
        let scale_b = Array1::from(r.f64s(dim)?);
        let shift_b = Array1::from(r.f64s(dim)?);
        let level2 = Mlp::read(&mut r)?;
        if level1.in_dim() != dim || level2.in_dim() != dim || level1.out_dim() != k1 || level2.out_dim() != k2 {
            return Err(Error::Parse("classifier networks disagree with header".into()));
        }
        Ok(Self {
            input_mean,
            input_scale,
            level1,
            scale_w,
            scale_b,
            shift_w,
            shift_b,
            level2,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierTrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub label_smoothing: f64,
    pub schedule: OneCycle,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            epochs: 50,
            batch_size: 32,
            label_smoothing: 0.1,
            schedule: OneCycle {
                min_lr: 1e-3,
                max_lr: 1e-2,
                warmup_fraction: 0.25,
                final_lr: 1e-4,
            },
            optimizer: OptimizerKind::adamw(),
            weight_decay: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub mean_loss: f64,
    pub leaf_accuracy: f64,
}

/// Per-column mean and inverse standard deviation (floored).
pub fn standardization(features: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = features.mean_axis(Axis(0)).expect("non-empty features");
    let var = features.var_axis(Axis(0), 0.0);
    let scale = var.mapv(|v| 1.0 / v.sqrt().max(1e-3));
    (mean, scale)
}

/// Fraction of rows whose predicted leaf equals the label.
pub fn leaf_accuracy(head: &ClassifierHead, features: ArrayView2<f64>, labels: &[HierLabel]) -> Result<f64> {
    let preds = head.predict(features)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p.label == **l).count();
    Ok(hits as f64 / labels.len().max(1) as f64)
}

pub fn train_classifier(
    features: ArrayView2<f64>,
    labels: &[HierLabel],
    k1: usize,
    k2: usize,
    config: &ClassifierTrainConfig,
) -> Result<(ClassifierHead, Vec<ClassifierEpoch>)> {
    let n = features.nrows();
    if n != labels.len() {
        return Err(Error::LengthMismatch {
            left: n,
            right: labels.len(),
        });
    }
    if n == 0 || config.batch_size == 0 {
        return Err(Error::InvalidConfig("classifier training needs samples and a batch size".into()));
    }
    config.schedule.validate()?;
    let mut head = ClassifierHead::new(features.ncols(), &config.hidden, k1, k2, config.seed)?;
    let (mean, scale) = standardization(features);
    head.set_standardization(mean, scale)?;
    let mut opt = Optimizer::new(config.optimizer, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5C6_C1A5);
    let mut order: Vec<usize> = (0..n).collect();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = (batches_per_epoch * config.epochs) as f64;
    let mut step = 0usize;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = features.select(Axis(0), chunk);
            let y: Vec<HierLabel> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = head.loss_and_grads(x.view(), &y, config.label_smoothing)?;
            loss_sum += loss * chunk.len() as f64;
            let lr = config.schedule.lr(step as f64 / total_steps);
            opt.step(head.param_slices_mut(), &grads.slices(), lr)?;
            step += 1;
        }
        let acc = leaf_accuracy(&head, features, labels)?;
        debug!("classifier epoch {epoch}: loss {:.4} leaf accuracy {acc:.4}", loss_sum / n as f64);
        history.push(ClassifierEpoch {
            epoch,
            mean_loss: loss_sum / n as f64,
            leaf_accuracy: acc,
        });
    }
    Ok((head, history))
}
