//! Residual encoder, inpainting decoder and the small heads.

use ndarray::{Array2, Array4};

use super::layers::{global_avg_pool, global_avg_pool_backward, Conv2d, Linear, MaxPool, Mode, Norm, NormKind, Relu, Upsample};
use super::param::{join, Module, Param};
use super::EncoderConfig;

/// conv-norm-relu-conv-norm plus shortcut, then relu.
pub struct ResBlock {
    conv1: Conv2d,
    norm1: Norm,
    relu1: Relu,
    conv2: Conv2d,
    norm2: Norm,
    shortcut: Option<(Conv2d, Norm)>,
    relu_out: Relu,
}

impl ResBlock {
    fn new(name: &str, cin: usize, cout: usize, stride: usize, norm: NormKind, seed: u64) -> Self {
        let shortcut = (stride != 1 || cin != cout).then(|| {
            (
                Conv2d::new(&join(name, "down.conv"), cin, cout, 1, stride, false, seed),
                Norm::new(norm, cout),
            )
        });
        ResBlock {
            conv1: Conv2d::new(&join(name, "conv1"), cin, cout, 3, stride, false, seed),
            norm1: Norm::new(norm, cout),
            relu1: Relu::default(),
            conv2: Conv2d::new(&join(name, "conv2"), cout, cout, 3, 1, false, seed),
            norm2: Norm::new(norm, cout),
            shortcut,
            relu_out: Relu::default(),
        }
    }

    fn forward(&mut self, x: &Array4<f32>, mode: Mode) -> Array4<f32> {
        let h = self.conv1.forward(x, mode);
        let h = self.norm1.forward(&h, mode);
        let h = self.relu1.forward4(h, mode);
        let h = self.conv2.forward(&h, mode);
        let mut h = self.norm2.forward(&h, mode);
        match &mut self.shortcut {
            Some((conv, norm)) => {
                let s = conv.forward(x, mode);
                h += &norm.forward(&s, mode);
            }
            None => h += x,
        }
        self.relu_out.forward4(h, mode)
    }

    fn backward(&mut self, dy: Array4<f32>) -> Array4<f32> {
        let d = self.relu_out.backward4(dy);
        let mut dx = match &mut self.shortcut {
            Some((conv, norm)) => {
                let ds = norm.backward(&d);
                conv.backward(&ds, true).unwrap()
            }
            None => d.clone(),
        };
        let dh = self.norm2.backward(&d);
        let dh = self.conv2.backward(&dh, true).unwrap();
        let dh = self.relu1.backward4(dh);
        let dh = self.norm1.backward(&dh);
        dx += &self.conv1.backward(&dh, true).unwrap();
        dx
    }
}

impl Module for ResBlock {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.norm1.visit(&join(prefix, "norm1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.norm2.visit(&join(prefix, "norm2"), f);
        if let Some((conv, norm)) = &self.shortcut {
            conv.visit(&join(prefix, "down.conv"), f);
            norm.visit(&join(prefix, "down.norm"), f);
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.norm1.visit_mut(&join(prefix, "norm1"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
        self.norm2.visit_mut(&join(prefix, "norm2"), f);
        if let Some((conv, norm)) = &mut self.shortcut {
            conv.visit_mut(&join(prefix, "down.conv"), f);
            norm.visit_mut(&join(prefix, "down.norm"), f);
        }
    }
}

/// Output of an encoder pass: pooled embedding and the pre-pooling feature map.
pub struct EncoderOut {
    pub embedding: Array2<f32>,
    pub features: Array4<f32>,
}

/// Stem (strided conv + max-pool), residual stages, global average pooling, linear embedding.
pub struct Encoder {
    cfg: EncoderConfig,
    stem_conv: Conv2d,
    stem_norm: Norm,
    stem_relu: Relu,
    pool: MaxPool,
    stages: Vec<Vec<ResBlock>>,
    fc: Linear,
    feat_hw: (usize, usize),
}

impl Encoder {
    pub(crate) fn new(cfg: &EncoderConfig, seed: u64) -> Self {
        let w0 = cfg.widths[0];
        let mut stages = Vec::new();
        let mut cin = w0;
        for (s, &w) in cfg.widths.iter().enumerate() {
            let blocks = (0..cfg.blocks_per_stage)
                .map(|b| {
                    let stride = if s > 0 && b == 0 { 2 } else { 1 };
                    let name = format!("encoder.stage{s}.block{b}");
                    let blk = ResBlock::new(&name, cin, w, stride, cfg.norm, seed);
                    cin = w;
                    blk
                })
                .collect();
            stages.push(blocks);
        }
        Encoder {
            cfg: cfg.clone(),
            stem_conv: Conv2d::new("encoder.stem.conv", cfg.in_bands, w0, 3, 2, false, seed),
            stem_norm: Norm::new(cfg.norm, w0),
            stem_relu: Relu::default(),
            pool: MaxPool::default(),
            stages,
            fc: Linear::new("encoder.fc", cin, cfg.embedding_dim, seed),
            feat_hw: (0, 0),
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    /// Spatial sizes from the input through every downsampling step.
    pub fn spatial_chain(&self, h: usize, w: usize) -> Vec<(usize, usize)> {
        spatial_chain(&self.cfg, h, w)
    }

    pub fn forward(&mut self, x: &Array4<f32>, mode: Mode) -> EncoderOut {
        let h = self.stem_conv.forward(x, mode);
        let h = self.stem_norm.forward(&h, mode);
        let h = self.stem_relu.forward4(h, mode);
        let mut h = self.pool.forward(&h, mode);
        for stage in &mut self.stages {
            for blk in stage {
                h = blk.forward(&h, mode);
            }
        }
        self.feat_hw = (h.dim().2, h.dim().3);
        let pooled = global_avg_pool(&h);
        EncoderOut {
            embedding: self.fc.forward(&pooled, mode),
            features: h,
        }
    }

    /// Backpropagates into parameter gradients. Either gradient source may be absent.
    pub fn backward(&mut self, d_embedding: Option<&Array2<f32>>, d_features: Option<Array4<f32>>) {
        let (fh, fw) = self.feat_hw;
        let mut d = d_features;
        if let Some(de) = d_embedding {
            let dp = self.fc.backward(de);
            let g = global_avg_pool_backward(&dp, fh, fw);
            d = Some(match d {
                Some(df) => df + g,
                None => g,
            });
        }
        let Some(mut d) = d else { return };
        for stage in self.stages.iter_mut().rev() {
            for blk in stage.iter_mut().rev() {
                d = blk.backward(d);
            }
        }
        let d = self.pool.backward(&d);
        let d = self.stem_relu.backward4(d);
        let d = self.stem_norm.backward(&d);
        self.stem_conv.backward(&d, false);
    }
}

pub(crate) fn spatial_chain(cfg: &EncoderConfig, h: usize, w: usize) -> Vec<(usize, usize)> {
    let half = |n: usize| n.div_ceil(2);
    let mut out = vec![(h, w)];
    let mut cur = (h, w);
    for _ in 0..cfg.widths.len() + 1 {
        cur = (half(cur.0), half(cur.1));
        out.push(cur);
    }
    out
}

impl Module for Encoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.stem_conv.visit(&join(prefix, "stem.conv"), f);
        self.stem_norm.visit(&join(prefix, "stem.norm"), f);
        for (s, stage) in self.stages.iter().enumerate() {
            for (b, blk) in stage.iter().enumerate() {
                blk.visit(&join(prefix, &format!("stage{s}.block{b}")), f);
            }
        }
        self.fc.visit(&join(prefix, "fc"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.stem_conv.visit_mut(&join(prefix, "stem.conv"), f);
        self.stem_norm.visit_mut(&join(prefix, "stem.norm"), f);
        for (s, stage) in self.stages.iter_mut().enumerate() {
            for (b, blk) in stage.iter_mut().enumerate() {
                blk.visit_mut(&join(prefix, &format!("stage{s}.block{b}")), f);
            }
        }
        self.fc.visit_mut(&join(prefix, "fc"), f);
    }
}

/// Nearest-neighbour upsampling back through the encoder's size chain, one conv per step.
pub struct Decoder {
    ups: Vec<Upsample>,
    convs: Vec<Conv2d>,
    norms: Vec<Norm>,
    relus: Vec<Relu>,
}

impl Decoder {
    pub(crate) fn new(cfg: &EncoderConfig, seed: u64) -> Self {
        let ws = &cfg.widths;
        let mut chans: Vec<usize> = ws.iter().rev().skip(1).copied().collect();
        chans.push(ws[0]);
        chans.push(cfg.in_bands);
        let mut cin = *ws.last().unwrap();
        let steps = chans.len();
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        for (i, &c) in chans.iter().enumerate() {
            let last = i + 1 == steps;
            // The full-resolution output layer is 1×1 to keep the decoder cheaper than the encoder.
            let k = if last { 1 } else { 3 };
            convs.push(Conv2d::new(&format!("decoder.up{i}.conv"), cin, c, k, 1, last, seed));
            if !last {
                norms.push(Norm::new(cfg.norm, c));
            }
            cin = c;
        }
        Decoder {
            ups: (0..steps).map(|_| Upsample::default()).collect(),
            relus: (0..steps - 1).map(|_| Relu::default()).collect(),
            convs,
            norms,
        }
    }

    /// `chain` is the encoder's spatial chain for the input; the output has the input's size.
    pub fn forward(&mut self, features: &Array4<f32>, chain: &[(usize, usize)], mode: Mode) -> Array4<f32> {
        let steps = self.convs.len();
        let mut h = features.clone();
        for i in 0..steps {
            let (th, tw) = chain[steps - 1 - i];
            h = self.ups[i].forward(&h, th, tw, mode);
            h = self.convs[i].forward(&h, mode);
            if i + 1 < steps {
                h = self.norms[i].forward(&h, mode);
                h = self.relus[i].forward4(h, mode);
            }
        }
        h
    }

    pub fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let steps = self.convs.len();
        let mut d = dy.clone();
        for i in (0..steps).rev() {
            if i + 1 < steps {
                d = self.relus[i].backward4(d);
                d = self.norms[i].backward(&d);
            }
            d = self.convs[i].backward(&d, true).unwrap();
            d = self.ups[i].backward(&d);
        }
        d
    }
}

impl Module for Decoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        for (i, conv) in self.convs.iter().enumerate() {
            conv.visit(&join(prefix, &format!("up{i}.conv")), f);
            if let Some(n) = self.norms.get(i) {
                n.visit(&join(prefix, &format!("up{i}.norm")), f);
            }
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, conv) in self.convs.iter_mut().enumerate() {
            conv.visit_mut(&join(prefix, &format!("up{i}.conv")), f);
            if let Some(n) = self.norms.get_mut(i) {
                n.visit_mut(&join(prefix, &format!("up{i}.norm")), f);
            }
        }
    }
}

/// Two-layer MLP feeding the contrastive loss.
pub struct ProjectionHead {
    fc1: Linear,
    relu: Relu,
    fc2: Linear,
}

impl ProjectionHead {
    pub(crate) fn new(d_e: usize, d_p: usize, seed: u64) -> Self {
        ProjectionHead {
            fc1: Linear::new("projection.fc1", d_e, d_e, seed),
            relu: Relu::default(),
            fc2: Linear::new("projection.fc2", d_e, d_p, seed),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.fc2.out_dim
    }

    pub fn forward(&mut self, x: &Array2<f32>, mode: Mode) -> Array2<f32> {
        let h = self.fc1.forward(x, mode);
        let h = self.relu.forward2(h, mode);
        self.fc2.forward(&h, mode)
    }

    pub fn backward(&mut self, dy: &Array2<f32>) -> Array2<f32> {
        let d = self.fc2.backward(dy);
        let d = self.relu.backward2(d);
        self.fc1.backward(&d)
    }
}

impl Module for ProjectionHead {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
    }
}
