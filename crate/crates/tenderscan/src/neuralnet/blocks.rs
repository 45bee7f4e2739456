//! Composite blocks: residual unit, inception module, xception unit.

use super::layer::{
    concat_channels, split_channels, BatchNorm2d, Conv2d, Layer, MaxPool2d, Padding, Param, Phase,
    Relu, SepConv2d, Sequential,
};
use super::tensor::{NetError, Tensor};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy)]
pub struct ResidualUnitSpec {
    pub filters: usize,
    pub stride: usize,
}

/// conv3x3/s -> BN -> ReLU -> conv3x3/1 -> BN, merged with an identity skip
/// (or conv1x1/s -> BN projection when the shape changes) by elementwise
/// addition, then ReLU.
pub struct ResidualUnit {
    main: Sequential,
    skip: Option<Sequential>,
    merge_mask: Vec<bool>,
    cache_input: Option<Tensor>,
}

impl ResidualUnit {
    pub fn new(name: &str, in_ch: usize, spec: ResidualUnitSpec, rng: &mut ChaCha20Rng) -> Self {
        let f = spec.filters;
        let s = spec.stride;
        let main = Sequential::new(vec![
            Box::new(Conv2d::new(&format!("{name}.conv1"), in_ch, f, 3, s, Padding::Same, rng)),
            Box::new(BatchNorm2d::new(&format!("{name}.bn1"), f)),
            Box::new(Relu::new()),
            Box::new(Conv2d::new(&format!("{name}.conv2"), f, f, 3, 1, Padding::Same, rng)),
            Box::new(BatchNorm2d::new(&format!("{name}.bn2"), f)),
        ]);
        let skip = if s == 1 && in_ch == f {
            None
        } else {
            Some(Sequential::new(vec![
                Box::new(Conv2d::new(&format!("{name}.skip_conv"), in_ch, f, 1, s, Padding::Same, rng)),
                Box::new(BatchNorm2d::new(&format!("{name}.skip_bn"), f)),
            ]))
        };
        Self { main, skip, merge_mask: Vec::new(), cache_input: None }
    }
}

impl Layer for ResidualUnit {
    fn forward(&mut self, x: &Tensor, phase: Phase) -> Result<Tensor, NetError> {
        let m = self.main.forward(x, phase)?;
        let sk = match &mut self.skip {
            Some(s) => s.forward(x, phase)?,
            None => x.clone(),
        };
        if m.shape != sk.shape {
            return Err(NetError::ShapeMismatch(format!(
                "residual merge: {:?} vs {:?}",
                m.shape, sk.shape
            )));
        }
        let mut out = m;
        out.add_assign(&sk)?;
        self.merge_mask = out.data.iter().map(|&v| v > 0.0).collect();
        for v in out.data.iter_mut() {
            if *v <= 0.0 {
                *v = 0.0;
            }
        }
        self.cache_input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NetError> {
        let mut g = grad.clone();
        for (v, &m) in g.data.iter_mut().zip(self.merge_mask.iter()) {
            if !m {
                *v = 0.0;
            }
        }
        let d_main = self.main.backward(&g)?;
        let d_skip = match &mut self.skip {
            Some(s) => s.backward(&g)?,
            None => g,
        };
        let mut dx = d_main;
        dx.add_assign(&d_skip)?;
        Ok(dx)
    }

    fn params(&mut self) -> Vec<&mut Param> {
        let mut p = self.main.params();
        if let Some(s) = &mut self.skip {
            p.extend(s.params());
        }
        p
    }

    fn state_tensors(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut t = self.main.state_tensors();
        if let Some(s) = &mut self.skip {
            t.extend(s.state_tensors());
        }
        t
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InceptionSpec {
    pub b1: usize,
    pub b3_reduce: usize,
    pub b3: usize,
    pub b5_reduce: usize,
    pub b5: usize,
    pub pool_proj: usize,
}

impl InceptionSpec {
    pub fn out_channels(&self) -> usize {
        self.b1 + self.b3 + self.b5 + self.pool_proj
    }

    pub fn scaled(&self, div: usize, min: usize) -> Self {
        let f = |v: usize| (v / div).max(min);
        Self {
            b1: f(self.b1),
            b3_reduce: f(self.b3_reduce),
            b3: f(self.b3),
            b5_reduce: f(self.b5_reduce),
            b5: f(self.b5),
            pool_proj: f(self.pool_proj),
        }
    }
}

/// Four parallel branches (1x1; 1x1->3x3; 1x1->5x5; maxpool3x3/1 -> 1x1),
/// each conv followed by BN and ReLU, concatenated along channels.
pub struct InceptionModule {
    branches: Vec<Sequential>,
    branch_channels: Vec<usize>,
}

impl InceptionModule {
    pub fn new(name: &str, in_ch: usize, spec: InceptionSpec, rng: &mut ChaCha20Rng) -> Self {
        let conv_bn_relu = |nm: String, ic: usize, oc: usize, k: usize, rng: &mut ChaCha20Rng| -> Vec<Box<dyn Layer>> {
            vec![
                Box::new(Conv2d::new(&nm, ic, oc, k, 1, Padding::Same, rng)) as Box<dyn Layer>,
                Box::new(BatchNorm2d::new(&format!("{nm}_bn"), oc)),
                Box::new(Relu::new()),
            ]
        };
        let b1 = Sequential::new(conv_bn_relu(format!("{name}.b1"), in_ch, spec.b1, 1, rng));
        let mut l3 = conv_bn_relu(format!("{name}.b3r"), in_ch, spec.b3_reduce, 1, rng);
        l3.extend(conv_bn_relu(format!("{name}.b3"), spec.b3_reduce, spec.b3, 3, rng));
        let b3 = Sequential::new(l3);
        let mut l5 = conv_bn_relu(format!("{name}.b5r"), in_ch, spec.b5_reduce, 1, rng);
        l5.extend(conv_bn_relu(format!("{name}.b5"), spec.b5_reduce, spec.b5, 5, rng));
        let b5 = Sequential::new(l5);
        let mut lp: Vec<Box<dyn Layer>> = vec![Box::new(MaxPool2d::new(3, 1, Padding::Same))];
        lp.extend(conv_bn_relu(format!("{name}.pool_proj"), in_ch, spec.pool_proj, 1, rng));
        let bp = Sequential::new(lp);
        Self {
            branches: vec![b1, b3, b5, bp],
            branch_channels: vec![spec.b1, spec.b3, spec.b5, spec.pool_proj],
        }
    }
}

impl Layer for InceptionModule {
    fn forward(&mut self, x: &Tensor, phase: Phase) -> Result<Tensor, NetError> {
        let mut outs = Vec::with_capacity(self.branches.len());
        for b in &mut self.branches {
            outs.push(b.forward(x, phase)?);
        }
        concat_channels(&outs.iter().collect::<Vec<_>>())
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NetError> {
        let parts = split_channels(grad, &self.branch_channels)?;
        let mut dx: Option<Tensor> = None;
        for (b, g) in self.branches.iter_mut().zip(parts.iter()) {
            let d = b.backward(g)?;
            match &mut dx {
                None => dx = Some(d),
                Some(acc) => acc.add_assign(&d)?,
            }
        }
        Ok(dx.unwrap())
    }

    fn params(&mut self) -> Vec<&mut Param> {
        self.branches.iter_mut().flat_map(|b| b.params()).collect()
    }

    fn state_tensors(&mut self) -> Vec<(String, &mut Tensor)> {
        self.branches.iter_mut().flat_map(|b| b.state_tensors()).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct XceptionUnitSpec {
    pub filters: usize,
    pub is_entry_exit: bool,
    pub is_first: bool,
}

/// Base module: [ReLU -> sepconv3x3 -> BN] x2 with an identity skip (middle
/// flow). With `is_entry_exit` a maxpool3x3/2 is appended and the skip is a
/// conv1x1/2 -> BN projection; with `is_first` on top of that, the first
/// sepconv block is dropped. Merge is elementwise addition.
pub struct XceptionUnit {
    main: Sequential,
    skip: Option<Sequential>,
    cache_input: Option<Tensor>,
}

impl XceptionUnit {
    pub fn new(name: &str, in_ch: usize, spec: XceptionUnitSpec, rng: &mut ChaCha20Rng) -> Self {
        let f = spec.filters;
        let mut layers: Vec<Box<dyn Layer>> = Vec::new();
        let n_blocks = if spec.is_entry_exit && spec.is_first { 1 } else { 2 };
        let mut ic = in_ch;
        for i in 0..n_blocks {
            layers.push(Box::new(Relu::new()));
            layers.push(Box::new(SepConv2d::new(
                &format!("{name}.sep{}", i + 1),
                ic,
                f,
                3,
                1,
                Padding::Same,
                rng,
            )));
            layers.push(Box::new(BatchNorm2d::new(&format!("{name}.bn{}", i + 1), f)));
            ic = f;
        }
        let skip = if spec.is_entry_exit {
            layers.push(Box::new(MaxPool2d::new(3, 2, Padding::Same)));
            Some(Sequential::new(vec![
                Box::new(Conv2d::new(&format!("{name}.skip_conv"), in_ch, f, 1, 2, Padding::Same, rng)),
                Box::new(BatchNorm2d::new(&format!("{name}.skip_bn"), f)),
            ]))
        } else {
            None
        };
        Self { main: Sequential::new(layers), skip, cache_input: None }
    }
}

impl Layer for XceptionUnit {
    fn forward(&mut self, x: &Tensor, phase: Phase) -> Result<Tensor, NetError> {
        let m = self.main.forward(x, phase)?;
        let sk = match &mut self.skip {
            Some(s) => s.forward(x, phase)?,
            None => x.clone(),
        };
        if m.shape != sk.shape {
            return Err(NetError::ShapeMismatch(format!(
                "xception merge: {:?} vs {:?}",
                m.shape, sk.shape
            )));
        }
        let mut out = m;
        out.add_assign(&sk)?;
        self.cache_input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NetError> {
        let d_main = self.main.backward(grad)?;
        let d_skip = match &mut self.skip {
            Some(s) => s.backward(grad)?,
            None => grad.clone(),
        };
        let mut dx = d_main;
        dx.add_assign(&d_skip)?;
        Ok(dx)
    }

    fn params(&mut self) -> Vec<&mut Param> {
        let mut p = self.main.params();
        if let Some(s) = &mut self.skip {
            p.extend(s.params());
        }
        p
    }

    fn state_tensors(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut t = self.main.state_tensors();
        if let Some(s) = &mut self.skip {
            t.extend(s.state_tensors());
        }
        t
    }
}
