//! Individual layers with exact analytic forward/backward passes.

use super::tensor::{NetError, Tensor};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

/// A trainable tensor plus its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(&value.shape);
        Self { name: name.into(), value, grad }
    }
}

pub fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha20Rng) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    let data = (0..shape.iter().product::<usize>())
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor { shape: shape.to_vec(), data }
}

pub trait Layer {
    fn forward(&mut self, x: &Tensor, phase: Phase) -> Result<Tensor, NetError>;
    /// Accumulates parameter gradients and returns the input gradient.
    /// Must be called after a `forward` on the same input.
    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NetError>;
    fn params(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
    /// Every tensor that must persist in a weight file, in a fixed order.
    fn state_tensors(&mut self) -> Vec<(String, &mut Tensor)> {
        self.params()
            .into_iter()
            .map(|p| (p.name.clone(), &mut p.value))
            .collect()
    }
}

pub fn zero_grads(layer: &mut dyn Layer) {
    for p in layer.params() {
        p.grad.data.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Output extent and leading pad for one spatial dimension.
fn out_and_pad(input: usize, k: usize, s: usize, padding: Padding) -> Result<(usize, usize), NetError> {
    match padding {
        Padding::Valid => {
            if input < k {
                return Err(NetError::ShapeMismatch(format!(
                    "valid padding: input {input} smaller than kernel {k}"
                )));
            }
            Ok(((input - k) / s + 1, 0))
        }
        Padding::Same => {
            let out = input.div_ceil(s);
            let total = ((out - 1) * s + k).saturating_sub(input);
            Ok((out, total / 2))
        }
    }
}

/// Range of output coordinates whose source index `o*s + kk - pad` stays
/// inside `[0, input)`.
#[inline]
fn valid_out_range(input: usize, out: usize, s: usize, kk: usize, pad: usize) -> (usize, usize) {
    let lo = if kk >= pad { 0 } else { (pad - kk).div_ceil(s) };
    let hi_src = input + pad;
    if hi_src <= kk {
        return (1, 0); // empty
    }
    let hi = ((hi_src - kk - 1) / s).min(out.saturating_sub(1));
    (lo, hi + 1)
}

// ---------------------------------------------------------------------------
// Conv2d

pub struct Conv2d {
    pub kernel: Param, // (F, C, KH, KW)
    pub bias: Param,   // (F,)
    pub stride: usize,
    pub padding: Padding,
    cache_input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        padding: Padding,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        let kernel = he_uniform(&[out_ch, in_ch, k, k], in_ch * k * k, rng);
        Self {
            kernel: Param::new(format!("{name}.kernel"), kernel),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_ch])),
            stride,
            padding,
            cache_input: None,
        }
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &Tensor, _phase: Phase) -> Result<Tensor, NetError> {
        let (n, c, h, w) = x.dims4()?;
        let kshape = &self.kernel.value.shape;
        let (f, kc, kh, kw) = (kshape[0], kshape[1], kshape[2], kshape[3]);
        if kc != c {
            return Err(NetError::ShapeMismatch(format!(
                "conv kernel expects {kc} input channels, got {c}"
            )));
        }
        let s = self.stride;
        let (oh, pt) = out_and_pad(h, kh, s, self.padding)?;
        let (ow, pl) = out_and_pad(w, kw, s, self.padding)?;
        let mut out = Tensor::zeros(&[n, f, oh, ow]);

        let kdat = &self.kernel.value.data;
        let bdat = &self.bias.value.data;
        for ni in 0..n {
            for fi in 0..f {
                let ob = ((ni * f) + fi) * oh * ow;
                out.data[ob..ob + oh * ow].iter_mut().for_each(|v| *v = bdat[fi]);
                for ci in 0..c {
                    let ib = ((ni * c) + ci) * h * w;
                    for ky in 0..kh {
                        let (oy_lo, oy_hi) = valid_out_range(h, oh, s, ky, pt);
                        for kx in 0..kw {
                            let kval = kdat[((fi * c + ci) * kh + ky) * kw + kx];
                            if kval == 0.0 {
                                continue;
                            }
                            let (ox_lo, ox_hi) = valid_out_range(w, ow, s, kx, pl);
                            for oy in oy_lo..oy_hi {
                                let iy = oy * s + ky - pt;
                                let irow = ib + iy * w;
                                let orow = ob + oy * ow;
                                for ox in ox_lo..ox_hi {
                                    let ix = ox * s + kx - pl;
                                    out.data[orow + ox] += kval * x.data[irow + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        self.cache_input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NetError> {
        let x = self
            .cache_input
            .as_ref()
            .ok_or_else(|| NetError::ShapeMismatch("conv backward before forward".into()))?;
        let (n, c, h, w) = x.dims4()?;
        let kshape = &self.kernel.value.shape;
        let (f, _, kh, kw) = (kshape[0], kshape[1], kshape[2], kshape[3]);
        let (gn, gf, oh, ow) = grad.dims4()?;
        if gn != n || gf != f {
            return Err(NetError::ShapeMismatch("conv grad shape".into()));
        }
        let s = self.stride;
        let (_, pt) = out_and_pad(h, kh, s, self.padding)?;
        let (_, pl) = out_and_pad(w, kw, s, self.padding)?;

        let mut dx = Tensor::zeros(&x.shape);
        for ni in 0..n {
            for fi in 0..f {
                let gb = ((ni * f) + fi) * oh * ow;
                let mut db = 0.0;
                for g in &grad.data[gb..gb + oh * ow] {
                    db += g;
                }
                self.bias.grad.data[fi] += db;
                for ci in 0..c {
                    let ib = ((ni * c) + ci) * h * w;
                    for ky in 0..kh {
                        let (oy_lo, oy_hi) = valid_out_range(h, oh, s, ky, pt);
                        for kx in 0..kw {
                            let kidx = ((fi * c + ci) * kh + ky) * kw + kx;
                            let kval = self.kernel.value.data[kidx];
                            let (ox_lo, ox_hi) = valid_out_range(w, ow, s, kx, pl);
                            let mut dk = 0.0;
                            for oy in oy_lo..oy_hi {
                                let iy = oy * s + ky - pt;
                                let irow = ib + iy * w;
                                let grow = gb + oy * ow;
                                for ox in ox_lo..ox_hi {
                                    let ix = ox * s + kx - pl;
                                    let g = grad.data[grow + ox];
                                    dk += g * x.data[irow + ix];
                                    dx.data[irow + ix] += g * kval;
                                }
                            }
                            self.kernel.grad.data[kidx] += dk;
                        }
                    }
                }
            }
        }
        Ok(dx)
    }

    fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.kernel, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------
// SepConv2d: depthwise k x k then pointwise 1 x 1

pub struct SepConv2d {
    pub depthwise: Param, // (C, KH, KW)
    pub pointwise: Param, // (F, C)
    pub bias: Param,      // (F,)
    pub stride: usize,
    pub padding: Padding,
    cache_input: Option<Tensor>,
    cache_mid: Option<Tensor>,
}

impl SepConv2d {
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        padding: Padding,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        let dw = he_uniform(&[in_ch, k, k], k * k, rng);
        let pw = he_uniform(&[out_ch, in_ch], in_ch, rng);
        Self {
            depthwise: Param::new(format!("{name}.depthwise"), dw),
            pointwise: Param::new(format!("{name}.pointwise"), pw),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_ch])),
            stride,
            padding,
            cache_input: None,
            cache_mid: None,
        }
    }
}

impl Layer for SepConv2d {
    fn forward(&mut self, x: &Tensor, _phase: Phase) -> Result<Tensor, NetError> {
        let (n, c, h, w) = x.dims4()?;
        let dws = &self.depthwise.value.shape;
        let (dc, kh, kw) = (dws[0], dws[1], dws[2]);
        if dc != c {
            return Err(NetError::ShapeMismatch(format!(
                "sepconv expects {dc} input channels, got {c}"
            )));
        }
        let f = self.pointwise.value.shape[0];
        let s = self.stride;
        let (oh, pt) = out_and_pad(h, kh, s, self.padding)?;
        let (ow, pl) = out_and_pad(w, kw, s, self.padding)?;

        // depthwise stage
        let mut mid = Tensor::zeros(&[n, c, oh, ow]);
        for ni in 0..n {
            for ci in 0..c {
                let ib = ((ni * c) + ci) * h * w;
                let mb = ((ni * c) + ci) * oh * ow;
                for ky in 0..kh {
                    let (oy_lo, oy_hi) = valid_out_range(h, oh, s, ky, pt);
                    for kx in 0..kw {
                        let kval = self.depthwise.value.data[(ci * kh + ky) * kw + kx];
                        let (ox_lo, ox_hi) = valid_out_range(w, ow, s, kx, pl);
                        for oy in oy_lo..oy_hi {
                            let iy = oy * s + ky - pt;
                            let irow = ib + iy * w;
                            let mrow = mb + oy * ow;
                            for ox in ox_lo..ox_hi {
                                let ix = ox * s + kx - pl;
                                mid.data[mrow + ox] += kval * x.data[irow + ix];
                            }
                        }
                    }
                }
            }
        }

        // pointwise stage
        let plane = oh * ow;
        let mut out = Tensor::zeros(&[n, f, oh, ow]);
        for ni in 0..n {
            for fi in 0..f {
                let ob = ((ni * f) + fi) * plane;
                let b = self.bias.value.data[fi];
                out.data[ob..ob + plane].iter_mut().for_each(|v| *v = b);
                for ci in 0..c {
                    let kp = self.pointwise.value.data[fi * c + ci];
                    if kp == 0.0 {
                        continue;
                    }
                    let mb = ((ni * c) + ci) * plane;
                    for i in 0..plane {
                        out.data[ob + i] += kp * mid.data[mb + i];
                    }
                }
            }
        }

        self.cache_input = Some(x.clone());
        self.cache_mid = Some(mid);
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NetError> {
        let x = self
            .cache_input
            .as_ref()
            .ok_or_else(|| NetError::ShapeMismatch("sepconv backward before forward".into()))?;
        let mid = self.cache_mid.as_ref().unwrap();
        let (n, c, h, w) = x.dims4()?;
        let dws = &self.depthwise.value.shape;
        let (kh, kw) = (dws[1], dws[2]);
        let f = self.pointwise.value.shape[0];
        let (_, _, oh, ow) = grad.dims4()?;
        let plane = oh * ow;
        let s = self.stride;
        let (_, pt) = out_and_pad(h, kh, s, self.padding)?;
        let (_, pl) = out_and_pad(w, kw, s, self.padding)?;

        // back through pointwise
        let mut dmid = Tensor::zeros(&mid.shape);
        for ni in 0..n {
            for fi in 0..f {
                let gb = ((ni * f) + fi) * plane;
                let mut db = 0.0;
                for g in &grad.data[gb..gb + plane] {
                    db += g;
                }
                self.bias.grad.data[fi] += db;
                for ci in 0..c {
                    let mb = ((ni * c) + ci) * plane;
                    let kp = self.pointwise.value.data[fi * c + ci];
                    let mut dkp = 0.0;
                    for i in 0..plane {
                        let g = grad.data[gb + i];
                        dkp += g * mid.data[mb + i];
                        dmid.data[mb + i] += g * kp;
                    }
                    self.pointwise.grad.data[fi * c + ci] += dkp;
                }
            }
        }

        // back through depthwise
        let mut dx = Tensor::zeros(&x.shape);
        for ni in 0..n {
            for ci in 0..c {
                let ib = ((ni * c) + ci) * h * w;
                let mb = ((ni * c) + ci) * plane;
                for ky in 0..kh {
                    let (oy_lo, oy_hi) = valid_out_range(h, oh, s, ky, pt);
                    for kx in 0..kw {
                        let kidx = (ci * kh + ky) * kw + kx;
                        let kval = self.depthwise.value.data[kidx];
                        let (ox_lo, ox_hi) = valid_out_range(w, ow, s, kx, pl);
                        let mut dk = 0.0;
                        for oy in oy_lo..oy_hi {
                            let iy = oy * s + ky - pt;
                            let irow = ib + iy * w;
                            let mrow = mb + oy * ow;
                            for ox in ox_lo..ox_hi {
                                let ix = ox * s + kx - pl;
                                let g = dmid.data[mrow + ox];
                                dk += g * x.data[irow + ix];
                                dx.data[irow + ix] += g * kval;
                            }
                        }
                        self.depthwise.grad.data[kidx] += dk;
                    }
                }
            }
        }
        Ok(dx)
    }

    fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.depthwise, &mut self.pointwise, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------
// BatchNorm2d

pub struct BatchNorm2d {
    pub gamma: Param, // (C,)
    pub beta: Param,  // (C,)
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
    pub momentum: f64,
    name: String,
    cache: Option<BnCache>,
}

struct BnCache {
    xhat: Tensor,
    ivar: Vec<f64>, // per channel, 1/sqrt(var + eps)
    phase: Phase,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), Tensor::from_vec(&[channels], vec![1.0; channels]).unwrap()),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::from_vec(&[channels], vec![1.0; channels]).unwrap(),
            eps: 1e-5,
            momentum: 0.9,
            name: name.to_string(),
            cache: None,
        }
    }
}

impl Layer for BatchNorm2d {
    fn forward(&mut self, x: &Tensor, phase: Phase) -> Result<Tensor, NetError> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.gamma.value.shape[0] {
            return Err(NetError::ShapeMismatch(format!(
                "batchnorm has {} channels, input has {c}",
                self.gamma.value.shape[0]
            )));
        }
        let plane = h * w;
        let m = (n * plane) as f64;
        let mut out = Tensor::zeros(&x.shape);
        let mut xhat = Tensor::zeros(&x.shape);
        let mut ivars = vec![0.0; c];

        for ci in 0..c {
            let (mean, var) = match phase {
                Phase::Train => {
                    let mut sum = 0.0;
                    for ni in 0..n {
                        let b = ((ni * c) + ci) * plane;
                        for v in &x.data[b..b + plane] {
                            sum += v;
                        }
                    }
                    let mean = sum / m;
                    let mut sq = 0.0;
                    for ni in 0..n {
                        let b = ((ni * c) + ci) * plane;
                        for v in &x.data[b..b + plane] {
                            let d = v - mean;
                            sq += d * d;
                        }
                    }
                    let var = sq / m;
                    self.running_mean.data[ci] =
                        self.momentum * self.running_mean.data[ci] + (1.0 - self.momentum) * mean;
                    self.running_var.data[ci] =
                        self.momentum * self.running_var.data[ci] + (1.0 - self.momentum) * var;
                    (mean, var)
                }
                Phase::Infer => (self.running_mean.data[ci], self.running_var.data[ci]),
            };
            let ivar = 1.0 / (var + self.eps).sqrt();
            ivars[ci] = ivar;
            let g = self.gamma.value.data[ci];
            let b_ = self.beta.value.data[ci];
            for ni in 0..n {
                let b = ((ni * c) + ci) * plane;
                for i in b..b + plane {
                    let xh = (x.data[i] - mean) * ivar;
                    xhat.data[i] = xh;
                    out.data[i] = g * xh + b_;
                }
            }
        }
        self.cache = Some(BnCache { xhat, ivar: ivars, phase });
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NetError> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| NetError::ShapeMismatch("batchnorm backward before forward".into()))?;
        let (n, c, h, w) = grad.dims4()?;
        let plane = h * w;
        let m = (n * plane) as f64;
        let mut dx = Tensor::zeros(&grad.shape);

        for ci in 0..c {
            let mut dbeta = 0.0;
            let mut dgamma = 0.0;
            for ni in 0..n {
                let b = ((ni * c) + ci) * plane;
                for i in b..b + plane {
                    dbeta += grad.data[i];
                    dgamma += grad.data[i] * cache.xhat.data[i];
                }
            }
            self.beta.grad.data[ci] += dbeta;
            self.gamma.grad.data[ci] += dgamma;

            let g = self.gamma.value.data[ci];
            let ivar = cache.ivar[ci];
            match cache.phase {
                Phase::Train => {
                    for ni in 0..n {
                        let b = ((ni * c) + ci) * plane;
                        for i in b..b + plane {
                            dx.data[i] = g * ivar
                                * (grad.data[i] - dbeta / m - cache.xhat.data[i] * dgamma / m);
                        }
                    }
                }
                Phase::Infer => {
                    // running stats are constants; the map is affine
                    for ni in 0..n {
                        let b = ((ni * c) + ci) * plane;
                        for i in b..b + plane {
                            dx.data[i] = g * ivar * grad.data[i];
                        }
                    }
                }
            }
        }
        Ok(dx)
    }

    fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn state_tensors(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            (format!("{}.gamma", self.name), &mut self.gamma.value),
            (format!("{}.beta", self.name), &mut self.beta.value),
            (format!("{}.running_mean", self.name), &mut self.running_mean),
            (format!("{}.running_var", self.name), &mut self.running_var),
        ]
    }
}

// ---------------------------------------------------------------------------
// ReLU

#[derive(Default)]
pub struct Relu {
    mask: Vec<bool>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Relu {
    fn forward(&mut self, x: &Tensor, _phase: Phase) -> Result<Tensor, NetError> {
        self.mask = x.data.iter().map(|&v| v > 0.0).collect();
        let data = x.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        Ok(Tensor { shape: x.shape.clone(), data })
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NetError> {
        if grad.data.len() != self.mask.len() {
            return Err(NetError::ShapeMismatch("relu grad size".into()));
        }
        let data = grad
            .data
            .iter()
            .zip(self.mask.iter())
            .map(|(&g, &m)| if m { g } else { 0.0 })
            .collect();
        Ok(Tensor { shape: grad.shape.clone(), data })
    }
}

// ---------------------------------------------------------------------------
// MaxPool2d

pub struct MaxPool2d {
    pub window: usize,
    pub stride: usize,
    pub padding: Padding,
    cache: Option<(Vec<usize>, Vec<usize>)>, // (input shape, argmax flat index per output)
}

impl MaxPool2d {
    pub fn new(window: usize, stride: usize, padding: Padding) -> Self {
        Self { window, stride, padding, cache: None }
    }
}

impl Layer for MaxPool2d {
    fn forward(&mut self, x: &Tensor, _phase: Phase) -> Result<Tensor, NetError> {
        let (n, c, h, w) = x.dims4()?;
        let k = self.window;
        let s = self.stride;
        let (oh, pt) = out_and_pad(h, k, s, self.padding)?;
        let (ow, pl) = out_and_pad(w, k, s, self.padding)?;
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let mut argmax = vec![0usize; n * c * oh * ow];
        for ni in 0..n {
            for ci in 0..c {
                let ib = ((ni * c) + ci) * h * w;
                let ob = ((ni * c) + ci) * oh * ow;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_i = usize::MAX;
                        // first-in-scan-order tie break: strict >
                        for ky in 0..k {
                            let iy = oy * s + ky;
                            if iy < pt || iy - pt >= h {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = ox * s + kx;
                                if ix < pl || ix - pl >= w {
                                    continue;
                                }
                                let idx = ib + (iy - pt) * w + (ix - pl);
                                if x.data[idx] > best {
                                    best = x.data[idx];
                                    best_i = idx;
                                }
                            }
                        }
                        if best_i == usize::MAX {
                            return Err(NetError::ShapeMismatch(
                                "maxpool window fully outside input".into(),
                            ));
                        }
                        out.data[ob + oy * ow + ox] = best;
                        argmax[ob + oy * ow + ox] = best_i;
                    }
                }
            }
        }
        self.cache = Some((x.shape.clone(), argmax));
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NetError> {
        let (shape, argmax) = self
            .cache
            .as_ref()
            .ok_or_else(|| NetError::ShapeMismatch("maxpool backward before forward".into()))?;
        if grad.data.len() != argmax.len() {
            return Err(NetError::ShapeMismatch("maxpool grad size".into()));
        }
        let mut dx = Tensor::zeros(shape);
        for (i, &src) in argmax.iter().enumerate() {
            dx.data[src] += grad.data[i];
        }
        Ok(dx)
    }
}

// ---------------------------------------------------------------------------
// GlobalAvgPool

#[derive(Default)]
pub struct GlobalAvgPool {
    cache_shape: Vec<usize>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, x: &Tensor, _phase: Phase) -> Result<Tensor, NetError> {
        let (n, c, h, w) = x.dims4()?;
        let plane = h * w;
        let mut out = Tensor::zeros(&[n, c]);
        for ni in 0..n {
            for ci in 0..c {
                let b = ((ni * c) + ci) * plane;
                let sum: f64 = x.data[b..b + plane].iter().sum();
                out.data[ni * c + ci] = sum / plane as f64;
            }
        }
        self.cache_shape = x.shape.clone();
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NetError> {
        let (n, c, h, w) = (
            self.cache_shape[0],
            self.cache_shape[1],
            self.cache_shape[2],
            self.cache_shape[3],
        );
        let plane = h * w;
        let mut dx = Tensor::zeros(&self.cache_shape);
        for ni in 0..n {
            for ci in 0..c {
                let g = grad.data[ni * c + ci] / plane as f64;
                let b = ((ni * c) + ci) * plane;
                dx.data[b..b + plane].iter_mut().for_each(|v| *v = g);
            }
        }
        Ok(dx)
    }
}

// ---------------------------------------------------------------------------
// Flatten

#[derive(Default)]
pub struct Flatten {
    cache_shape: Vec<usize>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Flatten {
    fn forward(&mut self, x: &Tensor, _phase: Phase) -> Result<Tensor, NetError> {
        let n = x.shape[0];
        let rest: usize = x.shape[1..].iter().product();
        self.cache_shape = x.shape.clone();
        Ok(Tensor { shape: vec![n, rest], data: x.data.clone() })
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NetError> {
        Ok(Tensor { shape: self.cache_shape.clone(), data: grad.data.clone() })
    }
}

// ---------------------------------------------------------------------------
// Dense

pub struct Dense {
    pub weight: Param, // (D, F)
    pub bias: Param,   // (F,)
    cache_input: Option<Tensor>,
}

impl Dense {
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut ChaCha20Rng) -> Self {
        let w = he_uniform(&[d_in, d_out], d_in, rng);
        Self {
            weight: Param::new(format!("{name}.weight"), w),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[d_out])),
            cache_input: None,
        }
    }
}

impl Layer for Dense {
    fn forward(&mut self, x: &Tensor, _phase: Phase) -> Result<Tensor, NetError> {
        let (n, d) = x.dims2()?;
        let (wd, f) = (self.weight.value.shape[0], self.weight.value.shape[1]);
        if wd != d {
            return Err(NetError::ShapeMismatch(format!(
                "dense expects {wd} inputs, got {d}"
            )));
        }
        let mut out = Tensor::zeros(&[n, f]);
        for ni in 0..n {
            for fi in 0..f {
                let mut acc = self.bias.value.data[fi];
                for di in 0..d {
                    acc += x.data[ni * d + di] * self.weight.value.data[di * f + fi];
                }
                out.data[ni * f + fi] = acc;
            }
        }
        self.cache_input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NetError> {
        let x = self
            .cache_input
            .as_ref()
            .ok_or_else(|| NetError::ShapeMismatch("dense backward before forward".into()))?;
        let (n, d) = x.dims2()?;
        let f = self.weight.value.shape[1];
        let mut dx = Tensor::zeros(&x.shape);
        for ni in 0..n {
            for fi in 0..f {
                let g = grad.data[ni * f + fi];
                self.bias.grad.data[fi] += g;
                for di in 0..d {
                    self.weight.grad.data[di * f + fi] += g * x.data[ni * d + di];
                    dx.data[ni * d + di] += g * self.weight.value.data[di * f + fi];
                }
            }
        }
        Ok(dx)
    }

    fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------
// Sequential

#[derive(Default)]
pub struct Sequential {
    pub layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    pub fn new(layers: Vec<Box<dyn Layer>>) -> Self {
        Self { layers }
    }

    pub fn push(&mut self, layer: Box<dyn Layer>) {
        self.layers.push(layer);
    }
}

impl Layer for Sequential {
    fn forward(&mut self, x: &Tensor, phase: Phase) -> Result<Tensor, NetError> {
        let mut cur = x.clone();
        for l in &mut self.layers {
            cur = l.forward(&cur, phase)?;
        }
        Ok(cur)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NetError> {
        let mut cur = grad.clone();
        for l in self.layers.iter_mut().rev() {
            cur = l.backward(&cur)?;
        }
        Ok(cur)
    }

    fn params(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params()).collect()
    }

    fn state_tensors(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers.iter_mut().flat_map(|l| l.state_tensors()).collect()
    }
}

/// Channel-axis concatenation of same-N,H,W tensors, plus the inverse split
/// used by backward passes of branching blocks.
pub fn concat_channels(inputs: &[&Tensor]) -> Result<Tensor, NetError> {
    if inputs.is_empty() {
        return Err(NetError::ShapeMismatch("concat of zero tensors".into()));
    }
    let (n, _, h, w) = inputs[0].dims4()?;
    let mut total_c = 0;
    for t in inputs {
        let (tn, tc, th, tw) = t.dims4()?;
        if tn != n || th != h || tw != w {
            return Err(NetError::ShapeMismatch(format!(
                "concat: {:?} vs {:?}",
                inputs[0].shape, t.shape
            )));
        }
        total_c += tc;
    }
    let plane = h * w;
    let mut out = Tensor::zeros(&[n, total_c, h, w]);
    for ni in 0..n {
        let mut coff = 0;
        for t in inputs {
            let tc = t.shape[1];
            let src = ni * tc * plane;
            let dst = (ni * total_c + coff) * plane;
            out.data[dst..dst + tc * plane].copy_from_slice(&t.data[src..src + tc * plane]);
            coff += tc;
        }
    }
    Ok(out)
}

pub fn split_channels(grad: &Tensor, channel_counts: &[usize]) -> Result<Vec<Tensor>, NetError> {
    let (n, c, h, w) = grad.dims4()?;
    if channel_counts.iter().sum::<usize>() != c {
        return Err(NetError::ShapeMismatch("split: channel counts mismatch".into()));
    }
    let plane = h * w;
    let mut parts = Vec::with_capacity(channel_counts.len());
    let mut coff = 0;
    for &tc in channel_counts {
        let mut t = Tensor::zeros(&[n, tc, h, w]);
        for ni in 0..n {
            let src = (ni * c + coff) * plane;
            let dst = ni * tc * plane;
            t.data[dst..dst + tc * plane].copy_from_slice(&grad.data[src..src + tc * plane]);
        }
        coff += tc;
        parts.push(t);
    }
    Ok(parts)
}
