//! Architecture builders and batch prediction.

use super::blocks::{InceptionModule, InceptionSpec, ResidualUnit, ResidualUnitSpec, XceptionUnit, XceptionUnitSpec};
use super::layer::{
    BatchNorm2d, Conv2d, Dense, Flatten, GlobalAvgPool, Layer, MaxPool2d, Padding, Param, Phase,
    Relu, SepConv2d, Sequential,
};
use super::loss::LossKind;
use super::tensor::{NetError, Tensor};
use crate::imagecore::{pad_to_square_gray, resize_bilinear_gray, GrayImage};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Resnet,
    Googlenet,
    Xception,
}

impl Arch {
    pub fn id(&self) -> u8 {
        match self {
            Arch::Resnet => 0,
            Arch::Googlenet => 1,
            Arch::Xception => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Arch::Resnet),
            1 => Some(Arch::Googlenet),
            2 => Some(Arch::Xception),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Arch::Resnet => "resnet",
            Arch::Googlenet => "googlenet",
            Arch::Xception => "xception",
        }
    }
}

impl std::str::FromStr for Arch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "resnet" => Ok(Arch::Resnet),
            "googlenet" => Ok(Arch::Googlenet),
            "xception" => Ok(Arch::Xception),
            other => Err(format!("unknown architecture '{other}'")),
        }
    }
}

/// `Paper` keeps the published filter widths; `Tiny` divides them by 8
/// (floor 4) for desk-scale training and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidthPreset {
    Paper,
    Tiny,
}

impl WidthPreset {
    fn scale(&self, filters: usize) -> usize {
        match self {
            WidthPreset::Paper => filters,
            WidthPreset::Tiny => (filters / 8).max(4),
        }
    }

    pub fn id(&self) -> u8 {
        match self {
            WidthPreset::Paper => 0,
            WidthPreset::Tiny => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(WidthPreset::Paper),
            1 => Some(WidthPreset::Tiny),
            _ => None,
        }
    }
}

impl std::str::FromStr for WidthPreset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(WidthPreset::Paper),
            "tiny" => Ok(WidthPreset::Tiny),
            other => Err(format!("unknown width preset '{other}'")),
        }
    }
}

pub struct Model {
    pub arch: Arch,
    pub input_size: usize,
    pub preset: WidthPreset,
    pub loss: LossKind,
    pub body: Sequential,
    /// Set once weights have been trained or loaded from a file.
    pub trained: bool,
}

impl Model {
    pub fn forward(&mut self, x: &Tensor, phase: Phase) -> Result<Tensor, NetError> {
        self.body.forward(x, phase)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NetError> {
        self.body.backward(grad)
    }

    pub fn params(&mut self) -> Vec<&mut Param> {
        self.body.params()
    }

    pub fn state_tensors(&mut self) -> Vec<(String, &mut Tensor)> {
        self.body.state_tensors()
    }

    pub fn zero_grads(&mut self) {
        for p in self.body.params() {
            p.grad.data.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Trainable parameter count (batchnorm running stats excluded).
    pub fn param_count(&mut self) -> usize {
        self.body.params().iter().map(|p| p.value.numel()).sum()
    }

    /// Positive-class scores for an already-assembled input batch,
    /// inference phase.
    pub fn scores(&mut self, x: &Tensor) -> Result<Vec<f64>, NetError> {
        let logits = self.forward(x, Phase::Infer)?;
        self.loss.scores(&logits)
    }
}

/// Build one of the three architectures with seeded He-uniform weights.
/// Input is a single grayscale channel at `input_size` x `input_size`.
pub fn build_model(
    arch: Arch,
    input_size: usize,
    preset: WidthPreset,
    init_seed: u64,
) -> Result<Model, NetError> {
    if ![224, 112, 64].contains(&input_size) {
        return Err(NetError::UnsupportedInputSize(input_size));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(init_seed);
    let s = |f: usize| preset.scale(f);

    let (body, loss) = match arch {
        Arch::Resnet => {
            let mut layers: Vec<Box<dyn Layer>> = vec![
                Box::new(Conv2d::new("stem.conv", 1, s(64), 7, 2, Padding::Same, &mut rng)),
                Box::new(BatchNorm2d::new("stem.bn", s(64))),
                Box::new(Relu::new()),
                Box::new(MaxPool2d::new(3, 2, Padding::Same)),
            ];
            let mut in_ch = s(64);
            for (i, (f, st)) in [(64, 1), (128, 2), (256, 2), (512, 2)].iter().enumerate() {
                let f = s(*f);
                layers.push(Box::new(ResidualUnit::new(
                    &format!("ru{}", i + 1),
                    in_ch,
                    ResidualUnitSpec { filters: f, stride: *st },
                    &mut rng,
                )));
                in_ch = f;
            }
            layers.push(Box::new(GlobalAvgPool::new()));
            layers.push(Box::new(Dense::new("fc1", in_ch, 32, &mut rng)));
            layers.push(Box::new(Relu::new()));
            layers.push(Box::new(Dense::new("fc2", 32, 2, &mut rng)));
            layers.push(Box::new(Relu::new()));
            layers.push(Box::new(Dense::new("fc3", 2, 1, &mut rng)));
            (Sequential::new(layers), LossKind::SigmoidBce)
        }
        Arch::Googlenet => {
            let mut layers: Vec<Box<dyn Layer>> = vec![
                Box::new(Conv2d::new("stem.conv", 1, s(64), 7, 2, Padding::Same, &mut rng)),
                Box::new(BatchNorm2d::new("stem.bn", s(64))),
                Box::new(Relu::new()),
                Box::new(MaxPool2d::new(3, 2, Padding::Same)),
            ];
            let specs = [
                InceptionSpec { b1: 64, b3_reduce: 96, b3: 128, b5_reduce: 16, b5: 32, pool_proj: 32 },
                InceptionSpec { b1: 192, b3_reduce: 96, b3: 208, b5_reduce: 16, b5: 48, pool_proj: 64 },
                InceptionSpec { b1: 160, b3_reduce: 112, b3: 224, b5_reduce: 24, b5: 64, pool_proj: 64 },
                InceptionSpec { b1: 128, b3_reduce: 128, b3: 256, b5_reduce: 24, b5: 64, pool_proj: 64 },
                InceptionSpec { b1: 384, b3_reduce: 192, b3: 384, b5_reduce: 48, b5: 128, pool_proj: 128 },
            ];
            let specs: Vec<InceptionSpec> = specs
                .iter()
                .map(|sp| match preset {
                    WidthPreset::Paper => *sp,
                    WidthPreset::Tiny => sp.scaled(8, 4),
                })
                .collect();
            let mut in_ch = s(64);
            layers.push(Box::new(InceptionModule::new("inc1", in_ch, specs[0], &mut rng)));
            in_ch = specs[0].out_channels();
            layers.push(Box::new(MaxPool2d::new(3, 2, Padding::Same)));
            for (i, sp) in specs[1..4].iter().enumerate() {
                layers.push(Box::new(InceptionModule::new(&format!("inc{}", i + 2), in_ch, *sp, &mut rng)));
                in_ch = sp.out_channels();
            }
            layers.push(Box::new(MaxPool2d::new(3, 2, Padding::Same)));
            layers.push(Box::new(InceptionModule::new("inc5", in_ch, specs[4], &mut rng)));
            in_ch = specs[4].out_channels();
            layers.push(Box::new(GlobalAvgPool::new()));
            layers.push(Box::new(Dense::new("fc1", in_ch, 32, &mut rng)));
            layers.push(Box::new(Relu::new()));
            layers.push(Box::new(Dense::new("fc2", 32, 2, &mut rng)));
            layers.push(Box::new(Relu::new()));
            layers.push(Box::new(Dense::new("fc3", 2, 1, &mut rng)));
            (Sequential::new(layers), LossKind::SigmoidBce)
        }
        Arch::Xception => {
            let mut layers: Vec<Box<dyn Layer>> = vec![
                Box::new(SepConv2d::new("stem.sep", 1, s(32), 3, 2, Padding::Same, &mut rng)),
                Box::new(BatchNorm2d::new("stem.bn", s(32))),
                Box::new(Relu::new()),
            ];
            layers.push(Box::new(XceptionUnit::new(
                "entry",
                s(32),
                XceptionUnitSpec { filters: s(64), is_entry_exit: true, is_first: true },
                &mut rng,
            )));
            for i in 0..3 {
                layers.push(Box::new(XceptionUnit::new(
                    &format!("mid{}", i + 1),
                    s(64),
                    XceptionUnitSpec { filters: s(64), is_entry_exit: false, is_first: false },
                    &mut rng,
                )));
            }
            layers.push(Box::new(XceptionUnit::new(
                "exit",
                s(64),
                XceptionUnitSpec { filters: s(128), is_entry_exit: true, is_first: false },
                &mut rng,
            )));
            layers.push(Box::new(SepConv2d::new("tail.sep", s(128), s(64), 3, 1, Padding::Same, &mut rng)));
            layers.push(Box::new(BatchNorm2d::new("tail.bn", s(64))));
            layers.push(Box::new(Relu::new()));
            layers.push(Box::new(Flatten::new()));
            // stem /2, entry pool /2, exit pool /2
            let side = input_size / 8;
            layers.push(Box::new(Dense::new("fc", s(64) * side * side, 2, &mut rng)));
            (Sequential::new(layers), LossKind::SoftmaxCe)
        }
    };

    Ok(Model { arch, input_size, preset, loss, body, trained: false })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub positive: bool,
    pub score: f64,
}

/// Preprocess grayscale crops (pad to square with white fill, bilinear
/// resize to the model input, scale to [0,1]) and run an inference-phase
/// forward pass. Order-preserving.
pub fn predict_batch(model: &mut Model, images: &[GrayImage]) -> Result<Vec<Prediction>, NetError> {
    if !model.trained {
        return Err(NetError::ModelNotTrained);
    }
    let size = model.input_size;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(16) {
        if chunk.is_empty() {
            continue;
        }
        let mut data = Vec::with_capacity(chunk.len() * size * size);
        for img in chunk {
            let sq = pad_to_square_gray(img, 255);
            let rs = resize_bilinear_gray(&sq, size, size);
            data.extend(rs.data.iter().map(|&v| v as f64 / 255.0));
        }
        let x = Tensor::from_vec(&[chunk.len(), 1, size, size], data)?;
        let scores = model.scores(&x)?;
        for sc in scores {
            out.push(Prediction { positive: sc >= 0.5, score: sc });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unsupported_input_size() {
        assert!(matches!(
            build_model(Arch::Resnet, 100, WidthPreset::Tiny, 0),
            Err(NetError::UnsupportedInputSize(100))
        ));
    }

    #[test]
    fn tiny_resnet_forward_shape_and_range() {
        let mut m = build_model(Arch::Resnet, 64, WidthPreset::Tiny, 7).unwrap();
        let x = Tensor::zeros(&[2, 1, 64, 64]);
        let y = m.forward(&x, Phase::Infer).unwrap();
        assert_eq!(y.shape, vec![2, 1]);
        let scores = m.loss.scores(&y).unwrap();
        assert!(scores.iter().all(|&s| s > 0.0 && s < 1.0));
    }

    #[test]
    fn tiny_googlenet_forward_shape() {
        let mut m = build_model(Arch::Googlenet, 64, WidthPreset::Tiny, 7).unwrap();
        let x = Tensor::zeros(&[1, 1, 64, 64]);
        let y = m.forward(&x, Phase::Infer).unwrap();
        assert_eq!(y.shape, vec![1, 1]);
    }

    #[test]
    fn tiny_xception_forward_softmax_sums_to_one() {
        let mut m = build_model(Arch::Xception, 64, WidthPreset::Tiny, 7).unwrap();
        let x = Tensor::zeros(&[3, 1, 64, 64]);
        let y = m.forward(&x, Phase::Infer).unwrap();
        assert_eq!(y.shape, vec![3, 2]);
        for i in 0..3 {
            let p = super::super::loss::softmax2(y.data[i * 2], y.data[i * 2 + 1]);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_untrained_errors_and_empty_is_empty() {
        let mut m = build_model(Arch::Xception, 64, WidthPreset::Tiny, 7).unwrap();
        let img = GrayImage::filled(30, 20, 128);
        assert!(matches!(
            predict_batch(&mut m, &[img.clone()]),
            Err(NetError::ModelNotTrained)
        ));
        m.trained = true;
        assert!(predict_batch(&mut m, &[]).unwrap().is_empty());
        // duplicated image gets identical scores; batch-size invariance
        let two = predict_batch(&mut m, &[img.clone(), img.clone()]).unwrap();
        assert_eq!(two[0].score, two[1].score);
        let one = predict_batch(&mut m, &[img]).unwrap();
        assert!((one[0].score - two[0].score).abs() < 1e-12);
    }

    #[test]
    fn same_seed_builds_identical_models() {
        let mut a = build_model(Arch::Xception, 64, WidthPreset::Tiny, 5).unwrap();
        let mut b = build_model(Arch::Xception, 64, WidthPreset::Tiny, 5).unwrap();
        let pa = a.params();
        let pb = b.params();
        assert_eq!(pa.len(), pb.len());
        for (x, y) in pa.iter().zip(pb.iter()) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.value.data, y.value.data);
        }
    }
}
