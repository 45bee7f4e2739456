//! Loss heads. The model body emits raw logits; the head applies sigmoid or
//! softmax, computes the mean loss, and produces the logit gradient.

use super::tensor::{NetError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// 1-logit head, sigmoid + binary cross-entropy.
    SigmoidBce,
    /// 2-logit head, softmax + cross-entropy; class index 1 is positive.
    SoftmaxCe,
}

impl LossKind {
    /// Mean loss over the batch and the gradient w.r.t. the logits.
    pub fn loss_and_grad(&self, logits: &Tensor, labels: &[u8]) -> Result<(f64, Tensor), NetError> {
        let (n, k) = logits.dims2()?;
        if labels.len() != n {
            return Err(NetError::ShapeMismatch("labels length != batch".into()));
        }
        let mut grad = Tensor::zeros(&logits.shape);
        let mut loss = 0.0;
        match self {
            LossKind::SigmoidBce => {
                if k != 1 {
                    return Err(NetError::ShapeMismatch("sigmoid-BCE expects 1 logit".into()));
                }
                for i in 0..n {
                    let y = labels[i] as f64;
                    let p = sigmoid(logits.data[i]).clamp(1e-12, 1.0 - 1e-12);
                    loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
                    grad.data[i] = (p - y) / n as f64;
                }
            }
            LossKind::SoftmaxCe => {
                if k != 2 {
                    return Err(NetError::ShapeMismatch("softmax-CE expects 2 logits".into()));
                }
                for i in 0..n {
                    let y = labels[i] as usize;
                    let p = softmax2(logits.data[i * 2], logits.data[i * 2 + 1]);
                    loss -= p[y].max(1e-12).ln();
                    for j in 0..2 {
                        let t = if j == y { 1.0 } else { 0.0 };
                        grad.data[i * 2 + j] = (p[j] - t) / n as f64;
                    }
                }
            }
        }
        Ok((loss / n as f64, grad))
    }

    /// Positive-class score in [0, 1] per sample.
    pub fn scores(&self, logits: &Tensor) -> Result<Vec<f64>, NetError> {
        let (n, k) = logits.dims2()?;
        match self {
            LossKind::SigmoidBce => {
                if k != 1 {
                    return Err(NetError::ShapeMismatch("sigmoid head expects 1 logit".into()));
                }
                Ok((0..n).map(|i| sigmoid(logits.data[i])).collect())
            }
            LossKind::SoftmaxCe => {
                if k != 2 {
                    return Err(NetError::ShapeMismatch("softmax head expects 2 logits".into()));
                }
                Ok((0..n)
                    .map(|i| softmax2(logits.data[i * 2], logits.data[i * 2 + 1])[1])
                    .collect())
            }
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn softmax2(a: f64, b: f64) -> [f64; 2] {
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    let s = ea + eb;
    [ea / s, eb / s]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one_and_sigmoid_in_open_interval() {
        for (a, b) in [(0.0, 0.0), (100.0, -100.0), (-3.5, 7.25), (1e8, 1e8)] {
            let p = softmax2(a, b);
            assert!((p[0] + p[1] - 1.0).abs() <= 1e-12);
        }
        for z in [-30.0, -10.0, 0.0, 10.0, 30.0] {
            let s = sigmoid(z);
            assert!(s > 0.0 && s < 1.0);
        }
        // extreme logits saturate but never leave [0, 1] or go non-finite
        for z in [-800.0, 800.0] {
            let s = sigmoid(z);
            assert!((0.0..=1.0).contains(&s) && s.is_finite());
        }
    }

    #[test]
    fn bce_gradient_matches_finite_difference() {
        let logits = Tensor::from_vec(&[3, 1], vec![0.3, -1.2, 2.0]).unwrap();
        let labels = [1u8, 0, 1];
        let (_, g) = LossKind::SigmoidBce.loss_and_grad(&logits, &labels).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut lp = logits.clone();
            lp.data[i] += h;
            let mut lm = logits.clone();
            lm.data[i] -= h;
            let (fp, _) = LossKind::SigmoidBce.loss_and_grad(&lp, &labels).unwrap();
            let (fm, _) = LossKind::SigmoidBce.loss_and_grad(&lm, &labels).unwrap();
            let num = (fp - fm) / (2.0 * h);
            assert!((g.data[i] - num).abs() < 1e-7, "{} vs {num}", g.data[i]);
        }
    }

    #[test]
    fn ce_gradient_matches_finite_difference() {
        let logits = Tensor::from_vec(&[2, 2], vec![0.3, -1.2, 2.0, 0.1]).unwrap();
        let labels = [1u8, 0];
        let (_, g) = LossKind::SoftmaxCe.loss_and_grad(&logits, &labels).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut lp = logits.clone();
            lp.data[i] += h;
            let mut lm = logits.clone();
            lm.data[i] -= h;
            let (fp, _) = LossKind::SoftmaxCe.loss_and_grad(&lp, &labels).unwrap();
            let (fm, _) = LossKind::SoftmaxCe.loss_and_grad(&lm, &labels).unwrap();
            let num = (fp - fm) / (2.0 * h);
            assert!((g.data[i] - num).abs() < 1e-7);
        }
    }
}
