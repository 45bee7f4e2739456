//! Central finite-difference verification of analytic gradients.
//!
//! The objective is s = sum(c .* f(x)) for a fixed random direction c, so
//! the analytic gradient is exactly `backward(c)`. Every parameter element
//! and every input element is perturbed with a relative step of 1e-5.

use super::layer::{zero_grads, Layer, Phase};
use super::tensor::{NetError, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Max relative error per tensor: parameter names plus "input".
    pub entries: Vec<(String, f64)>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (name, err) in &self.entries {
            writeln!(f, "  {name}: max rel err {err:.3e}")?;
        }
        write!(
            f,
            "  overall {:.3e} {} tolerance {:.1e}: {}",
            self.max_rel_err,
            if self.pass { "<" } else { ">=" },
            self.tolerance,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    // floor on the denominator keeps FD round-off noise from dominating
    // near-zero gradients
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Check every parameter of `layer` plus the input gradient against central
/// finite differences on a seeded random input of `input_shape`.
pub fn grad_check(
    layer: &mut dyn Layer,
    input_shape: &[usize],
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport, NetError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = Tensor {
        shape: input_shape.to_vec(),
        data: (0..input_shape.iter().product::<usize>())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    };

    // one forward to learn the output shape, then a fixed direction c
    let y0 = layer.forward(&x, Phase::Train)?;
    let c = Tensor {
        shape: y0.shape.clone(),
        data: (0..y0.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    };

    // analytic gradients
    zero_grads(layer);
    let _ = layer.forward(&x, Phase::Train)?;
    let dx = layer.backward(&c)?;
    let analytic: Vec<(String, Vec<f64>)> = layer
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.grad.data.clone()))
        .collect();

    let objective = |layer: &mut dyn Layer, x: &Tensor| -> Result<f64, NetError> {
        let y = layer.forward(x, Phase::Train)?;
        Ok(y.data.iter().zip(c.data.iter()).map(|(a, b)| a * b).sum())
    };

    let mut entries = Vec::new();

    // parameters
    let n_params = layer.params().len();
    for pi in 0..n_params {
        let (name, len) = {
            let ps = layer.params();
            (ps[pi].name.clone(), ps[pi].value.numel())
        };
        let mut worst = 0.0f64;
        for j in 0..len {
            let orig = layer.params()[pi].value.data[j];
            let h = 1e-5 * (1.0 + orig.abs());
            layer.params()[pi].value.data[j] = orig + h;
            let fp = objective(layer, &x)?;
            layer.params()[pi].value.data[j] = orig - h;
            let fm = objective(layer, &x)?;
            layer.params()[pi].value.data[j] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            worst = worst.max(rel_err(analytic[pi].1[j], numeric));
        }
        entries.push((name, worst));
    }

    // input
    let mut xm = x.clone();
    let mut worst = 0.0f64;
    for j in 0..xm.numel() {
        let orig = xm.data[j];
        let h = 1e-5 * (1.0 + orig.abs());
        xm.data[j] = orig + h;
        let fp = objective(layer, &xm)?;
        xm.data[j] = orig - h;
        let fm = objective(layer, &xm)?;
        xm.data[j] = orig;
        let numeric = (fp - fm) / (2.0 * h);
        worst = worst.max(rel_err(dx.data[j], numeric));
    }
    entries.push(("input".into(), worst));

    let max_rel_err = entries.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport { pass: max_rel_err < tolerance, entries, max_rel_err, tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::layer::{Dense, Padding, SepConv2d};

    #[test]
    fn linear_layer_is_exact_to_fd_precision() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut d = Dense::new("d", 6, 4, &mut rng);
        let r = grad_check(&mut d, &[3, 6], 1e-7, 11).unwrap();
        assert!(r.pass, "{r}");
    }

    #[test]
    fn sepconv_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let mut s = SepConv2d::new("s", 2, 3, 3, 2, Padding::Same, &mut rng);
        let r = grad_check(&mut s, &[2, 2, 5, 5], 1e-4, 12).unwrap();
        assert!(r.pass, "{r}");
    }
}
