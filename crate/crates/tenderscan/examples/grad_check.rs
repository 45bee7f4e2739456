//! Verify analytic gradients against central finite differences for a few
//! representative layers and composite blocks.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use tenderscan::neuralnet::{
    grad_check, BatchNorm2d, Conv2d, Dense, Padding, ResidualUnit, ResidualUnitSpec, SepConv2d,
};

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);

    let mut conv = Conv2d::new("conv", 2, 3, 3, 2, Padding::Same, &mut rng);
    let r = grad_check(&mut conv, &[2, 2, 5, 5], 1e-4, 10).unwrap();
    println!("conv2d (SAME, stride 2):\n{r}");

    let mut sep = SepConv2d::new("sep", 2, 3, 3, 1, Padding::Same, &mut rng);
    let r = grad_check(&mut sep, &[1, 2, 6, 6], 1e-4, 11).unwrap();
    println!("separable conv:\n{r}");

    let mut bn = BatchNorm2d::new("bn", 3);
    let r = grad_check(&mut bn, &[2, 3, 4, 4], 1e-4, 12).unwrap();
    println!("batch norm:\n{r}");

    let mut dense = Dense::new("dense", 10, 4, &mut rng);
    let r = grad_check(&mut dense, &[3, 10], 1e-7, 13).unwrap();
    println!("dense (linear, tighter tolerance):\n{r}");

    let mut ru = ResidualUnit::new("ru", 3, ResidualUnitSpec { filters: 4, stride: 2 }, &mut rng);
    let r = grad_check(&mut ru, &[1, 3, 6, 6], 1e-4, 14).unwrap();
    println!("residual unit (projection skip):\n{r}");
}
