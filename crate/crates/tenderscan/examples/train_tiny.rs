//! Train the tiny-width Xception variant on the synthetic two-class set and
//! print the per-epoch history.

use tenderscan::neuralnet::{
    build_model, evaluate_model, train_model, Arch, Dataset, TrainConfig, WidthPreset,
};
use tenderscan::pipeline::synthetic_training_set;

fn main() {
    let size = 64;
    let all = synthetic_training_set(200, size, 9);
    let train = Dataset::from_images(&all[..160], size);
    let test = Dataset::from_images(&all[160..], size);

    let mut model = build_model(Arch::Xception, size, WidthPreset::Tiny, 9).unwrap();
    let cfg = TrainConfig { epochs: 10, checkpoint_epochs: vec![], ..TrainConfig::default() };
    let report = train_model(&mut model, &train, &test, &cfg, None).unwrap();

    println!("epoch  train_loss  train_acc  test_loss  test_acc");
    for r in &report.history {
        println!(
            "{:>5}  {:>10.4}  {:>9.4}  {:>9.4}  {:>8.4}",
            r.epoch, r.train_loss, r.train_acc, r.test_loss, r.test_acc
        );
    }
    let m = evaluate_model(&mut model, &test).unwrap();
    println!("final: accuracy {:.4}, precision {:.4}, recall {:.4}, f1 {:.4}", m.accuracy, m.precision, m.recall, m.f1);
}
