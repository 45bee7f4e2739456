//! Build a model-comparison report from recorded run metrics and print the
//! selected configuration.

use tenderscan::neuralnet::{Arch, Metrics};
use tenderscan::pipeline::{compare_models_report, RunMetrics};

fn run(arch: Arch, epochs: usize, acc: f64, p: f64, r: f64, f1: f64) -> RunMetrics {
    RunMetrics { arch, epochs, metrics: Metrics { accuracy: acc, precision: p, recall: r, f1, loss: 0.0 } }
}

fn main() {
    let runs = vec![
        run(Arch::Resnet, 50, 0.9949, 0.9945, 0.9955, 0.9950),
        run(Arch::Googlenet, 50, 0.9959, 0.9955, 0.9965, 0.9960),
        run(Arch::Xception, 50, 0.9926, 0.9964, 0.9984, 0.9974),
        run(Arch::Resnet, 100, 0.9926, 0.9949, 0.9904, 0.9927),
        run(Arch::Googlenet, 100, 0.9947, 0.9945, 0.9950, 0.9947),
        run(Arch::Xception, 100, 0.9919, 0.9946, 0.9963, 0.9954),
    ];
    let report = compare_models_report(&runs).unwrap();
    print!("{}", report.render());
}
