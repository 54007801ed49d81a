// Scratch probe: CE vs rotation-expanded training on a CIFAR-10 subset.
use aggss_core::data::DatasetSpec;
use aggss_core::scenario::build_traditional;
use aggss_core::trainer::{run_experiment, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let per_class: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(250);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(8);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let spec = DatasetSpec {
        kind: "cifar10".into(),
        root: Some("data".into()),
        train_per_class: Some(per_class),
        test_per_class: None,
        classes: None,
        image_size: None,
        seed: None,
    };
    let ds = spec.load().unwrap();
    println!(
        "cifar10 subset: {} train / {} test",
        ds.train.len(),
        ds.test.len()
    );
    let stream = build_traditional(&ds, 10, 0, seed).unwrap();
    for m in [1usize, 4] {
        let config = TrainConfig {
            epochs,
            batch_size: 128,
            learning_rate: 0.1,
            lr_milestones: vec![epochs * 6 / 10, epochs * 85 / 100],
            m,
            exemplar_budget: 0,
            augment: true,
            seed,
            ..Default::default()
        };
        let t0 = Instant::now();
        let rec = run_experiment(&ds, &stream, "small-conv", &config, &[], None).unwrap();
        println!(
            "M={m}: acc={:.2}%  ({:.0}s)",
            rec.metrics.accuracy_matrix.get(0, 0).unwrap(),
            t0.elapsed().as_secs_f64()
        );
    }
}
