// scratch profiling binary
use aggss_core::data::build_synthetic;
use aggss_core::scenario::build_traditional;
use aggss_core::trainer::{run_experiment, TrainConfig, SelectionPolicy};
use std::time::Instant;

fn main() {
    let ds = build_synthetic(10, 32, 100, 20, 1); // 1000 train imgs, 32x32
    let stream = build_traditional(&ds, 10, 0, 1).unwrap();
    for m in [1usize, 4] {
        let config = TrainConfig {
            epochs: 1,
            batch_size: 128,
            learning_rate: 0.1,
            lr_milestones: vec![],
            m,
            exemplar_budget: 0,
            selection: SelectionPolicy::Random,
            augment: true,
            seed: 1,
            ..Default::default()
        };
        let t0 = Instant::now();
        let rec = run_experiment(&ds, &stream, "small-conv", &config, &[], None).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        let rows = 1000 * m;
        println!("M={m}: epoch of {rows} rows + eval in {dt:.2}s -> {:.0} rows/s  acc={:.1}",
                 rows as f64 / dt, rec.metrics.accuracy_matrix.get(0,0).unwrap());
    }
}
