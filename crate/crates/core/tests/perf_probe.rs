//! Manual throughput probe for the ablation-study scale; run with
//! `cargo test -p ruie-core --test perf_probe -- --ignored --nocapture`.

use ruie_core::data::{build_sequences, densify_ids, split_leave_one_out};
use ruie_core::synth::{generate, SynthConfig};
use ruie_core::train::train;
use ruie_core::TrainConfig;

#[test]
#[ignore]
fn one_epoch_at_ablation_scale() {
    let synth = SynthConfig {
        num_users: 500,
        num_items: 2000,
        num_scenarios: 2,
        num_topics: 20,
        events_per_user: 200,
        shift_probability: 0.05,
        scenario_affinity_concentration: 1.0,
        seed: 1,
    };
    let records = generate(&synth).unwrap();
    let dense = densify_ids(&records).unwrap();
    let samples = build_sequences(&dense.records, 20, &dense.catalog).unwrap();
    let (train_set, _test) = split_leave_one_out(samples);
    println!("train samples: {}", train_set.len());
    let config = TrainConfig {
        d: 16,
        epochs: 1,
        seed: 2,
        ..TrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    let out = train(&train_set, &dense.catalog, &config, None).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "1 epoch full RUIE: {dt:.1}s  (total loss {:.4})",
        out.logs[0].total
    );
    println!("projected: 15 epochs x 20 runs = {:.1} min", dt * 15.0 * 20.0 / 60.0);
}
