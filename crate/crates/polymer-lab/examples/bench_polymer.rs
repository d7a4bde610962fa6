use polymer_lab::disorder::DisorderDist;
use polymer_lab::polymer::{EnvField, PolymerModel};
use polymer_lab::rng::SeedStream;
use std::time::Instant;

fn time_case(beta: f64, dim: usize, n: usize, reps: u64) {
    let dist = DisorderDist::rademacher();
    let model = PolymerModel::new(dist.clone(), beta, dim, n).unwrap();
    let base = SeedStream::new(99, 0);
    let start = Instant::now();
    let mut acc = 0.0;
    for r in 0..reps {
        let env = EnvField::new(dist.clone(), &base, r);
        acc += model.run(&env, n).unwrap().final_value();
    }
    let el = start.elapsed();
    println!(
        "d={dim} n={n} beta={beta}: {reps} reps in {:.2?} ({:.0} us/rep), mean {}",
        el,
        el.as_secs_f64() * 1e6 / reps as f64,
        acc / reps as f64
    );
}

fn main() {
    time_case(0.6, 3, 15, 2_000);
    time_case(0.3, 3, 20, 1_000);
    time_case(1.0, 1, 200, 1_000);
    time_case(1.0, 3, 10, 2_000);
    time_case(0.5, 1, 10, 5_000);
}
