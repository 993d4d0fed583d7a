use bridge_learn::{train, TrainConfig, Variant};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let variant = Variant::parse(args.get(1).map(|s| s.as_str()).unwrap_or("full")).unwrap();
    let iters: u32 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut cfg = variant.apply(&TrainConfig::desk());
    cfg.n_iters = iters;
    cfg.seed = seed;
    cfg.eval_interval = 5;
    let t0 = Instant::now();
    let out = train(&cfg, None).unwrap();
    for m in out.metrics.iter() {
        if m.iter % 5 == 0 || m.iter == 1 {
            println!(
                "iter {:3}  succ {:.3}  ret {:.3}  pi {:+.4}  v {:.4}  clone {:.4}  aux {:.3}  store {:4}  maxp {:.3}  resets {:.2}",
                m.iter, m.eval_success_rate, m.mean_episode_return, m.loss_pi, m.loss_v,
                m.loss_clone, m.loss_aux, m.store_size, m.max_priority, m.reset_from_store_fraction
            );
        }
    }
    println!("elapsed: {:.1}s for {} iters", t0.elapsed().as_secs_f64(), iters);
}
