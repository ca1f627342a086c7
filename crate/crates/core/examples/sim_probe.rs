use gfigs_core::sim::{run_sim_experiment, SimConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(250);
    let tf: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let reps: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(20);
    let c: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let off: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let cw: bool = args.get(6).map(|s| s == "cw").unwrap_or(false);
    let seed: u64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(0);
    let cfg = SimConfig {
        n_per_cluster: n,
        test_fraction: tf,
        membership_c: c,
        x2_mean_offset: off,
        class_weighting: cw,
        seed,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let report = match run_sim_experiment(&cfg, reps) {
        Ok(r) => r,
        Err(e) => {
            println!("n={n} tf={tf} c={c} off={off} FAILED: {e}");
            return;
        }
    };

    let auc = |m: &str| report.mean_se(m, 0).0;
    let acc = |m: &str| report.mean_se(m, 2).0 * 100.0;
    let g = auc("G-FIGS");
    let sep_max = auc("CART-SEP").max(auc("FIGS-SEP"));
    let sep_min = auc("CART-SEP").min(auc("FIGS-SEP"));
    let pooled_max = auc("CART").max(auc("FIGS"));
    println!(
        "n={n} tf={tf} c={c} off={off} reps={reps} | G={g:.3} SEP={:.3} CART={:.3} FIGS={:.3} | gap={:+.3} sep-pooled={:+.3} acc={:.1} | ord={} gap03={} band={} accband={} | {:?}",
        auc("CART-SEP"),
        auc("CART"),
        auc("FIGS"),
        g - sep_max,
        sep_min - pooled_max,
        acc("G-FIGS"),
        g > sep_max && sep_min > pooled_max,
        g - sep_max >= 0.03,
        (0.49..=0.61).contains(&g),
        (60.0..=72.0).contains(&acc("G-FIGS")),
        start.elapsed()
    );
}
