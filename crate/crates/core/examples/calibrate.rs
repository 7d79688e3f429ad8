//! Scratch harness for tuning experiment presets against the bundled CSVs.

use vanish_core::{
    fit, load_csv, split_train_test, KnotAnchor, LabeledDataset, PursuitConfig, ScalingRecord,
};

fn scaled_split(ds: &LabeledDataset, seed: u64) -> (LabeledDataset, LabeledDataset) {
    let (train_raw, test_raw) = split_train_test(ds, 0.6, seed).unwrap();
    let scaling = ScalingRecord::fit(&train_raw.points);
    (
        train_raw
            .with_points(scaling.scale(&train_raw.points).unwrap())
            .unwrap(),
        test_raw
            .with_points(scaling.scale(&test_raw.points).unwrap())
            .unwrap(),
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("iris");
    let eps: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let lambda: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let iters: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(200);
    let squared: bool = args.get(5).map(|s| s == "sq").unwrap_or(false);
    let dratio: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let proximal: bool = args.get(7).map(|s| s == "prox").unwrap_or(false);
    let ds = load_csv(format!("data/{name}.csv"), None, true).unwrap();
    let (train, _) = scaled_split(&ds, 7);

    for class in 0..train.n_classes() {
        let start = std::time::Instant::now();
        let pts = train.class_points(class).unwrap();
        let mut cfg = PursuitConfig::new(eps);
        cfg.delta = dratio * eps;
        cfg.lambda = lambda;
        cfg.gamma = 0.7;
        cfg.max_degree = 6;
        cfg.optimizer.max_iters = iters;
        cfg.squared_norms = squared;
        if proximal {
            cfg.anchor = KnotAnchor::Previous;
        }
        let m = fit(&pts, &cfg).unwrap();
        print!("[{:.2}s] ", start.elapsed().as_secs_f64());
        let stats: Vec<String> = m
            .diagnostics
            .degree_log
            .iter()
            .map(|d| format!("d{}: g={} f={}", d.degree, d.n_vanishing, d.n_spanning))
            .collect();
        println!(
            "class {class}: n={} {} | knot_updates={} final_eta={:.3} trunc={}",
            pts.len(),
            stats.join(", "),
            m.diagnostics.knot_updates,
            m.diagnostics.final_eta,
            m.diagnostics.truncated,
        );
        for tol in [1e-3, 1e-2, 5e-2, 1e-1] {
            print!("  tol {tol:>5}: {} distinct", m.distinct_knots(tol).len());
        }
        println!();
        let d = m.distinct_knots(1e-2);
        for i in 0..d.len().min(4) {
            let row: Vec<String> = d.point(i).iter().map(|v| format!("{v:.3}")).collect();
            println!("  knot {i}: [{}]", row.join(", "));
        }
    }
}
