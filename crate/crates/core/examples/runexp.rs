//! Scratch runner for preset calibration; delete before release.

use vanish_core::data::load_csv;
use vanish_core::{run_classification, run_neighbors, ExperimentConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("iris");
    let which = args.get(2).map(String::as_str).unwrap_or("both");
    let runs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);
    let parse_grid = |s: &String| -> Vec<f64> {
        s.split(',').map(|v| v.parse().unwrap()).collect()
    };
    let knot_grid: Option<Vec<f64>> = args.get(5).map(parse_grid);
    let vca_grid: Option<Vec<f64>> = args.get(6).map(parse_grid);
    let lambda_grid: Option<Vec<f64>> = args.get(7).map(parse_grid);
    let dr: Option<f64> = args.get(8).and_then(|s| s.parse().ok());
    let lreg: Option<f64> = args.get(9).and_then(|s| s.parse().ok());

    let ds = load_csv(format!("data/{name}.csv"), None, true).unwrap();
    let mut cfg = match name {
        "iris" => ExperimentConfig::iris(seed),
        "wine" => ExperimentConfig::wine(seed),
        _ => ExperimentConfig::new(seed),
    };
    cfg.runs = runs;
    if let Some(g) = knot_grid {
        cfg.knot_epsilon_grid = g;
    }
    if let Some(g) = vca_grid {
        cfg.vca_epsilon_grid = g;
    }
    if let Some(g) = lambda_grid {
        cfg.knot_lambda_grid = g;
    }
    if let Some(d) = dr {
        cfg.delta_ratio = d;
    }
    if let Some(r) = lreg {
        cfg.linear_reg = r;
    }

    if which == "both" || which == "cls" {
        let t = std::time::Instant::now();
        let report = run_classification(&ds, &cfg).unwrap();
        println!("--- classification ({:.1}s) ---", t.elapsed().as_secs_f64());
        println!("{}", report.to_text());
        let eps: Vec<f64> = report.chosen_params.iter().map(|p| p.epsilon).collect();
        let lam: Vec<f64> = report.chosen_params.iter().map(|p| p.lambda).collect();
        println!("chosen eps {eps:?}\nchosen lambda {lam:?}");
        println!("chosen vca eps {:?}", report.chosen_vca_epsilons.unwrap());
    }
    if which == "both" || which == "nb" {
        let t = std::time::Instant::now();
        let report = run_neighbors(&ds, &cfg).unwrap();
        println!("--- neighbors ({:.1}s) ---", t.elapsed().as_secs_f64());
        println!("{}", report.to_text());
        let nb = report.neighbors.unwrap();
        for (run, pc) in nb.chosen_per_class.iter().enumerate() {
            let eps: Vec<f64> = pc.iter().map(|p| p.epsilon).collect();
            println!("run {run} per-class eps {eps:?}");
        }
        println!("knots acc per run {:?}", nb.knots_accuracy_per_run);
        println!("ratio per run {:?}", nb.knotting_ratio_per_run);
    }
}
