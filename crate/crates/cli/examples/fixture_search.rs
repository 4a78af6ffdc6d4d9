//! Random search for three-strain, two-patch instances realizing every
//! persistence pattern, with clear threshold margins. Writes one config per
//! pattern found into the directory given as the first argument.
//!
//! `cargo run --release -p strain-cascade --example fixture_search -- crates/cli/tests/fixtures`

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strain_cascade::commands::random_initial_state;
use strain_cascade::report::format_set;
use strain_cascade::RunConfig;
use strain_cascade_core::simulate::converged_to;
use strain_cascade_core::{integrate, run_cascade, IntegratorConfig, ModelParameters};

const MARGIN: f64 = 0.1;
const ATTEMPTS: usize = 200_000;

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn round3(x: f64) -> f64 {
    format!("{x:.2e}").parse().unwrap()
}

fn candidate(rng: &mut ChaCha8Rng) -> ModelParameters {
    let (p, n) = (2, 3);
    let mut draw = |lo: f64, hi: f64| round3(log_uniform(rng, lo, hi));
    let birth = (0..p).map(|_| draw(0.5, 5.0)).collect();
    let death = (0..p).map(|_| draw(0.2, 2.0)).collect();
    let beta_diag = (0..p).map(|_| (0..n).map(|_| draw(0.1, 20.0)).collect()).collect();
    let theta = (0..p).map(|_| (0..n).map(|_| draw(0.1, 2.0)).collect()).collect();
    let migration = vec![vec![0.0, draw(0.05, 2.0)], vec![draw(0.05, 2.0), 0.0]];
    ModelParameters {
        patches: p,
        strains: n,
        birth,
        death,
        beta_diag,
        theta,
        migration,
    }
}

fn attracts(params: &ModelParameters) -> bool {
    let report = run_cascade(params).unwrap();
    let n_star = &report.verdicts[0].total_pop_limit;
    (1..=5).all(|seed| {
        let x0 = random_initial_state(n_star, params.strains, seed);
        let traj = integrate(params, &x0, &IntegratorConfig::default()).unwrap();
        converged_to(&traj, &report.equilibrium, 1e-6)
    })
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).expect("output directory"));
    std::fs::create_dir_all(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut found: BTreeMap<Vec<usize>, ModelParameters> = BTreeMap::new();
    for _ in 0..ATTEMPTS {
        let params = candidate(&mut rng);
        let Ok(report) = run_cascade(&params) else { continue };
        let set = report.persistence_set();
        if found.contains_key(&set) {
            continue;
        }
        if report.thresholds().iter().any(|s| s.abs() < MARGIN) {
            continue;
        }
        if report.verdicts.iter().flat_map(|v| &v.levels).any(|&t| t > 0.0 && t < 1e-3) {
            continue;
        }
        if !attracts(&params) {
            continue;
        }
        println!("{} after {:?}", format_set(&set), report.thresholds());
        found.insert(set, params);
        if found.len() == 8 {
            break;
        }
    }
    for (set, params) in &found {
        let name: String = if set.is_empty() {
            "none".into()
        } else {
            set.iter().map(usize::to_string).collect::<Vec<_>>().join("_")
        };
        let mut config = RunConfig::new(params.clone());
        config.seeds = (1..=10).collect();
        std::fs::write(dir.join(format!("pattern_{name}.json")), config.to_json()).unwrap();
    }
    let missing: Vec<String> = (0..8u32)
        .map(|mask| (1..=3).filter(|k| mask & (1 << (k - 1)) != 0).collect::<Vec<usize>>())
        .filter(|s| !found.contains_key(s))
        .map(|s| format_set(&s))
        .collect();
    println!("found {} patterns; missing: {:?}", found.len(), missing);
}
