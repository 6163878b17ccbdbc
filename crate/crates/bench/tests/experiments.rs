use std::sync::Arc;

use leading_bench::bounds::jeffreys_rhs;
use leading_bench::config::Config;
use leading_bench::experiments::{hoeffding_check, mixing_identity_check, pure_jeffreys_check, StochasticSetup};
use leading_bench::runner::{self, check_all, execute};
use leading_bench::setup::Setup;
use leading_core::protocol::{Forecaster, PredictionStrategy, Situation, Stateless};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quadratic(generator: &str, rounds: usize) -> Setup {
    Setup::new(
        Config::parse(&format!(
            r#"
family = "quadratic"
rounds = {rounds}
seed = 12

[kernel]
type = "rbf"
order = 1

[generator]
kind = "{generator}"
target = "r0"

[random_benchmarks]
count = 3
norm_max = 4.0
"#
        ))
        .unwrap(),
    )
    .unwrap()
}

#[test]
fn mixing_identity_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..1000 {
        let (a, b, y): (f64, f64, f64) = (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
        assert!(mixing_identity_check(a, b, y).abs() <= 1e-12);
    }
}

#[test]
fn pure_jeffreys_holds_on_a_full_run() {
    let s = quadratic("adversarial_sign", 1000);
    let (trace, leader) = execute(&s, 12).unwrap();
    let norms = [s.benchmarks[0].norm(), s.benchmarks[1].norm()];
    let r = pure_jeffreys_check(&trace, [0, 1], norms, 1.0, leader.c_f());
    assert_eq!(r.violations, [0, 0]);
    assert_eq!(r.pair_violations, 0);
    assert!(r.min_margin[0] >= 0.0 && r.min_margin[1] >= 0.0);
}

#[test]
fn bounds_hold_for_every_generator() {
    for g in ["iid_uniform", "ar1_clipped", "sinusoid", "adversarial_sign", "stochastic_truth"] {
        let s = quadratic(g, 400);
        let (trace, leader) = execute(&s, 3).unwrap();
        for r in check_all(&s, &leader, &trace, leader.diagnostics()).unwrap() {
            assert!(r.holds(), "{g}: {} against {}", r.label, r.benchmark);
            assert_eq!(r.rows.len(), 400);
        }
    }
}

#[test]
fn hoeffding_without_noise_is_exact() {
    let truth: Arc<dyn PredictionStrategy> = Arc::new(|s: &Situation| 0.8 * s.current()[0] - 0.4);
    let t = truth.clone();
    let same = move || Ok(Box::new(Stateless({
        let t = t.clone();
        move |s: &Situation| t.predict(s)
    })) as Box<dyn Forecaster + Send>);
    let setup = StochasticSetup {
        y_max: 1.0,
        noise: 0.0,
        side_dim: 1,
        rounds: 50,
        delta: 0.05,
        runs: 20,
        seed: 2,
    };
    let r = hoeffding_check(truth, &same, &setup).unwrap();
    assert_eq!(r.violations, 0);
    assert_eq!(r.max_abs_lhs, 0.0);
}

#[test]
fn experiment_section_runs_through_the_runner() {
    let text = r#"
family = "quadratic"
rounds = 60
seed = 4
runs = 30

[kernel]
type = "rbf"
order = 1

[generator]
kind = "stochastic_truth"
target = "f"

[[benchmark]]
name = "f"
centers = [[0.5]]
coeffs = [1.0]
norm = 1.0

[experiment]
kind = "jeffreys"
truth = "f"
noise = 0.3
checkpoints = [20, 60]
"#;
    let out = runner::run(Config::parse(text).unwrap(), false).unwrap();
    let e = out.summary.experiment.unwrap();
    assert_eq!(e["runs"], 30);
    let cp = &e["checkpoints"][1];
    assert_eq!(cp["n"], 60);
    let rhs = jeffreys_rhs(1.0, 1.0, 1.0, 0.05, 60);
    assert!((cp["rhs"].as_f64().unwrap() - rhs).abs() < 1e-9);
    assert_eq!(cp["joint_violations"], 0);

    let hoeffding = text.replace("kind = \"jeffreys\"", "kind = \"hoeffding\"\nstrategy = \"zero\"");
    let out = runner::run(Config::parse(&hoeffding).unwrap(), false).unwrap();
    assert_eq!(out.summary.experiment.unwrap()["violations"], 0);
}

#[test]
fn shipped_configs_build() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let c = Config::load(&path).unwrap();
            Setup::new(c).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
