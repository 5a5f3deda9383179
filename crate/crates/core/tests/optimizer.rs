use std::sync::Mutex;

use nvcav::odmr::symmetric_grid;
use nvcav::optimizer::*;
use nvcav::sensitivity::{evaluate_configuration, EvaluationOptions};
use nvcav::{PhysicalConstants, RateTable, SpinParams};

const CENTRE: [f64; 5] = [0.1, 0.35, 0.5, 0.72, 0.9];

fn sphere(x: &[f64]) -> f64 {
    x.iter().zip(CENTRE).map(|(a, c)| (a - c).powi(2)).sum()
}

fn rosenbrock(x: &[f64]) -> f64 {
    (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
}

fn sphere_cfg() -> DeConfig {
    DeConfig {
        population_size: Some(40),
        weight_f: 0.7,
        crossover_cr: 0.9,
        max_generations: 200,
        seed: 42,
        tolerance: 0.0,
    }
}

#[test]
fn sphere_reaches_centre() {
    let out = differential_evolution(sphere, &[Dimension::linear(0.0, 1.0); 5], &sphere_cfg()).unwrap();
    for (x, c) in out.best_x.iter().zip(CENTRE) {
        assert!((x - c).abs() < 1e-6, "{:?}", out.best_x);
    }
    assert!(out.history.len() <= 201);
}

#[test]
fn rosenbrock_below_threshold() {
    let cfg = DeConfig {
        max_generations: 500,
        ..sphere_cfg()
    };
    let out = differential_evolution(rosenbrock, &[Dimension::linear(-2.0, 2.0); 2], &cfg).unwrap();
    assert!(out.best_objective < 1e-5, "{}", out.best_objective);
}

#[test]
fn same_seed_is_bit_identical() {
    let b = [Dimension::linear(0.0, 1.0); 5];
    let a = differential_evolution(sphere, &b, &sphere_cfg()).unwrap();
    let again = differential_evolution(sphere, &b, &sphere_cfg()).unwrap();
    assert_eq!(a, again);
    let other = differential_evolution(
        sphere,
        &b,
        &DeConfig {
            seed: 7,
            ..sphere_cfg()
        },
    )
    .unwrap();
    assert_ne!(a.history, other.history);
}

#[test]
fn best_never_worsens_and_candidates_stay_in_bounds() {
    let bounds = [
        Dimension::linear(-2.0, 2.0),
        Dimension::log(1e-7, 1e-2),
        Dimension::log(1e17, 1e24),
    ];
    let seen = Mutex::new(Vec::new());
    let objective = |x: &[f64]| {
        seen.lock().unwrap().push(x.to_vec());
        (x[0] - 0.3).powi(2) + (x[1].log10() + 4.0).powi(2) + (x[2].log10() - 20.0).powi(2)
    };
    let cfg = DeConfig {
        max_generations: 60,
        seed: 3,
        ..DeConfig::default()
    };
    let out = differential_evolution(objective, &bounds, &cfg).unwrap();
    assert!(out.history.windows(2).all(|w| w[1].best <= w[0].best));
    let seen = seen.into_inner().unwrap();
    assert_eq!(seen.len(), out.evaluations);
    for x in &seen {
        for (v, b) in x.iter().zip(&bounds) {
            assert!(*v >= b.lower && *v <= b.upper, "{v} outside [{}, {}]", b.lower, b.upper);
        }
    }
    assert!((out.best_x[1] / 1e-4 - 1.0).abs() < 1e-3);
}

#[test]
fn stall_window_stops_early() {
    let out = differential_evolution(|_| 1.0, &[Dimension::linear(0.0, 1.0); 2], &DeConfig::default()).unwrap();
    assert!(out.stalled);
    assert_eq!(out.history.len(), STALL_WINDOW + 1);
}

#[test]
fn small_population_rejected() {
    let cfg = DeConfig {
        population_size: Some(3),
        ..DeConfig::default()
    };
    assert!(differential_evolution(sphere, &[Dimension::linear(0.0, 1.0); 5], &cfg).is_err());
}

#[test]
fn cavity_search_reports_verifiable_optimum() {
    let pc = PhysicalConstants::default();
    let (sp, rt) = (SpinParams::default(), RateTable::default());
    let opts = EvaluationOptions {
        detunings: symmetric_grid(50e6, 101),
        ..EvaluationOptions::default()
    };
    let cfg = DeConfig {
        population_size: Some(12),
        max_generations: 4,
        seed: 11,
        ..DeConfig::default()
    };
    let bounds = ParamBounds::default();
    let rec = optimize_cavity(&bounds, &sp, &rt, &pc, &opts, &cfg).unwrap();
    assert!(rec.history.windows(2).all(|w| w[1].best <= w[0].best));
    assert_eq!(rec.evaluation_count, 12 * 5);
    for (x, d) in bounds.point(&rec.best_params).iter().zip(bounds.dimensions()) {
        assert!(*x >= d.lower && *x <= d.upper);
    }
    // weakly absorbing corners of the box have no resonance at all
    assert!(rec.failures.iter().all(|f| f.error.starts_with("no resonance")));
    assert!(rec.feasible);
    let r = evaluate_configuration(&rec.best_params, &sp, &rt, &pc, &opts).unwrap();
    assert!(r.circulating_intensity <= 0.5e12);
    assert!(r.delta_b_spin <= 0.2 * r.delta_b);
    assert_eq!(rec.best_objective, r.delta_b);
    let again = optimize_cavity(&bounds, &sp, &rt, &pc, &opts, &cfg).unwrap();
    assert_eq!(rec, again);
}
