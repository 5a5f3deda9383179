//! Differential-evolution search over cavity and diamond parameters.
//!
//! The search runs DE/rand/1/bin in an internal coordinate system where
//! log-scaled dimensions are stored as natural logarithms. Constraint
//! violations are folded into the objective as multiplicative penalties.

use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavity::CavityParams;
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::model::{RateTable, SpinParams};
use crate::sensitivity::{evaluate_configuration, EvaluationOptions, SensitivityResult};

/// Penalty weight per violated constraint.
pub const PENALTY_WEIGHT: f64 = 1e3;
/// Objective assigned to configurations whose evaluation fails, T/√Hz.
pub const FAILURE_SENTINEL: f64 = 1e6;
/// Generations over which the best objective must stall before stopping.
pub const STALL_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

/// Closed search interval of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimension {
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

impl Dimension {
    pub fn linear(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            scale: Scale::Linear,
        }
    }

    pub fn log(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            scale: Scale::Log,
        }
    }

    pub fn validate(&self, name: &'static str) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(Error::invalid(
                name,
                format!("need lower < upper, got [{}, {}]", self.lower, self.upper),
            ));
        }
        if self.scale == Scale::Log && self.lower <= 0.0 {
            return Err(Error::invalid(name, "log-scaled bounds must be positive"));
        }
        Ok(())
    }

    fn internal(&self) -> (f64, f64) {
        match self.scale {
            Scale::Linear => (self.lower, self.upper),
            Scale::Log => (self.lower.ln(), self.upper.ln()),
        }
    }

    fn external(&self, u: f64) -> f64 {
        let x = match self.scale {
            Scale::Linear => u,
            Scale::Log => u.exp(),
        };
        // exp(ln x) can land one ulp outside
        x.clamp(self.lower, self.upper)
    }
}

/// Searched cavity parameters and the fixed values of everything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamBounds {
    pub r1: Dimension,
    pub r2: Dimension,
    pub length: Dimension,
    pub mode_area: Dimension,
    pub input_power: Dimension,
    pub nv_density: Dimension,
    /// Supplies Q_i, λ, σ_NV and φ, which are not searched.
    pub fixed: CavityParams,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            r1: Dimension::linear(0.9, 0.999_999),
            r2: Dimension::linear(0.9, 0.999_999),
            length: Dimension::log(1e-7, 1e-2),
            mode_area: Dimension::log(1e-14, 1e-4),
            input_power: Dimension::log(0.01, 1.0),
            nv_density: Dimension::log(1e17, 1e24),
            fixed: CavityParams {
                q_intrinsic: 1e6,
                ..CavityParams::default()
            },
        }
    }
}

impl ParamBounds {
    pub const NAMES: [&'static str; 6] = ["R1", "R2", "l_c_m", "sigma_m_m2", "P_in_W", "n_NV_m3"];

    pub fn dimensions(&self) -> [Dimension; 6] {
        [
            self.r1,
            self.r2,
            self.length,
            self.mode_area,
            self.input_power,
            self.nv_density,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (d, name) in self.dimensions().iter().zip(Self::NAMES) {
            d.validate(name)?;
        }
        if self.r1.lower <= 0.0 || self.r1.upper >= 1.0 || self.r2.lower <= 0.0 || self.r2.upper >= 1.0 {
            return Err(Error::invalid("reflectivity bounds", "must lie inside (0, 1)"));
        }
        self.fixed.validate()
    }

    /// Cavity for a point in external coordinates, ordered as [`Self::NAMES`].
    pub fn cavity(&self, x: &[f64]) -> CavityParams {
        CavityParams {
            r1: x[0],
            r2: x[1],
            length: x[2],
            mode_area: x[3],
            input_power: x[4],
            nv_density: x[5],
            ..self.fixed
        }
    }

    pub fn point(&self, cp: &CavityParams) -> [f64; 6] {
        [cp.r1, cp.r2, cp.length, cp.mode_area, cp.input_power, cp.nv_density]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeConfig {
    /// `None` means 15 per dimension.
    pub population_size: Option<usize>,
    pub weight_f: f64,
    pub crossover_cr: f64,
    pub max_generations: usize,
    pub seed: u64,
    /// Relative best-objective change over [`STALL_WINDOW`] generations
    /// below which the search stops.
    pub tolerance: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population_size: None,
            weight_f: 0.7,
            crossover_cr: 0.9,
            max_generations: 300,
            seed: 0,
            tolerance: 1e-8,
        }
    }
}

impl DeConfig {
    pub fn population(&self, dims: usize) -> usize {
        self.population_size.unwrap_or(15 * dims)
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        if self.population(dims) < 4 {
            return Err(Error::invalid(
                "population_size",
                format!("need at least 4, got {}", self.population(dims)),
            ));
        }
        if !(self.weight_f > 0.0 && self.weight_f <= 2.0) {
            return Err(Error::invalid(
                "weight_f",
                format!("must lie in (0, 2], got {}", self.weight_f),
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_cr) {
            return Err(Error::invalid(
                "crossover_cr",
                format!("must lie in [0, 1], got {}", self.crossover_cr),
            ));
        }
        if self.max_generations == 0 {
            return Err(Error::invalid("max_generations", "must be at least 1"));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::invalid(
                "tolerance",
                format!("must be finite and >= 0, got {}", self.tolerance),
            ));
        }
        Ok(())
    }
}

/// Summary of one generation, the initial population being generation 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    /// Cumulative objective evaluations.
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeOutcome {
    /// External coordinates.
    pub best_x: Vec<f64>,
    pub best_objective: f64,
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
    /// True when the stall criterion stopped the run before `max_generations`.
    pub stalled: bool,
}

/// Minimizes `objective` over the box `bounds`.
pub fn differential_evolution<F>(objective: F, bounds: &[Dimension], cfg: &DeConfig) -> Result<DeOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if bounds.is_empty() {
        return Err(Error::invalid("bounds", "need at least one dimension"));
    }
    for b in bounds {
        b.validate("bounds")?;
    }
    cfg.validate(bounds.len())?;

    let dims = bounds.len();
    let np = cfg.population(dims);
    let limits: Vec<(f64, f64)> = bounds.iter().map(Dimension::internal).collect();
    let to_external = |u: &[f64]| -> Vec<f64> { u.iter().zip(bounds).map(|(&v, b)| b.external(v)).collect() };
    // NaN must never win a comparison
    let score = |u: &[f64]| -> f64 {
        let f = objective(&to_external(u));
        if f.is_nan() {
            f64::INFINITY
        } else {
            f
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            limits
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect()
        })
        .collect();
    let mut fit: Vec<f64> = pop.par_iter().map(|u| score(u)).collect();
    let mut evaluations = np;
    let mut history = vec![stats(0, &fit, evaluations)];
    let mut stalled = false;

    for generation in 1..=cfg.max_generations {
        // all random draws happen here, before the parallel evaluation
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let (a, b, c) = distinct_indices(&mut rng, np, i);
                let forced = rng.random_range(0..dims);
                (0..dims)
                    .map(|j| {
                        let crossover: f64 = rng.random();
                        if j == forced || crossover < cfg.crossover_cr {
                            let v = pop[a][j] + cfg.weight_f * (pop[b][j] - pop[c][j]);
                            v.clamp(limits[j].0, limits[j].1)
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_fit: Vec<f64> = trials.par_iter().map(|u| score(u)).collect();
        evaluations += np;
        for (i, (u, f)) in trials.into_iter().zip(trial_fit).enumerate() {
            if f <= fit[i] {
                pop[i] = u;
                fit[i] = f;
            }
        }
        history.push(stats(generation, &fit, evaluations));

        if generation >= STALL_WINDOW {
            let then = history[generation - STALL_WINDOW].best;
            let now = history[generation].best;
            if (then - now).abs() <= cfg.tolerance * then.abs() {
                stalled = true;
                break;
            }
        }
    }

    let best = argmin(&fit);
    Ok(DeOutcome {
        best_x: to_external(&pop[best]),
        best_objective: fit[best],
        history,
        evaluations,
        stalled,
    })
}

fn distinct_indices(rng: &mut ChaCha8Rng, np: usize, i: usize) -> (usize, usize, usize) {
    let mut pick = |taken: &[usize]| loop {
        let k = rng.random_range(0..np);
        if !taken.contains(&k) {
            break k;
        }
    };
    let a = pick(&[i]);
    let b = pick(&[i, a]);
    let c = pick(&[i, a, b]);
    (a, b, c)
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(0, |best, (k, x)| if *x < v[best] { k } else { best })
}

fn stats(generation: usize, fit: &[f64], evals: usize) -> GenerationStats {
    GenerationStats {
        generation,
        best: fit[argmin(fit)],
        mean: fit.iter().sum::<f64>() / fit.len() as f64,
        evals,
    }
}

/// Penalized δB for a finished evaluation.
///
/// Each violated constraint multiplies δB by 1 + w·(relative violation).
pub fn penalize(r: &SensitivityResult, saturation_intensity: f64) -> f64 {
    let sat = (r.circulating_intensity / saturation_intensity - 1.0).max(0.0);
    let spin = (r.delta_b_spin / (r.spin_fraction * r.delta_b) - 1.0).max(0.0);
    r.delta_b * (1.0 + PENALTY_WEIGHT * sat) * (1.0 + PENALTY_WEIGHT * spin)
}

/// A configuration whose evaluation failed during the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub params: Vec<f64>,
    pub error: String,
}

/// Penalized objective of one cavity; failures give the sentinel.
pub fn penalized_objective(
    cp: &CavityParams,
    sp: &SpinParams,
    rt: &RateTable,
    pc: &PhysicalConstants,
    opts: &EvaluationOptions,
) -> (f64, Option<Error>) {
    match evaluate_configuration(cp, sp, rt, pc, opts) {
        Ok(r) => {
            let v = penalize(&r, opts.saturation_intensity);
            if v.is_finite() {
                (v, None)
            } else {
                (FAILURE_SENTINEL, Some(Error::NonFinite("penalized objective")))
            }
        }
        Err(e) => (FAILURE_SENTINEL, Some(e)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRecord {
    pub best_params: CavityParams,
    /// Penalized objective of the best member, T/√Hz.
    pub best_objective: f64,
    /// Standalone re-evaluation of the best member, if it succeeds.
    pub best: Option<SensitivityResult>,
    pub feasible: bool,
    pub history: Vec<GenerationStats>,
    pub evaluation_count: usize,
    pub stalled: bool,
    /// Sorted by parameter vector so the log is independent of thread timing.
    pub failures: Vec<FailureRecord>,
    pub bounds: ParamBounds,
    pub config: DeConfig,
}

/// Searches `bounds` for the lowest penalized photon-noise limit.
pub fn optimize_cavity(
    bounds: &ParamBounds,
    sp: &SpinParams,
    rt: &RateTable,
    pc: &PhysicalConstants,
    opts: &EvaluationOptions,
    cfg: &DeConfig,
) -> Result<OptimizationRecord> {
    bounds.validate()?;
    sp.validate()?;
    rt.validate()?;
    let failures = Mutex::new(Vec::new());
    let objective = |x: &[f64]| {
        let (v, err) = penalized_objective(&bounds.cavity(x), sp, rt, pc, opts);
        if let Some(e) = err {
            log::warn!("evaluation failed at {x:?}: {e}");
            failures.lock().expect("failure log poisoned").push(FailureRecord {
                params: x.to_vec(),
                error: e.to_string(),
            });
        }
        v
    };
    let out = differential_evolution(objective, &bounds.dimensions(), cfg)?;
    let mut failures = failures.into_inner().expect("failure log poisoned");
    failures.sort_by(|a, b| {
        a.params
            .iter()
            .zip(&b.params)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let best_params = bounds.cavity(&out.best_x);
    let best = evaluate_configuration(&best_params, sp, rt, pc, opts).ok();
    let feasible = best.as_ref().is_some_and(SensitivityResult::feasible);
    Ok(OptimizationRecord {
        best_params,
        best_objective: out.best_objective,
        best,
        feasible,
        history: out.history,
        evaluation_count: out.evaluations,
        stalled: out.stalled,
        failures,
        bounds: bounds.clone(),
        config: *cfg,
    })
}
