//! One function per subcommand. Each computes everything first and only
//! then writes, so a failed run leaves no data files behind.

use rayon::prelude::*;
use serde_json::{json, Value};

use nvcav::odmr::{
    extract_metrics_with, fluorescence_contrast_vs_saturation, sweep_detuning, symmetric_grid, ObservableKind,
};
use nvcav::optimizer::optimize_cavity;
use nvcav::sensitivity::{evaluate_configuration, reflected_power_sweep, SensitivityResult};
use nvcav::validation::{has_declining_tail, run_validation, saturation_grid, FLUORESCENCE_P_SAT};

use crate::config::{RunConfig, Series};
use crate::output::{num, Manifest, RunOutput};
use crate::{Failure, Observable};

/// Detuning span of the saturation scan, wide enough for the power-broadened
/// line at s = 100.
const SATURATION_SCAN_SPAN_HZ: f64 = 200e6;
const SATURATION_SCAN_POINTS: usize = 401;

pub struct Context {
    pub cfg: RunConfig,
    pub workers: usize,
}

impl Context {
    fn output(&self) -> Result<RunOutput, Failure> {
        Ok(RunOutput::create(&self.cfg.out_dir)?)
    }

    fn manifest(&self, command: &'static str, summary: Value) -> Manifest {
        Manifest {
            command,
            seed: self.cfg.seed,
            workers: self.workers,
            config: serde_json::to_value(&self.cfg).expect("config serializes"),
            summary,
        }
    }
}

pub fn odmr(ctx: &Context, observable: Observable, saturation_scan: bool) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    if saturation_scan {
        if observable != Observable::Fluorescence {
            return Err(Failure::Config(
                "--saturation-scan needs --observable fluorescence".into(),
            ));
        }
        let curve = fluorescence_contrast_vs_saturation(
            &cfg.spin,
            &cfg.rates,
            &saturation_grid(),
            FLUORESCENCE_P_SAT,
            &symmetric_grid(SATURATION_SCAN_SPAN_HZ, SATURATION_SCAN_POINTS),
            &cfg.constants,
        )?;
        let peak = curve.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        println!(
            "peak contrast {peak:.4}, contrast at s = {:.0}: {:.3e}",
            curve[curve.len() - 1].0,
            curve[curve.len() - 1].1
        );
        let mut out = ctx.output()?;
        out.write_csv(
            "saturation.csv",
            &["s", "contrast"],
            curve.iter().map(|&(s, c)| [num(s), num(c)]),
        )?;
        let summary = json!({
            "p_sat_Hz": FLUORESCENCE_P_SAT,
            "peak_contrast": peak,
            "declining_tail": has_declining_tail(&curve),
        });
        out.finish(ctx.manifest("odmr", summary))?;
        return Ok(());
    }

    let kind = match observable {
        Observable::Ir => ObservableKind::IrAbsorption,
        Observable::Fluorescence => ObservableKind::Fluorescence,
    };
    let curve = sweep_detuning(&cfg.spin, &cfg.rates, &cfg.evaluation.grid(), kind, &cfg.constants)?;
    let metrics = extract_metrics_with(&curve, &cfg.evaluation.odmr_metrics())?;
    println!(
        "contrast {:.4}, FWHM {:.4} MHz",
        metrics.contrast,
        metrics.fwhm_hz / 1e6
    );

    let mut out = ctx.output()?;
    out.write_csv(
        "odmr.csv",
        &["detuning_hz", "observable"],
        curve
            .detunings
            .iter()
            .zip(&curve.observable)
            .map(|(&d, &v)| [num(d), num(v)]),
    )?;
    out.write_json("metrics.json", &json!({ "observable": kind, "metrics": metrics }))?;
    out.finish(ctx.manifest("odmr", json!({ "points": curve.len(), "contrast": metrics.contrast })))?;
    Ok(())
}

fn report(r: &SensitivityResult) {
    println!(
        "delta_B {:.4e} T/rtHz, delta_B_spin {:.4e} T/rtHz, C {:.4}, FWHM {:.4} MHz, I_cir {:.3e} W/m^2",
        r.delta_b,
        r.delta_b_spin,
        r.contrast,
        r.fwhm_hz / 1e6,
        r.circulating_intensity
    );
    println!("saturation_ok {}, spin_noise_ok {}", r.saturation_ok, r.spin_noise_ok);
}

pub fn evaluate(ctx: &Context) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let opts = cfg.evaluation.options();
    let result = evaluate_configuration(&cfg.cavity, &cfg.spin, &cfg.rates, &cfg.constants, &opts)?;
    let (_, states) = reflected_power_sweep(
        &cfg.cavity,
        &cfg.spin,
        &cfg.rates,
        &cfg.constants,
        &opts.detunings,
        &opts.fixed_point,
    )?;
    report(&result);

    let mut out = ctx.output()?;
    out.write_json("evaluation.json", &result)?;
    out.write_csv(
        "reflected.csv",
        &["detuning_hz", "P_ref_W", "delta_rho", "I_cir_W_m2", "iterations"],
        opts.detunings.iter().zip(&states).map(|(&d, s)| {
            [
                num(d),
                num(s.reflected_power),
                num(s.delta_rho),
                num(s.circulating_intensity),
                s.iterations.to_string(),
            ]
        }),
    )?;
    out.finish(ctx.manifest(
        "evaluate",
        json!({ "feasible": result.feasible(), "delta_B": result.delta_b }),
    ))?;
    Ok(())
}

struct GridPoint<'a> {
    series: Option<&'a Series>,
    x: f64,
    y: Option<f64>,
}

pub fn sweep(ctx: &Context) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Failure::Config("sweep needs a [sweep] section".into()))?;
    let x_axis = &spec.axes[0];
    let y_axis = spec.axes.get(1);
    let series: Vec<Option<&Series>> = if spec.series.is_empty() {
        vec![None]
    } else {
        spec.series.iter().map(Some).collect()
    };
    let ys: Vec<Option<f64>> = match y_axis {
        Some(a) => a.values().into_iter().map(Some).collect(),
        None => vec![None],
    };
    let mut points = Vec::new();
    for &s in &series {
        for x in x_axis.values() {
            for &y in &ys {
                points.push(GridPoint { series: s, x, y });
            }
        }
    }
    // resolve every point up front so parameter errors are config errors
    let models = points
        .iter()
        .map(|p| {
            let mut m = cfg.series_model(p.series)?;
            m.set(&x_axis.parameter, &Value::from(p.x))?;
            if let (Some(a), Some(y)) = (y_axis, p.y) {
                m.set(&a.parameter, &Value::from(y))?;
            }
            m.validate()?;
            Ok(m)
        })
        .collect::<Result<Vec<_>, Failure>>()?;

    let opts = cfg.evaluation.options();
    let results: Vec<Result<SensitivityResult, nvcav::Error>> = models
        .par_iter()
        .map(|m| evaluate_configuration(&m.cavity, &m.spin, &m.rates, &cfg.constants, &opts))
        .collect();

    let with_series = !spec.series.is_empty();
    let mut header = Vec::new();
    if with_series {
        header.push("series");
    }
    header.push("x");
    if y_axis.is_some() {
        header.push("y");
    }
    header.extend([
        "delta_B",
        "delta_B_spin",
        "I_cir",
        "saturation_ok",
        "spin_noise_ok",
        "failure",
    ]);

    let (mut feasible, mut infeasible, mut failed) = (0usize, 0usize, 0usize);
    let rows: Vec<Vec<String>> = points
        .iter()
        .zip(&results)
        .map(|(p, r)| {
            let mut row = Vec::new();
            if let Some(s) = p.series {
                row.push(s.name.clone());
            }
            row.push(num(p.x));
            if let Some(y) = p.y {
                row.push(num(y));
            }
            match r {
                Ok(r) => {
                    if r.feasible() {
                        feasible += 1;
                    } else {
                        infeasible += 1;
                    }
                    row.extend([
                        num(r.delta_b),
                        num(r.delta_b_spin),
                        num(r.circulating_intensity),
                        r.saturation_ok.to_string(),
                        r.spin_noise_ok.to_string(),
                        String::new(),
                    ]);
                }
                Err(e) => {
                    failed += 1;
                    row.extend([
                        num(f64::NAN),
                        num(f64::NAN),
                        num(f64::NAN),
                        "false".into(),
                        "false".into(),
                        e.to_string(),
                    ]);
                }
            }
            row
        })
        .collect();

    let best = results
        .iter()
        .zip(&points)
        .filter_map(|(r, p)| r.as_ref().ok().filter(|r| r.feasible()).map(|r| (r.delta_b, p)))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    println!(
        "{} points: {feasible} feasible, {infeasible} infeasible, {failed} failed",
        points.len()
    );
    if let Some((db, p)) = best {
        println!("best feasible delta_B {db:.4e} T/rtHz at x = {:e}", p.x);
    }

    let mut out = ctx.output()?;
    out.write_csv("sweep.csv", &header, rows)?;
    let summary = json!({
        "points": points.len(),
        "feasible": feasible,
        "infeasible": infeasible,
        "failed": failed,
        "x": x_axis,
        "y": y_axis,
        "series": spec.series.iter().map(|s| &s.name).collect::<Vec<_>>(),
        "best_feasible_delta_B": best.map(|b| b.0),
    });
    out.finish(ctx.manifest("sweep", summary))?;
    Ok(())
}

pub fn optimize(ctx: &Context) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let record = optimize_cavity(
        &cfg.param_bounds(),
        &cfg.spin,
        &cfg.rates,
        &cfg.constants,
        &cfg.evaluation.options(),
        &cfg.de_config(),
    )?;
    let p = &record.best_params;
    println!(
        "best R1 {:.6} R2 {:.6} l_c {:.4e} m sigma_m {:.4e} m^2 P_in {:.4e} W n_NV {:.4e} m^-3",
        p.r1, p.r2, p.length, p.mode_area, p.input_power, p.nv_density
    );
    match &record.best {
        Some(r) => report(r),
        None => println!("best member could not be re-evaluated"),
    }
    println!(
        "{} evaluations, {} failures, {} generations{}",
        record.evaluation_count,
        record.failures.len(),
        record.history.len(),
        if record.stalled { " (stalled)" } else { "" }
    );

    let mut out = ctx.output()?;
    out.write_json("optimization.json", &record)?;
    out.write_csv(
        "history.csv",
        &["generation", "best", "mean", "evals"],
        record
            .history
            .iter()
            .map(|g| [g.generation.to_string(), num(g.best), num(g.mean), g.evals.to_string()]),
    )?;
    let summary = json!({
        "best_objective": record.best_objective,
        "feasible": record.feasible,
        "evaluations": record.evaluation_count,
        "failures": record.failures.len(),
    });
    out.finish(ctx.manifest("optimize", summary))?;
    Ok(())
}

pub fn validate(ctx: &Context) -> Result<(), Failure> {
    let report = run_validation(&ctx.cfg.validation_setup());
    for item in &report.items {
        println!(
            "{} {}: measured {:.4e}, band [{:.4e}, {:.4e}] ({})",
            if item.passed { "PASS" } else { "FAIL" },
            item.name,
            item.measured,
            item.lower,
            item.upper,
            item.detail
        );
    }
    let passed = report.items.iter().filter(|i| i.passed).count();
    println!("{passed}/{} items passed", report.items.len());

    let mut out = ctx.output()?;
    out.write_json("validation.json", &report)?;
    let summary = json!({ "passed": passed, "total": report.items.len() });
    out.finish(ctx.manifest("validate", summary))?;
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}
