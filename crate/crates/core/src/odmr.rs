//! Microwave-detuning sweeps and resonance metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::lindblad::{assemble_liouvillian, steady_state, DensityMatrix};
use crate::model::{
    build_hamiltonian, build_jump_operators, RateTable, SpinParams, EXCITED_MINUS, EXCITED_MS0, EXCITED_PLUS,
    SINGLET_LOWER, SINGLET_UPPER,
};

/// Half-width of the default detuning grid, Hz.
pub const DEFAULT_SPAN_HZ: f64 = 50e6;
/// Point count of the default detuning grid (odd, so zero is sampled).
pub const DEFAULT_POINTS: usize = 401;
/// Fraction of grid points (split between both ends) averaged for the baseline.
pub const BASELINE_FRACTION: f64 = 0.1;

/// What the sweep records at each detuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    /// ρ₇₇ − ρ₈₈, the singlet population difference seen by the IR probe.
    IrAbsorption,
    /// Photoluminescence rate normalized by the total radiative rate.
    Fluorescence,
    /// Cavity reflected power in watts.
    ReflectedPower,
}

/// Observable sampled on a strictly increasing detuning grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdmrCurve {
    pub detunings: Vec<f64>,
    pub observable: Vec<f64>,
    pub kind: ObservableKind,
}

impl OdmrCurve {
    pub fn new(detunings: Vec<f64>, observable: Vec<f64>, kind: ObservableKind) -> Result<Self> {
        validate_grid(&detunings)?;
        if observable.len() != detunings.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} detunings but {} observable values",
                detunings.len(),
                observable.len()
            )));
        }
        if observable.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ODMR observable"));
        }
        if kind == ObservableKind::IrAbsorption && observable.iter().any(|v| v.abs() > 1.0) {
            return Err(Error::invalid("observable", "population difference outside [-1, 1]"));
        }
        Ok(Self {
            detunings,
            observable,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.detunings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detunings.is_empty()
    }

    /// Same curve with every observable value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            detunings: self.detunings.clone(),
            observable: self.observable.iter().map(|v| v * factor).collect(),
            kind: self.kind,
        }
    }
}

/// Which quantity divides the resonance deviation to form the contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastNormalizer {
    /// |extremum − baseline| / |baseline|: the change relative to the
    /// far-detuned signal.
    #[default]
    Baseline,
    /// |extremum − baseline| / |extremum|.
    Extremum,
    /// |extremum − baseline| / max(|baseline|, |extremum|), so C ≤ 1 for
    /// peaks and dips alike.
    Larger,
}

/// How the full width at half maximum is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthMethod {
    /// Linear interpolation of the two half-deviation crossings.
    #[default]
    Interpolated,
    /// Least-squares Lorentzian fit seeded by the interpolated estimate.
    LorentzianFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsOptions {
    pub normalizer: ContrastNormalizer,
    pub width: WidthMethod,
}

/// Contrast, linewidth, and the reference levels they were derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceMetrics {
    pub contrast: f64,
    pub fwhm_hz: f64,
    pub baseline: f64,
    pub extremum: f64,
    pub extremum_detuning_hz: f64,
    pub normalizer: ContrastNormalizer,
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 3 {
        return Err(Error::invalid(
            "detuning grid",
            format!("needs at least 3 points, got {}", grid.len()),
        ));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("detuning grid", "contains non-finite values"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("detuning grid", "must be strictly increasing"));
    }
    Ok(())
}

/// `points` values symmetric about zero spanning `[-span, span]`.
///
/// Mirrored points are exact negatives of each other.
pub fn symmetric_grid(span: f64, points: usize) -> Vec<f64> {
    let m = (points - 1) as f64;
    (0..points).map(|k| span * ((2 * k) as f64 - m) / m).collect()
}

pub fn default_grid() -> Vec<f64> {
    symmetric_grid(DEFAULT_SPAN_HZ, DEFAULT_POINTS)
}

/// Solves the NV steady state for one parameter set.
pub fn nv_steady_state(sp: &SpinParams, rt: &RateTable, pc: &PhysicalConstants) -> Result<DensityMatrix> {
    let h = build_hamiltonian(sp, pc)?;
    let jumps = build_jump_operators(rt)?;
    let l = assemble_liouvillian(&h, &jumps)?;
    steady_state(&l)
}

/// Reads the observable of `kind` from an NV steady state.
///
/// `ReflectedPower` is not a single-NV quantity and is rejected.
pub fn observe(rho: &DensityMatrix, rt: &RateTable, kind: ObservableKind) -> Result<f64> {
    match kind {
        ObservableKind::IrAbsorption => Ok(rho.population(SINGLET_LOWER) - rho.population(SINGLET_UPPER)),
        ObservableKind::Fluorescence => {
            let total = rt.k41 + rt.k52 + rt.k63;
            if total <= 0.0 {
                return Err(Error::invalid(
                    "radiative rates",
                    "fluorescence needs a radiative decay",
                ));
            }
            Ok((rt.k41 * rho.population(EXCITED_MS0)
                + rt.k52 * rho.population(EXCITED_PLUS)
                + rt.k63 * rho.population(EXCITED_MINUS))
                / total)
        }
        ObservableKind::ReflectedPower => Err(Error::invalid("observable", "reflected power needs a cavity")),
    }
}

/// Steady-state observable at every detuning of `grid`.
///
/// Grid points are solved independently (in parallel); results keep grid
/// order.
pub fn sweep_detuning(
    sp: &SpinParams,
    rt: &RateTable,
    grid: &[f64],
    kind: ObservableKind,
    pc: &PhysicalConstants,
) -> Result<OdmrCurve> {
    validate_grid(grid)?;
    let observable = grid
        .par_iter()
        .map(|&delta| {
            let at = sp.with_detuning(delta);
            nv_steady_state(&at, rt, pc)
                .and_then(|rho| observe(&rho, rt, kind))
                .map_err(|e| Error::AtDetuning {
                    detuning_hz: delta,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<f64>>>()?;
    OdmrCurve::new(grid.to_vec(), observable, kind)
}

struct Feature {
    baseline: f64,
    extremum: f64,
    index: usize,
}

fn locate_feature(curve: &OdmrCurve) -> Result<Feature> {
    let n = curve.len();
    let y = &curve.observable;
    let per_side = ((BASELINE_FRACTION * n as f64 / 2.0).round() as usize).max(1);
    let outer = y[..per_side].iter().chain(&y[n - per_side..]);
    let baseline = outer.sum::<f64>() / (2 * per_side) as f64;
    let (index, deviation) = y
        .iter()
        .map(|v| (v - baseline).abs())
        .enumerate()
        .fold((0, -1.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
    if deviation < 1e-6 * baseline.abs() || deviation == 0.0 {
        return Err(Error::NoResonance { deviation, baseline });
    }
    Ok(Feature {
        baseline,
        extremum: y[index],
        index,
    })
}

fn contrast_of(f: &Feature, normalizer: ContrastNormalizer) -> Result<f64> {
    let denom = match normalizer {
        ContrastNormalizer::Baseline => f.baseline.abs(),
        ContrastNormalizer::Extremum => f.extremum.abs(),
        ContrastNormalizer::Larger => f.baseline.abs().max(f.extremum.abs()),
    };
    if denom == 0.0 {
        return Err(Error::invalid("contrast normalizer", "reference level is zero"));
    }
    Ok((f.extremum - f.baseline).abs() / denom)
}

/// Contrast of the dominant feature without measuring its width.
pub fn contrast_only(curve: &OdmrCurve, normalizer: ContrastNormalizer) -> Result<f64> {
    contrast_of(&locate_feature(curve)?, normalizer)
}

/// Baseline, extremum, contrast and FWHM of the dominant resonance.
pub fn extract_metrics(curve: &OdmrCurve) -> Result<ResonanceMetrics> {
    extract_metrics_with(curve, &MetricsOptions::default())
}

pub fn extract_metrics_with(curve: &OdmrCurve, opts: &MetricsOptions) -> Result<ResonanceMetrics> {
    let f = locate_feature(curve)?;
    let contrast = contrast_of(&f, opts.normalizer)?;
    let (lo, hi) = half_crossings(curve, &f)?;
    let mut fwhm = hi - lo;
    if opts.width == WidthMethod::LorentzianFit {
        fwhm = lorentzian_fit(curve, &f, fwhm)?.fwhm;
    }
    Ok(ResonanceMetrics {
        contrast,
        fwhm_hz: fwhm,
        baseline: f.baseline,
        extremum: f.extremum,
        extremum_detuning_hz: curve.detunings[f.index],
        normalizer: opts.normalizer,
    })
}

fn half_crossings(curve: &OdmrCurve, f: &Feature) -> Result<(f64, f64)> {
    let x = &curve.detunings;
    let half = f.baseline + 0.5 * (f.extremum - f.baseline);
    // signed distance past the half level, positive inside the feature
    let sign = (f.extremum - f.baseline).signum();
    let inside = |k: usize| sign * (curve.observable[k] - half);
    let interp = |a: usize, b: usize| {
        let (ya, yb) = (inside(a), inside(b));
        x[a] + ya / (ya - yb) * (x[b] - x[a])
    };

    let mut left = None;
    for k in (0..f.index).rev() {
        if inside(k) <= 0.0 {
            left = Some(interp(k + 1, k));
            break;
        }
    }
    let mut right = None;
    for k in f.index + 1..x.len() {
        if inside(k) <= 0.0 {
            right = Some(interp(k - 1, k));
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok((l, r)),
        _ => Err(Error::TruncatedPeak),
    }
}

/// Parameters of `baseline + amplitude / (1 + (2(x − center)/fwhm)²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianFit {
    pub baseline: f64,
    pub amplitude: f64,
    pub center: f64,
    pub fwhm: f64,
}

fn lorentzian_fit(curve: &OdmrCurve, f: &Feature, fwhm0: f64) -> Result<LorentzianFit> {
    use nalgebra::{Matrix4, Vector4};

    let x = &curve.detunings;
    let y = &curve.observable;
    // work in units of the initial width so the normal equations are scaled
    let scale = fwhm0;
    let yscale = (f.extremum - f.baseline).abs();
    let model = |p: &Vector4<f64>, xi: f64| {
        let u = 2.0 * (xi / scale - p[2]) / p[3];
        p[0] + p[1] / (1.0 + u * u)
    };
    let sse = |p: &Vector4<f64>| {
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| ((model(p, xi) - yi) / yscale).powi(2))
            .sum::<f64>()
    };
    let mut p = Vector4::new(f.baseline, f.extremum - f.baseline, x[f.index] / scale, 1.0);
    let mut lambda = 1e-3;
    let mut cost = sse(&p);
    for _ in 0..200 {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for (&xi, &yi) in x.iter().zip(y) {
            let u = 2.0 * (xi / scale - p[2]) / p[3];
            let q = 1.0 / (1.0 + u * u);
            let dq_du = -2.0 * u * q * q;
            let g = Vector4::new(1.0, q, p[1] * dq_du * (-2.0 / p[3]), p[1] * dq_du * (-u / p[3])) / yscale;
            let r = (model(&p, xi) - yi) / yscale;
            jtj += g * g.transpose();
            jtr += g * r;
        }
        let mut damped = jtj;
        for i in 0..4 {
            damped[(i, i)] *= 1.0 + lambda;
        }
        let Some(step) = damped.lu().solve(&(-jtr)) else {
            break;
        };
        let trial = p + step;
        let trial_cost = sse(&trial);
        if trial_cost.is_finite() && trial_cost < cost && trial[3] > 0.0 {
            let done = (cost - trial_cost) <= 1e-14 * cost.max(1e-300);
            p = trial;
            cost = trial_cost;
            lambda = (lambda * 0.3).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("Lorentzian fit"));
    }
    Ok(LorentzianFit {
        baseline: p[0],
        amplitude: p[1],
        center: p[2] * scale,
        fwhm: p[3].abs() * scale,
    })
}

/// Fluorescence ODMR contrast as a function of the optical saturation
/// parameter `s = W_p / P_sat`.
pub fn fluorescence_contrast_vs_saturation(
    sp: &SpinParams,
    rt: &RateTable,
    s_grid: &[f64],
    p_sat: f64,
    detunings: &[f64],
    pc: &PhysicalConstants,
) -> Result<Vec<(f64, f64)>> {
    if !(p_sat.is_finite() && p_sat > 0.0) {
        return Err(Error::invalid("P_sat", format!("{p_sat}")));
    }
    s_grid
        .iter()
        .map(|&s| {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid("saturation parameter", format!("{s}")));
            }
            let rates = rt.with_pump(s * p_sat);
            let curve = sweep_detuning(sp, &rates, detunings, ObservableKind::Fluorescence, pc)?;
            Ok((s, contrast_only(&curve, ContrastNormalizer::Baseline)?))
        })
        .collect()
}
