//! Photon and spin shot-noise limits for a cavity configuration.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavity::{self_consistent_state_with, CavityParams, CavityState, LoopConfig, SATURATION_INTENSITY};
use crate::constants::PhysicalConstants;
use crate::error::{ensure_positive, Error, Result};
use crate::model::{RateTable, SpinParams};
use crate::odmr::{
    default_grid, extract_metrics_with, ContrastNormalizer, MetricsOptions, ObservableKind, OdmrCurve,
    ResonanceMetrics, WidthMethod,
};

/// Fraction of the photon-noise limit the spin-noise limit may reach.
pub const DEFAULT_SPIN_FRACTION: f64 = 0.2;

/// Photon shot-noise limited sensitivity, T/√Hz.
///
/// `fwhm` and `frequency` in Hz, `power` in W.
pub fn photon_shot_noise(fwhm: f64, contrast: f64, power: f64, frequency: f64, pc: &PhysicalConstants) -> Result<f64> {
    if contrast == 0.0 {
        return Err(Error::ZeroContrast);
    }
    ensure_positive("contrast", contrast)?;
    ensure_positive("fwhm", fwhm)?;
    ensure_positive("reflected power", power)?;
    ensure_positive("frequency", frequency)?;
    Ok(TAU * fwhm / (pc.gyromagnetic_ratio * contrast) * (pc.photon_energy(frequency) / power).sqrt())
}

/// Spin projection-noise limited sensitivity, T/√Hz.
pub fn spin_shot_noise(
    nv_density: f64,
    length: f64,
    mode_area: f64,
    t2_star: f64,
    measurement_time: f64,
    pc: &PhysicalConstants,
) -> Result<f64> {
    ensure_positive("n_NV", nv_density)?;
    ensure_positive("l_c", length)?;
    ensure_positive("sigma_m", mode_area)?;
    ensure_positive("T2*", t2_star)?;
    ensure_positive("t_m", measurement_time)?;
    Ok(2.0 / (pc.gyromagnetic_ratio * (nv_density * length * mode_area * t2_star * measurement_time).sqrt()))
}

/// Dephasing time implied by a resonance width, 2/Δν.
pub fn t2_star_from_linewidth(fwhm: f64) -> f64 {
    2.0 / fwhm
}

/// Which reflected power enters the photon shot-noise limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerReference {
    /// Reflected power at the resonance extremum.
    #[default]
    OnResonance,
    /// Far-detuned reflected power (the curve baseline).
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationOptions {
    /// MW detunings of the reflected-power sweep, Hz.
    pub detunings: Vec<f64>,
    /// Defaults to the larger of baseline and extremum as the contrast
    /// reference. Paired with the on-resonance power this keeps C·√P equal
    /// to ΔP/√P_ref for peaks and bounded for dips whose floor vanishes.
    pub metrics: MetricsOptions,
    pub power_reference: PowerReference,
    pub spin_fraction: f64,
    /// W/m²
    pub saturation_intensity: f64,
    /// s
    pub measurement_time: f64,
    pub fixed_point: LoopConfig,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self {
            detunings: default_grid(),
            metrics: MetricsOptions {
                normalizer: ContrastNormalizer::Larger,
                width: WidthMethod::Interpolated,
            },
            power_reference: PowerReference::OnResonance,
            spin_fraction: DEFAULT_SPIN_FRACTION,
            saturation_intensity: SATURATION_INTENSITY,
            measurement_time: 1.0,
            fixed_point: LoopConfig::default(),
        }
    }
}

/// Parameters a result was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEcho {
    pub cavity: CavityParams,
    pub spin: SpinParams,
    pub rates: RateTable,
    pub constants: PhysicalConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    /// Photon shot-noise limit, T/√Hz.
    pub delta_b: f64,
    /// Spin shot-noise limit, T/√Hz.
    pub delta_b_spin: f64,
    pub contrast: f64,
    /// Hz
    pub fwhm_hz: f64,
    /// Power used in the photon-noise limit, W.
    pub reflected_power: f64,
    /// Largest intracavity intensity over the sweep, W/m².
    pub circulating_intensity: f64,
    pub saturation_ok: bool,
    pub spin_noise_ok: bool,
    pub spin_fraction: f64,
    pub power_reference: PowerReference,
    pub metrics: ResonanceMetrics,
    /// Most fixed-point iterations needed at any detuning.
    pub max_iterations: usize,
    pub params: ParameterEcho,
}

impl SensitivityResult {
    pub fn feasible(&self) -> bool {
        self.saturation_ok && self.spin_noise_ok
    }
}

/// Reflected power against MW detuning with the cavity state at each point.
pub fn reflected_power_sweep(
    cp: &CavityParams,
    sp: &SpinParams,
    rt: &RateTable,
    pc: &PhysicalConstants,
    detunings: &[f64],
    loop_cfg: &LoopConfig,
) -> Result<(OdmrCurve, Vec<CavityState>)> {
    cp.validate()?;
    let states = detunings
        .par_iter()
        .map(|&delta| {
            self_consistent_state_with(cp, &sp.with_detuning(delta), rt, pc, loop_cfg).map_err(|e| Error::AtDetuning {
                detuning_hz: delta,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let power = states.iter().map(|s| s.reflected_power).collect();
    let curve = OdmrCurve::new(detunings.to_vec(), power, ObservableKind::ReflectedPower)?;
    Ok((curve, states))
}

/// Full pipeline for one configuration: reflected-power resonance, its
/// contrast and width, and both noise limits with their constraint flags.
pub fn evaluate_configuration(
    cp: &CavityParams,
    sp: &SpinParams,
    rt: &RateTable,
    pc: &PhysicalConstants,
    opts: &EvaluationOptions,
) -> Result<SensitivityResult> {
    ensure_positive("spin_fraction", opts.spin_fraction)?;
    ensure_positive("saturation_intensity", opts.saturation_intensity)?;
    let (curve, states) = reflected_power_sweep(cp, sp, rt, pc, &opts.detunings, &opts.fixed_point)?;
    let metrics = extract_metrics_with(&curve, &opts.metrics)?;
    let power = match opts.power_reference {
        PowerReference::OnResonance => metrics.extremum,
        PowerReference::Baseline => metrics.baseline,
    };
    let delta_b = photon_shot_noise(metrics.fwhm_hz, metrics.contrast, power, cp.frequency(pc), pc)?;
    let delta_b_spin = spin_shot_noise(
        cp.nv_density,
        cp.length,
        cp.mode_area,
        t2_star_from_linewidth(metrics.fwhm_hz),
        opts.measurement_time,
        pc,
    )?;
    let i_cir = states.iter().map(|s| s.circulating_intensity).fold(0.0, f64::max);
    Ok(SensitivityResult {
        delta_b,
        delta_b_spin,
        contrast: metrics.contrast,
        fwhm_hz: metrics.fwhm_hz,
        reflected_power: power,
        circulating_intensity: i_cir,
        saturation_ok: i_cir <= opts.saturation_intensity,
        spin_noise_ok: delta_b_spin <= opts.spin_fraction * delta_b,
        spin_fraction: opts.spin_fraction,
        power_reference: opts.power_reference,
        metrics,
        max_iterations: states.iter().map(|s| s.iterations).max().unwrap_or(0),
        params: ParameterEcho {
            cavity: *cp,
            spin: *sp,
            rates: *rt,
            constants: *pc,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odmr::symmetric_grid;

    fn nu() -> f64 {
        PhysicalConstants::default().light_speed / 1.042e-6
    }

    #[test]
    fn photon_noise_hand_value() {
        // 2π·4e6 / (1.761e11·0.3) · √(6.62607015e-34·2.877087e14 / 0.01)
        let pc = PhysicalConstants::default();
        let db = photon_shot_noise(4e6, 0.3, 1e-2, nu(), &pc).unwrap();
        assert!((db - 2.077_130_37e-12).abs() < 1e-8 * db, "{db}");
    }

    #[test]
    fn photon_noise_scaling() {
        let pc = PhysicalConstants::default();
        let base = photon_shot_noise(4e6, 0.3, 1e-2, nu(), &pc).unwrap();
        assert_eq!(photon_shot_noise(4e6, 0.15, 1e-2, nu(), &pc).unwrap(), 2.0 * base);
        assert_eq!(photon_shot_noise(4e6, 0.3, 4e-2, nu(), &pc).unwrap(), 0.5 * base);
        assert_eq!(photon_shot_noise(4e6, 0.0, 1e-2, nu(), &pc), Err(Error::ZeroContrast));
        assert!(photon_shot_noise(4e6, 0.3, 0.0, nu(), &pc).is_err());
    }

    #[test]
    fn spin_noise_scaling() {
        let pc = PhysicalConstants::default();
        let base = spin_shot_noise(1e24, 1e-5, 1e-6, 5e-7, 1.0, &pc).unwrap();
        assert!((base - 5.079_086_83e-15).abs() < 1e-8 * base);
        assert_eq!(spin_shot_noise(4e24, 1e-5, 1e-6, 5e-7, 1.0, &pc).unwrap(), 0.5 * base);
        assert_eq!(spin_shot_noise(1e24, 1e-5, 1e-6, 5e-7, 4.0, &pc).unwrap(), 0.5 * base);
    }

    #[test]
    fn pipeline_is_consistent() {
        let pc = PhysicalConstants::default();
        let cp = CavityParams::default();
        let opts = EvaluationOptions {
            detunings: symmetric_grid(200e6, 81),
            ..Default::default()
        };
        let r = evaluate_configuration(&cp, &SpinParams::default(), &RateTable::default(), &pc, &opts).unwrap();
        let again = photon_shot_noise(r.fwhm_hz, r.contrast, r.reflected_power, cp.frequency(&pc), &pc).unwrap();
        assert_eq!(r.delta_b, again);
        assert_eq!(r.reflected_power, r.metrics.extremum);
        assert_eq!(r.saturation_ok, r.circulating_intensity <= SATURATION_INTENSITY);
        assert_eq!(r.spin_noise_ok, r.delta_b_spin <= 0.2 * r.delta_b);
        assert!(r.delta_b > 0.0 && r.delta_b_spin > 0.0);
    }

    #[test]
    fn undriven_configuration_has_no_resonance() {
        let pc = PhysicalConstants::default();
        let sp = SpinParams {
            mw_rabi: 0.0,
            ..SpinParams::default()
        };
        let opts = EvaluationOptions {
            detunings: symmetric_grid(200e6, 21),
            ..Default::default()
        };
        let err = evaluate_configuration(&CavityParams::default(), &sp, &RateTable::default(), &pc, &opts).unwrap_err();
        assert!(matches!(err, Error::NoResonance { .. }));
    }
}
