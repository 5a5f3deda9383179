//! Monolithic Fabry-Pérot cavity filled with NV-doped diamond.

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::model::{RateTable, SpinParams, SINGLET_LOWER, SINGLET_UPPER};
use crate::odmr::nv_steady_state;
use crate::validation::CALIBRATED_SIGMA_NV;

/// Singlet-transition saturation intensity, W/m² (0.5 W/μm²).
pub const SATURATION_INTENSITY: f64 = 0.5e12;

/// Mirrors, diamond slab and probe beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityParams {
    /// Input-mirror power reflectivity.
    #[serde(rename = "R1")]
    pub r1: f64,
    /// Back-mirror power reflectivity.
    #[serde(rename = "R2")]
    pub r2: f64,
    /// Cavity length, equal to the diamond length, m.
    #[serde(rename = "l_c_m")]
    pub length: f64,
    #[serde(rename = "Q_i")]
    pub q_intrinsic: f64,
    /// Probe wavelength, m.
    #[serde(rename = "lambda_m")]
    pub wavelength: f64,
    /// Mode cross-section, m².
    #[serde(rename = "sigma_m_m2")]
    pub mode_area: f64,
    /// NV density, m⁻³.
    #[serde(rename = "n_NV_m3")]
    pub nv_density: f64,
    /// IR absorption cross-section per NV, m². Defaults to the calibrated
    /// value.
    #[serde(rename = "sigma_NV_m2")]
    pub nv_cross_section: f64,
    /// Probe power incident on the input mirror, W.
    #[serde(rename = "P_in_W")]
    pub input_power: f64,
    /// Round-trip detuning phase. `None` locks the probe to a cavity
    /// resonance (sin φ = 0).
    #[serde(rename = "phi_rad")]
    pub phase: Option<f64>,
}

impl Default for CavityParams {
    fn default() -> Self {
        Self {
            r1: 0.9,
            r2: 0.99,
            length: 1e-5,
            q_intrinsic: 1e6,
            wavelength: 1.042e-6,
            mode_area: 1e-6,
            nv_density: 1e24,
            nv_cross_section: CALIBRATED_SIGMA_NV,
            input_power: 0.08,
            phase: None,
        }
    }
}

impl CavityParams {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("R1", self.r1), ("R2", self.r2)] {
            ensure_finite(name, r)?;
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::invalid(
                    name,
                    format!("reflectivity must lie in (0, 1), got {r}"),
                ));
            }
        }
        ensure_positive("l_c", self.length)?;
        ensure_positive("Q_i", self.q_intrinsic)?;
        ensure_positive("lambda", self.wavelength)?;
        ensure_positive("sigma_m", self.mode_area)?;
        ensure_positive("n_NV", self.nv_density)?;
        ensure_positive("sigma_NV", self.nv_cross_section)?;
        ensure_positive("P_in", self.input_power)?;
        if let Some(phi) = self.phase {
            ensure_finite("phi", phi)?;
        }
        Ok(())
    }

    /// Probe frequency c/λ, Hz.
    pub fn frequency(&self, pc: &PhysicalConstants) -> f64 {
        pc.light_speed / self.wavelength
    }

    pub fn phase_or_resonant(&self) -> f64 {
        self.phase.unwrap_or(0.0)
    }

    /// Incident intensity P_in/σ_m, W/m².
    pub fn incident_intensity(&self) -> f64 {
        self.input_power / self.mode_area
    }

    pub fn with_input_power(&self, p: f64) -> Self {
        Self {
            input_power: p,
            ..*self
        }
    }
}

/// Intrinsic single-pass loss l_c/(λ·Q_i).
pub fn background_loss(length: f64, q_intrinsic: f64, wavelength: f64) -> f64 {
    length / (wavelength * q_intrinsic)
}

/// Single-pass NV absorption n_NV·l_c·σ_NV·Δρ.
pub fn optical_depth(nv_density: f64, length: f64, cross_section: f64, delta_rho: f64) -> f64 {
    nv_density * length * cross_section * delta_rho
}

struct Transfer {
    /// 4√(R1R2)·e^{−(a+d)}·sin²φ
    detune: f64,
    denom: f64,
}

fn transfer(cp: &CavityParams, a: f64, d: f64) -> Transfer {
    let g = (cp.r1 * cp.r2).sqrt() * (-(a + d)).exp();
    let s = cp.phase_or_resonant().sin();
    let detune = 4.0 * g * s * s;
    Transfer {
        detune,
        denom: (1.0 - g).powi(2) + detune,
    }
}

/// Reflected probe power, W.
pub fn reflected_power(cp: &CavityParams, a: f64, d: f64) -> f64 {
    let t = transfer(cp, a, d);
    let mismatch = cp.r1.sqrt() - cp.r2.sqrt() * (-(a + d)).exp();
    cp.input_power * (mismatch * mismatch + t.detune) / t.denom
}

/// Intracavity intensity, W/m².
pub fn circulating_intensity(cp: &CavityParams, a: f64, d: f64) -> f64 {
    let t = transfer(cp, a, d);
    cp.incident_intensity() * (1.0 - cp.r1) * (-(a + d)).exp() / t.denom
}

/// Incoherent IR transition rate σ_NV·I/(hν), s⁻¹.
pub fn ir_drive_rate(cp: &CavityParams, intensity: f64, pc: &PhysicalConstants) -> f64 {
    cp.nv_cross_section * intensity / pc.photon_energy(cp.frequency(pc))
}

/// How each pass of the fixed-point loop moves the optical depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UpdateRule {
    /// `d ← d + w·(F(d) − d)` with a constant weight `w` in (0, 1].
    Damped { weight: f64 },
    /// Secant step on F(d) − d from the last two passes, kept inside the
    /// bracket established so far. Falls back to bisection when a step
    /// leaves the bracket or fails to halve the change.
    Secant,
}

/// Fixed-point loop settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub update: UpdateRule,
    /// Relative change in d that counts as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            update: UpdateRule::Secant,
            tolerance: 1e-6,
            max_iterations: 100,
        }
    }
}

/// Converged cavity and NV operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityState {
    pub background_loss: f64,
    pub optical_depth: f64,
    pub delta_rho: f64,
    /// W/m²
    pub circulating_intensity: f64,
    /// W
    pub reflected_power: f64,
    /// Final IR drive rate, s⁻¹.
    pub ir_drive: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative change in d after each update.
    pub residuals: Vec<f64>,
}

fn delta_rho_at(sp: &SpinParams, rt: &RateTable, w_ir: f64, pc: &PhysicalConstants) -> Result<f64> {
    let rho = nv_steady_state(sp, &rt.with_ir_drive(w_ir), pc)?;
    Ok(rho.population(SINGLET_LOWER) - rho.population(SINGLET_UPPER))
}

/// Solves for the optical depth consistent with the intracavity intensity
/// it produces.
///
/// Write F(d) for the optical depth of the NV steady state driven at the
/// intensity that depth d lets build up. More absorption means less light
/// and less bleaching, so F is increasing and bounded by the IR-free depth
/// d₀. Hence F(0) − 0 ≥ 0 ≥ F(d₀) − d₀ and a fixed point always lies in
/// [0, d₀]. The loop starts from d₀, tracks that bracket as signs of
/// F(d) − d are observed, and falls back to bisection if an update would
/// leave it.
pub fn self_consistent_state(
    cp: &CavityParams,
    sp: &SpinParams,
    rt: &RateTable,
    pc: &PhysicalConstants,
) -> Result<CavityState> {
    self_consistent_state_with(cp, sp, rt, pc, &LoopConfig::default())
}

pub fn self_consistent_state_with(
    cp: &CavityParams,
    sp: &SpinParams,
    rt: &RateTable,
    pc: &PhysicalConstants,
    cfg: &LoopConfig,
) -> Result<CavityState> {
    cp.validate()?;
    if let UpdateRule::Damped { weight } = cfg.update {
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(Error::invalid(
                "damping weight",
                format!("must lie in (0, 1], got {weight}"),
            ));
        }
    }
    ensure_positive("tolerance", cfg.tolerance)?;
    if cfg.max_iterations == 0 {
        return Err(Error::invalid("max_iterations", "must be at least 1"));
    }

    let a = background_loss(cp.length, cp.q_intrinsic, cp.wavelength);
    let depth = |dr: f64| optical_depth(cp.nv_density, cp.length, cp.nv_cross_section, dr);

    let mut delta_rho = delta_rho_at(sp, rt, 0.0, pc)?;
    let mut d = depth(delta_rho);
    let (mut lo, mut hi) = (0.0_f64, d);
    let mut previous: Option<(f64, f64)> = None;
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut w_ir = 0.0;

    for _ in 0..cfg.max_iterations {
        w_ir = ir_drive_rate(cp, circulating_intensity(cp, a, d), pc);
        delta_rho = delta_rho_at(sp, rt, w_ir, pc)?;
        let target = depth(delta_rho);
        let change = target - d;
        let scale = d.abs().max(target.abs());
        let residual = if scale > 0.0 { change.abs() / scale } else { 0.0 };
        if !residual.is_finite() {
            return Err(Error::NonFinite("cavity fixed point"));
        }
        residuals.push(residual);
        if residual < cfg.tolerance {
            // keep the state consistent with the populations just computed
            d = target;
            converged = true;
            break;
        }
        if change < 0.0 {
            hi = hi.min(d);
        } else {
            lo = lo.max(d);
        }
        let next = match cfg.update {
            UpdateRule::Damped { weight } => d + weight * change,
            UpdateRule::Secant => {
                let secant = previous
                    .filter(|&(dp, gp)| gp != change && dp != d && change.abs() < 0.5 * gp.abs())
                    .map(|(dp, gp)| d - change * (d - dp) / (change - gp));
                match (secant, previous) {
                    (Some(x), _) if x > lo && x < hi => x,
                    // first pass: plain iteration
                    (_, None) if target > lo && target < hi => target,
                    // stalled or left the bracket
                    _ => 0.5 * (lo + hi),
                }
            }
        };
        previous = Some((d, change));
        d = next;
    }

    if !converged {
        return Err(Error::NoConvergence {
            iterations: residuals.len(),
            residual: *residuals.last().unwrap_or(&f64::NAN),
        });
    }
    Ok(CavityState {
        background_loss: a,
        optical_depth: d,
        delta_rho,
        circulating_intensity: circulating_intensity(cp, a, d),
        reflected_power: reflected_power(cp, a, d),
        ir_drive: w_ir,
        iterations: residuals.len(),
        converged,
        residuals,
    })
}
