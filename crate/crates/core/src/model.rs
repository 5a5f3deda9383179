//! The eight-level NV⁻ model: rotating-frame Hamiltonian and Lindblad
//! jump operators.
//!
//! Level numbering (0-based here, 1-based in the usual level diagram):
//!
//! | index | level | state            |
//! |-------|-------|------------------|
//! | 0     | 1     | ³A₂, m_s = 0     |
//! | 1     | 2     | ³A₂, m_s = +1    |
//! | 2     | 3     | ³A₂, m_s = −1    |
//! | 3     | 4     | ³E,  m_s = 0     |
//! | 4     | 5     | ³E,  m_s = +1    |
//! | 5     | 6     | ³E,  m_s = −1    |
//! | 6     | 7     | ¹E  (lower singlet, IR absorber) |
//! | 7     | 8     | ¹A₁ (upper singlet) |
//!
//! The Hamiltonian is expressed in the frame rotating at the microwave
//! frequency `f_MW = D_ground + detuning`, with counter-rotating terms
//! dropped. The constant `-D·S(S+1)/3` offset is omitted. Entries are
//! angular frequencies (rad/s).
//!
//! Splittings, Zeeman shifts and detunings are ordinary frequencies and are
//! multiplied by 2π. The Rabi frequency and the jump rates are quoted in the
//! same "MHz" as rates of change and enter unconverted, as s⁻¹. With that
//! reading γ_φ = 1 MHz gives T₂* = 1/(2γ_φ) = 500 ns.

use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{angular, PhysicalConstants};
use crate::error::{ensure_finite, ensure_non_negative, ensure_positive, Error, Result};

/// Number of levels in the NV model.
pub const NV_LEVELS: usize = 8;

pub const GROUND_MS0: usize = 0;
pub const GROUND_PLUS: usize = 1;
pub const GROUND_MINUS: usize = 2;
pub const EXCITED_MS0: usize = 3;
pub const EXCITED_PLUS: usize = 4;
pub const EXCITED_MINUS: usize = 5;
pub const SINGLET_LOWER: usize = 6;
pub const SINGLET_UPPER: usize = 7;

/// Spin-Hamiltonian parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinParams {
    /// Axial zero-field splitting of the ground triplet.
    #[serde(rename = "zfs_ground_D_Hz")]
    pub zfs_ground: f64,
    /// Transverse (strain) zero-field term E.
    #[serde(rename = "zfs_strain_E_Hz")]
    pub zfs_strain: f64,
    /// Axial zero-field splitting of the excited triplet.
    #[serde(rename = "zfs_excited_D_Hz")]
    pub zfs_excited: f64,
    /// Static field along the NV axis, tesla.
    #[serde(rename = "bias_field_Bz_T")]
    pub bias_field: f64,
    /// Microwave Rabi rate Ω_R in s⁻¹; the drive term is Ω_R/2 with no 2π.
    #[serde(rename = "mw_rabi_Hz")]
    pub mw_rabi: f64,
    /// Microwave frequency minus the ground zero-field resonance.
    #[serde(rename = "mw_detuning_Hz")]
    pub mw_detuning: f64,
}

impl Default for SpinParams {
    fn default() -> Self {
        Self {
            zfs_ground: 2.870e9,
            zfs_strain: 0.0,
            zfs_excited: 1.420e9,
            bias_field: 0.0,
            mw_rabi: 5.0e6,
            mw_detuning: 0.0,
        }
    }
}

impl SpinParams {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("zfs_ground_D_Hz", self.zfs_ground)?;
        ensure_non_negative("zfs_strain_E_Hz", self.zfs_strain)?;
        ensure_finite("zfs_excited_D_Hz", self.zfs_excited)?;
        ensure_finite("bias_field_Bz_T", self.bias_field)?;
        ensure_non_negative("mw_rabi_Hz", self.mw_rabi)?;
        ensure_finite("mw_detuning_Hz", self.mw_detuning)?;
        Ok(())
    }

    pub fn with_detuning(mut self, detuning_hz: f64) -> Self {
        self.mw_detuning = detuning_hz;
        self
    }
}

/// Incoherent rates of the level scheme, in s⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateTable {
    #[serde(rename = "k41_Hz")]
    pub k41: f64,
    #[serde(rename = "k52_Hz")]
    pub k52: f64,
    #[serde(rename = "k63_Hz")]
    pub k63: f64,
    #[serde(rename = "k87_Hz")]
    pub k87: f64,
    #[serde(rename = "k48_Hz")]
    pub k48: f64,
    #[serde(rename = "k58_Hz")]
    pub k58: f64,
    #[serde(rename = "k68_Hz")]
    pub k68: f64,
    #[serde(rename = "k71_Hz")]
    pub k71: f64,
    #[serde(rename = "k72_Hz")]
    pub k72: f64,
    #[serde(rename = "k73_Hz")]
    pub k73: f64,
    /// Green optical pump rate W_p.
    #[serde(rename = "pump_Wp_Hz")]
    pub pump: f64,
    /// IR-induced ¹E ↔ ¹A₁ rate. Enters 7→8 alone and is added to the
    /// spontaneous 8→7 decay as stimulated emission.
    #[serde(rename = "ir_drive_Wir_Hz")]
    pub ir_drive: f64,
    #[serde(rename = "gamma_gMW_Hz")]
    pub gamma_ground_mw: f64,
    #[serde(rename = "gamma_eMW_Hz")]
    pub gamma_excited_mw: f64,
    /// Pure dephasing rate γ_φ; each projector carries 2γ_φ.
    #[serde(rename = "gamma_phi_Hz")]
    pub gamma_phi: f64,
    /// When true the upward optical rates are `k + W_p` as tabulated;
    /// when false they are `W_p` alone.
    pub pump_includes_k: bool,
}

impl Default for RateTable {
    fn default() -> Self {
        Self {
            k41: 66e6,
            k52: 66e6,
            k63: 66e6,
            k87: 1e9,
            k48: 7.9e6,
            k58: 53e6,
            k68: 53e6,
            k71: 1e6,
            k72: 0.7e6,
            k73: 0.7e6,
            pump: 1e6,
            ir_drive: 1e9,
            gamma_ground_mw: 1e3,
            gamma_excited_mw: 1e3,
            gamma_phi: 1e6,
            pump_includes_k: false,
        }
    }
}

impl RateTable {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            ensure_non_negative(name, v)?;
        }
        Ok(())
    }

    fn named(&self) -> [(&'static str, f64); 15] {
        [
            ("k41_Hz", self.k41),
            ("k52_Hz", self.k52),
            ("k63_Hz", self.k63),
            ("k87_Hz", self.k87),
            ("k48_Hz", self.k48),
            ("k58_Hz", self.k58),
            ("k68_Hz", self.k68),
            ("k71_Hz", self.k71),
            ("k72_Hz", self.k72),
            ("k73_Hz", self.k73),
            ("pump_Wp_Hz", self.pump),
            ("ir_drive_Wir_Hz", self.ir_drive),
            ("gamma_gMW_Hz", self.gamma_ground_mw),
            ("gamma_eMW_Hz", self.gamma_excited_mw),
            ("gamma_phi_Hz", self.gamma_phi),
        ]
    }

    /// Returns a copy with every rate set to zero.
    pub fn zeroed(&self) -> Self {
        Self {
            k41: 0.0,
            k52: 0.0,
            k63: 0.0,
            k87: 0.0,
            k48: 0.0,
            k58: 0.0,
            k68: 0.0,
            k71: 0.0,
            k72: 0.0,
            k73: 0.0,
            pump: 0.0,
            ir_drive: 0.0,
            gamma_ground_mw: 0.0,
            gamma_excited_mw: 0.0,
            gamma_phi: 0.0,
            pump_includes_k: self.pump_includes_k,
        }
    }

    pub fn with_ir_drive(mut self, rate: f64) -> Self {
        self.ir_drive = rate;
        self
    }

    pub fn with_pump(mut self, rate: f64) -> Self {
        self.pump = rate;
        self
    }

    /// Inhomogeneous dephasing time implied by the dephasing projectors.
    pub fn t2_star(&self) -> f64 {
        1.0 / (2.0 * self.gamma_phi)
    }

    fn upward(&self, k: f64) -> f64 {
        if self.pump_includes_k {
            k + self.pump
        } else {
            self.pump
        }
    }
}

/// One dissipative channel `rate · D[|destination⟩⟨source|]`.
///
/// `source == destination` gives a dephasing projector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpOperator {
    pub source: usize,
    pub destination: usize,
    pub rate: f64,
}

impl JumpOperator {
    pub fn new(source: usize, destination: usize, rate: f64) -> Self {
        Self {
            source,
            destination,
            rate,
        }
    }
}

/// Groups of the tabulated channel list, by row range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelGroup {
    Optical,
    Spin,
    Dephasing,
    Metastable,
}

/// Row ranges of [`build_jump_operators`] output.
pub const CHANNEL_GROUPS: [(ChannelGroup, Range<usize>); 4] = [
    (ChannelGroup::Optical, 0..8),
    (ChannelGroup::Spin, 8..16),
    (ChannelGroup::Dephasing, 16..20),
    (ChannelGroup::Metastable, 20..26),
];

/// Builds the rotating-frame Hamiltonian (rad/s).
pub fn build_hamiltonian(sp: &SpinParams, pc: &PhysicalConstants) -> Result<DMatrix<Complex64>> {
    sp.validate()?;
    let zeeman = pc.zeeman_hz(sp.bias_field);
    if !zeeman.is_finite() {
        return Err(Error::NonFinite("Zeeman term"));
    }
    let f_mw = sp.zfs_ground + sp.mw_detuning;
    let mut h = DMatrix::<Complex64>::zeros(NV_LEVELS, NV_LEVELS);
    let re = |x: f64| Complex64::new(angular(x), 0.0);

    // ground triplet
    h[(GROUND_PLUS, GROUND_PLUS)] = re(sp.zfs_ground + zeeman - f_mw);
    h[(GROUND_MINUS, GROUND_MINUS)] = re(sp.zfs_ground - zeeman - f_mw);
    h[(GROUND_PLUS, GROUND_MINUS)] = re(sp.zfs_strain);
    h[(GROUND_MINUS, GROUND_PLUS)] = re(sp.zfs_strain);
    let drive = Complex64::new(0.5 * sp.mw_rabi, 0.0);
    for m in [GROUND_PLUS, GROUND_MINUS] {
        h[(GROUND_MS0, m)] = drive;
        h[(m, GROUND_MS0)] = drive;
    }

    // excited triplet, same frame; the drive is ~|D_e - D_g| off resonance
    // there and is not coupled in
    h[(EXCITED_PLUS, EXCITED_PLUS)] = re(sp.zfs_excited + zeeman - f_mw);
    h[(EXCITED_MINUS, EXCITED_MINUS)] = re(sp.zfs_excited - zeeman - f_mw);
    h[(EXCITED_PLUS, EXCITED_MINUS)] = re(sp.zfs_strain);
    h[(EXCITED_MINUS, EXCITED_PLUS)] = re(sp.zfs_strain);

    Ok(h)
}

/// Builds the 26 tabulated jump operators, in table order.
pub fn build_jump_operators(rt: &RateTable) -> Result<Vec<JumpOperator>> {
    rt.validate()?;
    let j = JumpOperator::new;
    let (g0, gp, gm) = (GROUND_MS0, GROUND_PLUS, GROUND_MINUS);
    let (e0, ep, em) = (EXCITED_MS0, EXCITED_PLUS, EXCITED_MINUS);
    let (s7, s8) = (SINGLET_LOWER, SINGLET_UPPER);
    let dephase = 2.0 * rt.gamma_phi;
    Ok(vec![
        // optical
        j(e0, g0, rt.k41),
        j(ep, gp, rt.k52),
        j(em, gm, rt.k63),
        j(g0, e0, rt.upward(rt.k41)),
        j(gp, ep, rt.upward(rt.k52)),
        j(gm, em, rt.upward(rt.k63)),
        j(s8, s7, rt.k87 + rt.ir_drive),
        j(s7, s8, rt.ir_drive),
        // spin mixing
        j(gp, g0, rt.gamma_ground_mw),
        j(g0, gp, rt.gamma_ground_mw),
        j(gm, g0, rt.gamma_ground_mw),
        j(g0, gm, rt.gamma_ground_mw),
        j(ep, e0, rt.gamma_excited_mw),
        j(e0, ep, rt.gamma_excited_mw),
        j(em, e0, rt.gamma_excited_mw),
        j(e0, em, rt.gamma_excited_mw),
        // dephasing
        j(gp, gp, dephase),
        j(gm, gm, dephase),
        j(ep, ep, dephase),
        j(em, em, dephase),
        // intersystem crossing and metastable decay
        j(e0, s8, rt.k48),
        j(ep, s8, rt.k58),
        j(em, s8, rt.k68),
        j(s7, g0, rt.k71),
        j(s7, gp, rt.k72),
        j(s7, gm, rt.k73),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &DMatrix<Complex64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_field_undriven_is_diagonal_and_degenerate() {
        let sp = SpinParams {
            mw_rabi: 0.0,
            ..SpinParams::default()
        };
        let h = build_hamiltonian(&sp, &PhysicalConstants::default()).unwrap();
        for i in 0..NV_LEVELS {
            for k in 0..NV_LEVELS {
                if i != k {
                    assert_eq!(h[(i, k)], Complex64::new(0.0, 0.0));
                }
            }
        }
        for i in [GROUND_MS0, GROUND_PLUS, GROUND_MINUS] {
            assert_eq!(h[(i, i)].re, 0.0);
        }
        assert_eq!(h[(GROUND_PLUS, GROUND_PLUS)], h[(GROUND_MINUS, GROUND_MINUS)]);
    }

    #[test]
    fn one_millitesla_zeeman_splitting() {
        let pc = PhysicalConstants::default();
        let sp = SpinParams {
            bias_field: 1e-3,
            ..SpinParams::default()
        };
        let h = build_hamiltonian(&sp, &pc).unwrap();
        let split_hz = (h[(GROUND_PLUS, GROUND_PLUS)].re - h[(GROUND_MINUS, GROUND_MINUS)].re) / std::f64::consts::TAU;
        // 2 * 1.761e11 * 1e-3 / 2π
        let expected = 2.0 * 1.761e11 * 1e-3 / std::f64::consts::TAU;
        assert!((split_hz - expected).abs() < 1e-6 * expected);
        assert!((split_hz / 1e6 - 56.05).abs() < 0.01);
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let sp = SpinParams {
            zfs_strain: 3.3e6,
            bias_field: 2.5e-3,
            mw_rabi: 7.0e6,
            mw_detuning: -4.0e6,
            ..SpinParams::default()
        };
        let h = build_hamiltonian(&sp, &PhysicalConstants::default()).unwrap();
        let diff = &h - h.adjoint();
        assert!(max_abs(&diff) <= 1e-12 * max_abs(&h));
    }

    #[test]
    fn zero_field_swap_symmetry() {
        let sp = SpinParams {
            zfs_strain: 2e6,
            mw_detuning: 3e6,
            ..SpinParams::default()
        };
        let h = build_hamiltonian(&sp, &PhysicalConstants::default()).unwrap();
        let perm = |i: usize| match i {
            GROUND_PLUS => GROUND_MINUS,
            GROUND_MINUS => GROUND_PLUS,
            EXCITED_PLUS => EXCITED_MINUS,
            EXCITED_MINUS => EXCITED_PLUS,
            other => other,
        };
        for i in 0..NV_LEVELS {
            for k in 0..NV_LEVELS {
                assert_eq!(h[(perm(i), perm(k))], h[(i, k)]);
            }
        }
    }

    #[test]
    fn rejects_non_finite_input() {
        let sp = SpinParams {
            bias_field: f64::NAN,
            ..SpinParams::default()
        };
        assert!(build_hamiltonian(&sp, &PhysicalConstants::default()).is_err());
        let sp = SpinParams {
            mw_rabi: f64::INFINITY,
            ..SpinParams::default()
        };
        assert!(build_hamiltonian(&sp, &PhysicalConstants::default()).is_err());
    }

    #[test]
    fn default_table_channels() {
        let ops = build_jump_operators(&RateTable::default()).unwrap();
        assert_eq!(ops.len(), 26);
        let isc: Vec<_> = ops
            .iter()
            .filter(|j| j.destination == SINGLET_UPPER && j.source != SINGLET_LOWER)
            .collect();
        assert_eq!(isc.len(), 3);
        assert_eq!(isc[0].source, EXCITED_MS0);
        assert_eq!(isc[0].rate, 7.9e6);
        assert_eq!(isc[1].rate, 53e6);
        assert_eq!(isc[2].rate, 53e6);
    }

    #[test]
    fn group_partition_matches_table() {
        let ops = build_jump_operators(&RateTable::default()).unwrap();
        let sizes: Vec<usize> = CHANNEL_GROUPS.iter().map(|(_, r)| r.len()).collect();
        assert_eq!(sizes, vec![8, 8, 4, 6]);
        for (group, range) in CHANNEL_GROUPS {
            for j in &ops[range] {
                let ok = match group {
                    ChannelGroup::Optical => j.source != j.destination,
                    ChannelGroup::Spin => {
                        (j.source < 3 && j.destination < 3)
                            || ((3..6).contains(&j.source) && (3..6).contains(&j.destination))
                    }
                    ChannelGroup::Dephasing => j.source == j.destination,
                    ChannelGroup::Metastable => j.destination == SINGLET_UPPER || j.source == SINGLET_LOWER,
                };
                assert!(ok, "{group:?}: {j:?}");
            }
        }
    }

    #[test]
    fn all_zero_rates_give_26_silent_channels() {
        let rt = RateTable::default().zeroed();
        let ops = build_jump_operators(&rt).unwrap();
        assert_eq!(ops.len(), 26);
        assert!(ops.iter().all(|j| j.rate == 0.0));
    }

    #[test]
    fn dephasing_projectors_carry_twice_gamma_phi() {
        let ops = build_jump_operators(&RateTable::default()).unwrap();
        let deph: Vec<_> = ops[16..20].iter().map(|j| (j.source, j.rate)).collect();
        assert_eq!(
            deph,
            vec![
                (GROUND_PLUS, 2e6),
                (GROUND_MINUS, 2e6),
                (EXCITED_PLUS, 2e6),
                (EXCITED_MINUS, 2e6)
            ]
        );
        // T2* = 1/(2 γ_φ) = 500 ns
        assert!((RateTable::default().t2_star() - 500e-9).abs() < 1e-18);
    }

    #[test]
    fn pump_switch() {
        let printed = RateTable {
            pump_includes_k: true,
            ..RateTable::default()
        };
        let ops = build_jump_operators(&printed).unwrap();
        assert_eq!(ops[3].rate, 66e6 + 1e6);
        let ops = build_jump_operators(&RateTable::default()).unwrap();
        assert_eq!(ops[3].rate, 1e6);
    }

    #[test]
    fn metastable_rows_decay_downward() {
        let ops = build_jump_operators(&RateTable::default()).unwrap();
        for j in &ops[23..26] {
            assert_eq!(j.source, SINGLET_LOWER);
            assert!(j.destination < 3);
        }
    }

    #[test]
    fn negative_rate_rejected() {
        let rt = RateTable {
            k58: -1.0,
            ..RateTable::default()
        };
        assert!(matches!(
            build_jump_operators(&rt),
            Err(Error::InvalidParameter { name: "k58_Hz", .. })
        ));
    }
}
