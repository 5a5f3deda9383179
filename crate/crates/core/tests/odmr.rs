use nvcav::odmr::{
    default_grid, extract_metrics, sweep_detuning, symmetric_grid, ObservableKind, DEFAULT_POINTS, DEFAULT_SPAN_HZ,
};
use nvcav::{PhysicalConstants, RateTable, SpinParams};

fn metrics(sp: &SpinParams, grid: &[f64]) -> (f64, f64) {
    let pc = PhysicalConstants::default();
    let curve = sweep_detuning(sp, &RateTable::default(), grid, ObservableKind::IrAbsorption, &pc).unwrap();
    let m = extract_metrics(&curve).unwrap();
    (m.contrast, m.fwhm_hz)
}

#[test]
fn doubling_grid_density_barely_moves_metrics() {
    let sp = SpinParams::default();
    let (c1, w1) = metrics(&sp, &default_grid());
    let (c2, w2) = metrics(&sp, &symmetric_grid(DEFAULT_SPAN_HZ, 2 * DEFAULT_POINTS - 1));
    assert!((c1 - c2).abs() < 0.01 * c2, "{c1} {c2}");
    assert!((w1 - w2).abs() < 0.02 * w2, "{w1} {w2}");
}

#[test]
fn width_grows_with_rabi_rate() {
    let widths: Vec<f64> = [1e6, 2e6, 5e6, 10e6]
        .iter()
        .map(|&rabi| {
            let sp = SpinParams {
                mw_rabi: rabi,
                ..SpinParams::default()
            };
            metrics(&sp, &default_grid()).1
        })
        .collect();
    assert!(widths.windows(2).all(|w| w[1] > w[0]), "{widths:?}");
}
