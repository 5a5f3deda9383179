//! Run configuration: one TOML file whose sections overlay the library
//! defaults key by key. Every physical key carries its unit in the name.

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{Map, Value};

use nvcav::cavity::{CavityParams, LoopConfig};
use nvcav::odmr::{symmetric_grid, ContrastNormalizer, MetricsOptions, WidthMethod, DEFAULT_POINTS, DEFAULT_SPAN_HZ};
use nvcav::optimizer::{DeConfig, Dimension, ParamBounds, Scale};
use nvcav::sensitivity::{EvaluationOptions, PowerReference, DEFAULT_SPIN_FRACTION};
use nvcav::validation::ValidationSetup;
use nvcav::{PhysicalConstants, RateTable, SpinParams};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// The file as written, before defaults are applied.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    #[serde(default)]
    spin: Map<String, Value>,
    #[serde(default)]
    rates: Map<String, Value>,
    #[serde(default)]
    cavity: Map<String, Value>,
    #[serde(default)]
    constants: Map<String, Value>,
    #[serde(default)]
    evaluation: EvaluationSection,
    sweep: Option<SweepSpec>,
    #[serde(default)]
    optimizer: OptimizerSection,
    #[serde(default)]
    validation: ValidationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[allow(non_snake_case)]
pub struct EvaluationSection {
    pub span_Hz: f64,
    pub points: usize,
    pub spin_fraction: f64,
    pub power_reference: PowerReference,
    pub measurement_time_s: f64,
    pub saturation_intensity_W_m2: f64,
    /// Contrast reference of the reflected-power resonance.
    pub normalizer: ContrastNormalizer,
    /// Contrast reference of `odmr` curves.
    pub odmr_normalizer: ContrastNormalizer,
    pub width: WidthMethod,
    pub fixed_point: LoopConfig,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        let opts = EvaluationOptions::default();
        Self {
            span_Hz: DEFAULT_SPAN_HZ,
            points: DEFAULT_POINTS,
            spin_fraction: DEFAULT_SPIN_FRACTION,
            power_reference: opts.power_reference,
            measurement_time_s: opts.measurement_time,
            saturation_intensity_W_m2: opts.saturation_intensity,
            normalizer: opts.metrics.normalizer,
            odmr_normalizer: MetricsOptions::default().normalizer,
            width: opts.metrics.width,
            fixed_point: opts.fixed_point,
        }
    }
}

impl EvaluationSection {
    pub fn grid(&self) -> Vec<f64> {
        symmetric_grid(self.span_Hz, self.points)
    }

    pub fn odmr_metrics(&self) -> MetricsOptions {
        MetricsOptions {
            normalizer: self.odmr_normalizer,
            width: self.width,
        }
    }

    pub fn options(&self) -> EvaluationOptions {
        EvaluationOptions {
            detunings: self.grid(),
            metrics: MetricsOptions {
                normalizer: self.normalizer,
                width: self.width,
            },
            power_reference: self.power_reference,
            spin_fraction: self.spin_fraction,
            saturation_intensity: self.saturation_intensity_W_m2,
            measurement_time: self.measurement_time_s,
            fixed_point: self.fixed_point,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.span_Hz.is_finite() && self.span_Hz > 0.0) {
            return Err(err(format!(
                "evaluation.span_Hz must be positive, got {}",
                self.span_Hz
            )));
        }
        if self.points < 3 {
            return Err(err(format!(
                "evaluation.points must be at least 3, got {}",
                self.points
            )));
        }
        for (name, v) in [
            ("spin_fraction", self.spin_fraction),
            ("measurement_time_s", self.measurement_time_s),
            ("saturation_intensity_W_m2", self.saturation_intensity_W_m2),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(err(format!("evaluation.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

fn linear() -> Scale {
    Scale::Linear
}

/// Named set of parameter overrides; one curve or grid per series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Series {
    pub name: String,
    pub set: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axes: Vec<AxisSpec>,
    #[serde(default)]
    pub series: Vec<Series>,
}

/// One sweep axis. `parameter` is any key of the spin, rates or cavity
/// sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub parameter: String,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default = "linear")]
    pub scale: Scale,
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|k| {
                let t = k as f64 / last;
                match self.scale {
                    Scale::Linear => self.start + t * (self.stop - self.start),
                    Scale::Log => (self.start.ln() + t * (self.stop.ln() - self.start.ln())).exp(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[allow(non_snake_case)]
pub struct OptimizerSection {
    pub population_size: Option<usize>,
    pub weight_F: f64,
    pub crossover_CR: f64,
    pub max_generations: usize,
    pub tolerance: f64,
    pub bounds: BoundsSection,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let de = DeConfig::default();
        Self {
            population_size: de.population_size,
            weight_F: de.weight_f,
            crossover_CR: de.crossover_cr,
            max_generations: de.max_generations,
            tolerance: de.tolerance,
            bounds: BoundsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[allow(non_snake_case)]
pub struct BoundsSection {
    pub R1: Dimension,
    pub R2: Dimension,
    pub l_c_m: Dimension,
    pub sigma_m_m2: Dimension,
    pub P_in_W: Dimension,
    pub n_NV_m3: Dimension,
}

impl Default for BoundsSection {
    fn default() -> Self {
        let b = ParamBounds::default();
        Self {
            R1: b.r1,
            R2: b.r2,
            l_c_m: b.length,
            sigma_m_m2: b.mode_area,
            P_in_W: b.input_power,
            n_NV_m3: b.nv_density,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[allow(non_snake_case)]
pub struct ValidationSection {
    /// Overrides the calibrated σ_NV.
    pub sigma_NV_m2: Option<f64>,
    /// Overrides the calibrated σ_m.
    pub sigma_m_m2: Option<f64>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub spin: SpinParams,
    pub rates: RateTable,
    pub cavity: CavityParams,
    pub constants: PhysicalConstants,
    pub evaluation: EvaluationSection,
    pub sweep: Option<SweepSpec>,
    pub optimizer: OptimizerSection,
    pub validation: ValidationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_raw(RawConfig::default()).expect("defaults are valid")
    }
}

/// Overlays `patch` onto the serialized `base`; keys absent from `base` are
/// rejected by name.
fn overlay<T: Serialize + DeserializeOwned>(
    section: &str,
    base: &T,
    patch: &Map<String, Value>,
) -> Result<T, ConfigError> {
    let Value::Object(mut map) = serde_json::to_value(base).expect("parameter structs serialize") else {
        unreachable!("parameter structs serialize to objects")
    };
    for (k, v) in patch {
        // an unset optional field serializes as null, so it is still a key
        if !map.contains_key(k) {
            return Err(err(format!("unknown key `{k}` in [{section}]")));
        }
        map.insert(k.clone(), v.clone());
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| err(format!("[{section}]: {e}")))
}

/// Model parameters a sweep point or series can change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub spin: SpinParams,
    pub rates: RateTable,
    pub cavity: CavityParams,
}

impl ModelParams {
    /// Sets one parameter by its config key.
    pub fn set(&mut self, key: &str, value: &Value) -> Result<(), ConfigError> {
        let patch: Map<String, Value> = [(key.to_string(), value.clone())].into_iter().collect();
        let has = |v: Value| v.get(key).is_some();
        if has(serde_json::to_value(self.cavity).expect("serializes")) {
            self.cavity = overlay("cavity", &self.cavity, &patch)?;
        } else if has(serde_json::to_value(self.spin).expect("serializes")) {
            self.spin = overlay("spin", &self.spin, &patch)?;
        } else if has(serde_json::to_value(self.rates).expect("serializes")) {
            self.rates = overlay("rates", &self.rates, &patch)?;
        } else {
            return Err(err(format!("unknown sweep parameter `{key}`")));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.spin.validate().map_err(|e| err(e.to_string()))?;
        self.rates.validate().map_err(|e| err(e.to_string()))?;
        self.cavity.validate().map_err(|e| err(e.to_string()))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let cfg = Self {
            seed: raw.seed.unwrap_or(0),
            out_dir: raw.out_dir.unwrap_or_else(|| PathBuf::from("out")),
            spin: overlay("spin", &SpinParams::default(), &raw.spin)?,
            rates: overlay("rates", &RateTable::default(), &raw.rates)?,
            cavity: overlay("cavity", &CavityParams::default(), &raw.cavity)?,
            constants: overlay("constants", &PhysicalConstants::default(), &raw.constants)?,
            evaluation: raw.evaluation,
            sweep: raw.sweep,
            optimizer: raw.optimizer,
            validation: raw.validation,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model(&self) -> ModelParams {
        ModelParams {
            spin: self.spin,
            rates: self.rates,
            cavity: self.cavity,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.model().validate()?;
        self.evaluation.validate()?;
        if let Some(sweep) = &self.sweep {
            self.validate_sweep(sweep)?;
        }
        for (name, v) in [
            ("sigma_NV_m2", self.validation.sigma_NV_m2),
            ("sigma_m_m2", self.validation.sigma_m_m2),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(err(format!("validation.{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }

    fn validate_sweep(&self, sweep: &SweepSpec) -> Result<(), ConfigError> {
        if sweep.axes.is_empty() || sweep.axes.len() > 2 {
            return Err(err(format!("sweep needs one or two axes, got {}", sweep.axes.len())));
        }
        for axis in &sweep.axes {
            if axis.points == 0 {
                return Err(err(format!("sweep axis `{}` has no points", axis.parameter)));
            }
            if axis.scale == Scale::Log && !(axis.start > 0.0 && axis.stop > 0.0) {
                return Err(err(format!("log axis `{}` needs positive endpoints", axis.parameter)));
            }
        }
        let series: Vec<Option<&Series>> = if sweep.series.is_empty() {
            vec![None]
        } else {
            sweep.series.iter().map(Some).collect()
        };
        // every corner of the grid must be a physical parameter set
        for s in series {
            let base = self.series_model(s)?;
            let ends = |a: &AxisSpec| [a.start, a.stop];
            let ys: Vec<Option<f64>> = match sweep.axes.get(1) {
                Some(a) => ends(a).into_iter().map(Some).collect(),
                None => vec![None],
            };
            for x in ends(&sweep.axes[0]) {
                for y in &ys {
                    let mut m = base;
                    m.set(&sweep.axes[0].parameter, &Value::from(x))?;
                    if let (Some(a), Some(y)) = (sweep.axes.get(1), y) {
                        m.set(&a.parameter, &Value::from(*y))?;
                    }
                    m.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn series_model(&self, series: Option<&Series>) -> Result<ModelParams, ConfigError> {
        let mut m = self.model();
        if let Some(s) = series {
            for (k, v) in &s.set {
                m.set(k, v)?;
            }
        }
        Ok(m)
    }

    pub fn param_bounds(&self) -> ParamBounds {
        let b = &self.optimizer.bounds;
        ParamBounds {
            r1: b.R1,
            r2: b.R2,
            length: b.l_c_m,
            mode_area: b.sigma_m_m2,
            input_power: b.P_in_W,
            nv_density: b.n_NV_m3,
            fixed: self.cavity,
        }
    }

    pub fn de_config(&self) -> DeConfig {
        let o = &self.optimizer;
        DeConfig {
            population_size: o.population_size,
            weight_f: o.weight_F,
            crossover_cr: o.crossover_CR,
            max_generations: o.max_generations,
            seed: self.seed,
            tolerance: o.tolerance,
        }
    }

    pub fn validation_setup(&self) -> ValidationSetup {
        let base = ValidationSetup::default();
        let mut setup = ValidationSetup::with_cross_sections(
            self.validation.sigma_NV_m2.unwrap_or(base.sigma_nv),
            self.validation.sigma_m_m2.unwrap_or(base.sigma_m),
        );
        setup.spin = self.spin;
        setup.rates = self.rates;
        setup.constants = self.constants;
        setup.evaluation = self.evaluation.options();
        setup
    }
}
