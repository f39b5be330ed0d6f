//! Scenario configuration and parameter sweeps, read from TOML.
//!
//! ```toml
//! [system]
//! k = 6
//! k_prime = 3
//! n_tx = 16
//!
//! [sweep]
//! schemes = ["BEAMWAVE-KING", "RANDOM", "XHAUS"]
//!
//! [[sweep.axis]]
//! field = "n_tx"
//! values = [16, 24, 36]
//!
//! [[sweep.axis]]
//! fields = ["k", "k_prime"]
//! values = [[8, 2], [16, 4]]
//! ```
//!
//! Unset `[system]` keys take the defaults listed on [`SystemConfig`].
//! Several axes form their cartesian product; an axis with `fields` moves
//! those fields together.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::{AngleRanges, ArrayGeometry};
use crate::error::{Error, Result};
use crate::evaluation::SchemeKind;
use crate::metrics::MetricTag;
use crate::precoder::{Layering, PrecoderParams};

/// Environment variable that replaces `master_seed` when set.
pub const MASTER_SEED_ENV: &str = "LDM_MASTER_SEED";

/// All scalars of one scenario.
///
/// Defaults: `n_rx = 1`, `l_rx = 4`, `p_tx_dbm = 35`, `p_rx_dbm = 0`,
/// `sigma2_dbm = 10`, `gamma_min = 4`, `omega = 0.5`, `n_conv = 20`,
/// `epsilon = 0.001`, `paths = 3`, AoA in `[-pi, pi]`, AoD in
/// `[-pi/3, pi/3]`, `master_seed = 0`, `n_seeds = 100`,
/// `xhaus_cap = 10000`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub k: usize,
    pub k_prime: usize,
    pub n_tx: usize,
    #[serde(default = "defaults::n_rx")]
    pub n_rx: usize,
    #[serde(default = "defaults::l_rx")]
    pub l_rx: usize,
    #[serde(default = "defaults::p_tx_dbm")]
    pub p_tx_dbm: f64,
    #[serde(default = "defaults::p_rx_dbm")]
    pub p_rx_dbm: f64,
    #[serde(default = "defaults::sigma2_dbm")]
    pub sigma2_dbm: f64,
    /// Linear multicast SINR target.
    #[serde(default = "defaults::gamma_min")]
    pub gamma_min: f64,
    #[serde(default = "defaults::omega")]
    pub omega: f64,
    #[serde(default = "defaults::n_conv")]
    pub n_conv: usize,
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    #[serde(default = "defaults::paths")]
    pub paths: usize,
    #[serde(default = "defaults::aoa_range")]
    pub aoa_range: [f64; 2],
    #[serde(default = "defaults::aod_range")]
    pub aod_range: [f64; 2],
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "defaults::n_seeds")]
    pub n_seeds: usize,
    /// Largest number of subsets XHAUS may enumerate.
    #[serde(default = "defaults::xhaus_cap")]
    pub xhaus_cap: u64,
}

mod defaults {
    use std::f64::consts::PI;

    pub fn n_rx() -> usize {
        1
    }
    pub fn l_rx() -> usize {
        4
    }
    pub fn p_tx_dbm() -> f64 {
        35.0
    }
    pub fn p_rx_dbm() -> f64 {
        0.0
    }
    pub fn sigma2_dbm() -> f64 {
        10.0
    }
    pub fn gamma_min() -> f64 {
        4.0
    }
    pub fn omega() -> f64 {
        0.5
    }
    pub fn n_conv() -> usize {
        20
    }
    pub fn epsilon() -> f64 {
        1e-3
    }
    pub fn paths() -> usize {
        3
    }
    pub fn aoa_range() -> [f64; 2] {
        [-PI, PI]
    }
    pub fn aod_range() -> [f64; 2] {
        [-PI / 3.0, PI / 3.0]
    }
    pub fn n_seeds() -> usize {
        100
    }
    pub fn xhaus_cap() -> u64 {
        10_000
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

impl SystemConfig {
    /// Config with the required fields set and every other field at its default.
    pub fn new(k: usize, k_prime: usize, n_tx: usize) -> Self {
        SystemConfig {
            k,
            k_prime,
            n_tx,
            n_rx: defaults::n_rx(),
            l_rx: defaults::l_rx(),
            p_tx_dbm: defaults::p_tx_dbm(),
            p_rx_dbm: defaults::p_rx_dbm(),
            sigma2_dbm: defaults::sigma2_dbm(),
            gamma_min: defaults::gamma_min(),
            omega: defaults::omega(),
            n_conv: defaults::n_conv(),
            epsilon: defaults::epsilon(),
            paths: defaults::paths(),
            aoa_range: defaults::aoa_range(),
            aod_range: defaults::aod_range(),
            master_seed: 0,
            n_seeds: defaults::n_seeds(),
            xhaus_cap: defaults::xhaus_cap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::validation(field, msg))
            }
        };
        check(self.k >= 1, "k", "must be at least 1")?;
        check(self.k_prime >= 1, "k_prime", "must be at least 1")?;
        check(self.k_prime <= self.k, "k_prime", "must not exceed k")?;
        check(self.k_prime <= self.n_tx, "k_prime", "must not exceed n_tx")?;
        check(self.n_tx >= 1, "n_tx", "must be at least 1")?;
        check(self.n_rx >= 1, "n_rx", "must be at least 1")?;
        check(self.l_rx >= 2, "l_rx", "must be at least 2")?;
        for (v, name) in [
            (self.p_tx_dbm, "p_tx_dbm"),
            (self.p_rx_dbm, "p_rx_dbm"),
            (self.sigma2_dbm, "sigma2_dbm"),
        ] {
            check(v.is_finite(), name, "must be finite")?;
        }
        check(
            self.gamma_min > 0.0 && self.gamma_min.is_finite(),
            "gamma_min",
            "must be positive",
        )?;
        check(
            (0.0..=1.0).contains(&self.omega),
            "omega",
            "must lie in [0, 1]",
        )?;
        check(self.n_conv >= 1, "n_conv", "must be at least 1")?;
        check(
            self.epsilon >= 0.0 && self.epsilon.is_finite(),
            "epsilon",
            "must be nonnegative",
        )?;
        check(self.paths >= 1, "paths", "must be at least 1")?;
        check(
            self.aoa_range[0] < self.aoa_range[1] && self.aoa_range.iter().all(|a| a.abs() <= PI),
            "aoa_range",
            "must be an increasing interval within [-pi, pi]",
        )?;
        check(
            self.aod_range[0] < self.aod_range[1] && self.aod_range.iter().all(|a| a.abs() <= PI),
            "aod_range",
            "must be an increasing interval within [-pi, pi]",
        )?;
        check(self.n_seeds >= 1, "n_seeds", "must be at least 1")?;
        check(self.xhaus_cap >= 1, "xhaus_cap", "must be at least 1")?;
        Ok(())
    }

    pub fn p_tx_mw(&self) -> f64 {
        dbm_to_mw(self.p_tx_dbm)
    }

    pub fn p_rx_mw(&self) -> f64 {
        dbm_to_mw(self.p_rx_dbm)
    }

    pub fn sigma2_mw(&self) -> f64 {
        dbm_to_mw(self.sigma2_dbm)
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(self.n_tx, self.n_rx)
    }

    pub fn angle_ranges(&self) -> AngleRanges {
        AngleRanges {
            aoa: (self.aoa_range[0], self.aoa_range[1]),
            aod: (self.aod_range[0], self.aod_range[1]),
        }
    }

    pub fn precoder_params(&self, layering: Layering) -> PrecoderParams {
        PrecoderParams {
            p_tx_mw: self.p_tx_mw(),
            gamma_min: self.gamma_min,
            n_conv: self.n_conv,
            epsilon: self.epsilon,
            layering,
        }
    }

    /// Replaces `master_seed` with the value of [`MASTER_SEED_ENV`] if set.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(MASTER_SEED_ENV) {
            self.master_seed = v.trim().parse().map_err(|_| {
                Error::validation(
                    "master_seed",
                    format!("{MASTER_SEED_ENV}={v:?} is not an unsigned integer"),
                )
            })?;
        }
        Ok(())
    }

    /// Sets a sweepable field from a numeric value.
    pub fn set_field(&mut self, field: &str, value: f64) -> Result<()> {
        let int = || {
            if value >= 0.0 && value.fract() == 0.0 && value < 1e15 {
                Ok(value as usize)
            } else {
                Err(Error::validation(
                    field,
                    format!("{value} is not a nonnegative integer"),
                ))
            }
        };
        match field {
            "k" => self.k = int()?,
            "k_prime" => self.k_prime = int()?,
            "n_tx" => self.n_tx = int()?,
            "n_rx" => self.n_rx = int()?,
            "l_rx" => self.l_rx = int()?,
            "paths" => self.paths = int()?,
            "n_conv" => self.n_conv = int()?,
            "p_tx_dbm" => self.p_tx_dbm = value,
            "p_rx_dbm" => self.p_rx_dbm = value,
            "sigma2_dbm" => self.sigma2_dbm = value,
            "gamma_min" => self.gamma_min = value,
            "omega" => self.omega = value,
            "epsilon" => self.epsilon = value,
            _ => return Err(Error::validation(field, "not a sweepable field")),
        }
        Ok(())
    }
}

/// One sweep axis: the listed fields take the values of one entry together.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub fields: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl Axis {
    pub fn single(field: &str, values: &[f64]) -> Self {
        Axis {
            fields: vec![field.to_string()],
            values: values.iter().map(|&v| vec![v]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
    pub schemes: Vec<SchemeKind>,
}

/// One point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    /// `field=value` pairs joined by `;`, or `base` for an empty sweep.
    pub scenario_id: String,
    pub config: SystemConfig,
}

impl SweepSpec {
    /// The six schemes of the trend figures.
    pub fn default_schemes() -> Vec<SchemeKind> {
        let mut v: Vec<SchemeKind> = MetricTag::ALL
            .iter()
            .map(|&t| SchemeKind::Beamwave(t))
            .collect();
        v.push(SchemeKind::Random);
        v.push(SchemeKind::Xhaus);
        v
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::validation("schemes", "must not be empty"));
        }
        for a in &self.axes {
            let name = a.fields.join(",");
            if a.fields.is_empty() {
                return Err(Error::validation("axis", "needs at least one field"));
            }
            if a.values.is_empty() {
                return Err(Error::validation(&name, "axis values must not be empty"));
            }
            if a.values.iter().any(|v| v.len() != a.fields.len()) {
                return Err(Error::validation(
                    &name,
                    "each value needs one entry per field",
                ));
            }
        }
        Ok(())
    }

    /// Expands the sweep into validated cells; the last axis varies fastest.
    pub fn cells(&self, base: &SystemConfig) -> Result<Vec<Cell>> {
        self.validate()?;
        let mut cells = vec![(Vec::<String>::new(), base.clone())];
        for axis in &self.axes {
            let mut next = Vec::with_capacity(cells.len() * axis.values.len());
            for (labels, cfg) in &cells {
                for value in &axis.values {
                    let mut cfg = cfg.clone();
                    let mut labels = labels.clone();
                    for (f, &v) in axis.fields.iter().zip(value) {
                        cfg.set_field(f, v)?;
                        labels.push(format!("{f}={v}"));
                    }
                    next.push((labels, cfg));
                }
            }
            cells = next;
        }
        cells
            .into_iter()
            .enumerate()
            .map(|(index, (labels, config))| {
                config.validate()?;
                let scenario_id = if labels.is_empty() {
                    "base".to_string()
                } else {
                    labels.join(";")
                };
                Ok(Cell {
                    index,
                    scenario_id,
                    config,
                })
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    system: Option<toml::Table>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sweep: Option<RawSweep>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schemes: Option<Vec<String>>,
    #[serde(default, rename = "axis", skip_serializing_if = "Vec::is_empty")]
    axes: Vec<RawAxis>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawAxis {
    Single {
        field: String,
        values: Vec<f64>,
    },
    Joint {
        fields: Vec<String>,
        values: Vec<Vec<f64>>,
    },
}

/// Parses a configuration document. A missing `[sweep]` gives a single cell
/// with the six default schemes.
pub fn parse_config(text: &str) -> Result<(SystemConfig, SweepSpec)> {
    let doc: RawDocument =
        toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))?;
    let Some(system) = doc.system else {
        return Err(Error::Parse("missing [system] section".into()));
    };
    for required in ["k", "k_prime", "n_tx"] {
        if !system.contains_key(required) {
            return Err(Error::Parse(format!(
                "missing required field `{required}` in [system]"
            )));
        }
    }
    let cfg: SystemConfig = system
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(e.message().to_string()))?;
    cfg.validate()?;

    let raw = doc.sweep.unwrap_or(RawSweep {
        schemes: None,
        axes: Vec::new(),
    });
    let schemes = match raw.schemes {
        None => SweepSpec::default_schemes(),
        Some(names) => names
            .iter()
            .map(|s| s.parse::<SchemeKind>())
            .collect::<Result<Vec<_>>>()?,
    };
    let axes = raw
        .axes
        .into_iter()
        .map(|a| match a {
            RawAxis::Single { field, values } => Axis {
                fields: vec![field],
                values: values.into_iter().map(|v| vec![v]).collect(),
            },
            RawAxis::Joint { fields, values } => Axis { fields, values },
        })
        .collect();
    let sweep = SweepSpec { axes, schemes };
    sweep.validate()?;
    // expand once so bad field names and invalid cells fail at parse time
    sweep.cells(&cfg)?;
    Ok((cfg, sweep))
}

/// Writes a document that [`parse_config`] reads back to the same values.
pub fn to_toml(cfg: &SystemConfig, sweep: &SweepSpec) -> Result<String> {
    let system = toml::Table::try_from(cfg).map_err(|e| Error::Parse(e.to_string()))?;
    let doc = RawDocument {
        system: Some(system),
        sweep: Some(RawSweep {
            schemes: Some(sweep.schemes.iter().map(|s| s.to_string()).collect()),
            axes: sweep
                .axes
                .iter()
                .map(|a| RawAxis::Joint {
                    fields: a.fields.clone(),
                    values: a.values.clone(),
                })
                .collect(),
        }),
    };
    toml::to_string(&doc).map_err(|e| Error::Parse(e.to_string()))
}
