use crate::error::CliError;
use fresnel_loc::fresnel::{LinkGeometry, Point2D, SubcarrierSet};
use fresnel_loc::io::Encoding;
use fresnel_loc::locate::SensingArea;
use fresnel_loc::phase::WindowConfig;
use fresnel_loc::pipeline::PipelineConfig;
use fresnel_loc::scenario::standard_walks;
use fresnel_loc::sim::{NoiseSpec, ReflectorSpec, TrajectorySpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Everything a run needs, loaded from a TOML file. Missing keys take the
/// defaults: one transmitter at the origin and receivers on the corners of a
/// 4 m square, 5.745 GHz with 30 subcarriers 1.25 MHz apart, 500 Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub sample_rate: f64,
    pub channel: ChannelConfig,
    pub window: WindowSection,
    pub fold_max: u32,
    pub noise: NoiseConfig,
    pub reflector: ReflectorSpec,
    pub deployment: DeploymentConfig,
    /// Defaults to the bounding box of the antennas.
    pub area: Option<SensingArea>,
    pub walk: TrajectorySpec,
    pub multipath: MultipathConfig,
    pub calibration: CalibrationSweep,
    pub encoding: EncodingName,
    pub files: FileConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub center_freq: f64,
    pub spacing: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    pub samples: usize,
    pub hop: usize,
    /// Widest window used when the target moves slowly.
    pub max_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Amplitude SNR of the reflection; absent means noiseless.
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentConfig {
    pub tx: Point2D,
    pub receivers: Vec<Point2D>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultipathConfig {
    pub enabled: bool,
    /// Random static reflectors per link.
    pub paths: usize,
}

/// Reflector sweep along each link's perpendicular bisector, used to
/// record calibration traces in multipath scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSweep {
    pub from_offset: f64,
    pub to_offset: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingName {
    #[default]
    F32le,
    Text,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub traces: Vec<PathBuf>,
    pub calibrations: Vec<PathBuf>,
    pub estimates: Vec<PathBuf>,
    pub truth: Vec<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let side = 4.0;
        let area = SensingArea::square(side).expect("positive side");
        let (_, shape) = standard_walks(&area).swap_remove(0);
        Self {
            seed: 1,
            sample_rate: 500.0,
            channel: ChannelConfig::default(),
            window: WindowSection::default(),
            fold_max: fresnel_loc::fit::DEFAULT_FOLD_MAX,
            noise: NoiseConfig::default(),
            reflector: ReflectorSpec::default(),
            deployment: DeploymentConfig::default(),
            area: None,
            walk: TrajectorySpec::new(shape, 1.0),
            multipath: MultipathConfig::default(),
            calibration: CalibrationSweep::default(),
            encoding: EncodingName::default(),
            files: FileConfig::default(),
        }
    }
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let s = SubcarrierSet::wifi_40mhz();
        Self {
            center_freq: s.center_freq(),
            spacing: s.spacing(),
            count: s.count(),
        }
    }
}

impl Default for WindowSection {
    fn default() -> Self {
        let d = PipelineConfig::default();
        Self {
            samples: d.window.window_samples(),
            hop: d.window.hop_samples(),
            max_samples: d.max_window_samples,
        }
    }
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        Self {
            tx: Point2D::new(0.0, 0.0),
            receivers: vec![Point2D::new(4.0, 0.0), Point2D::new(0.0, 4.0), Point2D::new(4.0, 4.0)],
        }
    }
}

impl Default for MultipathConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            paths: 3,
        }
    }
}

impl Default for CalibrationSweep {
    fn default() -> Self {
        Self {
            from_offset: 1.0,
            to_offset: 4.0,
            speed: 1.0,
        }
    }
}

impl From<EncodingName> for Encoding {
    fn from(e: EncodingName) -> Self {
        match e {
            EncodingName::F32le => Encoding::F32Le,
            EncodingName::Text => Encoding::Text,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return bad(format!("sample_rate {} must be positive", self.sample_rate));
        }
        self.subcarriers()?;
        self.pipeline()?;
        if let Some(snr) = self.noise.snr_db {
            if !snr.is_finite() {
                return bad("noise.snr_db must be finite".into());
            }
        }
        self.reflector.validate()?;
        self.links()?;
        self.sensing_area()?;
        let c = self.calibration;
        if !(c.from_offset >= 0.0 && c.to_offset > c.from_offset && c.to_offset.is_finite()) {
            return bad("calibration sweep needs 0 <= from_offset < to_offset".into());
        }
        Ok(())
    }

    pub fn subcarriers(&self) -> Result<SubcarrierSet, CliError> {
        let c = self.channel;
        Ok(SubcarrierSet::new(c.center_freq, c.spacing, c.count)?)
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, CliError> {
        let w = self.window;
        if w.max_samples < w.samples {
            return Err(CliError::Config(format!(
                "window.max_samples {} is below window.samples {}",
                w.max_samples, w.samples
            )));
        }
        if self.fold_max > 16 {
            return Err(CliError::Config(format!("fold_max {} exceeds 16", self.fold_max)));
        }
        Ok(PipelineConfig {
            window: WindowConfig::new(w.samples, w.hop).map_err(|e| CliError::Config(e.to_string()))?,
            fold_max: self.fold_max,
            max_window_samples: w.max_samples,
        })
    }

    pub fn links(&self) -> Result<Vec<LinkGeometry>, CliError> {
        if self.deployment.receivers.is_empty() {
            return Err(CliError::Config("deployment needs at least one receiver".into()));
        }
        self.deployment
            .receivers
            .iter()
            .map(|rx| LinkGeometry::new(self.deployment.tx, *rx).map_err(CliError::from))
            .collect()
    }

    pub fn sensing_area(&self) -> Result<SensingArea, CliError> {
        match self.area {
            Some(a) => {
                a.validate()?;
                Ok(a)
            }
            None => bounding_area(&self.links()?),
        }
    }

    pub fn noise(&self, seed: u64) -> NoiseSpec {
        match self.noise.snr_db {
            Some(snr) => NoiseSpec::from_snr_db(snr, &self.reflector, seed),
            None => NoiseSpec::noiseless(),
        }
    }
}

/// Smallest axis-aligned box holding every antenna.
pub fn bounding_area(links: &[LinkGeometry]) -> Result<SensingArea, CliError> {
    let pts: Vec<Point2D> = links.iter().flat_map(|l| [l.tx(), l.rx()]).collect();
    let fold = |f: fn(f64, f64) -> f64, init: f64, get: fn(&Point2D) -> f64| {
        pts.iter().map(get).fold(init, f)
    };
    Ok(SensingArea::new(
        fold(f64::min, f64::INFINITY, |p| p.x),
        fold(f64::min, f64::INFINITY, |p| p.y),
        fold(f64::max, f64::NEG_INFINITY, |p| p.x),
        fold(f64::max, f64::NEG_INFINITY, |p| p.y),
    )?)
}
