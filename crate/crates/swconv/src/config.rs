//! Run configuration: defaults, an optional TOML file, `SWCONV_*`
//! environment variables and flags, later sources winning.

use std::path::Path;

use serde::Deserialize;
use swconv_core::cost::{CostConstants, ResourceEnv, DEFAULT_FFT_CONSTANT};
use swconv_core::planner::{DeviceModel, Domains, HostModel, ShapeSearch};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: String, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
}

/// Parses `123`, `64K`, `256M`, `2G` (binary multiples).
pub fn parse_size(s: &str) -> Result<usize, String> {
    let s = s.trim();
    let (digits, mult) = match s.chars().last().map(|c| c.to_ascii_uppercase()) {
        Some('K') => (&s[..s.len() - 1], 1usize << 10),
        Some('M') => (&s[..s.len() - 1], 1 << 20),
        Some('G') => (&s[..s.len() - 1], 1 << 30),
        _ => (s, 1),
    };
    let v: usize = digits.trim().parse().map_err(|_| format!("'{s}' is not a size (N, NK, NM or NG)"))?;
    v.checked_mul(mult).ok_or_else(|| format!("'{s}' overflows"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(try_from = "u32")]
pub enum Precision {
    F32,
    F64,
}

impl TryFrom<u32> for Precision {
    type Error = String;

    fn try_from(v: u32) -> Result<Self, String> {
        match v {
            32 => Ok(Precision::F32),
            64 => Ok(Precision::F64),
            _ => Err(format!("precision must be 32 or 64, not {v}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Host memory cap in real scalars.
    pub host_mem: usize,
    /// Device memory cap; no device when absent.
    pub dev_mem: Option<usize>,
    pub host_flops: f64,
    pub dev_flops: f64,
    /// Real scalars per second between host and device.
    pub transfer_rate: f64,
    /// Memory reserved for 1D transform workspaces by the staged primitives.
    pub overhead_cap: usize,
    pub fft_constant: f64,
    /// Largest input extent searched; the field of view plus 64 when absent.
    pub max_extent: Option<usize>,
    pub batch: usize,
    pub anisotropic_step: Option<usize>,
    pub precision: Precision,
    pub workers: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            host_mem: 1 << 28,
            dev_mem: None,
            host_flops: 1e10,
            dev_flops: 4e10,
            transfer_rate: 2.5e9,
            overhead_cap: 1 << 22,
            fft_constant: DEFAULT_FFT_CONSTANT,
            max_extent: None,
            batch: 1,
            anisotropic_step: None,
            precision: Precision::F64,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            seed: 1,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Toml {
            path: path.to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: p.clone(), source })?;
        Self::from_toml(&text, &p)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.host_mem == 0 || self.dev_mem == Some(0) {
            return bad("memory caps must be positive");
        }
        if !(self.host_flops > 0.0 && self.dev_flops > 0.0 && self.transfer_rate > 0.0 && self.fft_constant > 0.0) {
            return bad("rates and the FFT constant must be positive");
        }
        if self.workers == 0 || self.batch == 0 {
            return bad("workers and batch must be at least 1");
        }
        if self.anisotropic_step == Some(0) {
            return bad("anisotropic step must be at least 1");
        }
        Ok(())
    }

    pub fn host(&self) -> HostModel {
        HostModel::new(
            ResourceEnv::new(self.workers, self.host_mem, self.overhead_cap).expect("validated"),
            CostConstants::new(self.fft_constant, self.host_flops, self.transfer_rate).expect("validated"),
        )
    }

    pub fn device(&self) -> Option<DeviceModel> {
        self.dev_mem.map(|cap| {
            DeviceModel::new(
                ResourceEnv::new(1, cap, self.overhead_cap.min(cap)).expect("validated"),
                CostConstants::new(self.fft_constant, self.dev_flops, self.transfer_rate).expect("validated"),
            )
        })
    }

    pub fn domains(&self) -> Domains {
        match self.device() {
            Some(d) => Domains::with_device(self.host(), d),
            None => Domains::host_only(self.host()),
        }
    }

    pub fn search(&self, fov: usize) -> ShapeSearch {
        ShapeSearch {
            max_extent: self.max_extent.unwrap_or(fov + 64),
            batch: self.batch,
            anisotropic_step: self.anisotropic_step,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(parse_size("17").unwrap(), 17);
        assert_eq!(parse_size("64K").unwrap(), 65536);
        assert_eq!(parse_size("3m").unwrap(), 3 << 20);
        assert_eq!(parse_size("2G").unwrap(), 2 << 30);
        assert!(parse_size("x").is_err());
        assert!(parse_size("").is_err());
    }

    #[test]
    fn toml_overrides_defaults() {
        let c = RunConfig::from_toml("host_mem = 4096\nprecision = 32\ndev_mem = 100\n", "t").unwrap();
        assert_eq!(c.host_mem, 4096);
        assert_eq!(c.precision, Precision::F32);
        assert_eq!(c.dev_mem, Some(100));
        assert_eq!(c.batch, 1);
        assert!(RunConfig::from_toml("precision = 16", "t").is_err());
        assert!(RunConfig::from_toml("bogus = 1", "t").is_err());
    }
}
