//! Prior agents: classical denoisers and the external-denoiser client.

mod gaussian;
mod nlm;
mod tv;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::external::ExternalDenoiser;
use super::{Agent, AgentError, AgentKind};
use crate::linops::Image;

pub use gaussian::{gaussian_denoise, gaussian_kernel};
pub use nlm::nlm_denoise;
pub use tv::{total_variation, tv_denoise, tv_energy};

/// Half-sample symmetric index into `0..n` (period `2n`).
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Denoiser family and its parameters.
///
/// Serialized in the compact string form accepted by [`FromStr`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DenoiserVariant {
    Gaussian {
        sigma_blur: f64,
    },
    Nlm {
        patch_radius: usize,
        search_radius: usize,
        bandwidth_h: f64,
    },
    Tv {
        weight: f64,
        inner_iters: usize,
    },
    /// Endpoint descriptor `stdio:<command line>` or `tcp:<host>:<port>`.
    External {
        endpoint: String,
    },
}

/// A prior agent description: denoiser variant plus the noise level `sigma_n`
/// it is tuned for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserSpec {
    pub variant: DenoiserVariant,
    pub sigma_n: f64,
}

/// Noise level the paper-style learned prior is trained at.
pub const DEFAULT_SIGMA_N: f64 = 0.1;

impl DenoiserSpec {
    pub fn new(variant: DenoiserVariant, sigma_n: f64) -> Result<Self, AgentError> {
        let spec = Self { variant, sigma_n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        fn positive(name: &'static str, v: f64) -> Result<(), AgentError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(AgentError::InvalidParameter { name, value: v })
            }
        }
        fn at_least_one(name: &'static str, v: usize) -> Result<(), AgentError> {
            if v >= 1 {
                Ok(())
            } else {
                Err(AgentError::InvalidParameter { name, value: v as f64 })
            }
        }
        positive("sigma_n", self.sigma_n)?;
        match &self.variant {
            DenoiserVariant::Gaussian { sigma_blur } => positive("sigma_blur", *sigma_blur),
            DenoiserVariant::Nlm {
                patch_radius,
                search_radius,
                bandwidth_h,
            } => {
                at_least_one("patch_radius", *patch_radius)?;
                at_least_one("search_radius", *search_radius)?;
                positive("bandwidth_h", *bandwidth_h)
            }
            DenoiserVariant::Tv { weight, inner_iters } => {
                positive("weight", *weight)?;
                at_least_one("inner_iters", *inner_iters)
            }
            DenoiserVariant::External { endpoint } => {
                super::external::Endpoint::parse(endpoint).map(|_| ())
            }
        }
    }

    /// Instantiates the agent. External endpoints are connected here.
    pub fn build(&self) -> Result<DenoiserAgent, AgentError> {
        self.validate()?;
        let inner = match &self.variant {
            DenoiserVariant::External { endpoint } => Inner::External(ExternalDenoiser::connect(endpoint)?),
            other => Inner::Classical(other.clone()),
        };
        Ok(DenoiserAgent {
            name: self.variant.to_string(),
            inner,
        })
    }
}

impl fmt::Display for DenoiserVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian { sigma_blur } => write!(f, "gaussian:{sigma_blur}"),
            Self::Nlm {
                patch_radius,
                search_radius,
                bandwidth_h,
            } => write!(f, "nlm:{patch_radius}:{search_radius}:{bandwidth_h}"),
            Self::Tv { weight, inner_iters } => write!(f, "tv:{weight}:{inner_iters}"),
            Self::External { endpoint } => write!(f, "external:{endpoint}"),
        }
    }
}

/// Parses the compact forms `gaussian:<sigma>`, `nlm:<patch>:<search>:<h>`,
/// `tv:<weight>:<iters>` and `external:<endpoint>`.
impl FromStr for DenoiserVariant {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AgentError::BadDenoiserSpec(s.to_string());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        if kind == "external" {
            return Ok(Self::External {
                endpoint: rest.to_string(),
            });
        }
        let parts: Vec<&str> = rest.split(':').collect();
        let num = |i: usize| parts.get(i).and_then(|p| p.parse::<f64>().ok()).ok_or_else(bad);
        let int = |i: usize| parts.get(i).and_then(|p| p.parse::<usize>().ok()).ok_or_else(bad);
        let variant = match (kind, parts.len()) {
            ("gaussian", 1) => Self::Gaussian { sigma_blur: num(0)? },
            ("nlm", 3) => Self::Nlm {
                patch_radius: int(0)?,
                search_radius: int(1)?,
                bandwidth_h: num(2)?,
            },
            ("tv", 2) => Self::Tv {
                weight: num(0)?,
                inner_iters: int(1)?,
            },
            _ => return Err(bad()),
        };
        Ok(variant)
    }
}

impl TryFrom<String> for DenoiserVariant {
    type Error = AgentError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<DenoiserVariant> for String {
    fn from(v: DenoiserVariant) -> Self {
        v.to_string()
    }
}

#[derive(Debug)]
enum Inner {
    Classical(DenoiserVariant),
    External(ExternalDenoiser),
}

/// A denoiser wrapped as a consensus agent.
#[derive(Debug)]
pub struct DenoiserAgent {
    name: String,
    inner: Inner,
}

impl Agent for DenoiserAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> AgentKind {
        AgentKind::Denoiser
    }

    fn apply(&self, x: &Image) -> Result<Image, AgentError> {
        match &self.inner {
            Inner::External(client) => client.denoise(x),
            Inner::Classical(DenoiserVariant::Gaussian { sigma_blur }) => gaussian_denoise(x, *sigma_blur),
            Inner::Classical(DenoiserVariant::Nlm {
                patch_radius,
                search_radius,
                bandwidth_h,
            }) => nlm_denoise(x, *patch_radius, *search_radius, *bandwidth_h),
            Inner::Classical(DenoiserVariant::Tv { weight, inner_iters }) => tv_denoise(x, *weight, *inner_iters),
            Inner::Classical(DenoiserVariant::External { .. }) => unreachable!("external specs build a client"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        let idx: Vec<usize> = (-4..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(reflect(5, 1), 0);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["gaussian:1.5", "nlm:1:5:0.2", "tv:0.05:40", "external:tcp:127.0.0.1:9000"] {
            let v: DenoiserVariant = s.parse().unwrap();
            assert_eq!(v.to_string(), s);
        }
        assert!("tv:0.1".parse::<DenoiserVariant>().is_err());
        assert!("median:3".parse::<DenoiserVariant>().is_err());
        assert!("gaussian".parse::<DenoiserVariant>().is_err());
    }

    #[test]
    fn validation() {
        assert!(DenoiserSpec::new(DenoiserVariant::Gaussian { sigma_blur: 1.0 }, 0.1).is_ok());
        assert!(DenoiserSpec::new(DenoiserVariant::Gaussian { sigma_blur: 1.0 }, 0.0).is_err());
        let nlm = DenoiserVariant::Nlm {
            patch_radius: 0,
            search_radius: 2,
            bandwidth_h: 0.1,
        };
        assert!(DenoiserSpec::new(nlm, 0.1).is_err());
        let tv = DenoiserVariant::Tv { weight: -1.0, inner_iters: 5 };
        assert!(DenoiserSpec::new(tv, 0.1).is_err());
        let ext = DenoiserVariant::External { endpoint: "udp:x".into() };
        assert!(DenoiserSpec::new(ext, 0.1).is_err());
    }

    #[test]
    fn classical_agents_map_constants_to_themselves() {
        let x = Image::constant((10, 10), 0.55);
        for v in ["gaussian:1.2", "nlm:1:3:0.1", "tv:0.2:30"] {
            let spec = DenoiserSpec::new(v.parse().unwrap(), 0.1).unwrap();
            let agent = spec.build().unwrap();
            assert_eq!(agent.kind(), AgentKind::Denoiser);
            let out = agent.apply(&x).unwrap();
            assert!(out.max_abs_diff(&x).unwrap() < 1e-13, "{v}");
        }
    }
}
