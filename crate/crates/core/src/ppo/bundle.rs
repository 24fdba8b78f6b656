//! Self-contained inference bundle: actor weights, action log-std and the
//! observation normalizer. Layout is documented in `docs/bundle.md`.

use std::path::Path;

use crate::config::Gait;
use crate::nn::{param_count, Activation, Mlp};
use crate::observation::RunningNormalizer;

use super::network::PolicyNetwork;

pub const BUNDLE_MAGIC: &[u8; 4] = b"MGPB";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a policy bundle (bad magic)")]
    BadMagic,
    #[error("unsupported bundle version {0}")]
    Version(u32),
    #[error("bundle truncated at byte {0}")]
    Truncated(usize),
    #[error("bundle dimension mismatch: {0}")]
    Dimension(String),
    #[error("bundle has unknown gait '{0}'")]
    Gait(String),
    #[error("bundle has invalid activation code {0}")]
    Activation(u8),
    #[error("{0} trailing bytes after bundle")]
    Trailing(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBundle {
    pub gait: Gait,
    pub actor: Mlp,
    pub log_std: Vec<f64>,
    pub normalizer: RunningNormalizer,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BundleError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(BundleError::Truncated(self.buf.len()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, BundleError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, BundleError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, BundleError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, BundleError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, BundleError> {
        let n = self.u64()?;
        // every counted element is at least 8 bytes
        if n > (self.buf.len() / 8) as u64 {
            return Err(BundleError::Truncated(self.buf.len()));
        }
        Ok(n as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, BundleError> {
        let raw = self.take(n.checked_mul(8).ok_or(BundleError::Truncated(self.buf.len()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    out.extend((v.len() as u64).to_le_bytes());
    for x in v {
        out.extend(x.to_le_bytes());
    }
}

impl PolicyBundle {
    pub fn new(gait: Gait, net: &PolicyNetwork, normalizer: &RunningNormalizer) -> Self {
        PolicyBundle { gait, actor: net.actor.clone(), log_std: net.log_std.clone(), normalizer: normalizer.clone() }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    /// Deterministic action mean for a raw (unnormalized) observation.
    pub fn forward(&self, raw_obs: &[f64]) -> Vec<f64> {
        let x = self.normalizer.normalize(raw_obs);
        self.actor.forward_one(&x)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(BUNDLE_MAGIC);
        out.extend(BUNDLE_VERSION.to_le_bytes());
        let name = self.gait.name().as_bytes();
        out.extend((name.len() as u16).to_le_bytes());
        out.extend(name);
        out.push(self.actor.activation.code());
        out.extend((self.actor.sizes.len() as u32).to_le_bytes());
        for &s in &self.actor.sizes {
            out.extend((s as u64).to_le_bytes());
        }
        put_f64s(&mut out, &self.actor.params);
        put_f64s(&mut out, &self.log_std);
        out.extend((self.normalizer.dim() as u64).to_le_bytes());
        out.extend(self.normalizer.count.to_le_bytes());
        out.extend(self.normalizer.clip.to_le_bytes());
        for x in self.normalizer.mean.iter().chain(&self.normalizer.var) {
            out.extend(x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, BundleError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4).map_err(|_| BundleError::BadMagic)? != BUNDLE_MAGIC {
            return Err(BundleError::BadMagic);
        }
        let version = r.u32()?;
        if version != BUNDLE_VERSION {
            return Err(BundleError::Version(version));
        }
        let name_len = r.u16()? as usize;
        let name = String::from_utf8_lossy(r.take(name_len)?).into_owned();
        let gait: Gait = name.parse().map_err(|_| BundleError::Gait(name.clone()))?;
        let code = r.u8()?;
        let activation = Activation::from_code(code).ok_or(BundleError::Activation(code))?;
        let n_sizes = r.u32()? as usize;
        if n_sizes < 2 || n_sizes > buf.len() / 8 {
            return Err(BundleError::Dimension(format!("{n_sizes} layer widths")));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            let s = r.u64()?;
            if s == 0 || s > buf.len() as u64 {
                return Err(BundleError::Dimension(format!("layer width {s}")));
            }
            sizes.push(s as usize);
        }
        let n_params = r.len()?;
        if n_params != param_count(&sizes) {
            return Err(BundleError::Dimension(format!("{n_params} parameters for widths {sizes:?}")));
        }
        let params = r.f64s(n_params)?;
        let n_std = r.len()?;
        let log_std = r.f64s(n_std)?;
        let action_dim = *sizes.last().expect("non-empty");
        if n_std != action_dim {
            return Err(BundleError::Dimension(format!("log_std has {n_std} entries, action dim {action_dim}")));
        }
        let norm_dim = r.len()?;
        if norm_dim != sizes[0] {
            return Err(BundleError::Dimension(format!("normalizer dim {norm_dim}, observation dim {}", sizes[0])));
        }
        let count = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let clip = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        if clip.is_nan() || clip <= 0.0 {
            return Err(BundleError::Dimension(format!("normalizer clip {clip}")));
        }
        let mean = r.f64s(norm_dim)?;
        let var = r.f64s(norm_dim)?;
        if r.pos != buf.len() {
            return Err(BundleError::Trailing(buf.len() - r.pos));
        }
        Ok(PolicyBundle {
            gait,
            actor: Mlp { sizes, activation, params },
            log_std,
            normalizer: RunningNormalizer { mean, var, count, clip },
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), BundleError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

/// Writes `net`'s actor and `normalizer` as a bundle at `path`.
pub fn export_policy(gait: Gait, net: &PolicyNetwork, normalizer: &RunningNormalizer, path: &Path) -> Result<(), BundleError> {
    PolicyBundle::new(gait, net, normalizer).save(path)
}

pub fn load_policy(path: &Path) -> Result<PolicyBundle, BundleError> {
    PolicyBundle::from_bytes(&std::fs::read(path)?)
}
