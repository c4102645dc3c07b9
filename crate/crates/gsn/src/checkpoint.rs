//! Versioned binary checkpoints of a trained model and its corruption.
//!
//! All integers are little-endian u64 and all reals little-endian f64.
//!
//! | field | encoding |
//! |---|---|
//! | magic | 8 bytes `GSNCKPT1` |
//! | version | u64, currently 1 |
//! | seed, config hash | u64, 32 bytes |
//! | head | u64: 0 Bernoulli, 1 Gaussian |
//! | corruption | u64 tag (0 salt-pepper, 1 gaussian, 2 uniform, 3 mask), f64 parameter |
//! | layer count | u64 `L`, then `L` sizes |
//! | noise | `(σ_in, σ_out)` per hidden layer |
//! | weights | each `W_l` row-major |
//! | biases | `b_0 .. b_D` |
//! | log σ | u64 length, entries |
//! | log α | u64 length, entries |

use std::path::Path;

use gsn_core::corruption::Corruptor;
use gsn_core::network::{GsnModel, LayerNoise};
use gsn_core::numkit::Tensor2;
use gsn_core::recon::{HeadKind, ScalingFactors};

use crate::error::{Error, Result};
use crate::matfile::Stamp;

pub const CKPT_MAGIC: &[u8; 8] = b"GSNCKPT1";
pub const CKPT_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stamp: Stamp,
    pub model: GsnModel,
    pub corruptor: Corruptor,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or(Error::Length {
            expected: self.pos.saturating_add(n),
            found: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > (self.bytes.len() / 8) as u64 + 1 {
            return Err(Error::Format(format!("implausible length {n}")));
        }
        Ok(n as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

fn corruptor_record(c: &Corruptor) -> (u64, f64) {
    match *c {
        Corruptor::SaltPepper { rate } => (0, rate),
        Corruptor::AdditiveGaussian { sigma } => (1, sigma),
        Corruptor::LocalUniform { epsilon } => (2, epsilon),
        Corruptor::SubsetMask { subset_size } => (3, subset_size as f64),
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let m = &ck.model;
    let mut w = Writer(CKPT_MAGIC.to_vec());
    w.u64(CKPT_VERSION);
    w.u64(ck.stamp.seed);
    w.0.extend_from_slice(&ck.stamp.config_hash);
    w.u64(match m.head {
        HeadKind::Bernoulli => 0,
        HeadKind::Gaussian => 1,
    });
    let (tag, param) = corruptor_record(&ck.corruptor);
    w.u64(tag);
    w.f64s(&[param]);
    w.u64(m.layer_sizes.len() as u64);
    for s in &m.layer_sizes {
        w.u64(*s as u64);
    }
    for n in &m.noise {
        w.f64s(&[n.sigma_in, n.sigma_out]);
    }
    for wl in &m.weights {
        w.f64s(wl.data());
    }
    for b in &m.biases {
        w.f64s(b);
    }
    w.u64(m.log_sigma.len() as u64);
    w.f64s(&m.log_sigma);
    w.u64(m.alphas.len() as u64);
    w.f64s(m.alphas.log_alpha());
    w.0
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CKPT_MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = r.u64()?;
    if version != CKPT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let seed = r.u64()?;
    let config_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let head = match r.u64()? {
        0 => HeadKind::Bernoulli,
        1 => HeadKind::Gaussian,
        t => return Err(Error::Format(format!("unknown head tag {t}"))),
    };
    let tag = r.u64()?;
    let param = r.f64()?;
    let corruptor = match tag {
        0 => Corruptor::SaltPepper { rate: param },
        1 => Corruptor::AdditiveGaussian { sigma: param },
        2 => Corruptor::LocalUniform { epsilon: param },
        3 => Corruptor::SubsetMask { subset_size: param as usize },
        t => return Err(Error::Format(format!("unknown corruption tag {t}"))),
    };
    corruptor.validate()?;
    let n_layers = r.len()?;
    let layer_sizes: Vec<usize> = (0..n_layers).map(|_| r.len()).collect::<Result<_>>()?;
    let depth = n_layers.saturating_sub(1);
    let noise = (0..depth)
        .map(|_| Ok(LayerNoise { sigma_in: r.f64()?, sigma_out: r.f64()? }))
        .collect::<Result<Vec<_>>>()?;
    let weights = layer_sizes
        .windows(2)
        .map(|s| Ok(Tensor2::new(s[0], s[1], r.f64s(s[0] * s[1])?)?))
        .collect::<Result<Vec<_>>>()?;
    let biases = layer_sizes.iter().map(|n| r.f64s(*n)).collect::<Result<Vec<_>>>()?;
    let n_sigma = r.len()?;
    let log_sigma = r.f64s(n_sigma)?;
    let n_alpha = r.len()?;
    let alphas = ScalingFactors::from_log(r.f64s(n_alpha)?)?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
    }
    let model = GsnModel { layer_sizes, weights, biases, noise, head, log_sigma, alphas };
    model.validate()?;
    Ok(Checkpoint { stamp: Stamp { seed, config_hash }, model, corruptor })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ck)).map_err(Error::io(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path).map_err(Error::io(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gsn_core::network::ModelSpec;
    use gsn_core::numkit::RngStream;

    fn sample_checkpoint(head: HeadKind) -> Checkpoint {
        let spec = ModelSpec::new(vec![5, 4, 3], head, 3);
        let mut model = GsnModel::new(&spec, &mut RngStream::new(9)).unwrap();
        model.alphas.log_alpha_mut()[1] = -0.25;
        model.biases[0][2] = 0.5;
        Checkpoint {
            stamp: Stamp { seed: 77, config_hash: [3; 32] },
            model,
            corruptor: Corruptor::AdditiveGaussian { sigma: 0.3 },
        }
    }

    #[test]
    fn round_trip_both_heads() {
        for head in [HeadKind::Bernoulli, HeadKind::Gaussian] {
            let ck = sample_checkpoint(head);
            assert_eq!(decode_checkpoint(&encode_checkpoint(&ck)).unwrap(), ck);
        }
    }

    #[test]
    fn truncation_and_trailing_bytes_fail() {
        let bytes = encode_checkpoint(&sample_checkpoint(HeadKind::Bernoulli));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(decode_checkpoint(&longer).is_err());
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut bytes = encode_checkpoint(&sample_checkpoint(HeadKind::Bernoulli));
        bytes[8] = 2;
        let err = decode_checkpoint(&bytes).unwrap_err().to_string();
        assert!(err.contains("version 2"), "{err}");
    }
}
