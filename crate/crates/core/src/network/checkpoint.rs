//! Binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic     b"BSNN"
//! version   u32
//! width     u64
//! depth     u64
//! mode      u8    0 = Haar-orthogonal, 1 = row-normalized
//! act       u8    0 identity, 1 tanh, 2 relu, 3 leaky, 4 elu, 5 selu, 6 gelu
//! nparams   u8,  then nparams f64 activation parameters
//! gpn       u8,  then a, b, root_plus, root_minus as f64 and selection u8 if 1
//! input     u64   input adapter columns, 0 if absent
//! output    u64   output adapter rows, 0 if absent
//! bn        u8
//! input adapter (width x input), then per layer the width x width matrix
//! (V in row-normalized mode, W otherwise), then the output adapter
//! (output x width), then per layer gamma, beta, running mean, running var
//! ```
//!
//! Matrices are row-major `f64`. Factored weights are written densely and
//! load as dense matrices.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{BatchNorm, LayerWeights, Network, NetworkConfig, Storage, WeightMode};
use crate::activations::Activation;
use crate::gpn::{GpnConstants, RootSelection};
use crate::ortho::row_normalized;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"BSNN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_network(net, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_network(&mut BufReader::new(file))
}

fn activation_tag(act: &Activation) -> Option<u8> {
    Some(match act {
        Activation::Identity => 0,
        Activation::Tanh => 1,
        Activation::Relu => 2,
        Activation::LeakyRelu { .. } => 3,
        Activation::Elu { .. } => 4,
        Activation::Selu { .. } => 5,
        Activation::Gelu { .. } => 6,
        Activation::Custom(_) => return None,
    })
}

fn activation_from(tag: u8, p: &[f64]) -> Result<Activation> {
    let need = |n: usize| {
        if p.len() == n {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!(
                "activation tag {tag} expects {n} parameters, found {}",
                p.len()
            )))
        }
    };
    let act = match tag {
        0 => Activation::Identity,
        1 => Activation::Tanh,
        2 => Activation::Relu,
        3 => {
            need(1)?;
            Activation::LeakyRelu { slope: p[0] }
        }
        4 => {
            need(1)?;
            Activation::Elu { alpha: p[0] }
        }
        5 => {
            need(2)?;
            Activation::Selu {
                lambda: p[0],
                alpha: p[1],
            }
        }
        6 => {
            need(1)?;
            Activation::Gelu { scale: p[0] }
        }
        t => return Err(Error::Checkpoint(format!("unknown activation tag {t}"))),
    };
    if tag <= 2 {
        need(0)?;
    }
    Ok(act)
}

fn selection_tag(s: RootSelection) -> u8 {
    match s {
        RootSelection::MatchTable => 0,
        RootSelection::NonNegativeMean => 1,
        RootSelection::Plus => 2,
        RootSelection::Minus => 3,
    }
}

fn write_network<W: Write>(net: &Network, w: &mut W) -> std::io::Result<()> {
    let cfg = net.config();
    let tag = activation_tag(&cfg.activation).ok_or_else(|| {
        std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "custom activations cannot be checkpointed",
        )
    })?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(cfg.width as u64).to_le_bytes())?;
    w.write_all(&(cfg.depth as u64).to_le_bytes())?;
    w.write_all(&[match cfg.weight_mode {
        WeightMode::HaarOrthogonal => 0,
        WeightMode::RowNormalized => 1,
    }])?;
    w.write_all(&[tag])?;
    let params = cfg.activation.params();
    w.write_all(&[params.len() as u8])?;
    for (_, v) in &params {
        w.write_all(&v.to_le_bytes())?;
    }
    match &cfg.gpn {
        None => w.write_all(&[0])?,
        Some(c) => {
            w.write_all(&[1])?;
            for v in [c.a, c.b, c.root_plus, c.root_minus] {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&[selection_tag(c.selection)])?;
        }
    }
    w.write_all(&(cfg.input_dim.unwrap_or(0) as u64).to_le_bytes())?;
    w.write_all(&(cfg.output_dim.unwrap_or(0) as u64).to_le_bytes())?;
    w.write_all(&[u8::from(cfg.batchnorm)])?;
    let write_all = |w: &mut W, values: &mut dyn Iterator<Item = &f64>| -> std::io::Result<()> {
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    };
    if let Some(u) = net.input_adapter() {
        write_all(w, &mut u.iter())?;
    }
    for layer in net.layers() {
        match layer {
            LayerWeights::RowNormalized(p) => write_all(w, &mut p.raw().iter())?,
            other => write_all(w, &mut other.to_dense().iter())?,
        }
    }
    if let Some(o) = net.output_adapter() {
        write_all(w, &mut o.iter())?;
    }
    for bn in net.batchnorm() {
        for a in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
            write_all(w, &mut a.iter())?;
        }
    }
    Ok(())
}

struct Reader<'a, R: Read> {
    inner: &'a mut R,
}

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(u64::from_le_bytes(self.bytes()?))
            .map_err(|_| Error::Checkpoint("dimension does not fit in memory".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint("matrix too large".into()))?;
        let mut buf = vec![
            0u8;
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("matrix too large".into()))?
        ];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        let values = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
    }

    fn vector(&mut self, n: usize) -> Result<Array1<f64>> {
        Ok(self
            .matrix(1, n)?
            .into_shape_with_order(n)
            .expect("one row"))
    }
}

fn read_network<R: Read>(inner: &mut R) -> Result<Network> {
    let mut r = Reader { inner };
    if &r.bytes::<4>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let width = r.usize()?;
    let depth = r.usize()?;
    let weight_mode = match r.u8()? {
        0 => WeightMode::HaarOrthogonal,
        1 => WeightMode::RowNormalized,
        m => return Err(Error::Checkpoint(format!("unknown weight mode {m}"))),
    };
    let tag = r.u8()?;
    let nparams = r.u8()? as usize;
    let params = (0..nparams).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let activation = activation_from(tag, &params)?;
    let gpn = match r.u8()? {
        0 => None,
        1 => {
            let (a, b, root_plus, root_minus) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let selection = match r.u8()? {
                0 => RootSelection::MatchTable,
                1 => RootSelection::NonNegativeMean,
                2 => RootSelection::Plus,
                3 => RootSelection::Minus,
                s => return Err(Error::Checkpoint(format!("unknown root selection {s}"))),
            };
            Some(GpnConstants {
                a,
                b,
                root_plus,
                root_minus,
                selection,
            })
        }
        f => return Err(Error::Checkpoint(format!("bad normalization flag {f}"))),
    };
    let input_dim = Some(r.usize()?).filter(|&p| p > 0);
    let output_dim = Some(r.usize()?).filter(|&c| c > 0);
    let batchnorm = match r.u8()? {
        0 => false,
        1 => true,
        f => return Err(Error::Checkpoint(format!("bad batch-norm flag {f}"))),
    };
    let config = NetworkConfig {
        width,
        depth,
        activation,
        gpn,
        weight_mode,
        storage: Storage::Dense,
        batchnorm,
        input_dim,
        output_dim,
    };
    config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid header: {e}")))?;
    let input_adapter = input_dim.map(|p| r.matrix(width, p)).transpose()?;
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let m = r.matrix(width, width)?;
        layers.push(match weight_mode {
            WeightMode::HaarOrthogonal => LayerWeights::Dense(m),
            WeightMode::RowNormalized => LayerWeights::RowNormalized(
                row_normalized(m)
                    .map_err(|e| Error::Checkpoint(format!("layer {}: {e}", l + 1)))?,
            ),
        });
    }
    let output_adapter = output_dim.map(|c| r.matrix(c, width)).transpose()?;
    let bn = if batchnorm {
        let mut v = Vec::with_capacity(depth);
        for _ in 0..depth {
            v.push(BatchNorm {
                gamma: r.vector(width)?,
                beta: r.vector(width)?,
                running_mean: r.vector(width)?,
                running_var: r.vector(width)?,
            });
        }
        Some(v)
    } else {
        None
    };
    let mut rest = [0u8; 1];
    if r.inner
        .read(&mut rest)
        .map_err(|e| Error::Checkpoint(e.to_string()))?
        != 0
    {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Network::from_parts(config, layers, bn, input_adapter, output_adapter)
}
