//! The `SRAW` binary weight file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "SRAW"
//! version u8       1
//! name    u32 length + UTF-8 bytes
//! kind    u8       0 = bicubic, 1 = micro residual CNN
//! scale   u8
//! channels u32, blocks u32, residual_scaling f64   (zeros for bicubic)
//! kernel_count u32
//! per kernel: out u32, in u32, kh u32, kw u32,
//!             out*in*kh*kw f32 weights, out f32 biases
//! ```
//!
//! Weights are stored as `f32`; loading widens back to `f64`, so a
//! save/load round trip is bit-exact at 32-bit precision.

use crate::error::{Error, Result};
use crate::model::{build_bicubic_model, build_micro_edsr, MicroEdsrConfig, ModelConfig, SRModel};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SRAW";
const VERSION: u8 = 1;

pub fn save_weights(model: &SRModel, path: impl AsRef<Path>) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    write_weights(model, &mut file)?;
    file.flush()?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<SRModel> {
    let mut file = BufReader::new(File::open(path)?);
    read_weights(&mut file)
}

pub fn write_weights<W: Write>(model: &SRModel, w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    let name = model.name().as_bytes();
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name)?;
    match model.config() {
        ModelConfig::Bicubic { scale } => {
            w.write_all(&[0u8, *scale as u8])?;
            w.write_all(&0u32.to_le_bytes())?;
            w.write_all(&0u32.to_le_bytes())?;
            w.write_all(&0f64.to_le_bytes())?;
        }
        ModelConfig::MicroEdsr(cfg) => {
            w.write_all(&[1u8, cfg.scale as u8])?;
            w.write_all(&(cfg.channels as u32).to_le_bytes())?;
            w.write_all(&(cfg.blocks as u32).to_le_bytes())?;
            w.write_all(&cfg.residual_scaling.to_le_bytes())?;
        }
    }
    w.write_all(&(model.kernels().len() as u32).to_le_bytes())?;
    for kernel in model.kernels() {
        for dim in [
            kernel.out_channels,
            kernel.in_channels,
            kernel.kernel_h,
            kernel.kernel_w,
        ] {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        for v in &kernel.weights {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        for v in &kernel.bias {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_weights<R: Read>(r: &mut R) -> Result<SRModel> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = read_u8(r)?;
    if version != VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let name_len = read_u32(r)? as usize;
    if name_len > 1 << 20 {
        return Err(Error::WeightShape(format!(
            "unreasonable name length {}",
            name_len
        )));
    }
    let mut name_bytes = vec![0u8; name_len];
    read_exact(r, &mut name_bytes)?;
    let name = String::from_utf8(name_bytes)
        .map_err(|_| Error::WeightShape("model name is not UTF-8".into()))?;

    let kind = read_u8(r)?;
    let scale = read_u8(r)? as usize;
    let channels = read_u32(r)? as usize;
    let blocks = read_u32(r)? as usize;
    let residual_scaling = f64::from_le_bytes(read_bytes::<8, _>(r)?);

    let mut model = match kind {
        0 => build_bicubic_model(scale)?,
        1 => build_micro_edsr(
            &MicroEdsrConfig {
                channels,
                blocks,
                residual_scaling,
                scale,
            },
            0,
        )?,
        other => {
            return Err(Error::WeightShape(format!(
                "unknown model kind byte {}",
                other
            )))
        }
    };
    model.set_name(name);

    let kernel_count = read_u32(r)? as usize;
    if kernel_count != model.kernels().len() {
        return Err(Error::WeightShape(format!(
            "file declares {} kernels, config implies {}",
            kernel_count,
            model.kernels().len()
        )));
    }
    for idx in 0..kernel_count {
        let dims = [read_u32(r)?, read_u32(r)?, read_u32(r)?, read_u32(r)?];
        let kernel = &model.kernels()[idx];
        let expect = [
            kernel.out_channels as u32,
            kernel.in_channels as u32,
            kernel.kernel_h as u32,
            kernel.kernel_w as u32,
        ];
        if dims != expect {
            return Err(Error::WeightShape(format!(
                "kernel {}: file has {:?}, config implies {:?}",
                idx, dims, expect
            )));
        }
        let n_weights = kernel.weights.len();
        let n_bias = kernel.bias.len();
        let mut weights = Vec::with_capacity(n_weights);
        for _ in 0..n_weights {
            weights.push(f32::from_le_bytes(read_bytes::<4, _>(r)?) as f64);
        }
        let mut bias = Vec::with_capacity(n_bias);
        for _ in 0..n_bias {
            bias.push(f32::from_le_bytes(read_bytes::<4, _>(r)?) as f64);
        }
        let k = &mut model.kernels_mut()[idx];
        k.weights = weights;
        k.bias = bias;
    }

    let mut trailing = [0u8; 1];
    match r.read(&mut trailing)? {
        0 => Ok(model),
        _ => Err(Error::WeightShape("trailing bytes after payload".into())),
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated
        } else {
            Error::Io(e)
        }
    })
}

fn read_bytes<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    Ok(read_bytes::<1, _>(r)?[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_bytes::<4, _>(r)?))
}
