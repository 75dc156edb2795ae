//! `EEGM` checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! "EEGM"                        4 ASCII bytes
//! u32 version                   = 1
//! u32 channels, u32 timesteps, u32 spatial_filters
//! u32 n_blocks, u32 width × n_blocks
//! u32 fc_width, u32 outputs
//! u32 flags                     bit0 use_spatial, bit1 equal_convs, bit2 conv_bias
//! tensors                       parameters in model order, then running stats
//!   u32 rank, u32 dims[rank], f32 values[∏ dims]
//! ```

use std::fs;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::codec::{Reader, Writer};
use crate::error::{FormatError, Result};
use crate::nn::Layer;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"EEGM";
pub const VERSION: u32 = 1;

const FLAG_SPATIAL: u32 = 1;
const FLAG_EQUAL: u32 = 1 << 1;
const FLAG_BIAS: u32 = 1 << 2;

fn to_u32(v: usize, field: &'static str) -> Result<u32> {
    u32::try_from(v).map_err(|_| FormatError::Header { field, reason: format!("{v} exceeds u32") }.into())
}

fn write_tensor(w: &mut Writer, t: &Tensor<f32>) -> Result<()> {
    w.u32(to_u32(t.dims().len(), "rank")?);
    for &d in t.dims() {
        w.u32(to_u32(d, "dim")?);
    }
    w.f32s(t.values());
    Ok(())
}

fn read_tensor_into(r: &mut Reader<'_>, name: &str, dst: &mut Tensor<f32>) -> Result<()> {
    let rank = r.u32()? as usize;
    // a rank this large cannot be one of ours; bail before allocating
    if rank > 8 {
        return Err(FormatError::Header { field: "rank", reason: format!("{rank} for {name}") }.into());
    }
    let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_, _>>()?;
    if dims != dst.dims() {
        return Err(FormatError::Dimensions { what: name.to_string(), expected: dst.dims().to_vec(), found: dims }.into());
    }
    let vals = r.f32s(dst.len())?;
    dst.values_mut().copy_from_slice(&vals);
    Ok(())
}

pub fn to_bytes(model: &Model<f32>) -> Result<Vec<u8>> {
    let c = model.config();
    let mut w = Writer::new();
    w.bytes(&MAGIC);
    w.u32(VERSION);
    w.u32(to_u32(c.channels, "channels")?);
    w.u32(to_u32(c.timesteps, "timesteps")?);
    w.u32(to_u32(c.spatial_filters, "spatial_filters")?);
    w.u32(to_u32(c.block_widths.len(), "n_blocks")?);
    for &bw in &c.block_widths {
        w.u32(to_u32(bw, "block_width")?);
    }
    w.u32(to_u32(c.fc_width, "fc_width")?);
    w.u32(to_u32(c.outputs, "outputs")?);
    let mut flags = 0;
    if c.use_spatial {
        flags |= FLAG_SPATIAL;
    }
    if c.equal_convs {
        flags |= FLAG_EQUAL;
    }
    if c.conv_bias {
        flags |= FLAG_BIAS;
    }
    w.u32(flags);
    for p in model.params() {
        write_tensor(&mut w, &p.tensor)?;
    }
    for t in model.running_stats() {
        write_tensor(&mut w, t)?;
    }
    Ok(w.buf)
}

fn read_config(r: &mut Reader<'_>) -> Result<ModelConfig> {
    let channels = r.u32()? as usize;
    let timesteps = r.u32()? as usize;
    let spatial_filters = r.u32()? as usize;
    let n_blocks = r.u32()? as usize;
    if n_blocks > r.remaining() / 4 {
        return Err(FormatError::Header { field: "n_blocks", reason: format!("{n_blocks} blocks cannot fit in stream") }.into());
    }
    let block_widths = (0..n_blocks).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_, _>>()?;
    let fc_width = r.u32()? as usize;
    let outputs = r.u32()? as usize;
    let flags = r.u32()?;
    if flags & !(FLAG_SPATIAL | FLAG_EQUAL | FLAG_BIAS) != 0 {
        return Err(FormatError::Header { field: "flags", reason: format!("unknown bits in {flags:#x}") }.into());
    }
    let config = ModelConfig {
        channels,
        timesteps,
        spatial_filters,
        block_widths,
        fc_width,
        outputs,
        use_spatial: flags & FLAG_SPATIAL != 0,
        equal_convs: flags & FLAG_EQUAL != 0,
        conv_bias: flags & FLAG_BIAS != 0,
    };
    config
        .validate()
        .map_err(|e| FormatError::Header { field: "config", reason: e.to_string() })?;
    Ok(config)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model<f32>> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::Version { expected: VERSION, found: version }.into());
    }
    let config = read_config(&mut r)?;
    // refuse configs whose payload cannot fit before allocating them
    let needed = super::param_count(&config).saturating_mul(4);
    if needed > r.remaining() {
        return Err(FormatError::Truncated { offset: bytes.len() - r.remaining(), needed: needed - r.remaining() }.into());
    }
    let mut model = Model::new(config)?;
    for p in model.params_mut() {
        let name = p.name.clone();
        read_tensor_into(&mut r, &name, &mut p.tensor)?;
    }
    for (i, t) in model.running_stats_mut().into_iter().enumerate() {
        read_tensor_into(&mut r, &format!("running_stat[{i}]"), t)?;
    }
    r.finish()?;
    Ok(model)
}

pub fn save(model: &Model<f32>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model<f32>> {
    from_bytes(&fs::read(path)?)
}
