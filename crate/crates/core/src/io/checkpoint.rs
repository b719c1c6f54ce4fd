//! Network checkpoints ("IKPN").
//!
//! Layout after magic and version: `u32` layer count `L`, `L` widths as
//! `u32` (input, hidden.., output), `f64` omega, `u32` posenc bands,
//! `u32` raw-coordinate flag, `u32` activation code, `u32` latent width,
//! `u32` latent-present flag with the latent as `f64`s, `u64` parameter
//! count and the parameters as `f64`, layer by layer, weights row-major
//! then biases.

use std::path::Path;

use super::binary::{Reader, Writer};
use crate::error::{Error, Result};
use crate::nn::{Activation, ImplicitNet, NetConfig, PosEncConfig};

const MAGIC: &[u8; 4] = b"IKPN";
const VERSION: u32 = 1;

pub fn encode_checkpoint(net: &ImplicitNet) -> Result<Vec<u8>> {
    let cfg = net.config();
    let mut w = Writer::new(MAGIC, VERSION);
    let widths = cfg.widths();
    w.len_u32(widths.len(), "layer count")?;
    for &n in &widths {
        w.len_u32(n, "layer width")?;
    }
    w.f64(cfg.omega);
    w.len_u32(cfg.posenc.bands, "band count")?;
    w.u32(cfg.posenc.include_raw as u32);
    w.u32(cfg.activation.code());
    w.len_u32(cfg.latent_dim, "latent width")?;
    match net.latent() {
        Some(z) => {
            w.u32(1);
            z.iter().for_each(|&v| w.f64(v));
        }
        None => w.u32(0),
    }
    w.u64(net.params().len() as u64);
    net.params().iter().for_each(|&v| w.f64(v));
    Ok(w.buf)
}

pub fn decode_checkpoint(data: &[u8]) -> Result<ImplicitNet> {
    let mut r = Reader::open(data, MAGIC, VERSION, "checkpoint")?;
    let n_layers = r.usize()?;
    if !(2..=64).contains(&n_layers) {
        return Err(Error::Format(format!("checkpoint: {n_layers} layer widths")));
    }
    let widths = (0..n_layers).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let omega = r.f64()?;
    let bands = r.usize()?;
    let include_raw = r.u32()? != 0;
    let code = r.u32()?;
    let activation =
        Activation::from_code(code).ok_or_else(|| Error::Format(format!("checkpoint: activation code {code}")))?;
    let latent_dim = r.usize()?;
    let latent = if r.u32()? != 0 {
        r.expect_remaining_at_least(latent_dim * 8)?;
        Some((0..latent_dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let config = NetConfig {
        hidden: widths[1..n_layers - 1].to_vec(),
        out_dim: widths[n_layers - 1],
        omega,
        posenc: PosEncConfig { bands, include_raw },
        activation,
        latent_dim,
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("checkpoint: {e}")))?;
    if config.input_dim() != widths[0] {
        return Err(Error::Format(format!(
            "checkpoint: input width {} does not match encoding width {}",
            widths[0],
            config.input_dim()
        )));
    }
    let n = r.u64()? as usize;
    if n != config.param_count() {
        return Err(Error::Format(format!(
            "checkpoint: {n} parameters for a net of {}",
            config.param_count()
        )));
    }
    r.expect_remaining(n * 8)?;
    let params = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let mut net = ImplicitNet::from_params(config, params)?;
    if latent.is_some() || latent_dim == 0 {
        net.set_latent(latent)?;
    }
    Ok(net)
}

pub fn write_checkpoint(path: &Path, net: &ImplicitNet) -> Result<()> {
    super::write_file(path, &encode_checkpoint(net)?)
}

pub fn read_checkpoint(path: &Path) -> Result<ImplicitNet> {
    decode_checkpoint(&std::fs::read(path)?)
}
