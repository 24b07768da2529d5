//! Versioned binary checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes  "SNAPHDR\0"
//! version      u32      currently 1
//! echo_len     u32      byte length of the config echo
//! echo         UTF-8    `key=value` lines describing the network and run
//! count        u32      number of parameter tensors
//! repeated count times:
//!   name_len   u32
//!   name       UTF-8
//!   ndim       u32
//!   dims       u64 × ndim
//!   values     f64 × prod(dims)
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{NetError, Result};
use crate::param::ParamSet;
use crate::unet::{AdaptationConfig, NetConfig, SnapshotNet, UNetConfig, UpsampleMode};

pub const MAGIC: &[u8; 8] = b"SNAPHDR\0";
pub const VERSION: u32 = 1;

/// Upper bound on any single length field, to reject garbage early.
const MAX_FIELD: u64 = 1 << 32;

fn bad(msg: impl Into<String>) -> NetError {
    NetError::Checkpoint(msg.into())
}

pub fn write_params<W: Write>(mut w: W, params: &ParamSet, echo: &str) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(echo.len() as u32).to_le_bytes())?;
    w.write_all(echo.as_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params.entries() {
        w.write_all(&(p.name.len() as u32).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        w.write_all(&(p.shape.len() as u32).to_le_bytes())?;
        for d in &p.shape {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(p.data.len() * 8);
        for v in &p.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, len: usize) -> Result<String> {
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| bad("invalid UTF-8"))
}

pub fn read_params<R: Read>(mut r: R) -> Result<(ParamSet, String)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let echo_len = read_u32(&mut r)? as usize;
    let echo = read_string(&mut r, echo_len)?;
    let count = read_u32(&mut r)?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let name = read_string(&mut r, name_len)?;
        let ndim = read_u32(&mut r)?;
        if ndim > 8 {
            return Err(bad(format!("{name}: {ndim} dims")));
        }
        let mut shape = Vec::with_capacity(ndim as usize);
        let mut len: u64 = 1;
        for _ in 0..ndim {
            let d = read_u64(&mut r)?;
            len = len.checked_mul(d).filter(|l| *l < MAX_FIELD).ok_or_else(|| bad("tensor too large"))?;
            shape.push(d as usize);
        }
        let mut buf = vec![0u8; len as usize * 8];
        r.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        params.push(name, shape, data);
    }
    Ok((params, echo))
}

impl NetConfig {
    /// `key=value` lines sufficient to rebuild the architecture.
    pub fn echo(&self) -> String {
        let (a, u) = (&self.adaptation, &self.unet);
        format!(
            "net.sparse_in={}\nnet.dense_in={}\nnet.sparse_out={}\nnet.dense_out={}\n\
             net.sparse_kernel={}\nnet.dense_kernel={}\nnet.depth={}\nnet.base_channels={}\n\
             net.in_channels={}\nnet.out_channels={}\nnet.kernel_size={}\nnet.upsample={}\n",
            a.sparse_in,
            a.dense_in,
            a.sparse_out,
            a.dense_out,
            a.sparse_kernel,
            a.dense_kernel,
            u.depth,
            u.base_channels,
            u.in_channels,
            u.out_channels,
            u.kernel_size,
            u.upsample.as_str()
        )
    }

    pub fn from_echo(echo: &str) -> Result<Self> {
        let map = parse_echo(echo);
        let num = |k: &str| -> Result<usize> {
            map.get(k)
                .ok_or_else(|| bad(format!("missing {k}")))?
                .parse()
                .map_err(|_| bad(format!("bad value for {k}")))
        };
        let upsample = map
            .get("net.upsample")
            .and_then(|s| UpsampleMode::parse(s))
            .ok_or_else(|| bad("bad net.upsample"))?;
        let cfg = NetConfig {
            adaptation: AdaptationConfig {
                sparse_in: num("net.sparse_in")?,
                dense_in: num("net.dense_in")?,
                sparse_out: num("net.sparse_out")?,
                dense_out: num("net.dense_out")?,
                sparse_kernel: num("net.sparse_kernel")?,
                dense_kernel: num("net.dense_kernel")?,
            },
            unet: UNetConfig {
                depth: num("net.depth")?,
                base_channels: num("net.base_channels")?,
                in_channels: num("net.in_channels")?,
                out_channels: num("net.out_channels")?,
                kernel_size: num("net.kernel_size")?,
                upsample,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_echo(echo: &str) -> BTreeMap<String, String> {
    echo.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Saves a network; `extra` is appended to the architecture echo.
pub fn save_net(path: &Path, net: &SnapshotNet, extra: &str) -> Result<()> {
    let mut echo = net.config().echo();
    echo.push_str(extra);
    let mut buf = Vec::new();
    write_params(&mut buf, net.params(), &echo)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Loads a network and returns it with the full echo text.
pub fn load_net(path: &Path) -> Result<(SnapshotNet, String)> {
    let bytes = std::fs::read(path)?;
    let (params, echo) = read_params(bytes.as_slice())?;
    let cfg = NetConfig::from_echo(&echo)?;
    let mut net = SnapshotNet::new(cfg, 0)?;
    net.params_mut().load_from(&params)?;
    Ok((net, echo))
}
