//! `DLWL` weak-learner checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "DLWL" | version u32
//! arch name (u32 length + UTF-8) | input dims (u32 count + u32 each) | classes u32
//! optimizer name | scheduler name | node u64 | seed u64 | lr f64 | momentum f64 | weight decay f64
//! per layer in order: weight (u64 count + f32 each), bias (u64 count + f32 each)
//! val accuracy f64 (NaN when absent) | epochs u32 | per epoch: lr, train loss, val loss, val acc (f64, NaN when absent)
//! ```

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use distrobust_core::nn::Shape;
use distrobust_core::optim::OptimizerSpec;
use distrobust_core::trainer::{EpochLog, TrainedModel, WeakLearnerConfig};
use distrobust_core::zoo::{build, ArchitectureId};

pub const MAGIC: &[u8; 4] = b"DLWL";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend(v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend(v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend(v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend(s.as_bytes());
    }
    fn floats(&mut self, v: &[f32]) {
        self.u64(v.len() as u64);
        for x in v {
            self.0.extend(x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        ensure!(self.pos + n <= self.buf.len(), "checkpoint truncated at byte {}", self.pos);
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        Ok(std::str::from_utf8(self.take(n)?)?.to_string())
    }
    fn floats_into(&mut self, dst: &mut [f32]) -> Result<()> {
        let n = self.u64()? as usize;
        ensure!(n == dst.len(), "parameter block of {} values, network expects {}", n, dst.len());
        for (d, c) in dst.iter_mut().zip(self.take(4 * n)?.chunks_exact(4)) {
            *d = f32::from_le_bytes(c.try_into().unwrap());
        }
        Ok(())
    }
}

fn opt_f64(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

fn f64_opt(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

pub fn encode(model: &TrainedModel<f32>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend(MAGIC);
    w.u32(VERSION);
    let c = &model.config;
    w.str(c.arch.name());
    let dims = model.network.input_shape().dims();
    w.u32(dims.len() as u32);
    dims.iter().for_each(|&d| w.u32(d as u32));
    w.u32(model.network.classes() as u32);
    w.str(c.opt.kind.name());
    w.str(c.sched.name());
    w.u64(c.node as u64);
    w.u64(c.seed);
    w.f64(c.opt.lr);
    w.f64(c.opt.momentum);
    w.f64(c.opt.weight_decay);
    for p in model.network.params() {
        w.floats(p.weight.data());
        w.floats(p.bias.data());
    }
    w.f64(opt_f64(model.val_accuracy));
    w.u32(model.log.len() as u32);
    for e in &model.log {
        w.f64(e.lr);
        w.f64(e.train_loss);
        w.f64(opt_f64(e.val_loss));
        w.f64(opt_f64(e.val_accuracy));
    }
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<TrainedModel<f32>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        bail!("not a DLWL checkpoint");
    }
    let version = r.u32()?;
    ensure!(version == VERSION, "checkpoint version {} (expected {})", version, VERSION);
    let arch = r.str()?.parse()?;
    let ndims = r.u32()? as usize;
    ensure!(ndims == 1 || ndims == 3, "input of {} dimensions", ndims);
    let dims: Vec<usize> = (0..ndims).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
    let input = if ndims == 1 {
        Shape::Flat(dims[0])
    } else {
        Shape::image(dims[0], dims[1], dims[2])
    };
    let classes = r.u32()? as usize;
    let kind = r.str()?.parse()?;
    let sched = r.str()?.parse()?;
    let node = r.u64()? as usize;
    let seed = r.u64()?;
    let (lr, momentum, weight_decay) = (r.f64()?, r.f64()?, r.f64()?);
    let mut network = build::<f32>(ArchitectureId::new(arch, input, classes), 0)?;
    for p in network.params_mut() {
        r.floats_into(p.weight.data_mut())?;
        r.floats_into(p.bias.data_mut())?;
    }
    let val_accuracy = f64_opt(r.f64()?);
    let epochs = r.u32()? as usize;
    let mut log = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        log.push(EpochLog {
            epoch,
            lr: r.f64()?,
            train_loss: r.f64()?,
            val_loss: f64_opt(r.f64()?),
            val_accuracy: f64_opt(r.f64()?),
        });
    }
    ensure!(r.pos == bytes.len(), "{} trailing bytes after checkpoint", bytes.len() - r.pos);
    Ok(TrainedModel {
        network,
        config: WeakLearnerConfig {
            arch,
            opt: OptimizerSpec::new(kind, lr, momentum, weight_decay),
            sched,
            node,
            seed,
        },
        log,
        val_accuracy,
    })
}

pub fn save(model: &TrainedModel<f32>, path: &Path) -> Result<()> {
    crate::artifacts::write(path, encode(model))
}

pub fn load(path: &Path) -> Result<TrainedModel<f32>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode(&bytes).with_context(|| format!("decoding {}", path.display()))
}
