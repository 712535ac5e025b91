//! Binary checkpoint container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "LORAPRO\0"
//! version      u32      = 1
//! fingerprint  32 bytes SHA-256 of the run-defining config
//! step         u64      next step to execute
//! total_steps  u64
//! n_layers     u32
//! per layer:
//!   alpha f64, scaling u8 (0 lora, 1 rslora), method u8
//!   matrix w0, matrix b, matrix a
//!   state u8: 0 stateless | 1 adam | 2 adam(a) adam(b)
//! matrix:  rows u64, cols u64, rows·cols f64 row-major
//! adam:    t u64, beta1 f64, beta2 f64, epsilon f64, matrix m, matrix v
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lora::{LoraLayer, ScalingMode};
use crate::optim::{AdamWState, LayerOptimizer, LayerState, LoraAdamWState, Method};

pub const MAGIC: &[u8; 8] = b"LORAPRO\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub fingerprint: [u8; 32],
    pub step: usize,
    pub total_steps: usize,
    pub layers: Vec<LoraLayer>,
    pub optimizers: Vec<LayerOptimizer>,
}

fn method_code(m: Method) -> u8 {
    match m {
        Method::Lora => 0,
        Method::LoraSgd => 1,
        Method::LoraProSgd => 2,
        Method::LoraProAdamw => 3,
        Method::FullFt => 4,
    }
}

fn method_from(code: u8) -> Result<Method> {
    Method::ALL
        .into_iter()
        .find(|m| method_code(*m) == code)
        .ok_or_else(|| Error::Checkpoint(format!("unknown method code {code}")))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn matrix(&mut self, m: &Matrix) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        for &v in m.data() {
            self.f64(v);
        }
    }
    fn adam(&mut self, s: &AdamWState) {
        self.u64(s.t);
        self.f64(s.beta1);
        self.f64(s.beta2);
        self.f64(s.epsilon);
        self.matrix(&s.m);
        self.matrix(&s.v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("size does not fit in usize".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let len = rows
            .checked_mul(cols)
            .filter(|&l| l <= (self.buf.len() - self.pos) / 8)
            .ok_or_else(|| Error::Checkpoint(format!("matrix {rows}×{cols} exceeds the remaining data")))?;
        let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Matrix::from_vec(rows, cols, data).map_err(|e| Error::Checkpoint(e.to_string()))
    }
    fn adam(&mut self) -> Result<AdamWState> {
        Ok(AdamWState {
            t: self.u64()?,
            beta1: self.f64()?,
            beta2: self.f64()?,
            epsilon: self.f64()?,
            m: self.matrix()?,
            v: self.matrix()?,
        })
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.layers.len() != self.optimizers.len() {
            return Err(Error::Checkpoint(format!(
                "{} layers but {} optimizers",
                self.layers.len(),
                self.optimizers.len()
            )));
        }
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.0.extend_from_slice(&self.fingerprint);
        w.u64(self.step as u64);
        w.u64(self.total_steps as u64);
        w.u32(self.layers.len() as u32);
        for (layer, opt) in self.layers.iter().zip(&self.optimizers) {
            w.f64(layer.alpha);
            w.u8(match layer.scaling_mode {
                ScalingMode::Lora => 0,
                ScalingMode::Rslora => 1,
            });
            w.u8(method_code(opt.method));
            w.matrix(&layer.w0);
            w.matrix(&layer.b);
            w.matrix(&layer.a);
            match &opt.state {
                LayerState::Stateless => w.u8(0),
                LayerState::Moments { state } => {
                    w.u8(1);
                    w.adam(state);
                }
                LayerState::FactorMoments { state } => {
                    w.u8(2);
                    w.adam(&state.a);
                    w.adam(&state.b);
                }
            }
        }
        Ok(w.0)
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let fingerprint: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let step = r.usize()?;
        let total_steps = r.usize()?;
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::new();
        let mut optimizers = Vec::new();
        for _ in 0..n_layers {
            let alpha = r.f64()?;
            let scaling_mode = match r.u8()? {
                0 => ScalingMode::Lora,
                1 => ScalingMode::Rslora,
                c => return Err(Error::Checkpoint(format!("unknown scaling code {c}"))),
            };
            let method = method_from(r.u8()?)?;
            let w0 = r.matrix()?;
            let b = r.matrix()?;
            let a = r.matrix()?;
            let layer = LoraLayer::new(w0, b, a, alpha, scaling_mode).map_err(|e| Error::Checkpoint(e.to_string()))?;
            let state = match r.u8()? {
                0 => LayerState::Stateless,
                1 => LayerState::Moments { state: r.adam()? },
                2 => LayerState::FactorMoments {
                    state: LoraAdamWState {
                        a: r.adam()?,
                        b: r.adam()?,
                    },
                },
                c => return Err(Error::Checkpoint(format!("unknown state code {c}"))),
            };
            layers.push(layer);
            optimizers.push(LayerOptimizer { method, state });
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Self {
            fingerprint,
            step,
            total_steps,
            layers,
            optimizers,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| Error::Io(format!("writing {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::Io(format!("reading {}: {e}", path.display())))?;
        Self::decode(&buf)
    }
}
