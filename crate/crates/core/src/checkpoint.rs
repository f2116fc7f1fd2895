//! Binary container holding trained hemisphere networks and an optional SVM.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes  "BCNNCKPT"
//! version    u32      1
//! mode       str      routing mode name
//! nets       u32      count, then per network:
//!   digest   u64      spec digest (checked on load)
//!   spec     str      architecture spec as JSON
//!   mean     u32 channels, then channels x f64 (input zero-centering)
//!   tensors  u32      count, then per tensor:
//!     name   str
//!     dims   u32 rank, then rank x u64
//!     data   product(dims) x f64
//! svm        u8       0 = absent, 1 = present, then:
//!   lambda   f64
//!   bias     f64
//!   weights  u64 length, then length x f64
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8 bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{ArchitectureSpec, Network, ParamTensor};
use crate::routing::RoutingMode;
use crate::svm::SvmModel;

pub const MAGIC: &[u8; 8] = b"BCNNCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mode: RoutingMode,
    pub nets: Vec<Network>,
    pub svm: Option<SvmModel>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(Error::Input(format!("checkpoint truncated at byte {}", self.pos)));
        };
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Input("checkpoint length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Input(format!("checkpoint string: {e}")))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(MAGIC.to_vec());
        w.u32(VERSION as usize);
        w.str(self.mode.name());
        w.u32(self.nets.len());
        for net in &self.nets {
            w.u64(net.spec().digest());
            w.str(&serde_json::to_string(net.spec()).expect("spec serializes"));
            w.u32(net.input_mean().len());
            for &m in net.input_mean() {
                w.f64(m);
            }
            w.u32(net.params().len());
            for p in net.params() {
                w.str(&p.name);
                w.u32(p.dims.len());
                for &d in &p.dims {
                    w.u64(d as u64);
                }
                for &v in &p.data {
                    w.f64(v);
                }
            }
        }
        match &self.svm {
            None => w.u8(0),
            Some(m) => {
                w.u8(1);
                w.f64(m.lambda);
                w.f64(m.bias);
                w.u64(m.weights.len() as u64);
                for &v in &m.weights {
                    w.f64(v);
                }
            }
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Input("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION as usize {
            return Err(Error::Input(format!("unsupported checkpoint version {version}")));
        }
        let mode: RoutingMode = r.str()?.parse()?;
        let mut nets = Vec::new();
        for _ in 0..r.u32()? {
            let digest = r.u64()?;
            let spec: ArchitectureSpec =
                serde_json::from_str(&r.str()?).map_err(|e| Error::Input(format!("checkpoint spec: {e}")))?;
            if spec.digest() != digest {
                return Err(Error::Input(format!("spec digest mismatch for `{}`", spec.name)));
            }
            let channels = r.u32()?;
            let mean = r.f64s(channels)?;
            let mut params = Vec::new();
            for _ in 0..r.u32()? {
                let name = r.str()?;
                let rank = r.u32()?;
                let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
                let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
                let len = len.ok_or_else(|| Error::Input(format!("tensor `{name}` is too large")))?;
                params.push(ParamTensor { name, dims, data: r.f64s(len)? });
            }
            let mut net = Network::from_parts(spec, params)?;
            net.set_input_mean(mean)?;
            nets.push(net);
        }
        let svm = match r.u8()? {
            0 => None,
            1 => {
                let lambda = r.f64()?;
                let bias = r.f64()?;
                let n = r.u64()? as usize;
                Some(SvmModel { weights: r.f64s(n)?, bias, lambda })
            }
            t => return Err(Error::Input(format!("bad svm tag {t}"))),
        };
        if r.pos != buf.len() {
            return Err(Error::Input(format!("{} trailing bytes in checkpoint", buf.len() - r.pos)));
        }
        if nets.len() != mode.hemispheres() {
            return Err(Error::State(format!(
                "mode {mode} needs {} network(s), checkpoint has {}",
                mode.hemispheres(),
                nets.len()
            )));
        }
        Ok(Self { mode, nets, svm })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::output(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::ingestion(path, e))?;
        Self::from_bytes(&buf)
    }
}
