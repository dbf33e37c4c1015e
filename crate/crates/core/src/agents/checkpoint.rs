//! Binary checkpoints of [`ActorCriticState`].
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "SDLABCKP" | version u32 | tag_len u32 | tag bytes
//! n_critics u32 | n_actors u32
//! per network: n_sizes u32 | sizes u64... | activation u8 (0 identity, 1 scaled tanh)
//!              [scaled tanh: low f64 x out | high f64 x out]
//!              lr f64 | beta1 f64 | beta2 f64 | eps f64 | adam steps u64
//! per network: online f64 x P | target f64 x P | first moment f64 x P | second moment f64 x P
//! ```

use std::path::Path;

use crate::agents::config::Algorithm;
use crate::agents::state::{ActorCriticState, Network};
use crate::error::{Error, Result};
use crate::numeric::{AdamState, MlpSpec, OutputActivation, ParamVector};

pub const MAGIC: &[u8; 8] = b"SDLABCKP";
pub const VERSION: u32 = 1;

pub fn to_bytes(state: &ActorCriticState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    let tag = state.algorithm.tag().as_bytes();
    put_u32(&mut out, tag.len() as u32);
    out.extend_from_slice(tag);
    put_u32(&mut out, state.critics.len() as u32);
    put_u32(&mut out, state.actors.len() as u32);
    for net in state.networks() {
        let spec = net.spec();
        put_u32(&mut out, spec.layer_sizes().len() as u32);
        for &s in spec.layer_sizes() {
            out.extend_from_slice(&(s as u64).to_le_bytes());
        }
        match spec.output_activation() {
            OutputActivation::Identity => out.push(0),
            OutputActivation::ScaledTanh { low, high } => {
                out.push(1);
                put_f64s(&mut out, low);
                put_f64s(&mut out, high);
            }
        }
        let a = &net.adam;
        put_f64s(&mut out, &[a.learning_rate, a.beta1, a.beta2, a.epsilon]);
        out.extend_from_slice(&a.step_count.to_le_bytes());
    }
    for net in state.networks() {
        put_f64s(&mut out, net.online.values());
        put_f64s(&mut out, net.target.values());
        put_f64s(&mut out, &net.adam.first_moment);
        put_f64s(&mut out, &net.adam.second_moment);
    }
    out
}

struct Header {
    spec: MlpSpec,
    adam: [f64; 4],
    steps: u64,
}

pub fn from_bytes(bytes: &[u8]) -> Result<ActorCriticState> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let tag_len = r.u32()? as usize;
    let tag = std::str::from_utf8(r.take(tag_len)?)
        .map_err(|_| Error::Checkpoint("algorithm tag is not UTF-8".into()))?;
    let algorithm: Algorithm = tag
        .parse()
        .map_err(|_| Error::Checkpoint(format!("unknown algorithm tag `{tag}`")))?;
    let n_critics = r.u32()? as usize;
    let n_actors = r.u32()? as usize;
    let mut headers = Vec::with_capacity(n_critics + n_actors);
    for _ in 0..n_critics + n_actors {
        let n_sizes = r.u32()? as usize;
        let sizes = (0..n_sizes)
            .map(|_| r.u64().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let out_dim = *sizes.last().unwrap_or(&0);
        let activation = match r.u8()? {
            0 => OutputActivation::Identity,
            1 => OutputActivation::ScaledTanh {
                low: r.f64s(out_dim)?,
                high: r.f64s(out_dim)?,
            },
            k => return Err(Error::Checkpoint(format!("unknown activation kind {k}"))),
        };
        let spec = MlpSpec::new(sizes, activation).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let h = r.f64s(4)?;
        let steps = r.u64()?;
        headers.push(Header {
            spec,
            adam: [h[0], h[1], h[2], h[3]],
            steps,
        });
    }
    let mut nets = Vec::with_capacity(headers.len());
    for h in headers {
        let p = h.spec.param_count();
        let online = ParamVector::from_values(h.spec.clone(), r.f64s(p)?)?;
        let target = ParamVector::from_values(h.spec, r.f64s(p)?)?;
        let adam = AdamState {
            first_moment: r.f64s(p)?,
            second_moment: r.f64s(p)?,
            step_count: h.steps,
            learning_rate: h.adam[0],
            beta1: h.adam[1],
            beta2: h.adam[2],
            epsilon: h.adam[3],
        };
        nets.push(Network { online, target, adam });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let actors = nets.split_off(n_critics);
    Ok(ActorCriticState {
        algorithm,
        critics: nets,
        actors,
    })
}

pub fn save(state: &ActorCriticState, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(state))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ActorCriticState> {
    from_bytes(&std::fs::read(path)?)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
