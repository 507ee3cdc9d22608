//! Binary checkpoint: `SWTF`, version, named little-endian arrays, then the
//! run configuration as length-prefixed UTF-8.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{BaseNet, Scalar, Tensor};
use crate::optim::Adam;
use crate::pipeline::config::RunConfig;

pub const MAGIC: &[u8; 4] = b"SWTF";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl ArrayData {
    pub fn of<T: Scalar>(t: &Tensor<T>) -> Self {
        match T::DTYPE {
            1 => ArrayData::F32(t.cast()),
            _ => ArrayData::F64(t.cast()),
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            ArrayData::F32(t) => t.shape(),
            ArrayData::F64(t) => t.shape(),
        }
    }

    fn dtype(&self) -> u8 {
        match self {
            ArrayData::F32(_) => f32::DTYPE,
            ArrayData::F64(_) => f64::DTYPE,
        }
    }

    /// The tensor in dtype `T`; fails when the stored dtype differs.
    pub fn get<T: Scalar>(&self) -> Result<Tensor<T>> {
        if self.dtype() != T::DTYPE {
            return Err(Error::Checkpoint(format!(
                "array has dtype code {}, expected {}",
                self.dtype(),
                T::DTYPE
            )));
        }
        Ok(match self {
            ArrayData::F32(t) => t.cast(),
            ArrayData::F64(t) => t.cast(),
        })
    }
}

/// Per-epoch training record; `test_acc` is NaN where no evaluation ran.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub lr: Vec<f64>,
    pub loss: Vec<f64>,
    pub train_acc: Vec<f64>,
    pub test_acc: Vec<f64>,
}

impl History {
    pub fn epochs(&self) -> usize {
        self.loss.len()
    }

    pub fn best_test(&self) -> Option<(usize, f64)> {
        self.test_acc
            .iter()
            .enumerate()
            .filter(|(_, a)| !a.is_nan())
            .fold(None, |best, (e, &a)| match best {
                Some((_, b)) if b >= a => best,
                _ => Some((e, a)),
            })
    }
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState<T> {
    pub net: BaseNet<T>,
    pub adam: Adam<T>,
    /// Completed epochs.
    pub epoch: u32,
    pub history: History,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub arrays: Vec<(String, ArrayData)>,
    /// Verbatim JSON of the run configuration.
    pub config_text: String,
}

fn meta(values: &[f64]) -> ArrayData {
    ArrayData::F64(Tensor::from_vec(&[values.len()], values.to_vec()))
}

impl Checkpoint {
    pub fn from_state<T: Scalar>(config: &RunConfig, state: &TrainingState<T>) -> Self {
        let mut arrays: Vec<(String, ArrayData)> = state
            .net
            .state()
            .into_iter()
            .map(|(name, t)| (format!("model.{name}"), ArrayData::of(t)))
            .collect();
        for ((name, _), (m, v)) in state
            .net
            .params()
            .iter()
            .zip(state.adam.m.iter().zip(&state.adam.v))
        {
            arrays.push((format!("adam.m.{name}"), ArrayData::of(m)));
            arrays.push((format!("adam.v.{name}"), ArrayData::of(v)));
        }
        let h = &state.history;
        arrays.push(("adam.t".into(), meta(&[state.adam.t as f64])));
        arrays.push(("meta.epoch".into(), meta(&[f64::from(state.epoch)])));
        arrays.push(("history.lr".into(), meta(&h.lr)));
        arrays.push(("history.loss".into(), meta(&h.loss)));
        arrays.push(("history.train_acc".into(), meta(&h.train_acc)));
        arrays.push(("history.test_acc".into(), meta(&h.test_acc)));
        Self {
            version: FORMAT_VERSION,
            arrays,
            config_text: config.to_json(),
        }
    }

    pub fn config(&self) -> Result<RunConfig> {
        serde_json::from_str(&self.config_text)
            .map_err(|e| Error::Checkpoint(format!("config snapshot: {e}")))
    }

    pub fn array(&self, name: &str) -> Result<&ArrayData> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
            .ok_or_else(|| Error::Checkpoint(format!("missing array {name}")))
    }

    fn meta(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.array(name)?.get::<f64>()?.into_data())
    }

    /// Rebuilds the model, optimizer and history in dtype `T`.
    pub fn to_state<T: Scalar>(&self) -> Result<TrainingState<T>> {
        let config = self.config()?;
        let mut net = BaseNet::<T>::new(config.net.clone(), 0)?;
        let mut model = BTreeMap::new();
        for (name, array) in &self.arrays {
            if let Some(short) = name.strip_prefix("model.") {
                model.insert(short.to_string(), array.get::<T>()?);
            }
        }
        net.load_state(&model)?;
        let names: Vec<String> = net.params().into_iter().map(|(n, _)| n).collect();
        let mut adam = Adam::<T>::new(config.optimizer, &[]);
        for (name, (_, p)) in names.iter().zip(net.params()) {
            for (prefix, dst) in [("adam.m.", &mut adam.m), ("adam.v.", &mut adam.v)] {
                let t = self.array(&format!("{prefix}{name}"))?.get::<T>()?;
                if t.shape() != p.shape() {
                    return Err(Error::Checkpoint(format!(
                        "{prefix}{name} has shape {:?}",
                        t.shape()
                    )));
                }
                dst.push(t);
            }
        }
        let scalar = |name: &str| -> Result<f64> {
            match self.meta(name)?.as_slice() {
                [v] => Ok(*v),
                other => Err(Error::Checkpoint(format!(
                    "{name} holds {} values",
                    other.len()
                ))),
            }
        };
        adam.t = scalar("adam.t")? as u64;
        let epoch = scalar("meta.epoch")? as u32;
        let history = History {
            lr: self.meta("history.lr")?,
            loss: self.meta("history.loss")?,
            train_acc: self.meta("history.train_acc")?,
            test_acc: self.meta("history.test_acc")?,
        };
        if [
            history.lr.len(),
            history.train_acc.len(),
            history.test_acc.len(),
        ] != [history.loss.len(); 3]
            || history.loss.len() != epoch as usize
        {
            return Err(Error::Checkpoint(
                "history length disagrees with epoch counter".into(),
            ));
        }
        Ok(TrainingState {
            net,
            adam,
            epoch,
            history,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, array) in &self.arrays {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(array.dtype());
            out.push(array.shape().len() as u8);
            for &d in array.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            match array {
                ArrayData::F32(t) => t.data().iter().for_each(|v| v.write_le(&mut out)),
                ArrayData::F64(t) => t.data().iter().for_each(|v| v.write_le(&mut out)),
            }
        }
        out.extend_from_slice(&(self.config_text.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_text.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let count = r.u32()?;
        let mut arrays = Vec::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Checkpoint("array name is not UTF-8".into()))?;
            let dtype = r.take(1)?[0];
            let ndim = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("array {name} is too large")))?;
            let array = match dtype {
                1 => ArrayData::F32(read_tensor(&mut r, &shape, n)?),
                2 => ArrayData::F64(read_tensor(&mut r, &shape, n)?),
                other => {
                    return Err(Error::Checkpoint(format!(
                        "array {name} has unknown dtype code {other}"
                    )))
                }
            };
            arrays.push((name, array));
        }
        let len = r.u32()? as usize;
        let config_text = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            version,
            arrays,
            config_text,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
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
            .ok_or(Error::Truncated)?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

fn read_tensor<T: Scalar>(r: &mut Reader<'_>, shape: &[usize], n: usize) -> Result<Tensor<T>> {
    let raw = r.take(n.checked_mul(T::BYTES).ok_or(Error::Truncated)?)?;
    Ok(Tensor::from_vec(
        shape,
        raw.chunks_exact(T::BYTES).map(T::read_le).collect(),
    ))
}
