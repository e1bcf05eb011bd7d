//! `WPCK` checkpoint files.
//!
//! Layout, all integers little-endian:
//! magic `WPCK`, u32 version, u32 config length, UTF-8 JSON config,
//! u32 tensor count, then per tensor: u16 name length, name, u8 ndim,
//! u32 per dim, f32 data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ClassInfo, ClassTaxonomy};
use crate::error::{Error, Result};
use crate::nn::{ModelGraph, ParameterSet, Tensor};

pub const MAGIC: &[u8; 4] = b"WPCK";
pub const FORMAT_VERSION: u32 = 1;

/// Training provenance stored next to the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub val_loss: Option<f64>,
    pub val_avg_class_acc: Option<f64>,
    pub seed: Option<u64>,
    /// Set once batch-norm has been folded away.
    pub folded: bool,
}

#[derive(Serialize, Deserialize)]
struct Config {
    graph: ModelGraph,
    classes: Vec<ClassInfo>,
    negative_class_id: usize,
    crop_class_id: usize,
    meta: CheckpointMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub graph: ModelGraph,
    pub params: ParameterSet<f32>,
    pub taxonomy: ClassTaxonomy,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn new(graph: ModelGraph, params: ParameterSet<f32>, taxonomy: ClassTaxonomy, meta: CheckpointMeta) -> Result<Self> {
        check_params(&graph, &params)?;
        if graph.num_classes != taxonomy.len() {
            return Err(Error::InvalidArgument(format!(
                "graph has {} outputs but taxonomy {} classes",
                graph.num_classes,
                taxonomy.len()
            )));
        }
        Ok(Self {
            graph,
            params,
            taxonomy,
            meta,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let config = Config {
            graph: self.graph.clone(),
            classes: self.taxonomy.classes().to_vec(),
            negative_class_id: self.taxonomy.negative_class_id(),
            crop_class_id: self.taxonomy.crop_class_id(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&config)?;
        let mut out = Vec::with_capacity(16 + json.len() + 4 * self.params.scalar_count() + 64 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&u32_len(json.len(), "config")?.to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&u32_len(self.params.len(), "tensor count")?.to_le_bytes());
        for (name, t) in self.params.iter() {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::InvalidArgument(format!("tensor name too long: {name}")))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let ndim = u8::try_from(t.shape().len())
                .map_err(|_| Error::InvalidArgument(format!("tensor {name} has too many dims")))?;
            out.push(ndim);
            for &d in t.shape() {
                out.extend_from_slice(&u32_len(d, name)?.to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                msg: format!("bad magic {magic:?}, expected WPCK"),
            });
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Format {
                offset: 4,
                msg: format!("unsupported version {version}, expected {FORMAT_VERSION}"),
            });
        }
        let len = r.u32("config length")? as usize;
        let at = r.pos;
        let config: Config = serde_json::from_slice(r.take(len, "config")?).map_err(|e| Error::Format {
            offset: at,
            msg: format!("config json: {e}"),
        })?;
        let count = r.u32("tensor count")? as usize;
        let mut params = ParameterSet::new();
        for _ in 0..count {
            let at = r.pos;
            let name_len = r.u16("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| Error::Format {
                    offset: at + 2,
                    msg: "tensor name is not utf-8".into(),
                })?
                .to_string();
            let ndim = r.u8("ndim")? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32("dim")? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| r.err("tensor size overflow"))?, &name)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            params.insert(name.clone(), Tensor::new(shape, data)?).map_err(|_| Error::Format {
                offset: at,
                msg: format!("duplicate tensor {name}"),
            })?;
        }
        if r.pos != bytes.len() {
            return Err(r.err("trailing bytes after last tensor"));
        }
        let taxonomy = ClassTaxonomy::new(config.classes, config.negative_class_id, config.crop_class_id)?;
        config.graph.validate()?;
        Self::new(config.graph, params, taxonomy, config.meta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    checkpoint.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

/// Parameters must cover exactly the graph's tensors with matching shapes.
pub fn check_params(graph: &ModelGraph, params: &ParameterSet<f32>) -> Result<()> {
    let specs = graph.param_specs();
    for s in &specs {
        let t = params.get(&s.name)?;
        if t.shape() != s.shape.as_slice() {
            return Err(Error::TensorMismatch {
                name: s.name.clone(),
                msg: format!("shape {:?} does not match graph shape {:?}", t.shape(), s.shape),
            });
        }
    }
    if let Some(extra) = params.names().find(|n| !specs.iter().any(|s| s.name == *n)) {
        return Err(Error::TensorMismatch {
            name: extra.to_string(),
            msg: "not part of the graph".into(),
        });
    }
    Ok(())
}

fn u32_len(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidArgument(format!("{what} exceeds u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Format {
            offset: self.pos,
            msg: msg.to_string(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                offset: self.pos,
                msg: format!("truncated reading {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            }),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_micro_mobilenet, InputSpec};

    fn sample() -> Checkpoint {
        let input = InputSpec {
            channels: 3,
            height: 64,
            width: 96,
        };
        let (g, p) = build_micro_mobilenet(0.25, 16, input, 4).unwrap();
        let meta = CheckpointMeta {
            epoch: 3,
            val_loss: Some(0.123456789),
            val_avg_class_acc: Some(0.5),
            seed: Some(4),
            folded: false,
        };
        Checkpoint::new(g, p, ClassTaxonomy::aiweeds(), meta).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"WPCK");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corrupt_header_is_format_error() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[1] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format { offset: 0, .. })));
        let mut bytes = sample().to_bytes().unwrap();
        bytes[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format { offset: 4, .. })));
        let mut bytes = sample().to_bytes().unwrap();
        bytes[12] = b'#';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format { offset: 12, .. })));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            match Checkpoint::from_bytes(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert!(offset <= cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn shape_mismatch_names_tensor() {
        let ck = sample();
        let mut p = ParameterSet::new();
        for (name, t) in ck.params.iter() {
            let t = if name == "classifier.bias" {
                Tensor::zeros(&[15])
            } else {
                t.clone()
            };
            p.insert(name, t).unwrap();
        }
        let bad = Checkpoint {
            params: p,
            ..ck
        };
        let err = Checkpoint::from_bytes(&bad.to_bytes().unwrap()).unwrap_err();
        assert!(matches!(&err, Error::TensorMismatch { name, .. } if name == "classifier.bias"), "{err}");
    }
}
