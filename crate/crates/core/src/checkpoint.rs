//! JSON checkpoints: field configuration plus named flat parameter arrays in
//! layer order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldConfig, FieldParams, RadianceField};
use crate::real::Real;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: FieldConfig,
    pub blocks: Vec<ParamBlock>,
}

impl Checkpoint {
    pub fn from_field<T: Real>(field: &RadianceField<T>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config: field.config.clone(),
            blocks: field
                .params
                .blocks()
                .into_iter()
                .map(|(name, v)| ParamBlock {
                    name,
                    values: v.iter().map(|x| x.f64()).collect(),
                })
                .collect(),
        }
    }

    pub fn to_field<T: Real>(&self) -> Result<RadianceField<T>> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.config.validate()?;
        let mut params = FieldParams::<T>::zeros(&self.config);
        let names: Vec<(String, usize)> = params.blocks().into_iter().map(|(n, v)| (n, v.len())).collect();
        if names.len() != self.blocks.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} parameter blocks, configuration needs {}",
                self.blocks.len(),
                names.len()
            )));
        }
        for (((name, len), dst), src) in names.iter().zip(params.blocks_mut()).zip(&self.blocks) {
            if *name != src.name || *len != src.values.len() {
                return Err(Error::Config(format!(
                    "checkpoint block `{}` ({} values) does not match `{name}` ({len} values)",
                    src.name,
                    src.values.len()
                )));
            }
            for (d, &s) in dst.iter_mut().zip(&src.values) {
                *d = T::of(s);
            }
        }
        RadianceField::from_parts(self.config.clone(), params)
    }
}

pub fn save_checkpoint<T: Real>(path: &Path, field: &RadianceField<T>) -> Result<()> {
    let text = serde_json::to_string(&Checkpoint::from_field(field))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<RadianceField<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    ck.to_field()
}
