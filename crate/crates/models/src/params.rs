use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ModelError, Result};

/// Named trainable tensors. Initial values come from a seeded ChaCha
/// stream, so construction is reproducible independent of the backend RNG.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    device: Device,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(seed: u64, device: Device) -> Self {
        ParamStore {
            vars: BTreeMap::new(),
            device,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn insert(&mut self, name: &str, t: Tensor) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(ModelError::Other(format!("parameter '{name}' defined twice")));
        }
        let v = Var::from_tensor(&t)?;
        let out = v.as_tensor().clone();
        self.vars.insert(name.to_string(), v);
        Ok(out)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0f32, std as f32).map_err(|e| ModelError::Other(e.to_string()))?;
        let data: Vec<f32> = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        let t = Tensor::from_vec(data, shape, &self.device)?;
        self.insert(name, t)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let t = Tensor::zeros(shape, DType::F32, &self.device)?;
        self.insert(name, t)
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let t = Tensor::ones(shape, DType::F32, &self.device)?;
        self.insert(name, t)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.vars.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Detached copies of every value.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Tensor>> {
        self.vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().detach().copy()?)))
            .collect()
    }

    /// Writes values back in place; names and shapes must match exactly.
    pub fn restore(&self, values: &BTreeMap<String, Tensor>) -> Result<()> {
        if values.len() != self.vars.len() {
            return Err(ModelError::Other(format!(
                "expected {} parameters, got {}",
                self.vars.len(),
                values.len()
            )));
        }
        for (k, v) in &self.vars {
            let src = values
                .get(k)
                .ok_or_else(|| ModelError::Other(format!("parameter '{k}' missing")))?;
            if src.dims() != v.dims() {
                return Err(ModelError::Other(format!(
                    "parameter '{k}' has shape {:?}, expected {:?}",
                    src.dims(),
                    v.dims()
                )));
            }
            v.set(&src.to_dtype(DType::F32)?.to_device(&self.device)?)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: HashMap<String, Tensor> = self.snapshot()?.into_iter().collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    pub fn load(&self, path: &Path) -> Result<()> {
        let map = candle_core::safetensors::load(path, &self.device).map_err(|e| ModelError::BadCheckpoint {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let values: BTreeMap<String, Tensor> = map.into_iter().collect();
        self.restore(&values).map_err(|e| ModelError::BadCheckpoint {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init_is_reproducible() {
        let mut a = ParamStore::new(3, Device::Cpu);
        let mut b = ParamStore::new(3, Device::Cpu);
        let x = a.normal("w", &[4, 5], 0.02).unwrap();
        let y = b.normal("w", &[4, 5], 0.02).unwrap();
        assert_eq!(x.to_vec2::<f32>().unwrap(), y.to_vec2::<f32>().unwrap());
        assert!(a.normal("w", &[1], 1.0).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = ParamStore::new(1, Device::Cpu);
        let w = a.normal("w", &[3, 2], 1.0).unwrap();
        a.zeros("b", &[2]).unwrap();
        let path = dir.path().join("w.safetensors");
        a.save(&path).unwrap();

        let mut b = ParamStore::new(99, Device::Cpu);
        let w2 = b.normal("w", &[3, 2], 1.0).unwrap();
        b.ones("b", &[2]).unwrap();
        b.load(&path).unwrap();
        assert_eq!(w.to_vec2::<f32>().unwrap(), w2.to_vec2::<f32>().unwrap());

        let mut c = ParamStore::new(1, Device::Cpu);
        c.normal("w", &[2, 3], 1.0).unwrap();
        c.zeros("b", &[2]).unwrap();
        assert!(matches!(c.load(&path), Err(ModelError::BadCheckpoint { .. })));
    }
}
