use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Architecture, LayerId, NnError, Result};
use crate::ClassMap;

/// Weights and bias of one layer.
///
/// Conv weights are laid out `[out][tap][in]`, dense weights `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f64> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Copy + Default> Tensor<T> {
    pub fn zeros(fan_in: usize, out: usize) -> Self {
        Self {
            weights: vec![T::default(); fan_in * out],
            bias: vec![T::default(); out],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All parameters, indexed by [`LayerId`].
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T = f64> {
    pub layers: [Tensor<T>; 4],
}

/// Gradients share the parameter shape tree.
pub type Gradients = Params<f64>;

impl<T: Copy + Default> Params<T> {
    pub fn zeros(arch: &Architecture, classes: usize) -> Self {
        Self {
            layers: LayerId::ALL.map(|l| {
                let (fan_in, out) = arch.layer_dims(l, classes);
                Tensor::zeros(fan_in, out)
            }),
        }
    }

    pub fn layer(&self, id: LayerId) -> &Tensor<T> {
        &self.layers[id.index()]
    }

    pub fn layer_mut(&mut self, id: LayerId) -> &mut Tensor<T> {
        &mut self.layers[id.index()]
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(Tensor::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every value in fixed order: per layer, weights then bias.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|t| t.weights.iter().chain(&t.bias))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|t| t.weights.iter_mut().chain(t.bias.iter_mut()))
    }

    /// Flat index to `(layer, is_bias, offset)`.
    pub fn locate(&self, mut index: usize) -> Option<(LayerId, bool, usize)> {
        for id in LayerId::ALL {
            let t = self.layer(id);
            if index < t.weights.len() {
                return Some((id, false, index));
            }
            index -= t.weights.len();
            if index < t.bias.len() {
                return Some((id, true, index));
            }
            index -= t.bias.len();
        }
        None
    }

    pub fn get(&self, index: usize) -> Option<T> {
        let (id, bias, off) = self.locate(index)?;
        let t = self.layer(id);
        Some(if bias { t.bias[off] } else { t.weights[off] })
    }

    pub fn set(&mut self, index: usize, value: T) {
        let (id, bias, off) = self.locate(index).expect("parameter index in range");
        let t = self.layer_mut(id);
        if bias {
            t.bias[off] = value;
        } else {
            t.weights[off] = value;
        }
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> Params<U> {
        Params {
            layers: self.layers.each_ref().map(|t| Tensor {
                weights: t.weights.iter().map(|&v| f(v)).collect(),
                bias: t.bias.iter().map(|&v| f(v)).collect(),
            }),
        }
    }
}

impl Params<f64> {
    pub fn add_assign(&mut self, other: &Params<f64>) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for a in self.iter_mut() {
            *a *= k;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// The float model: architecture, class map, parameters and the per-layer
/// trainable mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub arch: Architecture,
    pub classes: ClassMap,
    pub params: Params,
    pub trainable: [bool; 4],
    pub seed: u64,
}

/// Uniform in `±sqrt(6 / fan_in)`; biases zero.
pub(crate) fn init_tensor(rng: &mut ChaCha8Rng, fan_in: usize, out: usize) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    Tensor {
        weights: (0..fan_in * out).map(|_| rng.random_range(-limit..limit)).collect(),
        bias: vec![0.0; out],
    }
}

impl CnnModel {
    pub fn new(arch: Architecture, classes: ClassMap, seed: u64) -> Result<Self> {
        arch.validate()?;
        if classes.len() < 2 {
            return Err(NnError::BadClassCount(classes.len()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = LayerId::ALL.map(|l| {
            let (fan_in, out) = arch.layer_dims(l, classes.len());
            init_tensor(&mut rng, fan_in, out)
        });
        Ok(Self {
            arch,
            classes,
            params: Params { layers },
            trainable: [true; 4],
            seed,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Marks only `layers` as trainable.
    pub fn freeze_all_except(&mut self, layers: &[LayerId]) {
        for id in LayerId::ALL {
            self.trainable[id.index()] = layers.contains(&id);
        }
    }

    pub fn is_trainable(&self, id: LayerId) -> bool {
        self.trainable[id.index()]
    }

    /// Per-parameter trainable flag in [`Params::iter`] order.
    pub fn trainable_mask(&self) -> Vec<bool> {
        LayerId::ALL
            .iter()
            .flat_map(|&id| std::iter::repeat_n(self.is_trainable(id), self.params.layer(id).len()))
            .collect()
    }
}

/// Default-architecture model with fan-in scaled uniform weights.
pub fn init_model(classes: ClassMap, seed: u64) -> Result<CnnModel> {
    CnnModel::new(Architecture::default(), classes, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> ClassMap {
        ClassMap::new((0..n).map(|i| format!("c{i}")))
    }

    #[test]
    fn deterministic_init() {
        let a = init_model(names(18), 7).unwrap();
        let b = init_model(names(18), 7).unwrap();
        assert!(a
            .params
            .iter()
            .zip(b.params.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = init_model(names(18), 8).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn counts() {
        assert_eq!(init_model(names(18), 0).unwrap().param_count(), 7674);
        assert_eq!(init_model(names(7), 0).unwrap().param_count(), 7311);
        assert_eq!(init_model(names(12), 0).unwrap().param_count(), 7476);
    }

    #[test]
    fn init_ranges() {
        let m = init_model(names(5), 1).unwrap();
        for id in LayerId::ALL {
            let (fan_in, _) = m.arch.layer_dims(id, 5);
            let limit = (6.0 / fan_in as f64).sqrt();
            let t = m.params.layer(id);
            assert!(t.weights.iter().all(|w| w.abs() <= limit));
            assert!(t.bias.iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn one_class_rejected() {
        assert!(matches!(init_model(names(1), 0), Err(NnError::BadClassCount(1))));
    }

    #[test]
    fn mask_covers_every_parameter_once() {
        let mut m = init_model(names(4), 0).unwrap();
        m.freeze_all_except(&[LayerId::Head]);
        let mask = m.trainable_mask();
        assert_eq!(mask.len(), m.param_count());
        assert_eq!(mask.iter().filter(|b| **b).count(), 33 * 4);
    }

    #[test]
    fn flat_indexing() {
        let mut m = init_model(names(3), 0).unwrap();
        let n = m.param_count();
        for i in [0, 239, 240, 247, 248, n - 1] {
            let v = m.params.get(i).unwrap();
            m.params.set(i, v + 1.0);
            assert_eq!(m.params.get(i).unwrap(), v + 1.0);
        }
        assert!(m.params.get(n).is_none());
        assert_eq!(m.params.iter().count(), n);
    }
}
