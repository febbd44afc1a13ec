use serde::{Deserialize, Serialize};

use super::{NnError, Result};

/// Trainable layers in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LayerId {
    Conv1,
    Conv2,
    Dense1,
    Head,
}

impl LayerId {
    pub const ALL: [LayerId; 4] = [LayerId::Conv1, LayerId::Conv2, LayerId::Dense1, LayerId::Head];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Layer sizes. Valid padding for both convolutions; every conv is followed
/// by ReLU and non-overlapping max pooling, the hidden dense layer by ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_len: usize,
    pub in_channels: usize,
    pub conv1_filters: usize,
    pub conv1_kernel: usize,
    pub conv2_filters: usize,
    pub conv2_kernel: usize,
    pub pool: usize,
    pub dense_units: usize,
}

impl Default for Architecture {
    /// 60x6 input, conv 5/8, conv 5/16, pool 2, dense 32.
    fn default() -> Self {
        Self {
            input_len: 60,
            in_channels: 6,
            conv1_filters: 8,
            conv1_kernel: 5,
            conv2_filters: 16,
            conv2_kernel: 5,
            pool: 2,
            dense_units: 32,
        }
    }
}

impl Architecture {
    pub fn input_size(&self) -> usize {
        self.input_len * self.in_channels
    }

    pub fn conv1_len(&self) -> usize {
        self.input_len + 1 - self.conv1_kernel
    }

    pub fn pool1_len(&self) -> usize {
        self.conv1_len() / self.pool
    }

    pub fn conv2_len(&self) -> usize {
        self.pool1_len() + 1 - self.conv2_kernel
    }

    pub fn pool2_len(&self) -> usize {
        self.conv2_len() / self.pool
    }

    pub fn flatten_len(&self) -> usize {
        self.pool2_len() * self.conv2_filters
    }

    /// `(fan_in, fan_out)` of a layer's weight matrix.
    pub fn layer_dims(&self, layer: LayerId, classes: usize) -> (usize, usize) {
        match layer {
            LayerId::Conv1 => (self.conv1_kernel * self.in_channels, self.conv1_filters),
            LayerId::Conv2 => (self.conv2_kernel * self.conv1_filters, self.conv2_filters),
            LayerId::Dense1 => (self.flatten_len(), self.dense_units),
            LayerId::Head => (self.dense_units, classes),
        }
    }

    pub fn param_count(&self, classes: usize) -> usize {
        LayerId::ALL
            .iter()
            .map(|&l| {
                let (fan_in, out) = self.layer_dims(l, classes);
                (fan_in + 1) * out
            })
            .sum()
    }

    /// Multiply-accumulates per forward pass.
    pub fn macs(&self, classes: usize) -> usize {
        self.conv1_len() * self.conv1_kernel * self.in_channels * self.conv1_filters
            + self.conv2_len() * self.conv2_kernel * self.conv1_filters * self.conv2_filters
            + self.flatten_len() * self.dense_units
            + self.dense_units * classes
    }

    pub fn validate(&self) -> Result<()> {
        let nonzero = [
            self.input_len,
            self.in_channels,
            self.conv1_filters,
            self.conv1_kernel,
            self.conv2_filters,
            self.conv2_kernel,
            self.pool,
            self.dense_units,
        ];
        if nonzero.contains(&0) {
            return Err(NnError::BadArchitecture("all sizes must be positive".into()));
        }
        if self.input_len < self.conv1_kernel
            || self.conv1_len() < self.pool
            || self.pool1_len() < self.conv2_kernel
            || self.conv2_len() < self.pool
        {
            return Err(NnError::BadArchitecture(format!(
                "input length {} too short for the conv/pool stack",
                self.input_len
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes() {
        let a = Architecture::default();
        assert_eq!(a.conv1_len(), 56);
        assert_eq!(a.pool1_len(), 28);
        assert_eq!(a.conv2_len(), 24);
        assert_eq!(a.pool2_len(), 12);
        assert_eq!(a.flatten_len(), 192);
        a.validate().unwrap();
    }

    #[test]
    fn parameter_count_law() {
        let a = Architecture::default();
        for c in 2..=30 {
            assert_eq!(a.param_count(c), 248 + 656 + 6176 + 33 * c);
        }
        assert_eq!(a.param_count(18), 7674);
        assert_eq!(a.param_count(7), 7311);
        assert_eq!(a.param_count(12), 7476);
    }

    #[test]
    fn too_short_input_rejected() {
        let a = Architecture {
            input_len: 10,
            ..Default::default()
        };
        assert!(a.validate().is_err());
    }
}
