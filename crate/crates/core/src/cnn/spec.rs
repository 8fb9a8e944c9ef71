use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channels × height × width of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape3 {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid-padded 2-D convolution with a bias per filter.
    Conv {
        filters: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
    },
    /// Non-overlapping max pooling; trailing rows/columns are dropped.
    MaxPool { pool_h: usize, pool_w: usize },
    Relu,
    Flatten,
    Dense { units: usize },
    /// Dense layer to `classes` logits followed by softmax.
    SoftmaxOutput { classes: usize },
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(
            self,
            LayerSpec::Conv { .. } | LayerSpec::Dense { .. } | LayerSpec::SoftmaxOutput { .. }
        )
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: Shape3) -> Result<Shape3> {
        let flat = |what: &str| -> Result<usize> {
            if input.height == 1 && input.width == 1 {
                Ok(input.channels)
            } else {
                Err(Error::ShapeMismatch(format!(
                    "{what} needs a flattened input, got {input:?}"
                )))
            }
        };
        match *self {
            LayerSpec::Conv {
                filters,
                kernel_h,
                kernel_w,
                stride,
            } => {
                if filters == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0 {
                    return Err(Error::ShapeMismatch(format!("degenerate conv {self:?}")));
                }
                if input.height < kernel_h || input.width < kernel_w {
                    return Err(Error::ShapeMismatch(format!(
                        "{kernel_h}x{kernel_w} kernel does not fit input {input:?}"
                    )));
                }
                Ok(Shape3::new(
                    filters,
                    (input.height - kernel_h) / stride + 1,
                    (input.width - kernel_w) / stride + 1,
                ))
            }
            LayerSpec::MaxPool { pool_h, pool_w } => {
                if pool_h == 0 || pool_w == 0 || input.height < pool_h || input.width < pool_w {
                    return Err(Error::ShapeMismatch(format!(
                        "{pool_h}x{pool_w} pool does not fit input {input:?}"
                    )));
                }
                Ok(Shape3::new(
                    input.channels,
                    input.height / pool_h,
                    input.width / pool_w,
                ))
            }
            LayerSpec::Relu => Ok(input),
            LayerSpec::Flatten => Ok(Shape3::new(input.len(), 1, 1)),
            LayerSpec::Dense { units } => {
                flat("dense")?;
                if units == 0 {
                    return Err(Error::ShapeMismatch("dense layer with 0 units".into()));
                }
                Ok(Shape3::new(units, 1, 1))
            }
            LayerSpec::SoftmaxOutput { classes } => {
                flat("softmax output")?;
                if classes < 2 {
                    return Err(Error::ShapeMismatch("softmax needs at least 2 classes".into()));
                }
                Ok(Shape3::new(classes, 1, 1))
            }
        }
    }

    /// (fan_in, fan_out, weight shape, bias len) for parametrized layers.
    pub(crate) fn param_geometry(&self, input: Shape3) -> Option<(usize, usize, Vec<usize>, usize)> {
        match *self {
            LayerSpec::Conv {
                filters,
                kernel_h,
                kernel_w,
                ..
            } => {
                let area = kernel_h * kernel_w;
                Some((
                    input.channels * area,
                    filters * area,
                    vec![filters, input.channels, kernel_h, kernel_w],
                    filters,
                ))
            }
            LayerSpec::Dense { units } => Some((input.channels, units, vec![units, input.channels], units)),
            LayerSpec::SoftmaxOutput { classes } => {
                Some((input.channels, classes, vec![classes, input.channels], classes))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input: Shape3,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Three conv/ReLU/pool stages with growing filter counts, a ReLU dense
    /// layer and a softmax output.
    pub fn three_stage(input: Shape3, filters: [usize; 3], dense: usize, classes: usize) -> Self {
        let mut layers = Vec::new();
        for f in filters {
            layers.push(LayerSpec::Conv {
                filters: f,
                kernel_h: 3,
                kernel_w: 3,
                stride: 1,
            });
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::MaxPool { pool_h: 2, pool_w: 2 });
        }
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Dense { units: dense });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::SoftmaxOutput { classes });
        Self { input, layers }
    }

    /// 8/16/32 filters, 64 dense units.
    pub fn standard(input: Shape3, classes: usize) -> Self {
        Self::three_stage(input, [8, 16, 32], 64, classes)
    }

    /// Shapes after each layer, checking the chain and the output layer.
    pub fn shapes(&self) -> Result<Vec<Shape3>> {
        if self.input.is_empty() {
            return Err(Error::ShapeMismatch("empty input shape".into()));
        }
        let outputs = self
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::SoftmaxOutput { .. }))
            .count();
        if outputs != 1 || !matches!(self.layers.last(), Some(LayerSpec::SoftmaxOutput { .. })) {
            return Err(Error::ShapeMismatch(
                "model needs exactly one softmax output, as the last layer".into(),
            ));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input;
        for layer in &self.layers {
            cur = layer.output_shape(cur)?;
            shapes.push(cur);
        }
        Ok(shapes)
    }

    pub fn num_classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::SoftmaxOutput { classes }) => *classes,
            _ => 0,
        }
    }
}
