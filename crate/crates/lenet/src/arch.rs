//! Network topology and the shape chain it induces.

use crate::error::{LeNetError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

/// One convolution stage: valid convolution (stride 1) followed by
/// non-overlapping max pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    /// Pooling window and stride; 1 disables pooling.
    pub pool: usize,
}

/// conv → act → pool → conv → act → pool → fc → act → fc.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub hidden: usize,
    pub classes: usize,
    pub activation: Activation,
}

impl Architecture {
    /// The DIGITS/Caffe LeNet widths on a 60×60 RGB input with five classes.
    pub fn lenet() -> Self {
        Self {
            height: 60,
            width: 60,
            channels: 3,
            conv1: ConvSpec {
                filters: 20,
                kernel: 5,
                pool: 2,
            },
            conv2: ConvSpec {
                filters: 50,
                kernel: 5,
                pool: 2,
            },
            hidden: 500,
            classes: 5,
            activation: Activation::Relu,
        }
    }

    /// LeNet topology with narrower layers, for desk-scale sweeps.
    pub fn lenet_narrow(conv1_filters: usize, conv2_filters: usize, hidden: usize) -> Self {
        let mut arch = Self::lenet();
        arch.conv1.filters = conv1_filters;
        arch.conv2.filters = conv2_filters;
        arch.hidden = hidden;
        arch
    }

    pub fn input_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn shape_chain(&self) -> Result<ShapeChain> {
        let input = [self.channels, self.height, self.width];
        for (name, value) in [
            ("input", self.channels.min(self.height).min(self.width)),
            (
                "conv1",
                self.conv1
                    .filters
                    .min(self.conv1.kernel)
                    .min(self.conv1.pool),
            ),
            (
                "conv2",
                self.conv2
                    .filters
                    .min(self.conv2.kernel)
                    .min(self.conv2.pool),
            ),
            ("fc1", self.hidden),
            ("fc2", self.classes),
        ] {
            if value == 0 {
                return Err(LeNetError::Architecture {
                    layer: name,
                    reason: "zero-sized dimension".into(),
                });
            }
        }
        let conv1 = conv_out("conv1", input, self.conv1)?;
        let pool1 = pool_out("pool1", conv1, self.conv1.pool)?;
        let conv2 = conv_out("conv2", pool1, self.conv2)?;
        let pool2 = pool_out("pool2", conv2, self.conv2.pool)?;
        Ok(ShapeChain {
            input,
            conv1,
            pool1,
            conv2,
            pool2,
            flatten: pool2.iter().product(),
            hidden: self.hidden,
            classes: self.classes,
        })
    }
}

fn conv_out(layer: &'static str, [c, h, w]: [usize; 3], spec: ConvSpec) -> Result<[usize; 3]> {
    let _ = c;
    if spec.kernel > h || spec.kernel > w {
        return Err(LeNetError::Architecture {
            layer,
            reason: format!("kernel {} larger than input {h}×{w}", spec.kernel),
        });
    }
    Ok([spec.filters, h - spec.kernel + 1, w - spec.kernel + 1])
}

fn pool_out(layer: &'static str, [c, h, w]: [usize; 3], pool: usize) -> Result<[usize; 3]> {
    if h % pool != 0 || w % pool != 0 {
        return Err(LeNetError::Architecture {
            layer,
            reason: format!("pool {pool} does not divide {h}×{w}"),
        });
    }
    Ok([c, h / pool, w / pool])
}

/// Activation shapes as (channels, height, width) for every stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeChain {
    pub input: [usize; 3],
    pub conv1: [usize; 3],
    pub pool1: [usize; 3],
    pub conv2: [usize; 3],
    pub pool2: [usize; 3],
    pub flatten: usize,
    pub hidden: usize,
    pub classes: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lenet_chain_on_60x60() {
        let chain = Architecture::lenet().shape_chain().unwrap();
        assert_eq!(chain.conv1, [20, 56, 56]);
        assert_eq!(chain.pool1, [20, 28, 28]);
        assert_eq!(chain.conv2, [50, 24, 24]);
        assert_eq!(chain.pool2, [50, 12, 12]);
        assert_eq!(chain.flatten, 7200);
        assert_eq!(chain.hidden, 500);
        assert_eq!(chain.classes, 5);
    }

    #[test]
    fn oversized_kernel_names_layer() {
        let mut arch = Architecture::lenet();
        arch.height = 8;
        arch.width = 8;
        match arch.shape_chain() {
            Err(LeNetError::Architecture { layer, .. }) => assert_eq!(layer, "conv2"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
