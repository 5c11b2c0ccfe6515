//! Field vocabularies of the gene encoding.
//!
//! Every vocabulary is totally ordered in the order the values are listed
//! here; sampling and serialization both rely on that order.

use std::fmt;
use std::str::FromStr;

/// Kernel widths available to standard convolutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StandardKernel {
    W1,
    W3,
}

impl StandardKernel {
    pub const ALL: [StandardKernel; 2] = [StandardKernel::W1, StandardKernel::W3];

    pub fn width(self) -> usize {
        match self {
            StandardKernel::W1 => 1,
            StandardKernel::W3 => 3,
        }
    }
}

/// Kernel widths available to depthwise separable convolutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SeparableKernel {
    W3,
    W5,
    W7,
    W9,
    W11,
}

impl SeparableKernel {
    pub const ALL: [SeparableKernel; 5] = [
        SeparableKernel::W3,
        SeparableKernel::W5,
        SeparableKernel::W7,
        SeparableKernel::W9,
        SeparableKernel::W11,
    ];

    pub fn width(self) -> usize {
        match self {
            SeparableKernel::W3 => 3,
            SeparableKernel::W5 => 5,
            SeparableKernel::W7 => 7,
            SeparableKernel::W9 => 9,
            SeparableKernel::W11 => 11,
        }
    }
}

/// Kernel widths available to lightweight convolutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LightweightKernel {
    W3,
    W5,
    W7,
    W15,
}

impl LightweightKernel {
    pub const ALL: [LightweightKernel; 4] = [
        LightweightKernel::W3,
        LightweightKernel::W5,
        LightweightKernel::W7,
        LightweightKernel::W15,
    ];

    pub fn width(self) -> usize {
        match self {
            LightweightKernel::W3 => 3,
            LightweightKernel::W5 => 5,
            LightweightKernel::W7 => 7,
            LightweightKernel::W15 => 15,
        }
    }
}

/// Channel reduction factor of a lightweight convolution (channels per
/// shared kernel).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reduction {
    R1,
    R4,
    R16,
}

impl Reduction {
    pub const ALL: [Reduction; 3] = [Reduction::R1, Reduction::R4, Reduction::R16];

    pub fn factor(self) -> usize {
        match self {
            Reduction::R1 => 1,
            Reduction::R4 => 4,
            Reduction::R16 => 16,
        }
    }
}

/// Head counts available to self-attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Heads {
    H4,
    H8,
    H16,
}

impl Heads {
    pub const ALL: [Heads; 3] = [Heads::H4, Heads::H8, Heads::H16];

    pub fn count(self) -> usize {
        match self {
            Heads::H4 => 4,
            Heads::H8 => 8,
            Heads::H16 => 16,
        }
    }
}

/// The transformation a branch applies after normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerKind {
    StandardConv(StandardKernel),
    SeparableConv(SeparableKernel),
    LightweightConv(LightweightKernel, Reduction),
    Attention(Heads),
    GatedLinearUnit,
    AttendToEncoder,
    Identity,
    DeadBranch,
}

const fn lightweight_all() -> [LayerKind; 12] {
    let kernels = LightweightKernel::ALL;
    let reductions = Reduction::ALL;
    let mut out = [LayerKind::Identity; 12];
    let mut i = 0;
    while i < 12 {
        out[i] = LayerKind::LightweightConv(kernels[i / 3], reductions[i % 3]);
        i += 1;
    }
    out
}

const LIGHTWEIGHT: [LayerKind; 12] = lightweight_all();

impl LayerKind {
    /// Full layer vocabulary in canonical order (26 entries). The encoder
    /// vocabulary is this list without [`LayerKind::AttendToEncoder`].
    pub fn all() -> Vec<LayerKind> {
        let mut v = Vec::with_capacity(26);
        v.extend(StandardKernel::ALL.map(LayerKind::StandardConv));
        v.extend(SeparableKernel::ALL.map(LayerKind::SeparableConv));
        v.extend(LIGHTWEIGHT);
        v.extend(Heads::ALL.map(LayerKind::Attention));
        v.extend([
            LayerKind::GatedLinearUnit,
            LayerKind::AttendToEncoder,
            LayerKind::Identity,
            LayerKind::DeadBranch,
        ]);
        v
    }

    pub fn vocabulary(section: CellKind) -> Vec<LayerKind> {
        let mut v = Self::all();
        if section == CellKind::Encoder {
            v.retain(|l| *l != LayerKind::AttendToEncoder);
        }
        v
    }

    /// Whether the layer's output width follows the branch's relative
    /// output dimension.
    pub fn is_scaled(self) -> bool {
        !matches!(
            self,
            LayerKind::Identity | LayerKind::DeadBranch | LayerKind::LightweightConv(..)
        )
    }

    pub fn kernel_width(self) -> Option<usize> {
        match self {
            LayerKind::StandardConv(k) => Some(k.width()),
            LayerKind::SeparableConv(k) => Some(k.width()),
            LayerKind::LightweightConv(k, _) => Some(k.width()),
            _ => None,
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerKind::StandardConv(k) => write!(f, "standard_conv_{}x1", k.width()),
            LayerKind::SeparableConv(k) => write!(f, "separable_conv_{}x1", k.width()),
            LayerKind::LightweightConv(k, r) => {
                write!(f, "lightweight_conv_{}x1_r{}", k.width(), r.factor())
            }
            LayerKind::Attention(h) => write!(f, "attention_{}", h.count()),
            LayerKind::GatedLinearUnit => f.write_str("gated_linear_unit"),
            LayerKind::AttendToEncoder => f.write_str("attend_to_encoder"),
            LayerKind::Identity => f.write_str("identity"),
            LayerKind::DeadBranch => f.write_str("dead_branch"),
        }
    }
}

impl FromStr for LayerKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LayerKind::all().into_iter().find(|l| l.to_string() == s).ok_or(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Normalization {
    LayerNorm,
    None,
}

impl Normalization {
    pub const ALL: [Normalization; 2] = [Normalization::LayerNorm, Normalization::None];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Activation {
    Swish,
    Relu,
    LeakyRelu,
    None,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Swish,
        Activation::Relu,
        Activation::LeakyRelu,
        Activation::None,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Combiner {
    Addition,
    Concatenation,
    Multiplication,
}

impl Combiner {
    pub const ALL: [Combiner; 3] = [Combiner::Addition, Combiner::Concatenation, Combiner::Multiplication];
}

macro_rules! keyword_enum {
    ($ty:ty { $($variant:path => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = ();

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($variant),)+
                    _ => Err(()),
                }
            }
        }
    };
}

keyword_enum!(Normalization {
    Normalization::LayerNorm => "layer_norm",
    Normalization::None => "none",
});

keyword_enum!(Activation {
    Activation::Swish => "swish",
    Activation::Relu => "relu",
    Activation::LeakyRelu => "leaky_relu",
    Activation::None => "none",
});

keyword_enum!(Combiner {
    Combiner::Addition => "addition",
    Combiner::Concatenation => "concatenation",
    Combiner::Multiplication => "multiplication",
});

/// Relative output dimension, an integer in `[1, 10]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelDim(u8);

impl RelDim {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 10;

    pub fn new(value: u8) -> Option<Self> {
        (Self::MIN..=Self::MAX).contains(&value).then_some(RelDim(value))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = RelDim> {
        (Self::MIN..=Self::MAX).map(RelDim)
    }
}

/// Number of times a cell is stacked, an integer in `[1, 6]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellCount(u8);

impl CellCount {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 6;

    pub fn new(value: u8) -> Option<Self> {
        (Self::MIN..=Self::MAX).contains(&value).then_some(CellCount(value))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = CellCount> {
        (Self::MIN..=Self::MAX).map(CellCount)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellKind {
    Encoder,
    Decoder,
}

impl CellKind {
    pub fn block_count(self) -> usize {
        match self {
            CellKind::Encoder => super::ENCODER_BLOCKS,
            CellKind::Decoder => super::DECODER_BLOCKS,
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Encoder => "encoder",
            CellKind::Decoder => "decoder",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_vocabulary_sizes() {
        assert_eq!(LayerKind::all().len(), 26);
        assert_eq!(LayerKind::vocabulary(CellKind::Encoder).len(), 25);
        assert_eq!(LayerKind::vocabulary(CellKind::Decoder).len(), 26);
    }

    #[test]
    fn layer_names_round_trip() {
        for layer in LayerKind::all() {
            let text = layer.to_string();
            assert_eq!(text.parse::<LayerKind>(), Ok(layer), "{text}");
        }
        assert_eq!(
            "lightweight_conv_7x1_r4".parse::<LayerKind>(),
            Ok(LayerKind::LightweightConv(LightweightKernel::W7, Reduction::R4))
        );
        assert!("separable_conv_4x1".parse::<LayerKind>().is_err());
        assert!("attention_2".parse::<LayerKind>().is_err());
    }

    #[test]
    fn bounded_integers() {
        assert!(RelDim::new(0).is_none());
        assert!(RelDim::new(11).is_none());
        assert_eq!(RelDim::all().count(), 10);
        assert!(CellCount::new(7).is_none());
        assert_eq!(CellCount::all().count(), 6);
    }
}
