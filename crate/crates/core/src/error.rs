use alloc::string::String;

/// Errors raised by tensor, transform and layer operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A capped allocation did not fit (units are real-scalar equivalents).
    #[error("resource exhausted: requested {requested} with {in_use} of {capacity} in use")]
    ResourceExhausted {
        requested: usize,
        in_use: usize,
        capacity: usize,
    },
    #[error("infeasible: {0}")]
    Infeasible(Infeasibility),
}

/// A violated shape or memory rule, located at a layer when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct Infeasibility {
    pub layer: Option<usize>,
    pub rule: Rule,
}

impl Infeasibility {
    pub fn at(layer: usize, rule: Rule) -> Self {
        Infeasibility { layer: Some(layer), rule }
    }

    pub fn global(rule: Rule) -> Self {
        Infeasibility { layer: None, rule }
    }
}

impl core::fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self.layer {
            Some(l) => write!(f, "layer {l}: {}", self.rule),
            None => write!(f, "{}", self.rule),
        }
    }
}

impl From<Infeasibility> for Error {
    fn from(i: Infeasibility) -> Self {
        Error::Infeasible(i)
    }
}

/// Constraint names used in [`Infeasibility`].
#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    FeatureMismatch { expected: usize, found: usize },
    PoolModeCount { expected: usize, found: usize },
    KernelExceedsExtent { kernel: [usize; 3], extent: [usize; 3] },
    /// Plain pooling needs `n` divisible by `p`.
    PoolDivisibility { extent: [usize; 3], window: [usize; 3] },
    /// Fragment pooling needs `n + 1` divisible by `p`.
    FragmentDivisibility { extent: [usize; 3], window: [usize; 3] },
    Memory { domain: &'static str, required: f64, capacity: usize },
    /// No input extent in the searched range passes the other rules.
    NoInputShape { fov: [usize; 3], max_extent: usize },
    /// Not even a single-feature sub-layer fits the device.
    NoSubLayerFits,
    ThetaOutOfRange { theta: usize, layers: usize },
    /// A device plan was requested without a device.
    NoDevice,
}

impl core::fmt::Display for Rule {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Rule::FeatureMismatch { expected, found } => {
                write!(f, "input has {found} feature maps, network expects {expected}")
            }
            Rule::PoolModeCount { expected, found } => write!(f, "{found} pool modes for {expected} pooling layers"),
            Rule::KernelExceedsExtent { kernel, extent } => write!(f, "kernel {kernel:?} exceeds extent {extent:?}"),
            Rule::PoolDivisibility { extent, window } => {
                write!(f, "divisibility: extent {extent:?} not divisible by pooling window {window:?}")
            }
            Rule::FragmentDivisibility { extent, window } => {
                write!(f, "divisibility: extent {extent:?} + 1 not divisible by fragment window {window:?}")
            }
            Rule::Memory { domain, required, capacity } => {
                write!(f, "memory: {domain} needs {required:.0} scalars, capacity {capacity}")
            }
            Rule::NoInputShape { fov, max_extent } => {
                write!(f, "no admissible input extent between field of view {fov:?} and {max_extent}")
            }
            Rule::NoSubLayerFits => write!(f, "memory: no (1, 1, 1) sub-layer fits the device"),
            Rule::ThetaOutOfRange { theta, layers } => write!(f, "split point {theta} outside 0..={layers}"),
            Rule::NoDevice => write!(f, "no device domain configured"),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
