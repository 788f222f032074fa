//! Plan search over pooling modes, input shapes and primitives, with an
//! optional second (device) domain, and plan execution.
//!
//! A plan splits the network at `theta`. The head (layers `0..theta`) runs
//! one layer at a time with all data resident on the host; a head conv layer
//! may be offloaded to the device as a list of sub-layer blocks. The tail
//! (layers `theta..`) runs entirely on the device, one sub-batch of the
//! head's output at a time.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::cost::{CostConstants, PrimitiveKind, ResourceEnv};
use crate::fft::RadixProfile;
use crate::layers::PoolMode;
use crate::Shape5;

mod device;
mod exec;
mod search;
mod shapes;
mod split;

pub use device::{sublayer_decompose, ConvInstance, SubLayerPlan};
pub use exec::{ExecutionObserver, NoObserver, PlanRunner};
pub use search::{enumerate_input_shapes, host_plan, optimize_at, optimize_plan};
pub use shapes::{fragment_windows, propagate_shapes, ShapeSearch};
pub use split::{pipeline_plan, pipeline_split, split_plan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Host,
    Device,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Host => "host",
            Domain::Device => "device",
        }
    }
}

/// The host: where data lives and where pooling always runs.
#[derive(Clone, Debug, PartialEq)]
pub struct HostModel {
    pub env: ResourceEnv,
    pub constants: CostConstants,
    pub profile: RadixProfile,
}

impl HostModel {
    pub fn new(env: ResourceEnv, constants: CostConstants) -> Self {
        HostModel {
            env,
            constants,
            profile: RadixProfile::smooth13_restricted(),
        }
    }
}

/// A second executor with its own memory, speed and a host link.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceModel {
    pub env: ResourceEnv,
    pub constants: CostConstants,
    pub profile: RadixProfile,
}

impl DeviceModel {
    pub fn new(env: ResourceEnv, constants: CostConstants) -> Self {
        DeviceModel {
            env,
            constants,
            profile: RadixProfile::smooth7(),
        }
    }

    pub fn transfer_seconds(&self, scalars: f64) -> f64 {
        scalars / self.constants.transfer_rate
    }
}

/// Resource domains available to the search.
#[derive(Clone, Debug, PartialEq)]
pub struct Domains {
    pub host: HostModel,
    pub device: Option<DeviceModel>,
}

impl Domains {
    pub fn host_only(host: HostModel) -> Self {
        Domains { host, device: None }
    }

    pub fn with_device(host: HostModel, device: DeviceModel) -> Self {
        Domains {
            host,
            device: Some(device),
        }
    }
}

/// One piece of an offloaded conv layer: batch entries, input maps and
/// output maps it covers. Blocks with the same batch and output ranges are
/// partial sums over disjoint input ranges.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Block {
    pub batch: Range<usize>,
    pub inputs: Range<usize>,
    pub outputs: Range<usize>,
}

impl Block {
    /// `(S_i, f_i, f′_i)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.batch.len(), self.inputs.len(), self.outputs.len())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerPlan {
    pub layer: usize,
    pub kind: PrimitiveKind,
    pub domain: Domain,
    /// Full-batch shapes.
    pub input: Shape5,
    pub output: Shape5,
    /// Non-empty only for head conv layers offloaded to the device.
    pub blocks: Vec<Block>,
    /// Modeled compute time for the whole batch.
    pub compute_seconds: f64,
    /// Modeled host↔device transfer time charged to this layer.
    pub transfer_seconds: f64,
    /// Modeled peak in the layer's domain (per block or per sub-batch on the device).
    pub memory: f64,
}

impl LayerPlan {
    pub fn seconds(&self) -> f64 {
        self.compute_seconds + self.transfer_seconds
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    HostOnly,
    /// Head then tail, one after the other.
    Split,
    /// Head and tail overlap as producer and consumer.
    Pipeline,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionPlan {
    pub strategy: Strategy,
    pub input: Shape5,
    pub pool_modes: Vec<PoolMode>,
    /// Shapes entering each layer plus the output shape.
    pub shapes: Vec<Shape5>,
    pub theta: usize,
    /// Batch entries of the head output per tail sub-batch (0 without a tail).
    pub tail_batch: usize,
    pub layers: Vec<LayerPlan>,
    pub head_seconds: f64,
    /// Includes uploading the head output and downloading the result.
    pub tail_seconds: f64,
    /// Scalars moved to and from the device by the tail.
    pub tail_upload: f64,
    pub tail_download: f64,
    pub host_peak: f64,
    pub device_peak: f64,
}

impl ExecutionPlan {
    /// Modeled seconds per input: the pipeline period or the serial sum.
    pub fn seconds(&self) -> f64 {
        match self.strategy {
            Strategy::Pipeline => self.head_seconds.max(self.tail_seconds),
            _ => self.head_seconds + self.tail_seconds,
        }
    }

    /// Output voxels (all fragments, all batch entries; per feature map).
    pub fn voxels(&self) -> usize {
        let out = self.shapes.last().unwrap();
        out.s * out.image_len()
    }

    pub fn throughput(&self) -> f64 {
        self.voxels() as f64 / self.seconds()
    }

    pub fn output_shape(&self) -> Shape5 {
        *self.shapes.last().unwrap()
    }

    /// The same plan with the head and tail run back to back.
    pub fn serialized(&self) -> ExecutionPlan {
        let mut p = self.clone();
        if p.strategy == Strategy::Pipeline {
            p.strategy = Strategy::Split;
        }
        p
    }

    pub fn has_tail(&self) -> bool {
        self.theta < self.layers.len()
    }

    /// Total of host and device peaks, used to break throughput ties.
    pub fn total_peak(&self) -> f64 {
        self.host_peak + self.device_peak
    }
}

impl fmt::Display for ExecutionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = self.input;
        writeln!(f, "strategy     {:?}", self.strategy)?;
        writeln!(f, "input        {} x {} x {}x{}x{}", i.s, i.f, i.x, i.y, i.z)?;
        let modes: Vec<&str> = self
            .pool_modes
            .iter()
            .map(|m| match m {
                PoolMode::Plain => "plain",
                PoolMode::Fragments => "mpf",
            })
            .collect();
        writeln!(f, "pool modes   [{}]", modes.join(", "))?;
        writeln!(f, "theta        {}", self.theta)?;
        if self.has_tail() {
            writeln!(f, "tail batch   {}", self.tail_batch)?;
        }
        for l in &self.layers {
            let o = l.output;
            write!(
                f,
                "  layer {:>2}  {:<22} {:<6} -> {}x{}x{}x{}x{}  {:.3e} s",
                l.layer,
                l.kind.name(),
                l.domain.name(),
                o.s,
                o.f,
                o.x,
                o.y,
                o.z,
                l.seconds()
            )?;
            if !l.blocks.is_empty() {
                let (s, fi, fo) = l.blocks[0].dims();
                write!(f, "  blocks {} of ({s}, {fi}, {fo})", l.blocks.len())?;
            }
            writeln!(f)?;
        }
        writeln!(f, "host peak    {:.0}", self.host_peak)?;
        writeln!(f, "device peak  {:.0}", self.device_peak)?;
        writeln!(f, "seconds      {:.6e}", self.seconds())?;
        write!(f, "throughput   {:.6e} voxels/s", self.throughput())
    }
}

/// Measured or modeled throughput of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct ThroughputReport {
    pub voxels: usize,
    pub seconds: f64,
    pub voxels_per_second: f64,
    /// `(label, seconds)` per layer or stage.
    pub breakdown: Vec<(String, f64)>,
}

impl ThroughputReport {
    pub fn new(voxels: usize, seconds: f64, breakdown: Vec<(String, f64)>) -> Self {
        ThroughputReport {
            voxels,
            seconds,
            voxels_per_second: voxels as f64 / seconds,
            breakdown,
        }
    }
}

/// Modeled compute seconds of `flops` operations of `kind`.
pub(crate) fn compute_seconds(flops: f64, kind: PrimitiveKind, constants: &CostConstants) -> f64 {
    flops / (constants.flop_rate * kind.speed_factor())
}
