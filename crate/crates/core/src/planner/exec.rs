//! Running a plan: every layer with its chosen primitive, device work under
//! the device memory cap, and fragment recombination at the end.

use alloc::vec::Vec;

use super::search::mode_of;
use super::shapes::fragment_windows;
use super::{Block, DeviceModel, Domain, ExecutionPlan, HostModel, LayerPlan};
use crate::cost::PrimitiveKind;
use crate::error::{invalid, Result};
use crate::fft::Engine;
use crate::layers::{
    conv_direct, conv_fft_data_parallel, conv_fft_staged, conv_fft_task_parallel, pool, recombine_fragments,
    Activation, ConvLayerParams, DirectVariant, PoolParams, TaskPool, TaskRunner,
};
use crate::memory::MemoryTracker;
use crate::network::{LayerSpec, NetworkSpec, Weights};
use crate::parallel::Parallel;
use crate::{Real, Shape5, Tensor5};

/// Hooks called while a plan runs. Device work and transfers are reported
/// with their modeled durations so a caller can enforce them as delays.
pub trait ExecutionObserver {
    fn layer_started(&mut self, _layer: usize) {}
    fn layer_finished(&mut self, _layer: usize) {}
    /// Scalars moved between host and device.
    fn transfer(&mut self, _scalars: usize, _seconds: f64) {}
    fn device_compute(&mut self, _seconds: f64) {}
}

/// Ignores every event.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoObserver;

impl ExecutionObserver for NoObserver {}

/// Executes one plan; reusable across inputs and shareable across threads.
pub struct PlanRunner<'a, T, P> {
    plan: &'a ExecutionPlan,
    net: &'a NetworkSpec,
    weights: &'a Weights<T>,
    host: &'a HostModel,
    device: Option<&'a DeviceModel>,
    par: &'a P,
    host_mem: MemoryTracker,
    device_mem: MemoryTracker,
    /// Index into `weights.layers` for each conv layer.
    conv_index: Vec<usize>,
}

impl<'a, T: Real, P: Parallel> PlanRunner<'a, T, P> {
    pub fn new(
        plan: &'a ExecutionPlan,
        net: &'a NetworkSpec,
        weights: &'a Weights<T>,
        host: &'a HostModel,
        device: Option<&'a DeviceModel>,
        par: &'a P,
    ) -> Result<Self> {
        weights.check(net)?;
        if plan.layers.len() != net.len() {
            return Err(invalid!("plan has {} layers, network {}", plan.layers.len(), net.len()));
        }
        if device.is_none() && plan.layers.iter().any(|l| l.domain == Domain::Device) {
            return Err(invalid!("plan uses a device but none was given"));
        }
        let mut conv_index = alloc::vec![usize::MAX; net.len()];
        for (w, &i) in net.conv_layers().iter().enumerate() {
            conv_index[i] = w;
        }
        Ok(PlanRunner {
            plan,
            net,
            weights,
            host,
            device,
            par,
            host_mem: MemoryTracker::with_capacity(host.env.capacity),
            device_mem: MemoryTracker::with_capacity(device.map_or(0, |d| d.env.capacity)),
            conv_index,
        })
    }

    pub fn plan(&self) -> &ExecutionPlan {
        self.plan
    }

    /// High-water marks `(host, device)` since construction or the last reset.
    pub fn peaks(&self) -> (usize, usize) {
        (self.host_mem.peak(), self.device_mem.peak())
    }

    pub fn reset_peaks(&self) {
        self.host_mem.reset_peak();
        self.device_mem.reset_peak();
    }

    /// Head, tail and recombination.
    pub fn run(&self, input: Tensor5<T>, obs: &mut dyn ExecutionObserver) -> Result<Tensor5<T>> {
        let mid = self.run_head(input, obs)?;
        let out = self.run_tail(mid, obs)?;
        self.finish(out)
    }

    /// Layers `0..theta`.
    pub fn run_head(&self, input: Tensor5<T>, obs: &mut dyn ExecutionObserver) -> Result<Tensor5<T>> {
        if input.shape() != self.plan.input {
            return Err(invalid!("input shape {:?} differs from the plan's {:?}", input.shape(), self.plan.input));
        }
        let mut x = input;
        for l in &self.plan.layers[..self.plan.theta] {
            obs.layer_started(l.layer);
            x = match l.domain {
                Domain::Host => self.run_layer(l, x, &self.host_mem, false)?,
                Domain::Device => self.run_blocks(l, x, obs)?,
            };
            obs.layer_finished(l.layer);
        }
        Ok(x)
    }

    /// Layers `theta..` on the device, one sub-batch at a time.
    pub fn run_tail(&self, mid: Tensor5<T>, obs: &mut dyn ExecutionObserver) -> Result<Tensor5<T>> {
        let plan = self.plan;
        if !plan.has_tail() {
            return Ok(mid);
        }
        let device = self.device.ok_or_else(|| invalid!("plan has a device tail but no device was given"))?;
        let _held_mid = self.host_mem.charge(mid.len())?;
        let _held_out = self.host_mem.charge(plan.output_shape().len())?;
        let b = plan.tail_batch;
        let count = mid.shape().s / b;
        let mut parts = Vec::with_capacity(count);
        for j in 0..count {
            let mut x = mid.batch_slice(j * b, b)?;
            obs.transfer(x.len(), device.transfer_seconds(x.len() as f64));
            for l in &plan.layers[plan.theta..] {
                obs.layer_started(l.layer);
                x = self.run_layer(l, x, &self.device_mem, true)?;
                obs.device_compute(l.compute_seconds / count as f64);
                obs.layer_finished(l.layer);
            }
            obs.transfer(x.len(), device.transfer_seconds(x.len() as f64));
            parts.push(x);
        }
        Tensor5::concat_batch(parts)
    }

    /// Interleaves fragments into the dense output.
    pub fn finish(&self, out: Tensor5<T>) -> Result<Tensor5<T>> {
        let windows = fragment_windows(self.net, &self.plan.pool_modes);
        if windows.is_empty() {
            return Ok(out);
        }
        let _held = self.host_mem.charge(out.len())?;
        let _dense = self.host_mem.charge(out.len())?;
        recombine_fragments(&out, &windows)
    }

    fn params(&self, layer: usize) -> &ConvLayerParams<T> {
        &self.weights.layers[self.conv_index[layer]]
    }

    /// One whole layer with its planned primitive, charging `mem`.
    fn run_layer(&self, l: &LayerPlan, x: Tensor5<T>, mem: &MemoryTracker, on_device: bool) -> Result<Tensor5<T>> {
        match self.net.layers[l.layer] {
            LayerSpec::Pool { window, .. } => {
                let mode = mode_of(self.net, &self.plan.pool_modes, l.layer);
                pool(x, PoolParams::new(window, mode)?, self.par, mem)
            }
            LayerSpec::Conv { .. } => self.conv(l.kind, x, self.params(l.layer), mem, on_device),
        }
    }

    fn conv(
        &self,
        kind: PrimitiveKind,
        x: Tensor5<T>,
        params: &ConvLayerParams<T>,
        mem: &MemoryTracker,
        on_device: bool,
    ) -> Result<Tensor5<T>> {
        let host = self.host;
        let engine = Engine::MixedRadix;
        match kind {
            PrimitiveKind::DirectNaive | PrimitiveKind::DeviceDirectDefault => {
                conv_direct(x, params, DirectVariant::Naive, self.par, mem)
            }
            PrimitiveKind::DirectTemp => conv_direct(x, params, DirectVariant::TempBuffer, self.par, mem),
            PrimitiveKind::DeviceDirectPrecomp => {
                // stands in for the precomputed-index workspace
                let _workspace = mem.charge(x.len())?;
                conv_direct(x, params, DirectVariant::Naive, self.par, mem)
            }
            PrimitiveKind::FftDataParallel => conv_fft_data_parallel(x, params, &host.profile, engine, self.par, mem),
            PrimitiveKind::FftTaskParallel => {
                let pool = TaskPool::new(self.par.workers(), 1, task_runner(self.par.workers()));
                conv_fft_task_parallel(x, params, &host.profile, engine, &pool, mem)
            }
            PrimitiveKind::FftStaged => {
                conv_fft_staged(x, params, &host.profile, engine, host.env.overhead_cap, self.par, mem)
            }
            PrimitiveKind::DeviceFft => {
                let device = self.device.filter(|_| on_device).ok_or_else(|| invalid!("device FFT outside the device"))?;
                conv_fft_staged(x, params, &device.profile, engine, device.env.overhead_cap, self.par, mem)
            }
            PrimitiveKind::PoolPlain | PrimitiveKind::PoolFragments => {
                Err(invalid!("pooling kind planned for a conv layer"))
            }
        }
    }

    /// A head conv layer offloaded to the device block by block; partial
    /// sums are accumulated on the host, then bias and activation applied.
    fn run_blocks(&self, l: &LayerPlan, x: Tensor5<T>, obs: &mut dyn ExecutionObserver) -> Result<Tensor5<T>> {
        let device = self.device.ok_or_else(|| invalid!("offloaded layer without a device"))?;
        let params = self.params(l.layer);
        let _held_in = self.host_mem.charge(x.len())?;
        let _held_out = self.host_mem.charge(l.output.len())?;
        let mut out = Tensor5::zeros(l.output);
        let instance = super::device::ConvInstance {
            s: l.input.s,
            f: l.input.f,
            f_out: l.output.f,
            n: l.input.spatial(),
            k: params.kernel_extent(),
        };
        for block in &l.blocks {
            let part_in = select(&x, block)?;
            let part_params = sub_params(params, block)?;
            let (compute, _, _) = super::device::block_cost(l.kind, &instance, block.dims(), device);
            obs.transfer(part_in.len(), device.transfer_seconds(part_in.len() as f64));
            let part = self.conv(l.kind, part_in, &part_params, &self.device_mem, true)?;
            obs.device_compute(compute);
            obs.transfer(part.len(), device.transfer_seconds(part.len() as f64));
            for (bs, s) in block.batch.clone().enumerate() {
                for (bo, o) in block.outputs.clone().enumerate() {
                    for (d, v) in out.image_mut(s, o).iter_mut().zip(part.image(bs, bo)) {
                        *d += *v;
                    }
                }
            }
        }
        drop(x);
        let act = params.activation();
        for s in 0..l.output.s {
            for o in 0..l.output.f {
                let b = params.bias()[o];
                out.image_mut(s, o).iter_mut().for_each(|v| *v = act.apply(*v + b));
            }
        }
        Ok(out)
    }
}

#[cfg(feature = "std")]
fn task_runner(workers: usize) -> TaskRunner {
    if workers > 1 {
        TaskRunner::Threads
    } else {
        TaskRunner::Simulated
    }
}

#[cfg(not(feature = "std"))]
fn task_runner(_workers: usize) -> TaskRunner {
    TaskRunner::Simulated
}

/// The batch entries and input maps of `block`.
fn select<T: Real>(x: &Tensor5<T>, block: &Block) -> Result<Tensor5<T>> {
    let sh = x.shape();
    let shape = Shape5::from_spatial(block.batch.len(), block.inputs.len(), sh.spatial())?;
    let mut data = Vec::with_capacity(shape.len());
    for s in block.batch.clone() {
        for f in block.inputs.clone() {
            data.extend_from_slice(x.image(s, f));
        }
    }
    Tensor5::from_vec(shape, data)
}

/// Kernels of `block` with zero bias and no activation (partial sums).
fn sub_params<T: Real>(params: &ConvLayerParams<T>, block: &Block) -> Result<ConvLayerParams<T>> {
    let k = params.kernel_extent();
    let shape = Shape5::from_spatial(block.outputs.len(), block.inputs.len(), k)?;
    let mut data = Vec::with_capacity(shape.len());
    for o in block.outputs.clone() {
        for i in block.inputs.clone() {
            data.extend_from_slice(params.kernel(o, i));
        }
    }
    ConvLayerParams::new(
        Tensor5::from_vec(shape, data)?,
        alloc::vec![T::zero(); block.outputs.len()],
        Activation::Identity,
    )
}
