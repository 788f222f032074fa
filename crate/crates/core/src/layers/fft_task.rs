use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex;
use spin::{Mutex, RwLock};

use super::task_graph::{run_simulated, Placement, Task, TaskGraph, TraceEntry};
use super::{conv_shape, ConvLayerParams};
use crate::error::{invalid, Result};
use crate::fft::{nested_forward_into, nested_inverse_into, optimal_fft_shape, Crop, Engine, FftPlan3, RadixProfile};
use crate::memory::{Charge, MemoryTracker};
use crate::parallel::Serial;
use crate::tensor::Tensor5;
use crate::Real;

/// How the task graph is executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum TaskRunner {
    /// Workers take turns on the calling thread; fully deterministic schedule.
    #[default]
    Simulated,
    /// One OS thread per worker.
    #[cfg(feature = "std")]
    Threads,
}

/// Workers available to the task-parallel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TaskPool {
    pub workers: usize,
    /// Affinity groups; workers are split into contiguous, equal-sized groups.
    pub groups: usize,
    pub runner: TaskRunner,
}

impl TaskPool {
    pub fn new(workers: usize, groups: usize, runner: TaskRunner) -> Self {
        TaskPool {
            workers,
            groups,
            runner,
        }
    }

    pub fn simulated(workers: usize) -> Self {
        Self::new(workers, 1, TaskRunner::Simulated)
    }
}

type C<T> = Complex<T>;

struct Held<'m> {
    input: Option<Charge<'m>>,
    in_spec: Option<Charge<'m>>,
    kernels: Option<Charge<'m>>,
    out_spec: Option<Charge<'m>>,
    output: Option<Charge<'m>>,
}

struct Shared<'m, T> {
    input: RwLock<Option<Tensor5<T>>>,
    in_spec: RwLock<Vec<RwLock<Vec<C<T>>>>>,
    kernels: RwLock<Vec<RwLock<Vec<C<T>>>>>,
    out_spec: RwLock<Vec<Mutex<Vec<C<T>>>>>,
    output: RwLock<Vec<Mutex<Vec<T>>>>,
    held: Mutex<Held<'m>>,
}

/// FFT convolution executed as a task graph (see [`task_graph`](super::task_graph)).
pub fn conv_fft_task_parallel<T: Real>(
    input: Tensor5<T>,
    params: &ConvLayerParams<T>,
    profile: &RadixProfile,
    engine: Engine,
    pool: &TaskPool,
    mem: &MemoryTracker,
) -> Result<Tensor5<T>> {
    conv_fft_task_parallel_traced(input, params, profile, engine, pool, mem).map(|r| r.0)
}

/// [`conv_fft_task_parallel`], also returning the graph and the execution trace.
pub fn conv_fft_task_parallel_traced<T: Real>(
    input: Tensor5<T>,
    params: &ConvLayerParams<T>,
    profile: &RadixProfile,
    engine: Engine,
    pool: &TaskPool,
    mem: &MemoryTracker,
) -> Result<(Tensor5<T>, TaskGraph, Vec<TraceEntry>)> {
    if pool.workers == 0 {
        return Err(invalid!("task pool has zero workers"));
    }
    let out_shape = conv_shape(&input, params)?;
    let in_shape = input.shape();
    let (s_count, f, fo) = (in_shape.s, in_shape.f, out_shape.f);
    let (n, k) = (in_shape.spatial(), params.kernel_extent());
    let plan = FftPlan3::<T>::new(optimal_fft_shape(n, profile), profile, engine)?;
    let nt = plan.nested_len();
    let n_out = out_shape.image_len();
    let crop = Crop::new(k.map(|v| v - 1), out_shape.spatial());
    let zero = C::new(T::zero(), T::zero());

    let graph = TaskGraph::new(s_count, f, fo)?;
    let placement = Placement::new(pool.workers, pool.groups, fo)?;
    let m = placement.primaries.len();

    let shared = Shared {
        held: Mutex::new(Held {
            input: Some(mem.charge(in_shape.len())?),
            in_spec: None,
            kernels: None,
            out_spec: None,
            output: None,
        }),
        input: RwLock::new(Some(input)),
        in_spec: RwLock::new(Vec::new()),
        kernels: RwLock::new(Vec::new()),
        out_spec: RwLock::new(Vec::new()),
        output: RwLock::new(Vec::new()),
    };

    let exec = |_worker: usize, task: Task, buffer: Option<usize>| -> Result<()> {
        match task {
            Task::Sync(0) => {
                let c = mem.charge_complex(s_count * f * nt)?;
                *shared.in_spec.write() = (0..s_count * f).map(|_| RwLock::new(vec![zero; nt])).collect();
                shared.held.lock().in_spec = Some(c);
            }
            Task::Sync(1) => {
                shared.input.write().take();
                shared.held.lock().input.take();
                let c = mem.charge_complex(s_count * fo * nt)?;
                *shared.out_spec.write() = (0..s_count * fo).map(|_| Mutex::new(vec![zero; nt])).collect();
                shared.held.lock().out_spec = Some(c);
                let c = mem.charge_complex(m * nt)?;
                *shared.kernels.write() = (0..m).map(|_| RwLock::new(vec![zero; nt])).collect();
                shared.held.lock().kernels = Some(c);
            }
            Task::Sync(2) => {
                shared.kernels.write().clear();
                shared.held.lock().kernels.take();
                shared.in_spec.write().clear();
                shared.held.lock().in_spec.take();
                let c = mem.charge(out_shape.len())?;
                *shared.output.write() = (0..s_count * fo).map(|_| Mutex::new(vec![T::zero(); n_out])).collect();
                shared.held.lock().output = Some(c);
            }
            Task::Sync(_) => {
                shared.out_spec.write().clear();
                shared.held.lock().out_spec.take();
            }
            Task::InputTransform { batch, input } => {
                let guard = shared.input.read();
                let img = guard.as_ref().unwrap().image(batch, input);
                let specs = shared.in_spec.read();
                let mut spec = specs[batch * f + input].write();
                nested_forward_into(&plan, img, n, &mut spec, &Serial)?;
            }
            Task::KernelTransform { output, input } => {
                let kernels = shared.kernels.read();
                let mut buf = kernels[buffer.unwrap()].write();
                nested_forward_into(&plan, params.kernel(output, input), k, &mut buf, &Serial)?;
            }
            Task::MultiplyAdd { output, input, batch } => {
                let kernels = shared.kernels.read();
                let w = kernels[buffer.unwrap()].read();
                let specs = shared.in_spec.read();
                let a = specs[batch * f + input].read();
                let outs = shared.out_spec.read();
                let mut acc = outs[batch * fo + output].lock();
                for ((o, x), y) in acc.iter_mut().zip(a.iter()).zip(w.iter()) {
                    *o += *x * *y;
                }
            }
            Task::OutputTransform { batch, output } => {
                let outs = shared.out_spec.read();
                let mut spec = outs[batch * fo + output].lock();
                let imgs = shared.output.read();
                let mut img = imgs[batch * fo + output].lock();
                nested_inverse_into(&plan, &mut spec, crop, &mut img, &Serial)?;
                params.finish(output, &mut img);
            }
        }
        Ok(())
    };

    let trace = match pool.runner {
        TaskRunner::Simulated => run_simulated(&graph, placement, exec)?,
        #[cfg(feature = "std")]
        TaskRunner::Threads => super::task_graph::run_threaded(&graph, placement, exec)?,
    };

    let images = core::mem::take(&mut *shared.output.write());
    let mut data = Vec::with_capacity(out_shape.len());
    for img in images {
        data.extend_from_slice(&img.into_inner());
    }
    let out = Tensor5::from_vec(out_shape, data)?;
    drop(shared);
    Ok((out, graph, trace))
}
