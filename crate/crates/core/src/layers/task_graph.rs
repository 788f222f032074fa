//! Task dependency graph of an FFT convolution layer and its scheduler.
//!
//! Four synchronization tasks split the layer into three stages: input
//! transforms; kernel transforms with their multiply-adds; output transforms.
//! Multiply-adds into the same output spectrum are chained in input order, so
//! accumulation order never depends on scheduling.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    /// Stage boundary `0..=3`; the only tasks that allocate or free.
    Sync(u8),
    InputTransform { batch: usize, input: usize },
    KernelTransform { output: usize, input: usize },
    MultiplyAdd { output: usize, input: usize, batch: usize },
    /// Inverse transform plus bias and transfer function.
    OutputTransform { batch: usize, output: usize },
}

#[derive(Clone, Debug)]
pub struct TaskGraph {
    batch: usize,
    inputs: usize,
    outputs: usize,
    nodes: Vec<Task>,
    succs: Vec<Vec<usize>>,
    preds: Vec<usize>,
    priority: Vec<usize>,
}

impl TaskGraph {
    pub fn new(batch: usize, inputs: usize, outputs: usize) -> Result<Self> {
        if batch == 0 || inputs == 0 || outputs == 0 {
            return Err(invalid!("task graph needs positive S, f, f′"));
        }
        let mut g = TaskGraph {
            batch,
            inputs,
            outputs,
            nodes: Vec::new(),
            succs: Vec::new(),
            preds: Vec::new(),
            priority: Vec::new(),
        };
        for q in 0..4 {
            g.nodes.push(Task::Sync(q));
        }
        for batch in 0..batch {
            for input in 0..inputs {
                g.nodes.push(Task::InputTransform { batch, input });
            }
        }
        for output in 0..outputs {
            for input in 0..inputs {
                g.nodes.push(Task::KernelTransform { output, input });
            }
        }
        for output in 0..outputs {
            for input in 0..inputs {
                for batch in 0..batch {
                    g.nodes.push(Task::MultiplyAdd { output, input, batch });
                }
            }
        }
        for batch in 0..batch {
            for output in 0..outputs {
                g.nodes.push(Task::OutputTransform { batch, output });
            }
        }
        let n = g.nodes.len();
        g.succs = vec![Vec::new(); n];
        let mut edges = Vec::new();
        for t in 0..n {
            match g.nodes[t] {
                Task::InputTransform { .. } => {
                    edges.push((0, t));
                    edges.push((t, 1));
                }
                Task::KernelTransform { output, input } => {
                    edges.push((1, t));
                    for b in 0..batch {
                        edges.push((t, g.multiply_add_id(output, input, b)));
                    }
                }
                Task::MultiplyAdd { output, input, batch } => {
                    if input > 0 {
                        edges.push((g.multiply_add_id(output, input - 1, batch), t));
                    }
                    edges.push((t, 2));
                }
                Task::OutputTransform { .. } => {
                    edges.push((2, t));
                    edges.push((t, 3));
                }
                Task::Sync(_) => {}
            }
        }
        g.preds = vec![0; n];
        for (a, b) in edges {
            g.succs[a].push(b);
            g.preds[b] += 1;
        }
        g.priority = g.longest_paths()?;
        Ok(g)
    }

    /// Longest path (in edges) from each node to the sink.
    fn longest_paths(&self) -> Result<Vec<usize>> {
        let order = self.topological_order()?;
        let mut dist = vec![0usize; self.nodes.len()];
        for &t in order.iter().rev() {
            dist[t] = self.succs[t].iter().map(|&s| dist[s] + 1).max().unwrap_or(0);
        }
        Ok(dist)
    }

    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let mut indeg = self.preds.clone();
        let mut ready: Vec<usize> = (0..self.nodes.len()).filter(|&t| indeg[t] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(t) = ready.pop() {
            order.push(t);
            for &s in &self.succs[t] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.push(s);
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(invalid!("task graph has a cycle"));
        }
        Ok(order)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.batch, self.inputs, self.outputs)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn task(&self, id: usize) -> Task {
        self.nodes[id]
    }

    pub fn tasks(&self) -> &[Task] {
        &self.nodes
    }

    pub fn successors(&self, id: usize) -> &[usize] {
        &self.succs[id]
    }

    pub fn priority(&self, id: usize) -> usize {
        self.priority[id]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succs
            .iter()
            .enumerate()
            .flat_map(|(a, s)| s.iter().map(move |&b| (a, b)))
    }

    pub fn count(&self, pred: impl Fn(&Task) -> bool) -> usize {
        self.nodes.iter().filter(|t| pred(t)).count()
    }

    /// Node id of a kernel transform.
    pub fn kernel_id(&self, output: usize, input: usize) -> usize {
        4 + self.batch * self.inputs + output * self.inputs + input
    }

    /// Node id of a multiply-add.
    pub fn multiply_add_id(&self, output: usize, input: usize, batch: usize) -> usize {
        4 + self.batch * self.inputs + self.outputs * self.inputs + (output * self.inputs + input) * self.batch + batch
    }
}

/// Worker placement: `primaries` hold one kernel-spectrum buffer each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    pub workers: usize,
    pub groups: usize,
    pub primaries: Vec<usize>,
}

impl Placement {
    /// `min(workers, outputs)` primaries, dealt round-robin over the groups.
    pub fn new(workers: usize, groups: usize, outputs: usize) -> Result<Self> {
        if workers == 0 {
            return Err(invalid!("task pool needs at least one worker"));
        }
        let groups = groups.clamp(1, workers);
        let m = workers.min(outputs.max(1));
        let members: Vec<Vec<usize>> = (0..groups)
            .map(|g| (0..workers).filter(|&w| w * groups / workers == g).collect())
            .collect();
        let mut primaries = Vec::with_capacity(m);
        let mut round = 0;
        while primaries.len() < m {
            for g in &members {
                if primaries.len() < m {
                    if let Some(&w) = g.get(round) {
                        primaries.push(w);
                    }
                }
            }
            round += 1;
        }
        Ok(Placement {
            workers,
            groups,
            primaries,
        })
    }

    pub fn group(&self, worker: usize) -> usize {
        worker * self.groups / self.workers
    }

    pub fn buffer_of(&self, worker: usize) -> Option<usize> {
        self.primaries.iter().position(|&p| p == worker)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Waiting,
    Ready,
    Running,
    Done,
}

/// Picks tasks for workers: highest priority first (ties to the lower id),
/// kernel transforms only on primaries with a free buffer, multiply-adds only
/// in the group of the primary that holds their kernel spectrum.
#[derive(Debug)]
pub struct Scheduler<'g> {
    graph: &'g TaskGraph,
    placement: Placement,
    state: Vec<State>,
    waiting_on: Vec<usize>,
    ready: BinaryHeap<(usize, Reverse<usize>)>,
    kernel_buffer: Vec<Option<usize>>,
    buffer_busy: Vec<bool>,
    mads_left: Vec<usize>,
    done: usize,
}

impl<'g> Scheduler<'g> {
    pub fn new(graph: &'g TaskGraph, placement: Placement) -> Self {
        let (batch, inputs, outputs) = graph.dims();
        let mut s = Scheduler {
            graph,
            state: vec![State::Waiting; graph.len()],
            waiting_on: graph.preds.clone(),
            ready: BinaryHeap::new(),
            kernel_buffer: vec![None; inputs * outputs],
            buffer_busy: vec![false; placement.primaries.len()],
            mads_left: vec![batch; inputs * outputs],
            placement,
            done: 0,
        };
        for t in 0..graph.len() {
            if s.waiting_on[t] == 0 {
                s.make_ready(t);
            }
        }
        s
    }

    fn make_ready(&mut self, t: usize) {
        self.state[t] = State::Ready;
        self.ready.push((self.graph.priority[t], Reverse(t)));
    }

    pub fn finished(&self) -> bool {
        self.done == self.graph.len()
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    fn kernel_slot(&self, output: usize, input: usize) -> usize {
        output * self.graph.inputs + input
    }

    /// Next task for `worker` and, for kernel transforms and multiply-adds,
    /// the kernel buffer they use.
    pub fn pick(&mut self, worker: usize) -> Option<(usize, Option<usize>)> {
        let mut skipped = Vec::new();
        let mut found = None;
        while let Some(entry) = self.ready.pop() {
            let t = entry.1 .0;
            let allowed = match self.graph.nodes[t] {
                Task::KernelTransform { .. } => self
                    .placement
                    .buffer_of(worker)
                    .filter(|&b| !self.buffer_busy[b]),
                Task::MultiplyAdd { output, input, .. } => {
                    let b = self.kernel_buffer[self.kernel_slot(output, input)]
                        .expect("multiply-add ready before its kernel");
                    let owner = self.placement.primaries[b];
                    (self.placement.group(owner) == self.placement.group(worker)).then_some(b)
                }
                _ => Some(usize::MAX),
            };
            match allowed {
                Some(b) => {
                    found = Some((t, (b != usize::MAX).then_some(b)));
                    break;
                }
                None => skipped.push(entry),
            }
        }
        self.ready.extend(skipped);
        let (t, buffer) = found?;
        if let Task::KernelTransform { output, input } = self.graph.nodes[t] {
            let b = buffer.unwrap();
            self.buffer_busy[b] = true;
            let slot = self.kernel_slot(output, input);
            self.kernel_buffer[slot] = Some(b);
        }
        self.state[t] = State::Running;
        Some((t, buffer))
    }

    pub fn complete(&mut self, t: usize) {
        debug_assert_eq!(self.state[t], State::Running);
        self.state[t] = State::Done;
        self.done += 1;
        if let Task::MultiplyAdd { output, input, .. } = self.graph.nodes[t] {
            let slot = self.kernel_slot(output, input);
            self.mads_left[slot] -= 1;
            if self.mads_left[slot] == 0 {
                self.buffer_busy[self.kernel_buffer[slot].unwrap()] = false;
            }
        }
        for &s in &self.graph.succs[t] {
            self.waiting_on[s] -= 1;
            if self.waiting_on[s] == 0 {
                self.make_ready(s);
            }
        }
    }

    /// True if any task is running.
    pub fn busy(&self) -> bool {
        self.state.contains(&State::Running)
    }
}

/// One executed task: which worker ran it, in global completion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub worker: usize,
    pub task: usize,
    pub buffer: Option<usize>,
}

/// Runs the graph by letting workers `0..N` take turns, one task per turn.
pub fn run_simulated<F>(graph: &TaskGraph, placement: Placement, mut exec: F) -> Result<Vec<TraceEntry>>
where
    F: FnMut(usize, Task, Option<usize>) -> Result<()>,
{
    let workers = placement.workers;
    let mut sched = Scheduler::new(graph, placement);
    let mut trace = Vec::with_capacity(graph.len());
    while !sched.finished() {
        let mut progressed = false;
        for w in 0..workers {
            if let Some((t, buffer)) = sched.pick(w) {
                exec(w, graph.task(t), buffer)?;
                sched.complete(t);
                trace.push(TraceEntry { worker: w, task: t, buffer });
                progressed = true;
            }
        }
        if !progressed {
            return Err(invalid!("task scheduler stalled"));
        }
    }
    Ok(trace)
}

/// Runs the graph on `N` scoped threads.
#[cfg(feature = "std")]
pub fn run_threaded<F>(graph: &TaskGraph, placement: Placement, exec: F) -> Result<Vec<TraceEntry>>
where
    F: Fn(usize, Task, Option<usize>) -> Result<()> + Sync,
{
    use std::sync::{Condvar, Mutex};

    struct Shared<'g> {
        sched: Scheduler<'g>,
        trace: Vec<TraceEntry>,
        error: Option<crate::Error>,
        // workers that found nothing to do since the last completion
        idle: Vec<bool>,
    }

    let workers = placement.workers;
    let shared = Mutex::new(Shared {
        sched: Scheduler::new(graph, placement),
        trace: Vec::with_capacity(graph.len()),
        error: None,
        idle: vec![false; workers],
    });
    let cv = Condvar::new();
    std::thread::scope(|scope| {
        for w in 0..workers {
            let (shared, cv, exec) = (&shared, &cv, &exec);
            scope.spawn(move || {
                let mut guard = shared.lock().unwrap();
                loop {
                    if guard.error.is_some() || guard.sched.finished() {
                        break;
                    }
                    let Some((t, buffer)) = guard.sched.pick(w) else {
                        guard.idle[w] = true;
                        if !guard.sched.busy() && guard.idle.iter().all(|&i| i) {
                            guard.error = Some(invalid!("task scheduler stalled"));
                            cv.notify_all();
                            break;
                        }
                        guard = cv.wait(guard).unwrap();
                        continue;
                    };
                    drop(guard);
                    let res = exec(w, graph.task(t), buffer);
                    guard = shared.lock().unwrap();
                    match res {
                        Ok(()) => {
                            guard.sched.complete(t);
                            guard.idle.iter_mut().for_each(|i| *i = false);
                            guard.trace.push(TraceEntry { worker: w, task: t, buffer });
                        }
                        Err(e) => guard.error = Some(e),
                    }
                    cv.notify_all();
                }
            });
        }
    });
    let shared = shared.into_inner().unwrap();
    match shared.error {
        Some(e) => Err(e),
        None => Ok(shared.trace),
    }
}
