//! Wall-clock execution of plans.
//!
//! Device work runs on the host; [`DelayObserver`] stretches it to the
//! modeled device time and sleeps through modeled transfers, so timed runs
//! behave like a slower, separate executor.

use std::sync::mpsc::sync_channel;
use std::thread;
use std::time::{Duration, Instant};

use swconv_core::parallel::Parallel;
use swconv_core::planner::{ExecutionObserver, PlanRunner, ThroughputReport};
use swconv_core::{Real, Result, Tensor5};

/// Records per-layer wall time and, when `enforce` is set, makes device
/// compute and transfers take at least their modeled durations.
#[derive(Debug)]
pub struct DelayObserver {
    enforce: bool,
    mark: Instant,
    started: Option<(usize, Instant)>,
    /// Seconds spent in each layer index.
    pub layer_seconds: Vec<f64>,
}

impl DelayObserver {
    pub fn new(layers: usize, enforce: bool) -> Self {
        DelayObserver {
            enforce,
            mark: Instant::now(),
            started: None,
            layer_seconds: vec![0.0; layers],
        }
    }
}

impl ExecutionObserver for DelayObserver {
    fn layer_started(&mut self, layer: usize) {
        let now = Instant::now();
        self.mark = now;
        self.started = Some((layer, now));
    }

    fn layer_finished(&mut self, layer: usize) {
        if let Some((l, t)) = self.started.take() {
            debug_assert_eq!(l, layer);
            self.layer_seconds[layer] += t.elapsed().as_secs_f64();
        }
    }

    fn transfer(&mut self, _scalars: usize, seconds: f64) {
        if self.enforce {
            thread::sleep(Duration::from_secs_f64(seconds));
        }
        self.mark = Instant::now();
    }

    fn device_compute(&mut self, seconds: f64) {
        if self.enforce {
            let target = Duration::from_secs_f64(seconds);
            let spent = self.mark.elapsed();
            if target > spent {
                thread::sleep(target - spent);
            }
        }
        self.mark = Instant::now();
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `warmups` untimed runs, then the median of `runs` timed runs. The
/// breakdown is per layer (`layer i <kind>`) from the median run.
pub fn measure<T: Real, P: Parallel>(
    runner: &PlanRunner<'_, T, P>,
    input: &Tensor5<T>,
    warmups: usize,
    runs: usize,
    enforce: bool,
) -> Result<ThroughputReport> {
    let plan = runner.plan();
    let layers = plan.layers.len();
    for _ in 0..warmups {
        runner.run(input.clone(), &mut DelayObserver::new(layers, enforce))?;
    }
    let mut timed = Vec::with_capacity(runs);
    for _ in 0..runs.max(1) {
        let mut obs = DelayObserver::new(layers, enforce);
        let x = input.clone();
        let t = Instant::now();
        runner.run(x, &mut obs)?;
        timed.push((t.elapsed().as_secs_f64(), obs.layer_seconds));
    }
    let secs = median(timed.iter().map(|t| t.0).collect());
    let (_, per_layer) = timed
        .iter()
        .min_by(|a, b| (a.0 - secs).abs().total_cmp(&(b.0 - secs).abs()))
        .unwrap();
    let breakdown = plan
        .layers
        .iter()
        .zip(per_layer)
        .map(|(l, s)| (format!("layer {} {}", l.layer, l.kind.name()), *s))
        .collect();
    Ok(ThroughputReport::new(plan.voxels(), secs, breakdown))
}

/// Runs every input through head, tail and recombination back to back.
pub fn run_serial<T: Real, P: Parallel>(
    runner: &PlanRunner<'_, T, P>,
    inputs: Vec<Tensor5<T>>,
    enforce: bool,
) -> Result<(Vec<Tensor5<T>>, Duration)> {
    let layers = runner.plan().layers.len();
    let mut obs = DelayObserver::new(layers, enforce);
    let t = Instant::now();
    let out = inputs.into_iter().map(|x| runner.run(x, &mut obs)).collect::<Result<_>>()?;
    Ok((out, t.elapsed()))
}

/// Head and tail on two threads joined by a rendezvous handoff: the head
/// thread starts the next input only after the tail thread has taken the
/// previous one.
pub fn run_pipelined<T: Real, P: Parallel + Sync>(
    runner: &PlanRunner<'_, T, P>,
    inputs: Vec<Tensor5<T>>,
    enforce: bool,
) -> Result<(Vec<Tensor5<T>>, Duration)> {
    let layers = runner.plan().layers.len();
    let t = Instant::now();
    let (tx, rx) = sync_channel::<Tensor5<T>>(0);
    let out = thread::scope(|scope| {
        let producer = scope.spawn(move || -> Result<()> {
            let mut obs = DelayObserver::new(layers, enforce);
            for x in inputs {
                let mid = runner.run_head(x, &mut obs)?;
                if tx.send(mid).is_err() {
                    break;
                }
            }
            Ok(())
        });
        let mut obs = DelayObserver::new(layers, enforce);
        let mut out = Vec::new();
        let mut failure = None;
        for mid in rx {
            match runner.run_tail(mid, &mut obs).and_then(|y| runner.finish(y)) {
                Ok(y) => out.push(y),
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        let produced = producer.join().expect("head thread panicked");
        match failure {
            Some(e) => Err(e),
            None => produced.map(|_| out),
        }
    })?;
    Ok((out, t.elapsed()))
}
