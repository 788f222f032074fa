//! Plans that use the device: a split at `theta`, run serially or as a
//! two-stage pipeline.

use alloc::vec::Vec;

use super::device::{sublayer_decompose, ConvInstance};
use super::search::{beats, conv_cost, dims_of, host_layer, mode_of, pool_kind, recombine_footprint, Failures};
use super::shapes::{propagate_shapes, ShapeSearch};
use super::{compute_seconds, Domain, Domains, DeviceModel, ExecutionPlan, HostModel, LayerPlan, Strategy};
use crate::error::{Infeasibility, Rule};
use crate::layers::PoolMode;
use crate::network::{LayerSpec, NetworkSpec};
use crate::Shape5;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Head {
    /// Conv layers may be offloaded block-wise to the device.
    Offload,
    HostOnly,
}

fn conv_instance(net: &NetworkSpec, shapes: &[Shape5], i: usize) -> ConvInstance {
    let LayerSpec::Conv { features, kernel, .. } = net.layers[i] else {
        unreachable!()
    };
    ConvInstance {
        s: shapes[i].s,
        f: shapes[i].f,
        f_out: features,
        n: shapes[i].spatial(),
        k: kernel,
    }
}

/// Head conv layer offloaded to the device, if it fits and the host can
/// hold its input and output.
fn offloaded_layer(
    net: &NetworkSpec,
    shapes: &[Shape5],
    i: usize,
    host: &HostModel,
    device: &DeviceModel,
) -> Option<LayerPlan> {
    let held = (shapes[i].len() + shapes[i + 1].len()) as f64;
    if held > host.env.capacity as f64 {
        return None;
    }
    let sub = sublayer_decompose(&conv_instance(net, shapes, i), device).ok()?;
    Some(LayerPlan {
        layer: i,
        kind: sub.kind,
        domain: Domain::Device,
        input: shapes[i],
        output: shapes[i + 1],
        blocks: sub.blocks,
        compute_seconds: sub.compute_seconds,
        transfer_seconds: sub.transfer_seconds,
        memory: sub.memory,
    })
}

struct Tail {
    batch: usize,
    layers: Vec<LayerPlan>,
    seconds: f64,
    upload: f64,
    download: f64,
    peak: f64,
}

/// Layers `theta..` as a device-only network over sub-batches of the head
/// output; picks the sub-batch size with the least modeled time.
fn plan_tail(
    net: &NetworkSpec,
    shapes: &[Shape5],
    modes: &[PoolMode],
    theta: usize,
    device: &DeviceModel,
) -> Result<Tail, Infeasibility> {
    let total = shapes[theta].s;
    let cap = device.env.capacity as f64;
    let mut best: Option<Tail> = None;
    let mut failure = None;
    'batch: for b in (1..=total).filter(|b| total.is_multiple_of(*b)) {
        let count = total / b;
        let sub: Vec<Shape5> = shapes[theta..]
            .iter()
            .map(|s| s.with_batch(s.s / count).expect("batch stays positive"))
            .collect();
        let mut layers = Vec::new();
        let mut compute = 0.0;
        let mut peak: f64 = 0.0;
        for i in theta..net.len() {
            let local = &sub[i - theta..];
            let (ld, md) = dims_of(&net.layers[i], local[0], local[1]);
            let kinds: Vec<_> = match net.layers[i] {
                LayerSpec::Conv { .. } => conv_instance_local(net, local, i).device_kinds().to_vec(),
                LayerSpec::Pool { .. } => alloc::vec![pool_kind(mode_of(net, modes, i))],
            };
            let mut pick: Option<(crate::cost::PrimitiveKind, f64, f64)> = None;
            let mut smallest = f64::INFINITY;
            for kind in kinds {
                let (flops, memory) = conv_cost(kind, &ld, &md, &device.profile, device.constants.c, &device.env);
                smallest = smallest.min(memory);
                if memory > cap {
                    continue;
                }
                let t = compute_seconds(flops, kind, &device.constants);
                if pick.is_none_or(|(_, pt, pm)| t < pt || (t == pt && memory < pm)) {
                    pick = Some((kind, t, memory));
                }
            }
            let Some((kind, t, memory)) = pick else {
                failure.get_or_insert(Infeasibility::at(
                    i,
                    Rule::Memory {
                        domain: "device",
                        required: smallest,
                        capacity: device.env.capacity,
                    },
                ));
                continue 'batch;
            };
            compute += t;
            peak = peak.max(memory);
            layers.push(LayerPlan {
                layer: i,
                kind,
                domain: Domain::Device,
                input: shapes[i],
                output: shapes[i + 1],
                blocks: Vec::new(),
                compute_seconds: count as f64 * t,
                transfer_seconds: 0.0,
                memory,
            });
        }
        let upload = shapes[theta].len() as f64;
        let download = shapes.last().unwrap().len() as f64;
        let seconds = count as f64 * compute + device.transfer_seconds(upload) + device.transfer_seconds(download);
        let tail = Tail {
            batch: b,
            layers,
            seconds,
            upload,
            download,
            peak,
        };
        if best
            .as_ref()
            .is_none_or(|t| tail.seconds < t.seconds || (tail.seconds == t.seconds && tail.peak < t.peak))
        {
            best = Some(tail);
        }
    }
    best.ok_or_else(|| failure.expect("at least one sub-batch size was tried"))
}

fn conv_instance_local(net: &NetworkSpec, local: &[Shape5], i: usize) -> ConvInstance {
    let LayerSpec::Conv { features, kernel, .. } = net.layers[i] else {
        unreachable!()
    };
    ConvInstance {
        s: local[0].s,
        f: local[0].f,
        f_out: features,
        n: local[0].spatial(),
        k: kernel,
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    net: &NetworkSpec,
    host: &HostModel,
    device: &DeviceModel,
    theta: usize,
    input: Shape5,
    modes: &[PoolMode],
    head: Head,
    strategy: Strategy,
) -> Result<ExecutionPlan, Infeasibility> {
    if theta > net.len() {
        return Err(Infeasibility::global(Rule::ThetaOutOfRange {
            theta,
            layers: net.len(),
        }));
    }
    let shapes = propagate_shapes(net, input, modes)?;
    let mut layers = Vec::with_capacity(net.len());
    for i in 0..theta {
        let on_host = host_layer(net, &shapes, modes, i, host);
        let offload = match (head, &net.layers[i]) {
            (Head::Offload, LayerSpec::Conv { .. }) => offloaded_layer(net, &shapes, i, host, device),
            _ => None,
        };
        let layer = match (on_host, offload) {
            (Ok(h), Some(d)) => {
                if d.seconds() < h.seconds() {
                    d
                } else {
                    h
                }
            }
            (Ok(h), None) => h,
            (Err(_), Some(d)) => d,
            (Err(e), None) => return Err(e),
        };
        layers.push(layer);
    }
    // host-side footprint of each head layer (offloaded ones keep input and output)
    let head_peak = layers
        .iter()
        .map(|l| match l.domain {
            Domain::Host => l.memory,
            Domain::Device => (l.input.len() + l.output.len()) as f64,
        })
        .fold(0.0, f64::max);
    let head_device_peak = layers
        .iter()
        .filter(|l| l.domain == Domain::Device)
        .map(|l| l.memory)
        .fold(0.0, f64::max);
    let head_seconds = layers.iter().map(|l| l.seconds()).sum();

    let recombine = recombine_footprint(&shapes, modes);
    let mut plan = ExecutionPlan {
        strategy,
        input,
        pool_modes: modes.to_vec(),
        shapes: shapes.clone(),
        theta,
        tail_batch: 0,
        layers,
        head_seconds,
        tail_seconds: 0.0,
        tail_upload: 0.0,
        tail_download: 0.0,
        host_peak: 0.0,
        device_peak: head_device_peak,
    };
    let out_len = shapes.last().unwrap().len() as f64;
    let handoff = if theta < net.len() {
        let tail = plan_tail(net, &shapes, modes, theta, device)?;
        plan.tail_batch = tail.batch;
        plan.layers.extend(tail.layers);
        plan.tail_seconds = tail.seconds;
        plan.tail_upload = tail.upload;
        plan.tail_download = tail.download;
        plan.device_peak = plan.device_peak.max(tail.peak);
        shapes[theta].len() as f64 + out_len
    } else {
        0.0
    };
    plan.host_peak = match strategy {
        // the next input's head runs while the consumer holds the previous one
        Strategy::Pipeline if theta < net.len() => head_peak + handoff.max(recombine),
        _ => head_peak.max(handoff).max(recombine),
    };
    if plan.host_peak > host.env.capacity as f64 {
        return Err(Infeasibility::global(Rule::Memory {
            domain: "host",
            required: plan.host_peak,
            capacity: host.env.capacity,
        }));
    }
    if strategy == Strategy::Split && plan.theta == net.len() && plan.layers.iter().all(|l| l.domain == Domain::Host) {
        plan.strategy = Strategy::HostOnly;
    }
    Ok(plan)
}

/// Layers `0..theta` one at a time (conv layers on the host or offloaded as
/// device sub-layers, whichever is faster; pooling on the host), then the
/// rest on the device over sub-batches of the layer-`theta` batch.
pub fn split_plan(
    net: &NetworkSpec,
    host: &HostModel,
    device: &DeviceModel,
    theta: usize,
    input: Shape5,
    modes: &[PoolMode],
) -> Result<ExecutionPlan, Infeasibility> {
    assemble(net, host, device, theta, input, modes, Head::Offload, Strategy::Split)
}

/// Producer/consumer plan for one split point and input shape: layers
/// `0..theta` on the host with host primitives, the rest on the device.
pub fn pipeline_split(
    net: &NetworkSpec,
    host: &HostModel,
    device: &DeviceModel,
    theta: usize,
    input: Shape5,
    modes: &[PoolMode],
) -> Result<ExecutionPlan, Infeasibility> {
    assemble(net, host, device, theta, input, modes, Head::HostOnly, Strategy::Pipeline)
}

/// Best producer/consumer plan: the host runs layers `0..theta` with host
/// primitives while the device runs the rest on the previous input. The
/// period is the slower of the two stages.
pub fn pipeline_plan(net: &NetworkSpec, domains: &Domains, search: &ShapeSearch) -> Result<ExecutionPlan, Infeasibility> {
    let device = domains.device.as_ref().ok_or(Infeasibility::global(Rule::NoDevice))?;
    let mut best: Option<ExecutionPlan> = None;
    let mut failures = Failures::default();
    for modes in net.pool_mode_assignments() {
        for input in search.candidates(net) {
            for theta in 0..=net.len() {
                match pipeline_split(net, &domains.host, device, theta, input, &modes) {
                    Ok(p) => {
                        if best.as_ref().is_none_or(|b| beats(&p, b)) {
                            best = Some(p);
                        }
                    }
                    Err(e) => failures.note(e),
                }
            }
        }
    }
    best.ok_or_else(|| failures.into_error(net, search))
}
