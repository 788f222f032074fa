//! Host layer costs and the exhaustive plan search.

use alloc::boxed::Box;
use alloc::vec::Vec;

use super::shapes::{propagate_shapes, ShapeSearch};
use super::split::split_plan;
use super::{compute_seconds, Domain, Domains, ExecutionPlan, HostModel, LayerPlan, Strategy};
use crate::cost::{implementation_memory, layer_flops, transformed_len, LayerDims, MemoryDims, PrimitiveKind};
use crate::error::{Infeasibility, Rule};
use crate::fft::{optimal_fft_shape, RadixProfile};
use crate::layers::PoolMode;
use crate::network::{LayerSpec, NetworkSpec};
use crate::Shape5;

/// Cost-model view of layer `i` given the shape chain.
pub(crate) fn layer_dims(net: &NetworkSpec, shapes: &[Shape5], i: usize) -> (LayerDims, MemoryDims) {
    dims_of(&net.layers[i], shapes[i], shapes[i + 1])
}

/// Cost-model view of `layer` taking `sh` to `out`.
pub(crate) fn dims_of(layer: &LayerSpec, sh: Shape5, out: Shape5) -> (LayerDims, MemoryDims) {
    let window = match *layer {
        LayerSpec::Conv { kernel, .. } => kernel,
        LayerSpec::Pool { window, .. } => window,
    };
    // maps written per batch entry: f·P for fragment pooling
    let f_out = out.len() / (sh.s * out.image_len());
    let ld = LayerDims {
        s: sh.s,
        f: sh.f,
        f_out,
        n: sh.spatial(),
        k: window,
    };
    let md = MemoryDims {
        s: sh.s as f64,
        f: sh.f as f64,
        f_out: f_out as f64,
        n: sh.image_len() as f64,
        n_out: out.image_len() as f64,
        nt: 0.0,
    };
    (ld, md)
}

/// `(flops, memory)` of a conv layer under `kind` on a domain with `profile`.
pub(crate) fn conv_cost(
    kind: PrimitiveKind,
    ld: &LayerDims,
    md: &MemoryDims,
    profile: &RadixProfile,
    c: f64,
    env: &crate::cost::ResourceEnv,
) -> (f64, f64) {
    let mut ld = *ld;
    let mut md = *md;
    if kind.is_fft() {
        md.nt = transformed_len(kind, ld.n, profile) as f64;
        ld.n = optimal_fft_shape(ld.n, profile);
    }
    let flops = layer_flops(kind, &ld, c).expect("shape chain keeps kernels inside extents");
    (flops, implementation_memory(kind, &md, env))
}

pub(crate) fn pool_kind(mode: PoolMode) -> PrimitiveKind {
    match mode {
        PoolMode::Plain => PrimitiveKind::PoolPlain,
        PoolMode::Fragments => PrimitiveKind::PoolFragments,
    }
}

/// Mode of pooling layer `i` under the assignment `modes`.
pub(crate) fn mode_of(net: &NetworkSpec, modes: &[PoolMode], i: usize) -> PoolMode {
    let k = net.layers[..i].iter().filter(|l| l.is_pool()).count();
    modes[k]
}

/// Fastest host primitive for layer `i` that fits host memory; ties go to
/// the smaller footprint, then to the earlier kind.
pub(crate) fn host_layer(
    net: &NetworkSpec,
    shapes: &[Shape5],
    modes: &[PoolMode],
    i: usize,
    host: &HostModel,
) -> Result<LayerPlan, Infeasibility> {
    let (ld, md) = layer_dims(net, shapes, i);
    let cap = host.env.capacity as f64;
    let kinds: &[PrimitiveKind] = match net.layers[i] {
        LayerSpec::Conv { .. } => &PrimitiveKind::HOST_CONV,
        LayerSpec::Pool { .. } => &[PrimitiveKind::PoolPlain, PrimitiveKind::PoolFragments],
    };
    let want_pool = net.layers[i].is_pool().then(|| pool_kind(mode_of(net, modes, i)));
    let mut best: Option<LayerPlan> = None;
    let mut smallest = f64::INFINITY;
    for &kind in kinds {
        if want_pool.is_some_and(|k| k != kind) {
            continue;
        }
        let (flops, memory) = conv_cost(kind, &ld, &md, &host.profile, host.constants.c, &host.env);
        smallest = smallest.min(memory);
        if memory > cap {
            continue;
        }
        let plan = LayerPlan {
            layer: i,
            kind,
            domain: Domain::Host,
            input: shapes[i],
            output: shapes[i + 1],
            blocks: Vec::new(),
            compute_seconds: compute_seconds(flops, kind, &host.constants),
            transfer_seconds: 0.0,
            memory,
        };
        let better = match &best {
            None => true,
            Some(b) => {
                plan.compute_seconds < b.compute_seconds
                    || (plan.compute_seconds == b.compute_seconds && plan.memory < b.memory)
            }
        };
        if better {
            best = Some(plan);
        }
    }
    best.ok_or(Infeasibility::at(
        i,
        Rule::Memory {
            domain: "host",
            required: smallest,
            capacity: host.env.capacity,
        },
    ))
}

/// Host scalars held while fragments are interleaved into the dense output.
pub(crate) fn recombine_footprint(shapes: &[Shape5], modes: &[PoolMode]) -> f64 {
    let out = shapes.last().unwrap().len() as f64;
    if modes.contains(&PoolMode::Fragments) {
        2.0 * out
    } else {
        out
    }
}

/// Every layer on the host with its fastest fitting primitive.
pub fn host_plan(
    net: &NetworkSpec,
    input: Shape5,
    modes: &[PoolMode],
    host: &HostModel,
) -> Result<ExecutionPlan, Infeasibility> {
    let shapes = propagate_shapes(net, input, modes)?;
    let mut layers = Vec::with_capacity(net.len());
    for i in 0..net.len() {
        layers.push(host_layer(net, &shapes, modes, i, host)?);
    }
    let head_seconds = layers.iter().map(|l| l.seconds()).sum();
    let recombine = recombine_footprint(&shapes, modes);
    if recombine > host.env.capacity as f64 {
        return Err(Infeasibility::global(Rule::Memory {
            domain: "host",
            required: recombine,
            capacity: host.env.capacity,
        }));
    }
    let host_peak = layers.iter().map(|l| l.memory).fold(recombine, f64::max);
    Ok(ExecutionPlan {
        strategy: Strategy::HostOnly,
        input,
        pool_modes: modes.to_vec(),
        theta: net.len(),
        tail_batch: 0,
        layers,
        shapes,
        head_seconds,
        tail_seconds: 0.0,
        tail_upload: 0.0,
        tail_download: 0.0,
        host_peak,
        device_peak: 0.0,
    })
}

/// Candidate input shapes that propagate through `net` and for which every
/// layer has some host primitive fitting host memory.
pub fn enumerate_input_shapes(
    net: &NetworkSpec,
    modes: &[PoolMode],
    search: &ShapeSearch,
    host: &HostModel,
) -> Vec<Shape5> {
    search
        .candidates(net)
        .into_iter()
        .filter(|&s| host_plan(net, s, modes, host).is_ok())
        .collect()
}

/// `a` beats `b`: higher throughput, then smaller peak, then smaller input.
pub(crate) fn beats(a: &ExecutionPlan, b: &ExecutionPlan) -> bool {
    let (ta, tb) = (a.throughput(), b.throughput());
    if ta != tb {
        return ta > tb;
    }
    if a.total_peak() != b.total_peak() {
        return a.total_peak() < b.total_peak();
    }
    a.input.len() < b.input.len()
}

/// Keeps the most informative reason for an empty search.
#[derive(Default)]
pub(crate) struct Failures {
    memory: Option<Infeasibility>,
    other: Option<Infeasibility>,
}

impl Failures {
    pub(crate) fn note(&mut self, e: Infeasibility) {
        let slot = match e.rule {
            Rule::Memory { .. } | Rule::NoSubLayerFits => &mut self.memory,
            _ => &mut self.other,
        };
        if slot.is_none() {
            *slot = Some(e);
        }
    }

    pub(crate) fn into_error(self, net: &NetworkSpec, search: &ShapeSearch) -> Infeasibility {
        self.memory.or(self.other).unwrap_or(Infeasibility::global(Rule::NoInputShape {
            fov: crate::cost::field_of_view(net),
            max_extent: search.max_extent,
        }))
    }
}

/// Exhaustive search over pool modes × input shapes × primitives, and over
/// split points when a device is available. Returns the plan with the
/// highest modeled throughput.
pub fn optimize_plan(net: &NetworkSpec, domains: &Domains, search: &ShapeSearch) -> Result<ExecutionPlan, Infeasibility> {
    search_inputs(net, domains, &search.candidates(net)).map_err(|f| f.into_error(net, search))
}

/// [`optimize_plan`] for one fixed input shape.
pub fn optimize_at(net: &NetworkSpec, domains: &Domains, input: Shape5) -> Result<ExecutionPlan, Infeasibility> {
    search_inputs(net, domains, &[input]).map_err(|f| {
        f.into_error(
            net,
            &ShapeSearch {
                max_extent: input.spatial().into_iter().max().unwrap(),
                batch: input.s,
                anisotropic_step: None,
            },
        )
    })
}

fn search_inputs(net: &NetworkSpec, domains: &Domains, inputs: &[Shape5]) -> Result<ExecutionPlan, Box<Failures>> {
    let mut best: Option<ExecutionPlan> = None;
    let mut failures = Failures::default();
    let mut consider = |p: Result<ExecutionPlan, Infeasibility>, best: &mut Option<ExecutionPlan>| match p {
        Ok(p) => {
            if best.as_ref().is_none_or(|b| beats(&p, b)) {
                *best = Some(p);
            }
        }
        Err(e) => failures.note(e),
    };
    for modes in net.pool_mode_assignments() {
        for &input in inputs {
            if let Err(e) = propagate_shapes(net, input, &modes) {
                consider(Err(e), &mut best);
                continue;
            }
            consider(host_plan(net, input, &modes, &domains.host), &mut best);
            if let Some(device) = &domains.device {
                for theta in 0..=net.len() {
                    consider(split_plan(net, &domains.host, device, theta, input, &modes), &mut best);
                }
            }
        }
    }
    best.ok_or_else(|| Box::new(failures))
}
