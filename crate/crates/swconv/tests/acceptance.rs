//! Acceptance suite: one line per criterion. Failures are reported but only
//! fail the process when `SWCONV_ACCEPTANCE_STRICT` is set.

use std::time::Instant;

use swconv::checks::{self, Outcome};
use swconv::netfile::bundled;

const SEED: u64 = 20;

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let nets = ["n337", "n537", "n726", "n926"].map(|n| (n, bundled(n).expect("bundled network")));
    let n726 = &nets[2].1;
    let criteria: Vec<Criterion> = vec![
        ("pruned FFT matches dense DFT", Box::new(|| checks::fft_matches_dense_dft(SEED, 200))),
        ("conv primitives agree", Box::new(|| checks::conv_primitives_agree(SEED, 100))),
        ("sliding-window equivalence", Box::new(|| checks::sliding_window_equivalence(SEED))),
        ("memory model fidelity", Box::new(|| checks::memory_model_fidelity(SEED, 20))),
        ("pruned FFT cost", Box::new(checks::pruned_fft_cost)),
        ("batch 1 dominates", Box::new(|| checks::batch_one_dominates(n726, 600))),
        ("planner matches exhaustive search", Box::new(|| checks::planner_matches_exhaustive(SEED, 20, 32))),
        ("pipeline overlap", Box::new(|| checks::pipeline_overlap(32, 12, 6, SEED))),
        ("fragments beat plain pooling", Box::new(|| checks::fragments_beat_plain(&nets, 1 << 32, 48))),
        ("throughput grows with extent", Box::new(|| checks::throughput_grows_with_extent(SEED))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let r = check();
        let secs = t.elapsed().as_secs_f64();
        failed += usize::from(!r.passed);
        println!(
            "criterion {}: {} - {name}: {} [{secs:.1}s]",
            i + 1,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 && std::env::var_os("SWCONV_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
