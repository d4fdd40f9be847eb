//! Drive the variational EM by hand and compare the guarded and raw E-step.
//!
//! cargo run --release --example step_by_step -- [seed]

use overgfm::{generate_dataset, FitConfig, FitState, SimSpec};

fn run(sim: &overgfm::SimulatedDataset, guard: bool, steps: usize) -> overgfm::Result<Vec<f64>> {
    let mut cfg = FitConfig::new(3);
    cfg.guard_estep = guard;
    let mut state = FitState::new(&sim.dataset, &cfg)?;
    let mut trace = vec![state.elbo()];
    for _ in 0..steps {
        trace.push(state.step()?);
    }
    Ok(trace)
}

fn main() -> overgfm::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map_or(2, |s| s.parse().expect("seed"));
    let sim = generate_dataset(&SimSpec::three_types(
        150,
        60,
        3,
        [0.3, 0.3, 0.5],
        1.5,
        seed,
    ))?;
    let guarded = run(&sim, true, 15)?;
    let raw = run(&sim, false, 15)?;
    println!("iter  guarded           raw");
    for (t, (g, r)) in guarded.iter().zip(&raw).enumerate() {
        let mark = if t > 0 && *r < raw[t - 1] {
            "  <- decrease"
        } else {
            ""
        };
        println!("{t:>4}  {g:>16.6}  {r:>16.6}{mark}");
    }
    Ok(())
}
