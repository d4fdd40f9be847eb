//! Seconds per EM iteration as n and p double.
//!
//! cargo run --release --example timing -- [iterations]

use std::time::Instant;

use overgfm::{generate_dataset, FitConfig, FitState, SimSpec};

fn main() -> overgfm::Result<()> {
    let iters: usize = std::env::args()
        .nth(1)
        .map_or(5, |s| s.parse().expect("iterations"));
    println!("   n     p  sec/iter");
    let grid = [250, 500, 1000];
    let designs = grid
        .iter()
        .map(|&n| (n, 300))
        .chain(grid.iter().map(|&p| (1000, p)));
    for (n, p) in designs {
        let sim = generate_dataset(&SimSpec::scenario1(n, p, 0.5, 1))?;
        let mut state = FitState::new(&sim.dataset, &FitConfig::new(6))?;
        let start = Instant::now();
        for _ in 0..iters {
            state.step()?;
        }
        println!(
            "{n:>5} {p:>5}  {:.4}",
            start.elapsed().as_secs_f64() / iters as f64
        );
    }
    Ok(())
}
