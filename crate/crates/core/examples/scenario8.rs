//! Single-type Gaussian and Poisson designs at several overdispersion levels.
//!
//! cargo run --release --example scenario8 -- [replicates]

use overgfm::cli::benchmark::{estimate_overgfm, Estimate};
use overgfm::{generate_dataset, FitConfig, SimSpec};

fn summary(rows: &[Estimate]) -> (f64, f64, f64) {
    let k = rows.len() as f64;
    let h = rows.iter().map(|e| e.tr_h).sum::<f64>() / k;
    let g = rows.iter().map(|e| e.tr_gamma).sum::<f64>() / k;
    let sd = (rows.iter().map(|e| (e.tr_h - h).powi(2)).sum::<f64>() / (k - 1.0).max(1.0)).sqrt();
    (h, sd, g)
}

fn main() -> overgfm::Result<()> {
    let reps: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("replicates"))
        .unwrap_or(5);
    println!("design    sigma2  Tr_H    sd(Tr_H)  Tr_Gamma");
    for (name, make) in [
        (
            "gaussian",
            SimSpec::scenario8_gaussian as fn(f64, u64) -> SimSpec,
        ),
        ("poisson", SimSpec::scenario8_poisson),
    ] {
        for sigma2 in [0.0, 0.5, 1.0] {
            let mut rows = Vec::new();
            for seed in 1..=reps {
                let sim = generate_dataset(&make(sigma2, seed))?;
                rows.push(estimate_overgfm(&sim, &FitConfig::new(6))?);
            }
            let (h, sd, g) = summary(&rows);
            println!("{name:<9} {sigma2:<6}  {h:.4}  {sd:.1e}   {g:.4}");
        }
    }
    Ok(())
}
