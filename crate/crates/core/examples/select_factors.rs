//! Choose the number of factors by the singular value ratio of the loadings
//! fitted with a generous upper bound.
//!
//! cargo run --release --example select_factors -- [sigma2] [replicates]

use overgfm::selectq::DEFAULT_Q_MAX;
use overgfm::{generate_dataset, select_num_factors, FitConfig, SimSpec};

fn main() -> overgfm::Result<()> {
    let mut args = std::env::args().skip(1);
    let sigma2: f64 = args
        .next()
        .map(|s| s.parse().expect("sigma2"))
        .unwrap_or(0.1);
    let reps: u64 = args
        .next()
        .map(|s| s.parse().expect("replicates"))
        .unwrap_or(3);

    let mut hits = 0;
    for seed in 1..=reps {
        let sim = generate_dataset(&SimSpec::scenario1(300, 300, sigma2, seed))?;
        let report =
            select_num_factors(&sim.dataset, DEFAULT_Q_MAX, &FitConfig::new(DEFAULT_Q_MAX))?;
        let head: Vec<String> = report
            .ratios
            .iter()
            .take(8)
            .map(|r| match r {
                Some(v) => format!("{v:.2}"),
                None => "NA".into(),
            })
            .collect();
        println!(
            "seed {seed}: q_hat = {}  ratios = [{} ...]",
            report.q_hat,
            head.join(", ")
        );
        hits += (report.q_hat == 6) as u32;
    }
    println!("q_hat = 6 in {hits} of {reps} replicates");
    Ok(())
}
