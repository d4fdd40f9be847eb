//! Simulate a three-type dataset, fit it, and compare against the truth.
//!
//! cargo run --release --example simulate_and_fit -- [n] [p] [sigma2] [seed]

use overgfm::{
    fit, fit_lfm, generate_dataset, trace_statistic, trace_statistic_upsilon, FitConfig, SimSpec,
};

fn main() -> overgfm::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |k: usize, default: &str| args.get(k).cloned().unwrap_or_else(|| default.to_string());
    let n: usize = arg(0, "300").parse().expect("n");
    let p: usize = arg(1, "300").parse().expect("p");
    let sigma2: f64 = arg(2, "0.5").parse().expect("sigma2");
    let seed: u64 = arg(3, "1").parse().expect("seed");

    let sim = generate_dataset(&SimSpec::scenario1(n, p, sigma2, seed))?;
    let result = fit(&sim.dataset, &FitConfig::new(6))?;

    println!("iter  elbo");
    for (t, v) in result.elbo_trace.iter().enumerate() {
        println!("{t:>4}  {v:.6}");
    }
    let drops = result
        .elbo_trace
        .windows(2)
        .filter(|w| w[1] < w[0] - 1e-10 * w[0].abs())
        .count();
    println!(
        "converged: {}, iterations: {}, ELBO decreases: {drops}",
        result.converged, result.iterations
    );

    let p_hat = &result.params;
    let tr_h = trace_statistic(&p_hat.factors, &sim.h0)?;
    let tr_g = trace_statistic_upsilon(&p_hat.loadings, &p_hat.intercepts, &sim.b0, &sim.mu0)?;
    let lfm = fit_lfm(sim.dataset.x(), 6)?;
    let lfm_h = trace_statistic(&lfm.factors, &sim.h0)?;
    let lfm_g = trace_statistic_upsilon(&lfm.loadings, &lfm.intercepts, &sim.b0, &sim.mu0)?;
    println!("method   Tr_H    Tr_Gamma");
    println!("OverGFM  {tr_h:.4}  {tr_g:.4}");
    println!("LFM      {lfm_h:.4}  {lfm_g:.4}");
    Ok(())
}
