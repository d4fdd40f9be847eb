//! Variance-to-mean ratios of simulated counts as the latent noise grows,
//! and the per-column variances the model recovers.
//!
//! cargo run --release --example overdispersion

use overgfm::{fit, generate_dataset, vmr, FitConfig, SimSpec, VariableKind};

fn main() -> overgfm::Result<()> {
    println!("sigma2  mean_VMR  mean_lambda_hat");
    for sigma2 in [0.0, 0.25, 0.5, 1.0] {
        let sim = generate_dataset(&SimSpec::single_type(
            300,
            40,
            2,
            VariableKind::Count,
            0.2,
            sigma2,
            7,
        ))?;
        let x = sim.dataset.x();
        let ratios: Vec<f64> = (0..x.ncols())
            .map(|j| vmr(x.column(j).as_slice()))
            .collect::<Result<_, _>>()?;
        let res = fit(&sim.dataset, &FitConfig::new(2))?;
        println!(
            "{sigma2:>6.2}  {:>8.3}  {:>15.4}",
            ratios.iter().sum::<f64>() / ratios.len() as f64,
            res.params.variances.mean()
        );
    }
    Ok(())
}
