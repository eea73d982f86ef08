//! Analytic gradients of the contrastive loss against central finite differences.

use sarclip::train::GradcheckCase;

fn main() -> sarclip::Result<()> {
    let mut worst = 0f64;
    for seed in 0..20 {
        let case = GradcheckCase::random(seed)?;
        let report = case.check(1e-5)?;
        let m = case.config.model;
        println!(
            "model {seed:>2}: N={} dims {}/{}/{}/{} depth {}  max rel {:.2e}  log tau {:.2e}  {}",
            case.features.rows(),
            m.image_dim,
            m.token_dim,
            m.hidden_dim,
            m.embed_dim,
            m.depth,
            report.max_rel_error,
            report.log_tau_rel_error.unwrap_or(0.0),
            if report.passes(1e-5) { "ok" } else { "FAIL" }
        );
        worst = worst.max(report.max_rel_error);
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}
