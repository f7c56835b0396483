use star_isac::driver::{optimize, Scheme};
use star_isac::scenario::Scenario;

fn main() -> star_isac::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let sc = Scenario { seed, ..Scenario::desk() };
    println!("{:<22} {:>12} {:>9} {:>6} {:>10}", "scheme", "gamma_bs", "dB", "iters", "Tr(W0)");
    for scheme in Scheme::ALL {
        let r = optimize(&sc, scheme)?;
        println!(
            "{:<22} {:>12.6e} {:>9.3} {:>6} {:>10.2e}",
            scheme.name(),
            r.gamma,
            r.gamma_db(),
            r.outer_iters,
            r.trace_w0
        );
    }
    Ok(())
}
