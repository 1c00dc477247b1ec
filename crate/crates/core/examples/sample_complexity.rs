//! How many local ratings a party needs before its empirically best mask
//! is within epsilon of the best in a finite class, checked by simulation.

use fedmmf::localmask::{sample_complexity_bound, theorem1_monte_carlo};

fn main() -> fedmmf::Result<()> {
    println!("|F|   eps   delta  bound");
    for (f, eps, delta) in [(8, 0.2, 0.1), (8, 0.1, 0.1), (64, 0.2, 0.1), (8, 0.2, 0.01)] {
        println!(
            "{f:<5} {eps:<5} {delta:<6} {:.1}",
            sample_complexity_bound(f, eps, delta)?
        );
    }
    for p in [0.1, 0.5, 0.8] {
        let outcome = theorem1_monte_carlo(8, 0.2, 0.1, p, 10_000, 3)?;
        println!(
            "Bernoulli({p}) ratings, n = {}: success frequency {:.4} (guarantee 0.9)",
            outcome.n_samples,
            outcome.frequency()
        );
    }
    Ok(())
}
