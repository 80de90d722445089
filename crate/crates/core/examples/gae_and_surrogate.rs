//! Generalised advantage estimation on a toy trajectory and the shape of
//! the clipped surrogate.

use diplomat::training::{clipped_surrogate, compute_gae, normalize_advantages};

fn main() -> diplomat::Result<()> {
    let rewards = [0.0, -0.01, -0.01, 0.6, 0.0, -0.02, 0.0];
    let values = [0.3, 0.35, 0.4, 0.5, 0.1, 0.05, 0.0];
    let dones = [false, false, false, true, false, false, true];
    let (adv, ret) = compute_gae(&rewards, &values, &dones, 0.0, 0.99, 0.95)?;
    println!("step reward  value    adv    return");
    for t in 0..rewards.len() {
        println!("{t:>4} {:>6.2} {:>6.2} {:>6.3} {:>8.3}", rewards[t], values[t], adv[t], ret[t]);
    }
    println!("normalised: {:.3?}", normalize_advantages(&adv));

    println!("\nratio  L(A=+1)  L(A=-1)");
    for r in [0.5, 0.8, 1.0, 1.2, 1.5] {
        println!("{r:>5.1} {:>8.2} {:>8.2}", clipped_surrogate(r, 1.0, 0.2), clipped_surrogate(r, -1.0, 0.2));
    }
    Ok(())
}
