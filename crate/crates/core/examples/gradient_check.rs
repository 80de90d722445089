//! Reverse-mode gradients of every graph op against central differences.

use diplomat::numerics::gradcheck::op_cases;

fn main() -> diplomat::Result<()> {
    let mut worst: f64 = 0.0;
    for case in op_cases() {
        let err = (0..5).map(|s| case.max_error(s)).collect::<diplomat::Result<Vec<_>>>()?;
        let max = err.iter().copied().fold(0.0, f64::max);
        worst = worst.max(max);
        let verdict = if max <= case.tol { "ok" } else { "FAIL" };
        println!("{:<16} max rel err {max:.2e} (tol {:.0e}) {verdict}", case.name, case.tol);
    }
    println!("worst {worst:.2e}");
    Ok(())
}
