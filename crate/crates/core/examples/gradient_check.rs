//! Finite-difference checks of the autodiff tape, for a hand-written
//! function and for the full suite the `gradcheck` command runs.

use cagpool::gradcheck::{finite_diff_check, run_gradcheck, GradcheckOptions, FD_EPS, TOLERANCE};
use cagpool::tensor::{Tape, Tensor, Var};

fn main() -> cagpool::Result<()> {
    // f(W, x) = sum(tanh(x W))
    let f = |tape: &mut Tape, v: &[Var]| {
        let h = tape.matmul(v[1], v[0])?;
        let h = tape.tanh(h)?;
        tape.sum(h)
    };
    let w = Tensor::from_rows(&[[0.5, -1.0], [2.0, 0.25], [-0.3, 0.8]])?;
    let x = Tensor::from_rows(&[[1.0, 0.0, -2.0], [0.5, 1.5, 0.1]])?;
    let err = finite_diff_check(&f, &[w, x], FD_EPS)?;
    println!("sum(tanh(xW)): max relative error {err:.2e}");

    let report = run_gradcheck(&[0, 1, 2], GradcheckOptions::default())?;
    for e in &report.entries {
        println!("{:<28} {:.2e} {}", e.name, e.max_rel_error, if e.passed { "ok" } else { "FAIL" });
    }
    println!("all below {TOLERANCE:.0e}: {}", report.passed());

    let faulty = run_gradcheck(&[0], GradcheckOptions { inject_fault: true })?;
    println!("with a deliberately wrong backward rule: passed = {}", faulty.passed());
    Ok(())
}
