//! Finite-difference check of a small custom graph, then of a few library
//! units. Pass a unit name (or `all`) to pick what the suite runs.

use pemvc::gradcheck::{weighted_sum, GradCheck};
use pemvc::harness::gradsuite::{format_table, run_gradcheck};
use pemvc::Tensor;

fn main() -> pemvc::Result<()> {
    let a = Tensor::<f64>::from_f64(vec![2, 3], &[0.3, -1.2, 0.7, 2.0, -0.4, 0.9])?;
    let b = Tensor::<f64>::from_f64(vec![3, 2], &[1.1, -0.5, 0.2, 0.8, -1.3, 0.6])?;
    let report = GradCheck::default().run(&[a, b], |tape, v| {
        let p = tape.matmul(v[0], v[1])?;
        let s = tape.softmax_rows(p)?;
        weighted_sum(tape, s, 3)
    })?;
    println!("matmul + softmax: max relative error {:.2e} over {} probes", report.max_rel_error, report.probed);

    let scope = std::env::args().nth(1).unwrap_or_else(|| "cmaf".into());
    let results = run_gradcheck(&scope, None)?;
    print!("{}", format_table(&results));
    Ok(())
}
