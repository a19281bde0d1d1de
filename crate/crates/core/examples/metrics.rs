//! Scores a handful of predictions and prints the full metric report.

use pemvc::metrics::{metrics_report, roc_auc};

fn main() -> pemvc::Result<()> {
    let scores = [0.91, 0.80, 0.74, 0.62, 0.55, 0.48, 0.40, 0.33, 0.21, 0.10];
    let labels = [1, 1, 0, 1, 1, 0, 0, 1, 0, 0];

    // ties count half a concordant pair
    let tied = roc_auc(&[0.5, 0.5, 0.7], &[0, 1, 1])?;
    println!("AUROC with a tie: {tied:?}");
    println!("AUROC, one class only: {:?}", roc_auc(&[0.1, 0.2], &[1, 1])?);

    let report = metrics_report(&scores, &labels)?.tagged("demo", "test", Some(1));
    println!("{}", report.to_json_line());
    let c = report.confusion();
    println!("tp {} fp {} tn {} fn {} at threshold {}", c.tp, c.fp, c.tn, c.fn_, report.threshold);
    Ok(())
}
