//! Central finite-difference verification of reverse-mode gradients.

use crate::autograd::{Fault, Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub eps: f64,
    /// Upper bound on probed coordinates per input; `None` probes all of them.
    pub max_coords: Option<usize>,
    pub fault: Option<Fault>,
    /// Coordinates whose one-sided differences disagree by more than this
    /// (relative to `max(1, |central|)`) straddle a kink and are skipped.
    pub kink_tol: Option<f64>,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_coords: None,
            fault: None,
            kink_tol: Some(1e-3),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    /// (input, flat coordinate) where the worst error occurred
    pub worst: (usize, usize),
    pub probed: usize,
    /// Probes dropped as non-smooth.
    pub skipped: usize,
}

impl GradReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// `|a − b| / max(|a|, |b|, 1e−8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

impl GradCheck {
    /// Compares the tape gradient of the scalar `f(inputs)` against central
    /// differences for every (or a strided subset of) input coordinate.
    pub fn run<F>(&self, inputs: &[Tensor<f64>], f: F) -> Result<GradReport>
    where
        F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
    {
        let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
            let out = f(&mut tape, &vars)?;
            Ok(tape.value(out).data()[0])
        };

        let mut tape = Tape::new();
        if let Some(fault) = self.fault {
            tape.inject_fault(fault);
        }
        let vars: Vec<Var> = inputs
            .iter()
            .map(|x| tape.leaf(x.clone().with_requires_grad()))
            .collect();
        let loss = f(&mut tape, &vars)?;
        tape.backward(loss)?;

        let mut report = GradReport {
            max_rel_error: 0.0,
            worst: (0, 0),
            probed: 0,
            skipped: 0,
        };
        let centre = tape.value(loss).data()[0];
        let mut probe = inputs.to_vec();
        for (i, &v) in vars.iter().enumerate() {
            let n = inputs[i].numel();
            let zeros = vec![0.0; n];
            let analytic = tape.grad(v).unwrap_or(&zeros).to_vec();
            let step = match self.max_coords {
                Some(m) if m < n => n.div_ceil(m),
                _ => 1,
            };
            for j in (0..n).step_by(step) {
                let orig = inputs[i].data()[j];
                probe[i].data_mut()[j] = orig + self.eps;
                let plus = eval(&probe)?;
                probe[i].data_mut()[j] = orig - self.eps;
                let minus = eval(&probe)?;
                probe[i].data_mut()[j] = orig;
                let numeric = (plus - minus) / (2.0 * self.eps);
                if let Some(tol) = self.kink_tol {
                    let right = (plus - centre) / self.eps;
                    let left = (centre - minus) / self.eps;
                    if (right - left).abs() > tol * numeric.abs().max(1.0) {
                        report.skipped += 1;
                        continue;
                    }
                }
                let err = relative_error(analytic[j], numeric);
                report.probed += 1;
                if err > report.max_rel_error || err.is_nan() {
                    report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                    report.worst = (i, j);
                }
            }
        }
        Ok(report)
    }
}

/// `Σ out ⊙ w` with fixed pseudo-random weights, turning any tensor into a
/// scalar whose gradient exercises every output element differently.
pub fn weighted_sum(tape: &mut Tape<f64>, out: Var, salt: u64) -> Result<Var> {
    let shape = tape.shape(out).to_vec();
    let w = Tensor::from_fn(shape, |i| {
        let h = (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        ((h >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    });
    let wv = tape.constant(w);
    let p = tape.mul(out, wv)?;
    tape.sum(p)
}

/// [`weighted_sum`] divided by the element count. Keeps the objective O(1)
/// for wide outputs so the difference quotient's roundoff stays small next
/// to the relative-error floor.
pub fn weighted_mean(tape: &mut Tape<f64>, out: Var, salt: u64) -> Result<Var> {
    let n = tape.value(out).numel() as f64;
    let s = weighted_sum(tape, out, salt)?;
    tape.scale(s, 1.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 2e-9) - 0.1).abs() < 1e-12);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn detects_corrupted_matmul_adjoint() {
        let a = Tensor::from_fn(vec![2, 3], |i| (i as f64 * 0.7).sin());
        let b = Tensor::from_fn(vec![3, 2], |i| (i as f64 * 1.3).cos());
        let f = |t: &mut Tape<f64>, v: &[Var]| {
            let c = t.matmul(v[0], v[1])?;
            weighted_sum(t, c, 1)
        };
        let ok = GradCheck::default().run(&[a.clone(), b.clone()], f).unwrap();
        assert!(ok.passes(1e-4), "{ok:?}");
        let bad = GradCheck {
            fault: Some(Fault::MatmulAdjoint),
            ..GradCheck::default()
        }
        .run(&[a, b], f)
        .unwrap();
        assert!(!bad.passes(1e-4));
    }

    #[test]
    fn probe_across_a_kink_is_skipped() {
        let x = Tensor::new(vec![2], vec![0.0, 0.5]).unwrap();
        let f = |t: &mut Tape<f64>, v: &[Var]| {
            let r = t.relu(v[0])?;
            t.sum(r)
        };
        let r = GradCheck::default().run(&[x.clone()], f).unwrap();
        assert_eq!((r.probed, r.skipped), (1, 1));
        assert!(r.passes(1e-4));
        let strict = GradCheck {
            kink_tol: None,
            ..GradCheck::default()
        };
        assert!(!strict.run(&[x], f).unwrap().passes(1e-4));
    }
}
