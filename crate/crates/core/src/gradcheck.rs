//! Central finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub op_name: String,
    pub max_rel_error: f64,
    pub element_count: usize,
    pub passed: bool,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<28} {:>5} elements  max rel err {:.3e}  {}",
            self.op_name,
            self.element_count,
            self.max_rel_error,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// Which elements of each input get a numeric probe.
#[derive(Clone, Copy, Debug)]
pub enum Probe {
    All,
    /// At most this many elements per input, chosen with the given seed.
    Sample {
        per_input: usize,
        seed: u64,
    },
}

/// Relative error with the denominator floored at `1e-8`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the tape gradient of the scalar `f` against
/// `(f(x+h) − f(x−h)) / 2h` for every element of every input.
pub fn grad_check<F>(name: &str, f: F, inputs: &[Tensor], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    grad_check_with(name, f, inputs, h, tol, Probe::All)
}

pub fn grad_check_with<F>(
    name: &str,
    f: F,
    inputs: &[Tensor],
    h: f64,
    tol: f64,
    probe: Probe,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-4).contains(&h) {
        return Err(Error::Config(format!(
            "finite-difference step {h} outside [1e-7, 1e-4]"
        )));
    }
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars).map_err(|e| Error::Evaluation(format!("{name}: {e}")))?;
        let v = g.scalar_value(out)?;
        if !v.is_finite() {
            return Err(Error::Evaluation(format!("{name}: non-finite objective")));
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &vars).map_err(|e| Error::Evaluation(format!("{name}: {e}")))?;
    if !g.scalar_value(out)?.is_finite() {
        return Err(Error::Evaluation(format!("{name}: non-finite objective")));
    }
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| {
            g.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; g.value(v).numel()])
        })
        .collect();

    let mut rng = match probe {
        Probe::Sample { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Probe::All => None,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut max_rel: f64 = 0.0;
    let mut count = 0;
    for (k, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let indices: Vec<usize> = match (probe, rng.as_mut()) {
            (Probe::Sample { per_input, .. }, Some(rng)) if per_input < n => {
                let mut idx = sample(rng, n, per_input).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..n).collect(),
        };
        for j in indices {
            let orig = input.data()[j];
            work[k].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[k].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[k].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            max_rel = max_rel.max(relative_error(analytic[k][j], numeric));
            count += 1;
        }
    }
    Ok(GradCheckReport {
        op_name: name.to_string(),
        max_rel_error: max_rel,
        element_count: count,
        passed: max_rel <= tol,
    })
}
