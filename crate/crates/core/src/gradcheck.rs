//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::rng;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Checks at most this many coordinates per parameter (chosen by `seed`).
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            max_coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub coords_checked: usize,
}

/// Compares the tape gradient of a scalar function of `store` against
/// central differences. Error per coordinate is
/// `|analytic − numeric| / max(1, |numeric|)`; the maximum is reported.
pub fn grad_check<F>(store: &ParamStore, f: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = f(&mut g, store)?;
    let base = g.value(out).item();
    if !base.is_finite() {
        return Err(Error::NonFinite("grad_check objective at the base point".into()));
    }
    let grads = g.backward(out)?;
    let analytic: std::collections::HashMap<String, crate::Tensor2> = g.param_gradients(&grads).into_iter().collect();

    let eval = |s: &ParamStore, name: &str| -> Result<f64> {
        let mut g = Graph::new();
        let out = f(&mut g, s)?;
        let v = g.value(out).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("grad_check objective perturbing `{name}`")))
        }
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        coords_checked: 0,
    };
    let mut probe = store.clone();
    let mut rng = rng::stream(opts.seed, &[0x6772_6164]);
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in &names {
        let len = store.value(name)?.data().len();
        let coords: Vec<usize> = match opts.max_coords_per_param {
            Some(k) if k < len => {
                let mut c = sample(&mut rng, len, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..len).collect(),
        };
        for idx in coords {
            let orig = store.value(name)?.data()[idx];
            probe.value_mut(name)?.data_mut()[idx] = orig + opts.step;
            let plus = eval(&probe, name)?;
            probe.value_mut(name)?.data_mut()[idx] = orig - opts.step;
            let minus = eval(&probe, name)?;
            probe.value_mut(name)?.data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic.get(name).map_or(0.0, |t| t.data()[idx]);
            let err = (a - numeric).abs() / numeric.abs().max(1.0);
            report.coords_checked += 1;
            if report.worst_param.is_empty() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = idx;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor2;

    #[test]
    fn linear_function_is_exact() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor2::row_vector(&[0.3, -1.2, 2.0]));
        let report = grad_check(
            &s,
            |g, s| {
                let w = g.param(s, "w")?;
                let c = g.constant(Tensor2::row_vector(&[1.0, 2.0, -3.0]));
                let y = g.mul(w, c)?;
                Ok(g.sum(y))
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-10, "{report:?}");
        assert_eq!(report.coords_checked, 3);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // The constant path hides the dependence on `w`, so the tape sees zero.
        let mut s = ParamStore::new();
        s.insert("w", Tensor2::scalar(2.0));
        let report = grad_check(
            &s,
            |g, s| {
                let v = s.value("w")?.item();
                let _ = g.param(s, "w")?;
                Ok(g.constant(Tensor2::scalar(v * v)))
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error > 0.5);
        assert_eq!(report.worst_param, "w");
    }

    #[test]
    fn non_finite_objective_names_parameter() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor2::scalar(0.0));
        let err = grad_check(
            &s,
            |g, s| {
                let v = s.value("w")?.item();
                let _ = g.param(s, "w")?;
                let out = if v > 0.0 { f64::INFINITY } else { 0.0 };
                Ok(g.constant(Tensor2::scalar(out)))
            },
            &GradCheckOptions::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("`w`"), "{err}");
    }
}
