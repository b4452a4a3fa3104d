//! Value-distribution fits for weight matrices.
//!
//! The Student-t fit is a profile likelihood over a fixed grid of degrees of
//! freedom `{1, …, 30, ∞}`. Location is the sample mean. For `ν > 2` the scale
//! matches the sample variance (`s² = var·(ν−2)/ν`); for `ν ≤ 2`, where the
//! variance does not exist, it matches the 75th percentile of `|x − mean|`
//! instead. `ν = ∞` is the Gaussian with the sample standard deviation.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAX_FINITE_DOF: u32 = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistributionFit {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub gaussian_std: f64,
    /// Best degrees of freedom on the grid; `f64::INFINITY` for the Gaussian limit.
    pub student_t_dof: f64,
    pub student_t_scale: f64,
}

pub fn distribution_diagnostics(m: &Matrix) -> Result<DistributionFit> {
    let xs = m.as_slice();
    let n = xs.len();
    if n < 2 {
        return Err(Error::InvalidArgument("distribution fit needs at least 2 entries".into()));
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    if std == 0.0 {
        return Ok(DistributionFit {
            mean,
            gaussian_std: 0.0,
            student_t_dof: f64::INFINITY,
            student_t_scale: 0.0,
        });
    }

    let mut abs_dev: Vec<f64> = xs.iter().map(|x| (x - mean).abs()).collect();
    let q75 = {
        let idx = ((n - 1) as f64 * 0.75).round() as usize;
        let (_, v, _) = abs_dev.select_nth_unstable_by(idx, |a, b| a.partial_cmp(b).expect("finite"));
        *v
    };

    let mut best_dof = f64::INFINITY;
    let mut best_scale = std;
    let mut best_ll = gaussian_log_likelihood(xs, mean, std);
    for dof in 1..=MAX_FINITE_DOF {
        let nu = f64::from(dof);
        let scale = if dof > 2 {
            std * ((nu - 2.0) / nu).sqrt()
        } else {
            let t = StudentsT::new(0.0, 1.0, nu).expect("valid dof");
            q75 / t.inverse_cdf(0.75)
        };
        if !(scale > 0.0) {
            continue;
        }
        let ll = t_log_likelihood(xs, mean, scale, nu);
        if ll > best_ll {
            best_ll = ll;
            best_dof = nu;
            best_scale = scale;
        }
    }
    Ok(DistributionFit {
        mean,
        gaussian_std: std,
        student_t_dof: best_dof,
        student_t_scale: best_scale,
    })
}

fn gaussian_log_likelihood(xs: &[f64], mean: f64, std: f64) -> f64 {
    let c = -0.5 * (2.0 * std::f64::consts::PI).ln() - std.ln();
    xs.iter().map(|x| c - 0.5 * ((x - mean) / std).powi(2)).sum()
}

fn t_log_likelihood(xs: &[f64], mean: f64, scale: f64, nu: f64) -> f64 {
    let c = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln() - scale.ln();
    xs.iter()
        .map(|x| {
            let z = (x - mean) / scale;
            c - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
        })
        .sum()
}
