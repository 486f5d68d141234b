//! Cox proportional-hazards regression by Newton-Raphson on the Breslow
//! partial likelihood.

use super::dist::chi_square_sf;
use super::km::TotalCmp;
use super::linalg::Cholesky;
use super::SurvivalDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxFitOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub relative_loglik_tolerance: f64,
    /// Relative pivot size below which a covariate is treated as collinear.
    pub alias_tolerance: f64,
    /// |beta_j| * sd(x_j) beyond this flags a diverging (separated) coefficient.
    pub separation_threshold: f64,
    /// A coefficient whose pending Newton step still exceeds this fraction of
    /// its size at convergence is drifting to infinity.
    pub infinite_step_tolerance: f64,
}

impl Default for CoxFitOptions {
    fn default() -> Self {
        CoxFitOptions {
            max_iterations: 100,
            gradient_tolerance: 1e-8,
            relative_loglik_tolerance: 1e-10,
            alias_tolerance: 1e-9,
            separation_threshold: 20.0,
            infinite_step_tolerance: 3e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit<T> {
    pub coefficients: Vec<T>,
    pub std_errors: Vec<T>,
    /// Covariates dropped as linear combinations of earlier ones (coefficient 0).
    pub aliased: Vec<bool>,
    /// Breslow partial log-likelihood at `coefficients`.
    pub log_likelihood: T,
    /// Partial log-likelihood at beta = 0.
    pub null_log_likelihood: T,
    pub converged: bool,
    pub iterations: usize,
    pub n_obs: usize,
    pub n_events: usize,
}

impl<T: Scalar> CoxFit<T> {
    pub fn n_estimated(&self) -> usize {
        self.aliased.iter().filter(|a| !**a).count()
    }

    /// Linear predictor x . beta for one covariate row (aliased terms are 0).
    pub fn linear_predictor(&self, row: &[T]) -> T {
        row.iter().zip(&self.coefficients).map(|(&x, &b)| x * b).sum()
    }
}

/// Breslow partial log-likelihood of linear predictors `eta`: ties share one
/// risk set `{j : t_j >= t_i}`.
pub fn cox_partial_log_likelihood<T: Scalar>(times: &[T], events: &[bool], eta: &[T]) -> T {
    let order = descending_time(times);
    let m = eta.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s0 = T::zero();
    let mut ll = T::zero();
    for_each_time_group(&order, times, |group| {
        for &i in group {
            s0 += (eta[i] - m).exp();
        }
        for &i in group.iter().filter(|&&i| events[i]) {
            ll += eta[i] - m - s0.ln();
        }
    });
    ll
}

fn descending_time<T: Scalar>(times: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[b].total_cmp_value(&times[a]));
    order
}

fn for_each_time_group<T: Scalar>(order: &[usize], times: &[T], mut f: impl FnMut(&[usize])) {
    let mut g = 0;
    while g < order.len() {
        let mut h = g;
        while h < order.len() && times[order[h]] == times[order[g]] {
            h += 1;
        }
        f(&order[g..h]);
        g = h;
    }
}

struct Derivatives<T> {
    loglik: T,
    gradient: Vec<T>,
    information: Vec<T>,
}

struct Problem<'a, T> {
    times: &'a [T],
    events: &'a [bool],
    /// Centered covariates, row-major n x p.
    x: Vec<T>,
    p: usize,
    order: Vec<usize>,
}

impl<T: Scalar> Problem<'_, T> {
    fn derivatives(&self, beta: &[T]) -> Derivatives<T> {
        let (n, p) = (self.times.len(), self.p);
        let eta: Vec<T> = (0..n)
            .map(|i| (0..p).map(|j| self.x[i * p + j] * beta[j]).sum())
            .collect();
        let m = eta.iter().copied().fold(T::neg_infinity(), T::max);
        let mut s0 = T::zero();
        let mut s1 = vec![T::zero(); p];
        let mut s2 = vec![T::zero(); p * p];
        let mut out = Derivatives {
            loglik: T::zero(),
            gradient: vec![T::zero(); p],
            information: vec![T::zero(); p * p],
        };
        for_each_time_group(&self.order, self.times, |group| {
            for &i in group {
                let w = (eta[i] - m).exp();
                let xi = &self.x[i * p..(i + 1) * p];
                s0 += w;
                for a in 0..p {
                    s1[a] += w * xi[a];
                    for b in 0..p {
                        s2[a * p + b] += w * xi[a] * xi[b];
                    }
                }
            }
            for &i in group.iter().filter(|&&i| self.events[i]) {
                out.loglik += eta[i] - m - s0.ln();
                for a in 0..p {
                    let mean_a = s1[a] / s0;
                    out.gradient[a] += self.x[i * p + a] - mean_a;
                    for b in 0..p {
                        out.information[a * p + b] += s2[a * p + b] / s0 - mean_a * (s1[b] / s0);
                    }
                }
            }
        });
        out
    }
}

fn restrict<T: Scalar>(matrix: &[T], p: usize, active: &[usize]) -> Vec<T> {
    active
        .iter()
        .flat_map(|&a| active.iter().map(move |&b| matrix[a * p + b]))
        .collect()
}

pub fn cox_fit<T: Scalar>(ds: &SurvivalDataset<T>) -> Result<CoxFit<T>> {
    cox_fit_with(ds, CoxFitOptions::default())
}

pub fn cox_fit_with<T: Scalar>(ds: &SurvivalDataset<T>, opts: CoxFitOptions) -> Result<CoxFit<T>> {
    ds.require_events("Cox fit")?;
    let n = ds.len();
    let p = ds.n_covariates();
    let rows: &[Vec<T>] = if p == 0 { &[] } else { ds.covariates()? };

    let mut x = vec![T::zero(); n * p];
    let mut sd = vec![T::zero(); p];
    for j in 0..p {
        let mean = rows.iter().map(|r| r[j]).sum::<T>() / T::from_count(n);
        for i in 0..n {
            x[i * p + j] = rows[i][j] - mean;
        }
        let ss: T = (0..n).map(|i| x[i * p + j] * x[i * p + j]).sum();
        sd[j] = (ss / T::from_count(n.max(2) - 1)).sqrt();
    }
    let problem = Problem {
        times: ds.times(),
        events: ds.events(),
        x,
        p,
        order: descending_time(ds.times()),
    };

    let mut beta = vec![T::zero(); p];
    let mut d = problem.derivatives(&beta);
    let null_ll = d.loglik;
    let aliased = Cholesky::factor(&d.information, p, T::lit(opts.alias_tolerance)).aliased;
    let active: Vec<usize> = (0..p).filter(|&j| !aliased[j]).collect();

    let grad_tol = T::lit(opts.gradient_tolerance);
    let rel_tol = T::lit(opts.relative_loglik_tolerance);
    let mut converged = active.is_empty();
    let mut iterations = 0;
    while !converged && iterations < opts.max_iterations {
        if active.iter().all(|&j| d.gradient[j].abs() < grad_tol) {
            converged = true;
            break;
        }
        iterations += 1;
        let chol = Cholesky::factor(&restrict(&d.information, p, &active), active.len(), T::lit(1e-14));
        let g: Vec<T> = active.iter().map(|&j| d.gradient[j]).collect();
        let mut step = chol.solve(&g);

        let mut candidate = beta.clone();
        let mut next;
        let mut halvings = 0;
        loop {
            for (k, &j) in active.iter().enumerate() {
                candidate[j] = beta[j] + step[k];
            }
            next = problem.derivatives(&candidate);
            if next.loglik.is_finite() && next.loglik >= d.loglik || halvings >= 30 {
                break;
            }
            step.iter_mut().for_each(|s| *s = *s * T::lit(0.5));
            halvings += 1;
        }
        if !next.loglik.is_finite() {
            return Err(Error::Numerical {
                path: "cox_fit".into(),
                message: "partial log-likelihood became non-finite".into(),
            });
        }
        let change = (next.loglik - d.loglik).abs();
        let scale = d.loglik.abs().max(T::min_positive_value());
        beta = candidate;
        d = next;
        if change / scale < rel_tol {
            converged = true;
        }
    }

    let mut std_errors = vec![T::nan(); p];
    let mut pending = vec![T::zero(); p];
    if !active.is_empty() {
        let chol = Cholesky::factor(&restrict(&d.information, p, &active), active.len(), T::lit(1e-14));
        let g: Vec<T> = active.iter().map(|&j| d.gradient[j]).collect();
        for (k, (v, step)) in chol.inverse_diagonal().into_iter().zip(chol.solve(&g)).enumerate() {
            std_errors[active[k]] = v.sqrt();
            pending[active[k]] = step;
        }
    }
    let inf_tol = T::lit(opts.infinite_step_tolerance);
    let diverging = |j: usize| {
        (beta[j] * sd[j]).abs() > T::lit(opts.separation_threshold)
            || (pending[j].abs() > T::lit(1e-2) && pending[j].abs() > inf_tol * beta[j].abs())
    };
    if let Some(j) = active.iter().copied().find(|&j| diverging(j)) {
        return Err(Error::MonotoneLikelihood { covariate: j });
    }
    if !converged {
        return Err(Error::Convergence { iterations });
    }
    Ok(CoxFit {
        coefficients: beta,
        std_errors,
        aliased,
        log_likelihood: d.loglik,
        null_log_likelihood: null_ll,
        converged,
        iterations,
        n_obs: n,
        n_events: ds.n_events(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodRatio<T> {
    pub chi_square: T,
    pub p_value: T,
    pub df: usize,
}

/// LRT for nested fits on the same data: chi2 = 2 (ll_full - ll_reduced).
pub fn likelihood_ratio_test<T: Scalar>(
    full: &CoxFit<T>,
    reduced: &CoxFit<T>,
    df_added: usize,
) -> Result<LikelihoodRatio<T>> {
    if !(full.converged && reduced.converged) {
        return Err(Error::Precondition("both fits must have converged".into()));
    }
    let same_null = (full.null_log_likelihood - reduced.null_log_likelihood).abs()
        <= T::lit(1e-8) * (T::one() + full.null_log_likelihood.abs());
    if full.n_obs != reduced.n_obs || full.n_events != reduced.n_events || !same_null {
        return Err(Error::Contract("fits were not computed on the same dataset".into()));
    }
    let diff = full.log_likelihood - reduced.log_likelihood;
    if diff < T::lit(-1e-6) {
        return Err(Error::NestingViolation {
            full: full.log_likelihood.to_f64_value(),
            reduced: reduced.log_likelihood.to_f64_value(),
        });
    }
    let chi = (T::lit(2.0) * diff).max(T::zero());
    Ok(LikelihoodRatio {
        chi_square: chi,
        p_value: T::lit(chi_square_sf(chi.to_f64_value(), df_added)),
        df: df_added,
    })
}
