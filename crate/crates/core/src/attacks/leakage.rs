use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedsim::ObservedParty;
use crate::mfcore;

/// What an honest-but-curious server sees of one party over two
/// consecutive rounds: the item factors it sent and the gradients it got
/// back, for each of the party's `n` items (ascending item order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageInstance {
    pub q_prev: Vec<Vec<f64>>,
    pub eta_prev: Vec<Vec<f64>>,
    pub q_curr: Vec<Vec<f64>>,
    pub eta_curr: Vec<Vec<f64>>,
    pub gamma: f64,
    pub lambda: f64,
}

/// Ground truth for scoring; never given to the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageTruth {
    pub p_prev: Vec<f64>,
    pub p_curr: Vec<f64>,
    /// The values the party actually fit, one per item.
    pub targets: Vec<f64>,
}

impl LeakageTruth {
    /// The targets as a solver with a positive-rating prior can identify
    /// them: flipped when they sum to a negative value.
    pub fn identifiable_targets(&self) -> Vec<f64> {
        if self.targets.iter().sum::<f64>() < 0.0 {
            self.targets.iter().map(|t| -t).collect()
        } else {
            self.targets.clone()
        }
    }
}

impl LeakageInstance {
    pub fn k(&self) -> usize {
        self.q_prev.first().map_or(0, Vec::len)
    }

    pub fn n_items(&self) -> usize {
        self.q_prev.len()
    }

    pub fn n_unknowns(&self) -> usize {
        2 * self.k() + self.n_items()
    }

    fn validate(&self) -> Result<()> {
        let (k, n) = (self.k(), self.n_items());
        if k == 0 || n == 0 {
            return Err(Error::Empty("leakage instance".into()));
        }
        for rows in [&self.q_prev, &self.eta_prev, &self.q_curr, &self.eta_curr] {
            if rows.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: rows.len(),
                });
            }
            if let Some(bad) = rows.iter().find(|r| r.len() != k) {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: bad.len(),
                });
            }
        }
        Ok(())
    }

    /// Stacked residuals of the two gradient equations per item and the
    /// user update, at `x = [p_prev, p_curr, r_1..r_n]`.
    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let (k, n) = (self.k(), self.n_items());
        let (pp, rest) = x.split_at(k);
        let (pc, r) = rest.split_at(k);
        let mut out = Vec::with_capacity(2 * n * k + k);
        for i in 0..n {
            for (q, eta, p) in [
                (&self.q_prev[i], &self.eta_prev[i], pp),
                (&self.q_curr[i], &self.eta_curr[i], pc),
            ] {
                let e = r[i] - mfcore::dot(q, p);
                out.extend((0..k).map(|j| self.lambda * q[j] - e * p[j] - eta[j]));
            }
        }
        let mut step = vec![0.0; k];
        for i in 0..n {
            let e = r[i] - mfcore::dot(&self.q_curr[i], pp);
            for j in 0..k {
                step[j] += self.lambda * pp[j] - e * self.q_curr[i][j];
            }
        }
        out.extend((0..k).map(|j| pc[j] - pp[j] + self.gamma * step[j]));
        out
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let (k, n) = (self.k(), self.n_items());
        let (pp, rest) = x.split_at(k);
        let (pc, r) = rest.split_at(k);
        let mut jac = DMatrix::zeros(2 * n * k + k, 2 * k + n);
        for i in 0..n {
            for (block, (q, p)) in [(&self.q_prev[i], pp), (&self.q_curr[i], pc)].into_iter().enumerate() {
                let row0 = (2 * i + block) * k;
                let col0 = block * k;
                let e = r[i] - mfcore::dot(q, p);
                for j in 0..k {
                    for m in 0..k {
                        jac[(row0 + j, col0 + m)] = q[m] * p[j] - if j == m { e } else { 0.0 };
                    }
                    jac[(row0 + j, 2 * k + i)] = -p[j];
                }
            }
        }
        let row0 = 2 * n * k;
        for j in 0..k {
            jac[(row0 + j, k + j)] = 1.0;
            for m in 0..k {
                let outer: f64 = self.q_curr.iter().map(|q| q[m] * q[j]).sum();
                let diag = if j == m {
                    self.gamma * self.lambda * n as f64 - 1.0
                } else {
                    0.0
                };
                jac[(row0 + j, m)] = diag + self.gamma * outer;
            }
            for i in 0..n {
                jac[(row0 + j, 2 * k + i)] = -self.gamma * self.q_curr[i][j];
            }
        }
        jac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub starts: usize,
    pub max_iterations: usize,
    /// Residual norm above which the outcome is unresolved.
    pub tolerance: f64,
    /// Random starts draw `p` entries from `[-p_radius, p_radius]`...
    pub p_radius: f64,
    /// ...and ratings from `[r_low, r_high]`.
    pub r_low: f64,
    pub r_high: f64,
    /// Allow joint systems over several items.
    pub multi_item: bool,
    /// The system cannot tell `(p, r)` from `(-p, -r)`. With this set the
    /// solver reports the mirror whose ratings sum to a nonnegative value,
    /// as an adversary who knows ratings are positive would.
    pub positive_ratings: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            starts: 16,
            max_iterations: 500,
            tolerance: 1e-6,
            p_radius: 1.0,
            r_low: -5.0,
            r_high: 5.0,
            multi_item: false,
            positive_ratings: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageStatus {
    /// A zero-residual point with a locally unique solution.
    Resolved,
    /// Zero residual is reached, but along a flat direction or at several
    /// distinct ratings (other than the sign mirror when that is resolved).
    Ambiguous,
    /// No start got the residual below tolerance.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageSolution {
    pub status: LeakageStatus,
    pub ratings: Vec<f64>,
    pub p_prev: Vec<f64>,
    pub p_curr: Vec<f64>,
    pub residual_norm: f64,
    pub converged_starts: usize,
}

/// Solves the leakage system by multi-start Levenberg-Marquardt and keeps
/// the lowest-residual point.
pub fn gradient_leakage_solve<R: Rng>(
    instance: &LeakageInstance,
    options: &SolverOptions,
    rng: &mut R,
) -> Result<LeakageSolution> {
    instance.validate()?;
    if instance.n_items() > 1 && !options.multi_item {
        return Err(Error::InvalidInput(format!(
            "instance has {} items; enable multi_item for joint systems",
            instance.n_items()
        )));
    }
    if options.starts == 0 || options.r_low > options.r_high || options.p_radius < 0.0 {
        return Err(Error::InvalidInput(
            "solver needs at least one start and a nonempty start box".into(),
        ));
    }
    let (k, n) = (instance.k(), instance.n_items());
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut converged: Vec<Vec<f64>> = Vec::new();
    for _ in 0..options.starts {
        let mut x: Vec<f64> = (0..2 * k)
            .map(|_| rng.gen_range(-options.p_radius..=options.p_radius))
            .collect();
        x.extend((0..n).map(|_| rng.gen_range(options.r_low..=options.r_high)));
        let (mut x, norm) = levenberg_marquardt(instance, x, options.max_iterations);
        if options.positive_ratings && x[2 * k..].iter().sum::<f64>() < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
        if norm < options.tolerance {
            converged.push(x[2 * k..].to_vec());
        }
        if best.as_ref().is_none_or(|(b, _)| norm < *b) {
            best = Some((norm, x));
        }
    }
    let (norm, x) = best.expect("at least one start");
    let status = if norm >= options.tolerance {
        LeakageStatus::Unresolved
    } else {
        let sv = instance.jacobian(&x).singular_values();
        let (lo, hi) = sv
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        let spread = converged
            .iter()
            .any(|r| r.iter().zip(&x[2 * k..]).any(|(a, b)| (a - b).abs() > 1e-3));
        if lo <= 1e-7 * hi || spread {
            LeakageStatus::Ambiguous
        } else {
            LeakageStatus::Resolved
        }
    };
    Ok(LeakageSolution {
        status,
        ratings: x[2 * k..].to_vec(),
        p_prev: x[..k].to_vec(),
        p_curr: x[k..2 * k].to_vec(),
        residual_norm: norm,
        converged_starts: converged.len(),
    })
}

fn levenberg_marquardt(instance: &LeakageInstance, x0: Vec<f64>, max_iterations: usize) -> (Vec<f64>, f64) {
    let mut x = DVector::from_vec(x0);
    let mut r = DVector::from_vec(instance.residuals(x.as_slice()));
    let mut jac = instance.jacobian(x.as_slice());
    let mut a = jac.transpose() * &jac;
    let mut g = jac.transpose() * &r;
    let mut mu = 1e-3 * a.diagonal().max().max(1e-12);
    let mut nu = 2.0;
    for _ in 0..max_iterations {
        if r.norm() < 1e-15 || g.amax() < 1e-18 {
            break;
        }
        let damped = &a + DMatrix::identity(a.nrows(), a.ncols()) * mu;
        let Some(chol) = damped.cholesky() else {
            mu *= nu;
            nu *= 2.0;
            continue;
        };
        let h = chol.solve(&(-&g));
        if h.norm() <= 1e-15 * (x.norm() + 1e-15) {
            break;
        }
        let candidate = &x + &h;
        let r_new = DVector::from_vec(instance.residuals(candidate.as_slice()));
        let predicted = 0.5 * h.dot(&(&h * mu - &g));
        let rho = (0.5 * r.norm_squared() - 0.5 * r_new.norm_squared()) / predicted;
        if rho > 0.0 && r_new.iter().all(|v| v.is_finite()) {
            x = candidate;
            r = r_new;
            jac = instance.jacobian(x.as_slice());
            a = jac.transpose() * &jac;
            g = jac.transpose() * &r;
            mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
        } else {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() {
                break;
            }
        }
    }
    let n = r.norm();
    (x.as_slice().to_vec(), n)
}

/// Forward-generates a leakage instance from two real MF steps of one party
/// on `targets` (one per item): the party updates `p` against the first
/// item factors and reports gradients, then repeats against the second.
pub fn simulate_instance(
    p_start: &[f64],
    q_prev: Vec<Vec<f64>>,
    q_curr: Vec<Vec<f64>>,
    targets: &[f64],
    gamma: f64,
    lambda: f64,
) -> (LeakageInstance, LeakageTruth) {
    let step = |p: &[f64], qs: &[Vec<f64>]| -> (Vec<f64>, Vec<Vec<f64>>) {
        let rated: Vec<(&[f64], f64)> = qs
            .iter()
            .zip(targets)
            .map(|(q, r)| (q.as_slice(), r - mfcore::dot(q, p)))
            .collect();
        let p_new = mfcore::update_user(p, &rated, gamma, lambda);
        let etas = qs
            .iter()
            .zip(targets)
            .map(|(q, r)| mfcore::item_gradient(q, &p_new, r - mfcore::dot(q, &p_new), lambda))
            .collect();
        (p_new, etas)
    };
    let (p_prev, eta_prev) = step(p_start, &q_prev);
    let (p_curr, eta_curr) = step(&p_prev, &q_curr);
    (
        LeakageInstance {
            q_prev,
            eta_prev,
            q_curr,
            eta_curr,
            gamma,
            lambda,
        },
        LeakageTruth {
            p_prev,
            p_curr,
            targets: targets.to_vec(),
        },
    )
}

/// A random single- or multi-item instance in the regime the solver is
/// meant for: unit-box factors, ratings on `levels`, and residuals, `p`
/// and gradient signal bounded away from zero.
pub fn random_instance<R: Rng>(
    k: usize,
    n_items: usize,
    levels: &[f64],
    gamma: f64,
    lambda: f64,
    rng: &mut R,
) -> (LeakageInstance, LeakageTruth) {
    loop {
        let mut vector = || -> Vec<f64> { (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let p_start = vector();
        let q_prev: Vec<Vec<f64>> = (0..n_items).map(|_| vector()).collect();
        let q_curr: Vec<Vec<f64>> = (0..n_items).map(|_| vector()).collect();
        let targets: Vec<f64> = (0..n_items).map(|_| levels[rng.gen_range(0..levels.len())]).collect();
        let (instance, truth) = simulate_instance(&p_start, q_prev, q_curr, &targets, gamma, lambda);
        if well_conditioned(&instance, &truth) {
            return (instance, truth);
        }
    }
}

fn well_conditioned(instance: &LeakageInstance, truth: &LeakageTruth) -> bool {
    let norm = |v: &[f64]| mfcore::dot(v, v).sqrt();
    if norm(&truth.p_prev) < 0.1 || norm(&truth.p_curr) < 0.1 {
        return false;
    }
    (0..instance.n_items()).all(|i| {
        let e_prev = truth.targets[i] - mfcore::dot(&instance.q_prev[i], &truth.p_prev);
        let e_curr = truth.targets[i] - mfcore::dot(&instance.q_curr[i], &truth.p_curr);
        e_prev.abs() > 0.1 && e_curr.abs() > 0.1
    })
}

/// The server's view of an observed party as a leakage instance, and the
/// simulator's truth for scoring.
pub fn instance_from_observation(
    observed: &ObservedParty,
    gamma: f64,
    lambda: f64,
) -> Result<(LeakageInstance, LeakageTruth)> {
    if observed.q_curr.len() != observed.q_prev.len() || observed.truth.p_curr.is_empty() {
        return Err(Error::InvalidInput(format!(
            "party {} was not observed in two consecutive rounds",
            observed.party
        )));
    }
    Ok((
        LeakageInstance {
            q_prev: observed.q_prev.clone(),
            eta_prev: observed.eta_prev.clone(),
            q_curr: observed.q_curr.clone(),
            eta_curr: observed.eta_curr.clone(),
            gamma,
            lambda,
        },
        LeakageTruth {
            p_prev: observed.truth.p_prev.clone(),
            p_curr: observed.truth.p_curr.clone(),
            targets: observed.truth.targets.clone(),
        },
    ))
}
