use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, RowDVector, SymmetricEigen};

use crate::linalg::Rng;
use crate::{Error, Result};

/// Backtracking gives up after this many halvings of μ.
pub const MAX_HALVINGS: u32 = 60;

/// Linear regression `p = W X̄` with a linear SG on `p` parameterised as
/// `(α+1) p − (β+1) y + γ 𝟏`. Losses are the unnormalised `½ Σ` form.
#[derive(Clone, Debug)]
pub struct Theorem1State {
    pub w: RowDVector<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// `(d+1) × S`; the last row is all ones.
    pub x_bar: DMatrix<f64>,
    pub y: RowDVector<f64>,
    /// `X̄ᵀ X̄`, `S × S`.
    pub b: DMatrix<f64>,
    /// Smallest positive eigenvalue of `B`.
    pub b_min: f64,
    /// Spectral norm of `B`.
    pub b_norm: f64,
    projector: DMatrix<f64>,
    pub iteration: usize,
}

impl Theorem1State {
    pub fn samples(&self) -> usize {
        self.y.len()
    }

    pub fn omega(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn predictions(&self) -> RowDVector<f64> {
        &self.w * &self.x_bar
    }

    /// `e = (y − p)ᵀ`.
    pub fn error(&self) -> DVector<f64> {
        (&self.y - self.predictions()).transpose()
    }

    /// `A = [pᵀ | −yᵀ | 𝟏ᵀ]`, `S × 3`.
    pub fn a_matrix(&self) -> DMatrix<f64> {
        a_matrix(&self.predictions(), &self.y)
    }

    /// `ξ = A ω`, the SG error `SG − ∂L/∂p` as a column.
    pub fn xi(&self) -> DVector<f64> {
        self.a_matrix() * DVector::from_row_slice(&self.omega())
    }

    /// Synthetic gradient with respect to `p`.
    pub fn synthetic_gradient(&self) -> RowDVector<f64> {
        let p = self.predictions();
        p.map(|v| (self.alpha + 1.0) * v) - self.y.map(|v| (self.beta + 1.0) * v) + RowDVector::from_element(p.len(), self.gamma)
    }

    /// Column-space component of the error.
    pub fn f(&self) -> DVector<f64> {
        &self.projector * self.error()
    }

    /// Orthogonal-complement component of the error: the least-squares residue.
    pub fn e_perp(&self) -> DVector<f64> {
        let e = self.error();
        &e - &self.projector * &e
    }

    pub fn combined_norm(&self) -> f64 {
        self.f().norm() + self.xi().norm()
    }

    /// Normal-equations least-squares weights.
    pub fn oracle_w(&self) -> Result<RowDVector<f64>> {
        let gram = &self.x_bar * self.x_bar.transpose();
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Invalid("augmented data is rank deficient".into()))?;
        let rhs = &self.x_bar * self.y.transpose();
        Ok(chol.solve(&rhs).transpose())
    }
}

fn a_matrix(p: &RowDVector<f64>, y: &RowDVector<f64>) -> DMatrix<f64> {
    let s = p.len();
    DMatrix::from_fn(s, 3, |i, j| match j {
        0 => p[i],
        1 => -y[i],
        _ => 1.0,
    })
}

/// Seeded problem: `X ~ N(0, 1)` of shape `d × S`, `y` a random affine
/// function of `X` plus unit noise so the residue is nonzero.
pub fn theorem1_problem(samples: usize, dim: usize, seed: u64) -> (DMatrix<f64>, RowDVector<f64>) {
    let mut rng = Rng::new(seed).child(0);
    let x = DMatrix::from_fn(dim, samples, |_, _| rng.gaussian());
    let w: Vec<f64> = (0..=dim).map(|_| rng.gaussian()).collect();
    let y = RowDVector::from_fn(samples, |_, s| {
        (0..dim).map(|i| w[i] * x[(i, s)]).sum::<f64>() + w[dim] + rng.gaussian()
    });
    (x, y)
}

/// Initial condition `(α, β, γ) = (−1, −1, 0)`, i.e. SG ≡ 0; `W ~ N(0, 1)`
/// from `seed`.
pub fn theorem1_init(x: &DMatrix<f64>, y: &RowDVector<f64>, seed: u64) -> Result<Theorem1State> {
    let (d, s) = x.shape();
    if y.len() != s || s == 0 {
        return Err(Error::Shape {
            op: "theorem1_init",
            left: (d, s),
            right: (1, y.len()),
        });
    }
    let mut x_bar = DMatrix::from_element(d + 1, s, 1.0);
    x_bar.rows_mut(0, d).copy_from(x);
    let b = x_bar.transpose() * &x_bar;
    let eig = SymmetricEigen::new(b.clone());
    let b_norm = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = b_norm * 1e-10;
    let b_min = eig
        .eigenvalues
        .iter()
        .filter(|v| **v > floor)
        .fold(f64::INFINITY, |m, v| m.min(*v));
    let gram = &x_bar * x_bar.transpose();
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Invalid("augmented data is rank deficient".into()))?;
    let projector = x_bar.transpose() * inv * &x_bar;
    let mut rng = Rng::new(seed).child(1);
    Ok(Theorem1State {
        w: RowDVector::from_fn(d + 1, |_, _| rng.gaussian()),
        alpha: -1.0,
        beta: -1.0,
        gamma: 0.0,
        x_bar,
        y: y.clone(),
        b,
        b_min,
        b_norm,
        projector,
        iteration: 0,
    })
}

/// The reduced `(e, ξ)` recursion evaluated from the pre-step state:
/// `e' = e − μBe + μBξ`, `ξ' = ξ − νAAᵀξ` with the pre-step `A`.
#[derive(Clone, Debug)]
pub struct ReducedStep {
    pub e: DVector<f64>,
    pub xi: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct StepReport {
    pub mu: f64,
    pub nu: Option<f64>,
    pub halvings: u32,
    /// No strict decrease within [`MAX_HALVINGS`]; the state is unchanged.
    pub stalled: bool,
    pub norm_before: f64,
    pub norm_after: f64,
    pub reduced: ReducedStep,
}

/// One iteration of the coupled system. `ν` is the exact line search on
/// `‖ξ‖²`; `μ` starts at the proof's bound and halves until `‖f‖ + ‖ξ‖`
/// strictly decreases.
pub fn theorem1_step(state: &Theorem1State) -> (Theorem1State, StepReport) {
    let a = state.a_matrix();
    let omega = DVector::from_row_slice(&state.omega());
    let xi = &a * &omega;
    let g = a.transpose() * &xi;
    let ag = &a * &g;
    let (g2, ag2, xi2) = (g.norm_squared(), ag.norm_squared(), xi.norm_squared());
    let (nu, omega_next) = if ag2 > 0.0 {
        let nu = g2 / ag2;
        (Some(nu), &omega - &g * nu)
    } else {
        (None, omega.clone())
    };
    let mut mu0 = state.b_min / (state.b_norm * state.b_norm);
    if ag2 > 0.0 && xi2 > 0.0 {
        mu0 = mu0.min(1.0 - g2 * g2 / (2.0 * ag2 * xi2));
    }
    let direction = state.synthetic_gradient() * state.x_bar.transpose();
    let before = state.combined_norm();
    let e = state.error();
    let reduced = |mu: f64| ReducedStep {
        e: &e - &state.b * &e * mu + &state.b * &xi * mu,
        xi: nu.map_or_else(|| xi.clone(), |nu| &xi - &a * (a.transpose() * &xi) * nu),
    };

    let mut mu = mu0;
    for halvings in 0..=MAX_HALVINGS {
        let mut next = state.clone();
        next.w = &state.w - &direction * mu;
        next.alpha = omega_next[0];
        next.beta = omega_next[1];
        next.gamma = omega_next[2];
        next.iteration += 1;
        let after = next.combined_norm();
        if after < before {
            let report = StepReport {
                mu,
                nu,
                halvings,
                stalled: false,
                norm_before: before,
                norm_after: after,
                reduced: reduced(mu),
            };
            return (next, report);
        }
        mu *= 0.5;
    }
    let report = StepReport {
        mu: 0.0,
        nu,
        halvings: MAX_HALVINGS,
        stalled: true,
        norm_before: before,
        norm_after: before,
        reduced: reduced(0.0),
    };
    (state.clone(), report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub iteration: usize,
    pub f_norm: f64,
    pub xi_norm: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub w_error: f64,
    pub mu: f64,
    pub halvings: u32,
}

#[derive(Clone, Debug)]
pub struct Theorem1Run {
    pub state: Theorem1State,
    /// Row 0 is the initial state; row `k` follows step `k`.
    pub trajectory: Vec<TrajectoryRow>,
    pub converged: bool,
    /// A step failed to decrease the combined norm.
    pub stalled: bool,
    /// Every accepted step strictly decreased `‖f‖ + ‖ξ‖`.
    pub monotone: bool,
    /// Largest deviation of `e⊥` from its initial value (∞-norm).
    pub e_perp_drift: f64,
    /// Largest ∞-norm gap between the primal step and the reduced
    /// recursion, for `e` and for `ξ` (the latter against `A_k ω_{k+1}`).
    pub reduced_gap: (f64, f64),
    pub oracle_w: RowDVector<f64>,
}

impl Theorem1Run {
    pub fn final_norm(&self) -> f64 {
        self.state.combined_norm()
    }

    /// `‖W − W*‖ / ‖W*‖`.
    pub fn relative_w_error(&self) -> f64 {
        (&self.state.w - &self.oracle_w).norm() / self.oracle_w.norm()
    }
}

fn row(state: &Theorem1State, oracle: &RowDVector<f64>, mu: f64, halvings: u32) -> TrajectoryRow {
    TrajectoryRow {
        iteration: state.iteration,
        f_norm: state.f().norm(),
        xi_norm: state.xi().norm(),
        alpha: state.alpha,
        beta: state.beta,
        gamma: state.gamma,
        w_error: (&state.w - oracle).norm(),
        mu,
        halvings,
    }
}

/// Iterates until `‖f‖ + ‖ξ‖ < tol`, a stall, or `max_iters` steps.
pub fn theorem1_run(state: Theorem1State, tol: f64, max_iters: usize) -> Result<Theorem1Run> {
    let oracle_w = state.oracle_w()?;
    let e_perp0 = state.e_perp();
    let mut trajectory = vec![row(&state, &oracle_w, 0.0, 0)];
    let (mut monotone, mut stalled, mut drift) = (true, false, 0.0f64);
    let (mut gap_e, mut gap_xi) = (0.0f64, 0.0f64);
    let mut state = state;
    while state.combined_norm() >= tol && state.iteration < max_iters {
        let (next, report) = theorem1_step(&state);
        if report.stalled {
            stalled = true;
            break;
        }
        monotone &= report.norm_after < report.norm_before;
        let a_prev = state.a_matrix();
        let xi_within = a_prev * DVector::from_row_slice(&next.omega());
        gap_e = gap_e.max((&report.reduced.e - next.error()).amax());
        gap_xi = gap_xi.max((&report.reduced.xi - xi_within).amax());
        drift = drift.max((next.e_perp() - &e_perp0).amax());
        state = next;
        trajectory.push(row(&state, &oracle_w, report.mu, report.halvings));
    }
    Ok(Theorem1Run {
        converged: state.combined_norm() < tol,
        state,
        trajectory,
        stalled,
        monotone,
        e_perp_drift: drift,
        reduced_gap: (gap_e, gap_xi),
        oracle_w,
    })
}

pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "iteration,f_norm,xi_norm,alpha,beta,gamma,w_error,mu,halvings").map_err(io)?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{}",
            r.iteration, r.f_norm, r.xi_norm, r.alpha, r.beta, r.gamma, r.w_error, r.mu, r.halvings
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(s: usize, d: usize, seed: u64) -> Theorem1State {
        let (x, y) = theorem1_problem(s, d, seed);
        theorem1_init(&x, &y, seed).unwrap()
    }

    #[test]
    fn init_matches_zero_sg() {
        let st = state(20, 5, 1);
        assert_eq!(st.omega(), [-1.0, -1.0, 0.0]);
        assert_eq!(st.synthetic_gradient().amax(), 0.0);
        assert!(st.x_bar.row(5).iter().all(|v| *v == 1.0));
        assert!((st.b.clone() - st.b.transpose()).amax() == 0.0);
        assert!(st.b_min > 0.0 && st.b_min <= st.b_norm);
    }

    #[test]
    fn fixed_point_is_kept() {
        let mut st = state(20, 5, 2);
        st.w = st.oracle_w().unwrap();
        st.alpha = 0.0;
        st.beta = 0.0;
        st.gamma = 0.0;
        let (next, _) = theorem1_step(&st);
        assert_eq!(next.omega(), [0.0, 0.0, 0.0]);
        assert!((&next.w - &st.w).amax() < 1e-12);
    }

    #[test]
    fn zero_subspace_is_invariant() {
        let mut st = state(20, 5, 3);
        st.alpha = 0.0;
        st.beta = 0.0;
        st.gamma = 0.0;
        for _ in 0..50 {
            st = theorem1_step(&st).0;
            assert_eq!(st.omega(), [0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn seeded_run_converges_monotonically() {
        let run = theorem1_run(state(20, 5, 1), 1e-6, 200_000).unwrap();
        assert!(run.converged && run.monotone && !run.stalled);
        for w in run.trajectory.windows(2) {
            assert!(w[1].f_norm + w[1].xi_norm < w[0].f_norm + w[0].xi_norm);
        }
        assert!(run.relative_w_error() < 1e-4);
        assert!(run.e_perp_drift < 1e-10);
        assert!(run.reduced_gap.0 < 1e-10 && run.reduced_gap.1 < 1e-10);
        let last = run.trajectory.last().unwrap();
        assert!(last.alpha.abs() < 1e-3 && last.beta.abs() < 1e-3 && last.gamma.abs() < 1e-3);
    }
}
