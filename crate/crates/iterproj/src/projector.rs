//! The pressure-iteration engine for one time step: each pass solves the
//! momentum system at the current pressure, solves a Neumann Poisson
//! problem for the correction potential, and updates the pressure with a
//! weighted combination of the potential and the discrete divergence.
//!
//! Two parameters steer the update: `alpha` weights the Poisson potential
//! and `rho` weights the divergence term. Classical schemes are special
//! cases of the same loop — rotational projection is (1.5, nu), standard
//! projection (1.5, 0) and the Uzawa iteration (0, rho). The iteration
//! contracts when `max(alpha/1.5, rho/nu) < 2`; crossing that threshold is
//! reported as a warning, not an error, because divergence shows up clearly
//! in the iteration report.

use crate::assembly::{
    assemble_convection, assemble_convection_rhs, project_zero_mean_pressure, AssemblyContext,
    SystemMatrices,
};
use crate::diagnostics::{strong_div_measure, weighted_norm};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::spaces::DofLayout;
use crate::sparse::{cg_neumann, cg_spd, gmres_precond, CgConfig, Csr, GmresConfig, Ilut};

/// How the convective term enters the momentum system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvectionMode {
    /// Stokes problem: no convection at all.
    None,
    /// Semi-implicit skew form: transport velocity extrapolated from the two
    /// previous levels, fixed across the pressure iteration.
    SiSkew,
    /// Fully implicit skew form: transport velocity is the previous iterate,
    /// so the momentum matrix is rebuilt every pass.
    FiSkew,
    /// Explicit advective form on the right-hand side; the momentum matrix
    /// carries no convection.
    ImexExplicit,
}

impl ConvectionMode {
    pub fn name(self) -> &'static str {
        match self {
            ConvectionMode::None => "none",
            ConvectionMode::SiSkew => "si_skew",
            ConvectionMode::FiSkew => "fi_skew",
            ConvectionMode::ImexExplicit => "imex_explicit",
        }
    }

    /// True when the momentum matrix is the same for every step.
    fn matrix_is_static(self) -> bool {
        matches!(self, ConvectionMode::None | ConvectionMode::ImexExplicit)
    }
}

/// Parameters of the pressure iteration and its inner solvers.
#[derive(Debug, Clone)]
pub struct SolverParams {
    /// Weight of the Poisson potential in the pressure update.
    pub alpha: f64,
    /// Weight of the divergence term in the pressure update (units of
    /// viscosity).
    pub rho: f64,
    pub nu: f64,
    /// Time-step size.
    pub k: f64,
    /// Stopping tolerance on the pressure increment (both max and L2 norm).
    pub eps: f64,
    /// Iteration cap per time step.
    pub iter_max: usize,
    pub convection: ConvectionMode,
    /// Aitken extrapolation of the pressure sequence.
    pub accelerate: bool,
    /// Momentum solver settings (tolerance, restart, ILUT fill/drop).
    pub gmres: GmresConfig,
    /// Tolerance of the mass solve in the divergence term of the update.
    pub mass_tol: f64,
}

impl SolverParams {
    pub fn new(alpha: f64, rho: f64, nu: f64, k: f64) -> Self {
        SolverParams {
            alpha,
            rho,
            nu,
            k,
            eps: 1e-2,
            iter_max: 50,
            convection: ConvectionMode::SiSkew,
            accelerate: false,
            gmres: GmresConfig::default(),
            mass_tol: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {}", self.k)));
        }
        if !(self.nu > 0.0) {
            return Err(Error::Config(format!("viscosity must be positive, got {}", self.nu)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!(
                "stopping tolerance must be positive, got {}",
                self.eps
            )));
        }
        if self.iter_max < 1 {
            return Err(Error::Config("iteration cap must be at least 1".into()));
        }
        if self.alpha < 0.0 || self.rho < 0.0 {
            return Err(Error::Config(format!(
                "update weights must be nonnegative, got alpha={} rho={}",
                self.alpha, self.rho
            )));
        }
        Ok(())
    }

    /// Upper bound on the largest eigenvalue of the iteration map,
    /// `max(alpha/1.5, rho/nu)`; the error contracts when this is below 2.
    pub fn contraction_bound(&self) -> f64 {
        (self.alpha / 1.5).max(self.rho / self.nu)
    }

    pub fn convergence_guaranteed(&self) -> bool {
        self.contraction_bound() < 2.0
    }

    /// Poisson tolerance tied to the outer tolerance so inner error never
    /// masks the stopping test.
    pub fn poisson_tol(&self) -> f64 {
        (1e-10f64).min(self.eps / 100.0).max(1e-13)
    }
}

/// Named parameter presets for the pressure update.
///
/// `custom` passes `(alpha, rho)` through unchanged; `uzawa` keeps the given
/// `rho` and zeroes `alpha`.
pub fn scheme_parameters(name: &str, nu: f64, alpha: f64, rho: f64) -> Result<(f64, f64)> {
    match name {
        "rotational" | "rotational_projection" => Ok((1.5, nu)),
        "standard" | "standard_projection" => Ok((1.5, 0.0)),
        "uzawa" => Ok((0.0, rho)),
        "custom" | "iterative" => Ok((alpha, rho)),
        other => Err(Error::Config(format!("unknown scheme preset '{other}'"))),
    }
}

/// Constrained momentum operator with its preconditioner and the image of
/// the Dirichlet lift under the unconstrained matrix.
pub struct MomentumOperator {
    pub constrained: Csr,
    pub ilut: Ilut,
    lift_image: Vec<f64>,
}

/// Result of a single pressure-iteration pass.
pub struct IterateOutcome {
    pub u: Vec<f64>,
    pub phi: Vec<f64>,
    pub p_next: Vec<f64>,
    /// Infinity norm of `B u` for this pass's velocity.
    pub weak_div: f64,
    pub momentum_iterations: usize,
    pub poisson_iterations: usize,
}

/// One row of the per-step iteration report.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub s: usize,
    pub dp_max: f64,
    pub dp_l2: f64,
    pub weak_div: f64,
    pub strong_div: f64,
}

/// Everything the stopping loop observed during one time step.
#[derive(Debug, Clone, Default)]
pub struct IterationReport {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations: usize,
}

impl IterationReport {
    /// True when the final record satisfies the stopping test for `eps`.
    pub fn satisfies_tolerance(&self, eps: f64) -> bool {
        self.records
            .last()
            .map(|r| r.dp_max < eps && r.dp_l2 < eps)
            .unwrap_or(false)
    }
}

/// Converged fields of one time step plus the iteration history.
pub struct StepSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub report: IterationReport,
}

/// Two consecutive points of the pressure fixed-point map: the iterate `p`
/// and its image `fp`.
pub struct AitkenPair {
    pub p: Vec<f64>,
    pub fp: Vec<f64>,
}

/// Secant-style extrapolation of a fixed-point sequence from two
/// consecutive (point, image) pairs. Falls back to the plain image when the
/// residual difference underflows.
pub fn aitken_update(prev: &AitkenPair, curr: &AitkenPair) -> Vec<f64> {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..curr.p.len() {
        let r_prev = prev.fp[i] - prev.p[i];
        let r_curr = curr.fp[i] - curr.p[i];
        let d = r_curr - r_prev;
        num += r_curr * d;
        den += d * d;
    }
    if den < 1e-300 {
        return curr.fp.clone();
    }
    let mu = num / den;
    // p_accel = f(p) + mu (p - f(p))
    curr.fp
        .iter()
        .zip(curr.p.iter())
        .map(|(fp, p)| fp + mu * (p - fp))
        .collect()
}

/// Drives the pressure iteration for time steps on one fixed mesh.
pub struct Stepper<'a> {
    pub mesh: &'a Mesh,
    pub layout: &'a DofLayout,
    pub ctx: &'a AssemblyContext,
    pub mats: &'a SystemMatrices,
    pub params: SolverParams,
    /// `1.5 A0 + k nu S`, unconstrained.
    base: Csr,
    /// Cached operator for convection modes whose matrix never changes.
    static_op: Option<MomentumOperator>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        mesh: &'a Mesh,
        layout: &'a DofLayout,
        ctx: &'a AssemblyContext,
        mats: &'a SystemMatrices,
        params: SolverParams,
    ) -> Result<Self> {
        params.validate()?;
        if !params.convergence_guaranteed() {
            log::warn!(
                "pressure iteration may diverge: max(alpha/1.5, rho/nu) = {:.3} >= 2",
                params.contraction_bound()
            );
        }
        let base = Csr::linear_combination(&[(1.5, &mats.a0), (params.k * params.nu, &mats.s)])?;
        let mut stepper = Stepper {
            mesh,
            layout,
            ctx,
            mats,
            params,
            base,
            static_op: None,
        };
        if stepper.params.convection.matrix_is_static() {
            stepper.static_op = Some(stepper.build_momentum_operator(None)?);
        }
        Ok(stepper)
    }

    /// Builds the constrained momentum operator, optionally with the skew
    /// convection term at transport velocity `w`.
    pub fn build_momentum_operator(&self, w: Option<&[f64]>) -> Result<MomentumOperator> {
        let full = match w {
            None => self.base.clone(),
            Some(w) => {
                let conv = assemble_convection(self.mesh, self.layout, self.ctx, w);
                Csr::linear_combination(&[(1.0, &self.base), (self.params.k, &conv.n)])?
            }
        };
        let lift_image = full.mul_vec(&self.layout.lift_vector());
        let constrained = full.constrained(&self.layout.dirichlet_mask);
        let ilut = Ilut::factor(&constrained, self.params.gmres.ilut())?;
        Ok(MomentumOperator {
            constrained,
            ilut,
            lift_image,
        })
    }

    /// One pass of the iteration: momentum solve at pressure `p_s`, Poisson
    /// solve for the potential, pressure update with mean subtraction.
    pub fn iterate_once(
        &self,
        op: &MomentumOperator,
        f_rhs: &[f64],
        p_s: &[f64],
        u_warm: &[f64],
    ) -> Result<IterateOutcome> {
        let k = self.params.k;
        let n_v = self.layout.n_velocity;
        assert_eq!(f_rhs.len(), n_v);

        // Momentum right-hand side: F - k B' p, then Dirichlet elimination.
        let btp = self.mats.b.tr_mul_vec(p_s);
        let mut rhs = vec![0.0f64; n_v];
        for i in 0..n_v {
            if self.layout.dirichlet_mask[i] {
                rhs[i] = self.layout.dirichlet_values[i];
            } else {
                rhs[i] = f_rhs[i] - k * btp[i] - op.lift_image[i];
            }
        }
        let (u, mom_rep) = gmres_precond(&op.constrained, Some(&op.ilut), &rhs, u_warm, &self.params.gmres);
        if !mom_rep.converged {
            return Err(Error::SolverBreakdown {
                solver: "momentum gmres",
                iterations: mom_rep.iterations,
                residual: mom_rep.residual,
            });
        }

        // Poisson problem for the potential: G phi = (1/k) B u, Neumann with
        // the compatibility projection inside the solver.
        let bu = self.mats.b.mul_vec(&u);
        let rhs_phi: Vec<f64> = bu.iter().map(|v| v / k).collect();
        let cg_cfg = CgConfig {
            tol: self.params.poisson_tol(),
            ..Default::default()
        };
        let (phi, poi_rep) = cg_neumann(&self.mats.g, &rhs_phi, &cg_cfg);
        if !poi_rep.converged {
            return Err(Error::SolverBreakdown {
                solver: "pressure poisson cg",
                iterations: poi_rep.iterations,
                residual: poi_rep.residual,
            });
        }

        // Divergence term rho M^{-1} B u via a mass solve.
        let mass_cfg = CgConfig {
            tol: self.params.mass_tol,
            ..Default::default()
        };
        let (mb, mass_rep) = cg_spd(&self.mats.m, &bu, &vec![0.0; bu.len()], &mass_cfg);
        if !mass_rep.converged {
            return Err(Error::SolverBreakdown {
                solver: "pressure mass cg",
                iterations: mass_rep.iterations,
                residual: mass_rep.residual,
            });
        }

        let mut p_next: Vec<f64> = p_s
            .iter()
            .zip(phi.iter().zip(mb.iter()))
            .map(|(p, (f, d))| p + self.params.alpha * f + self.params.rho * d)
            .collect();
        project_zero_mean_pressure(&self.mats.m, &mut p_next);

        Ok(IterateOutcome {
            weak_div: Csr::norm_inf_vec(&bu),
            u,
            phi,
            p_next,
            momentum_iterations: mom_rep.iterations,
            poisson_iterations: poi_rep.iterations,
        })
    }

    /// Runs the stopping loop for one time step.
    ///
    /// `f_bdf2` is the assembled right-hand side `A0 (2 u_n - 0.5 u_{n-1})
    /// + k (f, w_i)`; the initial pressure is the extrapolation
    /// `2 p_n - p_{n-1}`. Not reaching the tolerance inside the cap is
    /// reported, not raised: the caller decides.
    pub fn solve_time_step(
        &self,
        f_bdf2: &[f64],
        u_n: &[f64],
        u_nm1: &[f64],
        p_n: &[f64],
        p_nm1: &[f64],
    ) -> Result<StepSolution> {
        let params = &self.params;
        let w_ext: Vec<f64> = u_n
            .iter()
            .zip(u_nm1.iter())
            .map(|(a, b)| 2.0 * a - b)
            .collect();

        let mut f_step = f_bdf2.to_vec();
        if params.convection == ConvectionMode::ImexExplicit {
            let conv = assemble_convection_rhs(self.mesh, self.ctx, &w_ext);
            for (fi, ci) in f_step.iter_mut().zip(conv.iter()) {
                *fi -= params.k * ci;
            }
        }

        let mut p_curr: Vec<f64> = p_n
            .iter()
            .zip(p_nm1.iter())
            .map(|(a, b)| 2.0 * a - b)
            .collect();
        project_zero_mean_pressure(&self.mats.m, &mut p_curr);

        let step_op = match params.convection {
            ConvectionMode::SiSkew => Some(self.build_momentum_operator(Some(&w_ext))?),
            _ => None,
        };

        let mut u_prev = w_ext.clone();
        let mut aitken_prev: Option<AitkenPair> = None;
        let mut report = IterationReport::default();
        let mut u_out = Vec::new();
        let mut fi_op: Option<MomentumOperator> = None;

        for s in 0..params.iter_max {
            let op: &MomentumOperator = match params.convection {
                ConvectionMode::None | ConvectionMode::ImexExplicit => {
                    self.static_op.as_ref().expect("static operator built in new()")
                }
                ConvectionMode::SiSkew => step_op.as_ref().expect("per-step operator built above"),
                ConvectionMode::FiSkew => {
                    fi_op = Some(self.build_momentum_operator(Some(&u_prev))?);
                    fi_op.as_ref().unwrap()
                }
            };
            let it = self.iterate_once(op, &f_step, &p_curr, &u_prev)?;

            let pair = AitkenPair {
                p: std::mem::take(&mut p_curr),
                fp: it.p_next,
            };
            let mut p_new = if params.accelerate {
                match &aitken_prev {
                    Some(prev) => aitken_update(prev, &pair),
                    None => pair.fp.clone(),
                }
            } else {
                pair.fp.clone()
            };
            project_zero_mean_pressure(&self.mats.m, &mut p_new);

            let dp: Vec<f64> = p_new.iter().zip(pair.p.iter()).map(|(a, b)| a - b).collect();
            let dp_max = Csr::norm_inf_vec(&dp);
            let dp_l2 = weighted_norm(&self.mats.m, &dp);
            let strong = strong_div_measure(self.mesh, self.ctx, &it.u);
            report.records.push(IterationRecord {
                s,
                dp_max,
                dp_l2,
                weak_div: it.weak_div,
                strong_div: strong,
            });
            report.iterations = s + 1;

            u_prev = it.u.clone();
            u_out = it.u;
            aitken_prev = Some(pair);
            p_curr = p_new;

            if dp_max < params.eps && dp_l2 < params.eps {
                report.converged = true;
                break;
            }
        }
        if !report.converged {
            log::warn!(
                "pressure iteration reached the cap of {} without meeting eps = {:.1e}",
                params.iter_max,
                params.eps
            );
        }
        let _ = fi_op;
        Ok(StepSolution {
            u: u_out,
            p: p_curr,
            report,
        })
    }
}
