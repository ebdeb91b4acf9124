//! Planning objectives for a DG portfolio: investment benefit ratio,
//! voltage stability factor, and total active loss, plus the constraint
//! machinery that feeds the multi-objective optimizer.

use crate::network::{BusKind, CaseError, NetworkCase};
use crate::powerflow::{self, Injection, PowerFlowSolution, SolveError, SweepOptions};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hours in the planning year used by the benefit formulas.
pub const HOURS_PER_YEAR: f64 = 8760.0;

/// Technology of a DG unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DgKind {
    /// Wind turbine.
    #[serde(rename = "WT")]
    Wt,
    /// Photovoltaic plant.
    #[serde(rename = "PV")]
    Pv,
    /// Micro gas turbine (dispatchable).
    #[serde(rename = "MT")]
    Mt,
}

impl DgKind {
    pub const ALL: [DgKind; 3] = [DgKind::Wt, DgKind::Pv, DgKind::Mt];

    pub fn label(self) -> &'static str {
        match self {
            DgKind::Wt => "WT",
            DgKind::Pv => "PV",
            DgKind::Mt => "MT",
        }
    }
}

impl std::str::FromStr for DgKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "WT" => Ok(DgKind::Wt),
            "PV" => Ok(DgKind::Pv),
            "MT" => Ok(DgKind::Mt),
            other => Err(format!("unknown DG kind `{other}` (expected WT, PV, or MT)")),
        }
    }
}

/// Per-technology cost and yield parameters.
///
/// `c_fic` is the fixed investment cost in $ per kW of installed capacity;
/// the remaining costs/prices are $ per kWh. `xi_dg` converts the one-off
/// investment into an annual charge; `lambda_cf` is the capacity factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgEconomics {
    pub c_gp: f64,
    pub c_gs: f64,
    pub c_mc: f64,
    pub c_fic: f64,
    pub xi_dg: f64,
    pub lambda_cf: f64,
}

impl DgEconomics {
    /// Default parameter set for a technology (investment cost, maintenance,
    /// on-grid price, subsidy, conversion and capacity factors).
    pub fn for_kind(kind: DgKind) -> Self {
        match kind {
            DgKind::Wt => Self {
                c_gp: 0.08,
                c_gs: 0.036,
                c_mc: 0.0047,
                c_fic: 1630.0,
                xi_dg: 0.1006,
                lambda_cf: 0.35,
            },
            DgKind::Pv => Self {
                c_gp: 0.08,
                c_gs: 0.036,
                c_mc: 0.0019,
                c_fic: 6670.0,
                xi_dg: 0.0843,
                lambda_cf: 0.29,
            },
            DgKind::Mt => Self {
                c_gp: 0.064,
                c_gs: 0.0,
                c_mc: 0.0283,
                c_fic: 1640.0,
                xi_dg: 0.1006,
                lambda_cf: 1.00,
            },
        }
    }
}

fn default_power_factor() -> f64 {
    1.0
}

/// One DG installation: technology, bus, active power rating, and optional
/// overrides for power factor and economics (defaults apply otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgUnit {
    pub kind: DgKind,
    pub bus: usize,
    pub s_rated_kw: f64,
    #[serde(default = "default_power_factor")]
    pub power_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub economics: Option<DgEconomics>,
}

impl DgUnit {
    pub fn new(kind: DgKind, bus: usize, s_rated_kw: f64) -> Self {
        Self {
            kind,
            bus,
            s_rated_kw,
            power_factor: 1.0,
            economics: None,
        }
    }

    /// Economics in force for this unit (override or per-kind default).
    pub fn econ(&self) -> DgEconomics {
        self.economics.unwrap_or_else(|| DgEconomics::for_kind(self.kind))
    }

    /// Reactive output in kVar implied by the active rating and power factor.
    pub fn q_kvar(&self) -> f64 {
        if self.power_factor >= 1.0 {
            0.0
        } else {
            self.s_rated_kw * (1.0 / (self.power_factor * self.power_factor) - 1.0).sqrt()
        }
    }
}

/// The three planning objectives for one candidate portfolio, plus the
/// feasibility verdict. `c_p` and `vsf_total` are maximized, `p_loss_kw`
/// minimized; `feasible` holds exactly when `violation == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub c_p: f64,
    pub vsf_total: f64,
    pub p_loss_kw: f64,
    pub feasible: bool,
    pub violation: f64,
}

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("investment benefit is undefined for a portfolio with zero total capacity")]
    UndefinedBenefit,
}

/// Annual benefit ratio `C_p = C_T / C_I`.
///
/// `C_T = 8760 Σ (c_gp + c_gs) · S · λ_cf` is the yearly income (sale price
/// plus subsidy on delivered energy); `C_I = 8760 Σ c_mc · S · λ_cf +
/// Σ c_fic · S · ξ_dg` is the yearly outlay (maintenance plus annualized
/// investment). Scale-invariant when every capacity is multiplied by the
/// same positive factor.
pub fn investment_benefit(portfolio: &[DgUnit]) -> Result<f64, ObjectiveError> {
    let total: f64 = portfolio.iter().map(|u| u.s_rated_kw).sum();
    if portfolio.is_empty() || total <= 0.0 {
        return Err(ObjectiveError::UndefinedBenefit);
    }
    let mut c_t = 0.0;
    let mut c_i = 0.0;
    for unit in portfolio {
        let e = unit.econ();
        let s = unit.s_rated_kw;
        c_t += HOURS_PER_YEAR * (e.c_gp + e.c_gs) * s * e.lambda_cf;
        c_i += HOURS_PER_YEAR * e.c_mc * s * e.lambda_cf + e.c_fic * s * e.xi_dg;
    }
    if c_i <= 0.0 {
        return Err(ObjectiveError::UndefinedBenefit);
    }
    Ok(c_t / c_i)
}

/// Per-branch voltage stability factor `2·U_recv − U_send` (aligned with
/// `case.branches`) and its system total over all N−1 branches. Higher
/// totals mean a stiffer voltage profile.
pub fn vsf(
    case: &NetworkCase,
    solution: &PowerFlowSolution,
) -> Result<(Vec<f64>, f64), CaseError> {
    let topo = case.topology()?;
    let mut per_branch = vec![0.0; case.branches.len()];
    let mut total = 0.0;
    for &b in &topo.order {
        if let Some((parent, m)) = topo.parent[b] {
            per_branch[m] = 2.0 * solution.u_pu[b] - solution.u_pu[parent];
            total += per_branch[m];
        }
    }
    Ok((per_branch, total))
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("DG site references unknown bus {0}")]
    UnknownBus(usize),
    #[error("DG site at swing bus {0} is not allowed")]
    SwingBus(usize),
    #[error("no DG sites given")]
    NoSites,
}

/// Evaluates candidate capacity vectors on a fixed set of DG sites.
///
/// Construction solves the base case once to fix the penetration bounds
/// (`ΣP_D + P_L0`, `ΣQ_D + Q_L0`). Evaluation is pure and thread-safe, so
/// optimizer populations can be scored in parallel against one `Evaluator`.
#[derive(Debug, Clone)]
pub struct Evaluator {
    case: NetworkCase,
    sites: Vec<DgUnit>,
    options: SweepOptions,
    p_bound_kw: f64,
    q_bound_kvar: f64,
    base_loss_kw: f64,
    base_vsf_total: f64,
}

impl Evaluator {
    pub fn new(case: &NetworkCase, sites: &[DgUnit]) -> Result<Self, EvalError> {
        Self::with_options(case, sites, SweepOptions::default())
    }

    pub fn with_options(
        case: &NetworkCase,
        sites: &[DgUnit],
        options: SweepOptions,
    ) -> Result<Self, EvalError> {
        if sites.is_empty() {
            return Err(EvalError::NoSites);
        }
        let topo = case.topology()?;
        for site in sites {
            let idx = topo.index_of(site.bus).ok_or(EvalError::UnknownBus(site.bus))?;
            if case.buses[idx].kind == BusKind::Swing {
                return Err(EvalError::SwingBus(site.bus));
            }
        }
        let base = powerflow::solve_with(case, &[], &options)?;
        let (p_load, q_load) = case.total_load();
        let (_, base_vsf_total) = vsf(case, &base)?;
        Ok(Self {
            case: case.clone(),
            sites: sites.to_vec(),
            options,
            p_bound_kw: p_load + base.p_loss_kw,
            q_bound_kvar: q_load + base.q_loss_kvar,
            base_loss_kw: base.p_loss_kw,
            base_vsf_total,
        })
    }

    pub fn sites(&self) -> &[DgUnit] {
        &self.sites
    }

    pub fn case(&self) -> &NetworkCase {
        &self.case
    }

    /// Base-case loss in kW (also the `P_L0` term of the penetration bound).
    pub fn base_loss_kw(&self) -> f64 {
        self.base_loss_kw
    }

    pub fn base_vsf_total(&self) -> f64 {
        self.base_vsf_total
    }

    /// Active penetration bound `ΣP_D + P_L0` in kW.
    pub fn p_bound_kw(&self) -> f64 {
        self.p_bound_kw
    }

    /// Portfolio at the given capacities (site order preserved).
    pub fn portfolio(&self, capacities_kw: &[f64]) -> Vec<DgUnit> {
        assert_eq!(capacities_kw.len(), self.sites.len(), "capacity vector arity");
        self.sites
            .iter()
            .zip(capacities_kw)
            .map(|(site, &cap)| DgUnit { s_rated_kw: cap, ..site.clone() })
            .collect()
    }

    /// Scores one capacity vector (kW per site, aligned with `sites()`).
    ///
    /// A diverging or non-converging flow yields the infeasible sentinel
    /// (worst objectives, infinite violation) rather than an error, so the
    /// optimizer can steer away from it. A portfolio with zero total
    /// capacity is scored with `c_p = 0` (no investment, no benefit).
    pub fn evaluate(&self, capacities_kw: &[f64]) -> ObjectiveVector {
        let units = self.portfolio(capacities_kw);
        let injections: Vec<Injection> = units
            .iter()
            .filter(|u| u.s_rated_kw > 0.0)
            .map(|u| Injection {
                bus: u.bus,
                p_kw: u.s_rated_kw,
                q_kvar: u.q_kvar(),
            })
            .collect();

        let solution = match powerflow::solve_with(&self.case, &injections, &self.options) {
            Ok(sol) if sol.converged => sol,
            _ => {
                return ObjectiveVector {
                    c_p: 0.0,
                    vsf_total: 0.0,
                    p_loss_kw: f64::INFINITY,
                    feasible: false,
                    violation: f64::INFINITY,
                }
            }
        };

        let c_p = investment_benefit(&units).unwrap_or(0.0);
        let (_, vsf_total) = vsf(&self.case, &solution).expect("case validated at construction");

        let s_base = self.case.s_base_kw();
        let mut violation = 0.0;
        for (i, bus) in self.case.buses.iter().enumerate() {
            if bus.kind == BusKind::Swing {
                continue;
            }
            let u = solution.u_pu[i];
            violation += (bus.umin_pu - u).max(0.0) + (u - bus.umax_pu).max(0.0);
        }
        let p_dg: f64 = injections.iter().map(|inj| inj.p_kw).sum();
        let q_dg: f64 = injections.iter().map(|inj| inj.q_kvar).sum();
        violation += (p_dg - self.p_bound_kw).max(0.0) / s_base;
        violation += (q_dg - self.q_bound_kvar).max(0.0) / s_base;
        for (m, br) in self.case.branches.iter().enumerate() {
            let s_kva = solution.branch_p_kw[m].hypot(solution.branch_q_kvar[m]);
            violation += (s_kva - br.s_rated_kva).max(0.0) / s_base;
        }

        ObjectiveVector {
            c_p,
            vsf_total,
            p_loss_kw: solution.p_loss_kw,
            feasible: violation == 0.0,
            violation,
        }
    }
}
