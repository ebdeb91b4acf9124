//! Stage 1 of the planning chain: rank buses by loss sensitivity and place
//! DG greedily, seeding each site with its loss-minimizing capacity.
//!
//! The loss-sensitivity factor (LSF) of a bus is the derivative of total
//! active loss with respect to the active demand served at that bus,
//! evaluated from the impedance-matrix loss coefficients. Placement repeats
//! flow → LSF → pick the highest-ranked unplaced bus → size it by
//! golden-section search → commit the injection (a persistent negative
//! load), until the requested number of sites is reached.

use crate::network::{BusKind, CaseError, NetworkCase, Topology};
use crate::powerflow::{self, Injection, PowerFlowSolution, SolveError, SweepOptions};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Capacity search resolution in kW.
pub const SIZE_RESOLUTION_KW: f64 = 0.1;

/// One committed DG site from stage 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub bus: usize,
    pub capacity_kw: f64,
}

/// Ordered stage-1 outcome: the placements as committed and the system loss
/// after each commitment (non-increasing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SitingResult {
    pub placements: Vec<Placement>,
    pub loss_after_each_kw: Vec<f64>,
}

impl SitingResult {
    pub fn buses(&self) -> Vec<usize> {
        self.placements.iter().map(|p| p.bus).collect()
    }
}

#[derive(Debug, Error)]
pub enum SitingError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("unknown bus {0}")]
    UnknownBus(usize),
    #[error("bus {0} is the swing bus; DG cannot be sited there")]
    SwingBus(usize),
    #[error("n_dg = {n_dg} out of range 1..={max}")]
    OutOfRange { n_dg: usize, max: usize },
}

/// Loss-sensitivity factor per bus, aligned with `case.buses`.
///
/// `α_i = 2 Σ_j (α_ij P_j − β_ij Q_j)` over the impedance-matrix loss
/// coefficients, with P/Q taken as net demand (load minus generation), so a
/// positive value means serving extra load there is expensive and, equally,
/// that injecting there saves the most loss. The swing entry is zero.
pub fn loss_sensitivity(
    case: &NetworkCase,
    solution: &PowerFlowSolution,
) -> Result<Vec<f64>, SolveError> {
    let (r_red, keep) = powerflow::reduced_resistance(case)?;
    let s_base = case.s_base_kw();
    let k = keep.len();
    // Demand-positive net powers in per-unit.
    let p: Vec<f64> = keep.iter().map(|&i| -solution.p_net_kw[i] / s_base).collect();
    let q: Vec<f64> = keep.iter().map(|&i| -solution.q_net_kvar[i] / s_base).collect();

    let mut alpha = vec![0.0; case.buses.len()];
    for a in 0..k {
        let ia = keep[a];
        let mut acc = 0.0;
        for b in 0..k {
            let ib = keep[b];
            let dd = solution.delta_rad[ia] - solution.delta_rad[ib];
            let uu = solution.u_pu[ia] * solution.u_pu[ib];
            let a_ij = r_red[(a, b)] * dd.cos() / uu;
            let b_ij = r_red[(a, b)] * dd.sin() / uu;
            acc += a_ij * p[b] - b_ij * q[b];
        }
        alpha[ia] = 2.0 * acc;
    }
    Ok(alpha)
}

/// Loss-minimizing single-DG capacity at `bus` on the unmodified case,
/// searched over `[0, downstream demand]` to [`SIZE_RESOLUTION_KW`].
pub fn optimal_size_at(case: &NetworkCase, bus: usize) -> Result<f64, SitingError> {
    let topo = case.topology()?;
    let idx = topo.index_of(bus).ok_or(SitingError::UnknownBus(bus))?;
    if case.buses[idx].kind == BusKind::Swing {
        return Err(SitingError::SwingBus(bus));
    }
    let bound = subtree_demand_kw(case, &topo, idx, &[]);
    let (size, _) = size_injection(case, bus, &[], bound)?;
    Ok(size)
}

/// Greedy LSF-guided placement of up to `n_dg` DG sites.
///
/// Each round solves the updated system, ranks unplaced buses by LSF
/// (ties to the lowest bus id), sizes the winner, and commits the result as
/// a persistent injection. Buses whose remaining downstream demand yields a
/// sub-resolution size are skipped; the loop also stops early once the
/// penetration bound `ΣS ≤ ΣP_D + P_L0` leaves no room, so the result may
/// carry fewer than `n_dg` placements.
pub fn stage1_place(case: &NetworkCase, n_dg: usize) -> Result<SitingResult, SitingError> {
    let topo = case.topology()?;
    let max = case.buses.len() - 1;
    if n_dg == 0 || n_dg > max {
        return Err(SitingError::OutOfRange { n_dg, max });
    }

    let options = stage_options();
    let base = powerflow::solve_with(case, &[], &options)?;
    let (p_load, _) = case.total_load();
    let penetration_bound = p_load + base.p_loss_kw;

    let mut committed: Vec<Injection> = Vec::new();
    let mut committed_total = 0.0;
    let mut unavailable = vec![false; case.buses.len()];
    unavailable[topo.swing] = true;
    let mut placements = Vec::new();
    let mut loss_after = Vec::new();

    while placements.len() < n_dg {
        let remaining_penetration = penetration_bound - committed_total;
        if remaining_penetration < SIZE_RESOLUTION_KW {
            break;
        }
        let solution = powerflow::solve_with(case, &committed, &options)?;
        let alpha = loss_sensitivity(case, &solution)?;
        let candidate = (0..case.buses.len())
            .filter(|&i| !unavailable[i])
            .max_by(|&a, &b| {
                alpha[a]
                    .partial_cmp(&alpha[b])
                    .unwrap()
                    // Ties go to the lowest external id for determinism.
                    .then(case.buses[b].id.cmp(&case.buses[a].id))
            });
        let Some(idx) = candidate else { break };
        unavailable[idx] = true;

        let local_bound = subtree_demand_kw(case, &topo, idx, &committed);
        let bound = local_bound.min(remaining_penetration);
        if bound < SIZE_RESOLUTION_KW {
            continue; // nothing left to serve below this bus
        }
        let bus = case.buses[idx].id;
        let (size, loss) = size_injection(case, bus, &committed, bound)?;
        if size < SIZE_RESOLUTION_KW {
            continue;
        }
        committed.push(Injection { bus, p_kw: size, q_kvar: 0.0 });
        committed_total += size;
        placements.push(Placement { bus, capacity_kw: size });
        loss_after.push(loss);
    }

    Ok(SitingResult {
        placements,
        loss_after_each_kw: loss_after,
    })
}

fn stage_options() -> SweepOptions {
    SweepOptions {
        tolerance_pu: 1e-8,
        max_iterations: 100,
    }
}

/// Active demand of the subtree under `idx` minus generation already
/// committed inside it, floored at zero.
fn subtree_demand_kw(
    case: &NetworkCase,
    topo: &Topology,
    idx: usize,
    committed: &[Injection],
) -> f64 {
    let mut demand = 0.0;
    for &b in &topo.subtree(idx) {
        demand += case.buses[b].p_kw;
        for inj in committed {
            if inj.bus == case.buses[b].id {
                demand -= inj.p_kw;
            }
        }
    }
    demand.max(0.0)
}

/// Golden-section search for the loss-minimizing injection at `bus` on top
/// of `committed`, over `[0, bound]` at [`SIZE_RESOLUTION_KW`]. A 100-point
/// coarse sweep guards against non-unimodal loss profiles. Returns
/// `(capacity, loss at that capacity)`.
fn size_injection(
    case: &NetworkCase,
    bus: usize,
    committed: &[Injection],
    bound: f64,
) -> Result<(f64, f64), SitingError> {
    let options = stage_options();
    let loss_at = |p_kw: f64| -> Result<f64, SitingError> {
        let mut injections = committed.to_vec();
        if p_kw > 0.0 {
            injections.push(Injection { bus, p_kw, q_kvar: 0.0 });
        }
        match powerflow::solve_with(case, &injections, &options) {
            Ok(sol) if sol.converged => Ok(sol.p_loss_kw),
            Ok(_) => Ok(f64::INFINITY),
            Err(SolveError::VoltageCollapse { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e.into()),
        }
    };

    if bound < SIZE_RESOLUTION_KW {
        return Ok((0.0, loss_at(0.0)?));
    }

    let (golden_x, golden_f) = golden_section(&loss_at, 0.0, bound)?;

    // Coarse guard: if the grid finds a better basin, refine around it.
    let mut best = (golden_x, golden_f);
    let step = bound / 100.0;
    let mut grid_best = (0.0, f64::INFINITY);
    for i in 0..=100 {
        let x = step * i as f64;
        let f = loss_at(x)?;
        if f < grid_best.1 {
            grid_best = (x, f);
        }
    }
    if grid_best.1 + 1e-9 < best.1 {
        let lo = (grid_best.0 - step).max(0.0);
        let hi = (grid_best.0 + step).min(bound);
        let refined = golden_section(&loss_at, lo, hi)?;
        if refined.1 < best.1 {
            best = refined;
        }
    }
    Ok(best)
}

fn golden_section<F>(f: &F, mut a: f64, mut b: f64) -> Result<(f64, f64), SitingError>
where
    F: Fn(f64) -> Result<f64, SitingError>,
{
    const PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - PHI * (b - a);
    let mut d = a + PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > SIZE_RESOLUTION_KW {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + PHI * (b - a);
            fd = f(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    Ok((mid, f(mid)?))
}
