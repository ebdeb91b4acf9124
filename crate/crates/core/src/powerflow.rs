//! Backward/forward sweep power flow for radial feeders.
//!
//! The solver works in per-unit complex arithmetic on the case base. Each
//! iteration accumulates bus injection currents leaf-to-root (backward) and
//! propagates voltage drops root-to-leaf (forward) until the largest change
//! in voltage magnitude falls below tolerance. Non-convergence within the
//! iteration cap is a reported state, not an error, so optimizers can
//! penalize it; a voltage collapsing below 0.5 pu is a hard error.

use crate::network::{BusKind, CaseError, NetworkCase};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Power injected at a bus, generation-positive, in kW/kVar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub bus: usize,
    pub p_kw: f64,
    pub q_kvar: f64,
}

/// Sweep convergence controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Largest allowed change in any voltage magnitude between iterations.
    pub tolerance_pu: f64,
    pub max_iterations: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            tolerance_pu: 1e-6,
            max_iterations: 100,
        }
    }
}

/// Solved operating point. Vectors are aligned with `case.buses` and
/// `case.branches`; all powers are kW/kVar, voltages per-unit.
#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    pub u_pu: Vec<f64>,
    pub delta_rad: Vec<f64>,
    /// Receiving-side active flow per branch (into the downstream subtree).
    pub branch_p_kw: Vec<f64>,
    pub branch_q_kvar: Vec<f64>,
    pub branch_loss_kw: Vec<f64>,
    pub p_loss_kw: f64,
    pub q_loss_kvar: f64,
    pub p_swing_kw: f64,
    pub q_swing_kvar: f64,
    /// Net bus injection (generation minus load), kW; swing entry is the
    /// power the swing bus feeds into the lines.
    pub p_net_kw: Vec<f64>,
    pub q_net_kvar: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch_pu: f64,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("injection references unknown bus {0}")]
    UnknownBus(usize),
    #[error("injection at swing bus {0} is not allowed; the swing bus balances the residual")]
    SwingInjection(usize),
    #[error("unknown branch id {0}")]
    UnknownBranch(usize),
    #[error(
        "voltage collapse at iteration {iteration}: minimum voltage {min_u_pu:.4} pu \
         (per-iteration minima: {trace:?})"
    )]
    VoltageCollapse {
        iteration: usize,
        min_u_pu: f64,
        trace: Vec<f64>,
    },
    #[error("bus admittance matrix is singular")]
    SingularAdmittance,
}

/// Solves the case with default [`SweepOptions`].
pub fn solve(case: &NetworkCase, injections: &[Injection]) -> Result<PowerFlowSolution, SolveError> {
    solve_with(case, injections, &SweepOptions::default())
}

/// Solves the case with explicit convergence controls.
pub fn solve_with(
    case: &NetworkCase,
    injections: &[Injection],
    options: &SweepOptions,
) -> Result<PowerFlowSolution, SolveError> {
    let topo = case.topology()?;
    let n = case.buses.len();
    let s_base = case.s_base_kw();
    let z_base = case.z_base_ohm();

    // Net complex demand->injection per bus in per-unit (generation positive).
    let mut s_net = vec![Complex64::new(0.0, 0.0); n];
    for (i, bus) in case.buses.iter().enumerate() {
        if bus.kind == BusKind::Load {
            s_net[i] = Complex64::new(-bus.p_kw / s_base, -bus.q_kvar / s_base);
        }
    }
    for inj in injections {
        let i = topo.index_of(inj.bus).ok_or(SolveError::UnknownBus(inj.bus))?;
        if i == topo.swing {
            return Err(SolveError::SwingInjection(inj.bus));
        }
        s_net[i] += Complex64::new(inj.p_kw / s_base, inj.q_kvar / s_base);
    }

    let z_pu: Vec<Complex64> = case
        .branches
        .iter()
        .map(|br| Complex64::new(br.r_ohm / z_base, br.x_ohm / z_base))
        .collect();

    let mut v = vec![Complex64::new(1.0, 0.0); n];
    let mut currents = vec![Complex64::new(0.0, 0.0); n];
    let mut iterations = 0;
    let mut max_mismatch = f64::INFINITY;
    let mut converged = false;
    let mut minima = Vec::new();

    while iterations < options.max_iterations {
        iterations += 1;
        // Backward: subtree injection currents, children before parents.
        for &b in topo.order.iter().rev() {
            let mut acc = if b == topo.swing {
                Complex64::new(0.0, 0.0)
            } else {
                (s_net[b] / v[b]).conj()
            };
            for &(child, _) in &topo.children[b] {
                acc += currents[child];
            }
            currents[b] = acc;
        }
        // Forward: voltage drops from the swing bus outward.
        max_mismatch = 0.0;
        for &b in &topo.order {
            if let Some((parent, m)) = topo.parent[b] {
                let new_v = v[parent] + z_pu[m] * currents[b];
                max_mismatch = max_mismatch.max((new_v.norm() - v[b].norm()).abs());
                v[b] = new_v;
            }
        }
        let min_u = v.iter().map(|c| c.norm()).fold(f64::INFINITY, f64::min);
        minima.push(min_u);
        if min_u < 0.5 {
            return Err(SolveError::VoltageCollapse {
                iteration: iterations,
                min_u_pu: min_u,
                trace: minima,
            });
        }
        if max_mismatch < options.tolerance_pu {
            converged = true;
            break;
        }
    }

    // Final backward pass so flows reflect the final voltages.
    for &b in topo.order.iter().rev() {
        let mut acc = if b == topo.swing {
            Complex64::new(0.0, 0.0)
        } else {
            (s_net[b] / v[b]).conj()
        };
        for &(child, _) in &topo.children[b] {
            acc += currents[child];
        }
        currents[b] = acc;
    }

    let nb = case.branches.len();
    let mut branch_p = vec![0.0; nb];
    let mut branch_q = vec![0.0; nb];
    let mut branch_loss = vec![0.0; nb];
    let mut p_loss = 0.0;
    let mut q_loss = 0.0;
    for &b in &topo.order {
        if let Some((_, m)) = topo.parent[b] {
            // Current delivered into the subtree hanging off branch m.
            let flow = -currents[b];
            let s_recv = v[b] * flow.conj();
            branch_p[m] = s_recv.re * s_base;
            branch_q[m] = s_recv.im * s_base;
            branch_loss[m] = z_pu[m].re * flow.norm_sqr() * s_base;
            p_loss += branch_loss[m];
            q_loss += z_pu[m].im * flow.norm_sqr() * s_base;
        }
    }

    let source = -currents[topo.swing];
    let s_swing = v[topo.swing] * source.conj();
    let swing_bus = &case.buses[topo.swing];
    let p_swing = s_swing.re * s_base + swing_bus.p_kw;
    let q_swing = s_swing.im * s_base + swing_bus.q_kvar;

    let mut p_net = vec![0.0; n];
    let mut q_net = vec![0.0; n];
    for i in 0..n {
        if i == topo.swing {
            p_net[i] = s_swing.re * s_base;
            q_net[i] = s_swing.im * s_base;
        } else {
            p_net[i] = s_net[i].re * s_base;
            q_net[i] = s_net[i].im * s_base;
        }
    }

    Ok(PowerFlowSolution {
        u_pu: v.iter().map(|c| c.norm()).collect(),
        delta_rad: v.iter().map(|c| c.arg()).collect(),
        branch_p_kw: branch_p,
        branch_q_kvar: branch_q,
        branch_loss_kw: branch_loss,
        p_loss_kw: p_loss,
        q_loss_kvar: q_loss,
        p_swing_kw: p_swing,
        q_swing_kvar: q_swing,
        p_net_kw: p_net,
        q_net_kvar: q_net,
        converged,
        iterations,
        max_mismatch_pu: max_mismatch,
    })
}

/// Active loss of one branch, looked up by external branch id, in kW.
pub fn branch_loss(
    case: &NetworkCase,
    solution: &PowerFlowSolution,
    branch_id: usize,
) -> Result<f64, SolveError> {
    case.branches
        .iter()
        .position(|br| br.id == branch_id)
        .map(|m| solution.branch_loss_kw[m])
        .ok_or(SolveError::UnknownBranch(branch_id))
}

/// Sum of all branch losses in kW; equals `solution.p_loss_kw`.
pub fn total_loss(_case: &NetworkCase, solution: &PowerFlowSolution) -> f64 {
    solution.branch_loss_kw.iter().sum()
}

/// Total active loss from the bus-impedance double sum, in kW.
///
/// Builds the bus admittance matrix, drops the swing row/column, inverts,
/// and evaluates `P_L = ΣΣ α_ij (P_i P_j + Q_i Q_j) + β_ij (Q_i P_j − P_i Q_j)`
/// with `α_ij = R_ij cos(δ_i−δ_j)/(U_i U_j)` and
/// `β_ij = R_ij sin(δ_i−δ_j)/(U_i U_j)` over net bus injections. On a radial
/// network this agrees with the branch-sum loss; it serves as an independent
/// cross-check of the sweep.
pub fn exact_loss(case: &NetworkCase, solution: &PowerFlowSolution) -> Result<f64, SolveError> {
    let (r_red, keep) = reduced_resistance(case)?;
    let s_base = case.s_base_kw();
    let k = keep.len();
    let mut loss_pu = 0.0;
    for a in 0..k {
        let ia = keep[a];
        let (pa, qa) = (solution.p_net_kw[ia] / s_base, solution.q_net_kvar[ia] / s_base);
        for b in 0..k {
            let ib = keep[b];
            let (pb, qb) = (solution.p_net_kw[ib] / s_base, solution.q_net_kvar[ib] / s_base);
            let dd = solution.delta_rad[ia] - solution.delta_rad[ib];
            let uu = solution.u_pu[ia] * solution.u_pu[ib];
            let alpha = r_red[(a, b)] * dd.cos() / uu;
            let beta = r_red[(a, b)] * dd.sin() / uu;
            loss_pu += alpha * (pa * pb + qa * qb) + beta * (qa * pb - pa * qb);
        }
    }
    Ok(loss_pu * s_base)
}

/// Real part of the swing-reduced bus impedance matrix (per-unit), plus the
/// bus indices (into `case.buses`) its rows map to.
pub(crate) fn reduced_resistance(
    case: &NetworkCase,
) -> Result<(DMatrix<f64>, Vec<usize>), SolveError> {
    let topo = case.topology()?;
    let n = case.buses.len();
    let z_base = case.z_base_ohm();
    let keep: Vec<usize> = (0..n).filter(|&i| i != topo.swing).collect();
    if keep.is_empty() {
        return Ok((DMatrix::zeros(0, 0), keep));
    }
    // Position in the reduced matrix for each kept bus.
    let mut pos = vec![usize::MAX; n];
    for (a, &i) in keep.iter().enumerate() {
        pos[i] = a;
    }
    let k = keep.len();
    let mut y = DMatrix::from_element(k, k, Complex64::new(0.0, 0.0));
    for br in &case.branches {
        let fi = topo.index_of(br.from).expect("validated branch endpoint");
        let ti = topo.index_of(br.to).expect("validated branch endpoint");
        let admittance = Complex64::new(1.0, 0.0)
            / Complex64::new(br.r_ohm / z_base, br.x_ohm / z_base);
        for (i, j) in [(fi, fi), (ti, ti)] {
            if pos[i] != usize::MAX && pos[j] != usize::MAX {
                y[(pos[i], pos[j])] += admittance;
            }
        }
        if pos[fi] != usize::MAX && pos[ti] != usize::MAX {
            y[(pos[fi], pos[ti])] -= admittance;
            y[(pos[ti], pos[fi])] -= admittance;
        }
    }
    let z = y.try_inverse().ok_or(SolveError::SingularAdmittance)?;
    Ok((z.map(|c| c.re), keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Branch, Bus, BusKind};
    use approx::assert_relative_eq;

    /// Two-bus feeder with per-unit impedance (r, x) and a complex load in
    /// per-unit on a 12.66 kV / 10 MVA base.
    fn two_bus(r_pu: f64, x_pu: f64, p_load_pu: f64, q_load_pu: f64) -> NetworkCase {
        let z_base = 12.66 * 12.66 / 10.0;
        NetworkCase {
            base_kv: 12.66,
            base_mva: 10.0,
            buses: vec![
                Bus {
                    id: 1,
                    kind: BusKind::Swing,
                    p_kw: 0.0,
                    q_kvar: 0.0,
                    umin_pu: 0.9,
                    umax_pu: 1.1,
                },
                Bus {
                    id: 2,
                    kind: BusKind::Load,
                    p_kw: p_load_pu * 10_000.0,
                    q_kvar: q_load_pu * 10_000.0,
                    umin_pu: 0.9,
                    umax_pu: 1.1,
                },
            ],
            branches: vec![Branch {
                id: 1,
                from: 1,
                to: 2,
                r_ohm: r_pu * z_base,
                x_ohm: x_pu * z_base,
                s_rated_kva: 100_000.0,
            }],
        }
    }

    /// Closed-form receiving-end voltage magnitude of a single feeder:
    /// positive root of U⁴ + (2(rP+xQ) − 1)U² + (r²+x²)(P²+Q²) = 0.
    fn feeder_voltage(r: f64, x: f64, p: f64, q: f64) -> f64 {
        let a = 1.0 - 2.0 * (r * p + x * q);
        let c = (r * r + x * x) * (p * p + q * q);
        (0.5 * (a + (a * a - 4.0 * c).sqrt())).sqrt()
    }

    #[test]
    fn two_bus_matches_closed_form_resistive() {
        let case = two_bus(0.1, 0.0, 0.1, 0.0);
        let sol = solve_with(
            &case,
            &[],
            &SweepOptions { tolerance_pu: 1e-12, max_iterations: 100 },
        )
        .unwrap();
        assert!(sol.converged);
        let u2 = feeder_voltage(0.1, 0.0, 0.1, 0.0);
        assert_relative_eq!(sol.u_pu[1], u2, max_relative = 1e-9);
        // Loss: r·(P² + Q²)/U² in pu, 10 MVA base.
        let loss_kw = 0.1 * 0.01 / (u2 * u2) * 10_000.0;
        assert_relative_eq!(sol.p_loss_kw, loss_kw, max_relative = 1e-9);
        assert_relative_eq!(sol.u_pu[1], 0.989_897_948_556_635, max_relative = 1e-12);
        assert_relative_eq!(sol.p_loss_kw, 10.205_144_336_438, max_relative = 1e-9);
    }

    #[test]
    fn two_bus_matches_closed_form_with_reactance() {
        let (r, x, p, q) = (0.1, 0.05, 0.08, 0.06);
        let case = two_bus(r, x, p, q);
        let sol = solve_with(
            &case,
            &[],
            &SweepOptions { tolerance_pu: 1e-12, max_iterations: 100 },
        )
        .unwrap();
        let u2 = feeder_voltage(r, x, p, q);
        assert_relative_eq!(sol.u_pu[1], u2, max_relative = 1e-9);
        let loss_kw = r * (p * p + q * q) / (u2 * u2) * 10_000.0;
        assert_relative_eq!(sol.p_loss_kw, loss_kw, max_relative = 1e-9);
    }

    #[test]
    fn zero_load_gives_flat_profile() {
        let mut case = NetworkCase::pge69();
        for bus in &mut case.buses {
            bus.p_kw = 0.0;
            bus.q_kvar = 0.0;
        }
        let sol = solve(&case, &[]).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 1);
        assert!(sol.u_pu.iter().all(|&u| (u - 1.0).abs() < 1e-15));
        assert_eq!(sol.p_loss_kw, 0.0);
    }

    #[test]
    fn base_69_bus_regression() {
        let case = NetworkCase::pge69();
        let sol = solve_with(
            &case,
            &[],
            &SweepOptions { tolerance_pu: 1e-8, max_iterations: 100 },
        )
        .unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 20);
        assert_relative_eq!(sol.p_loss_kw, 224.960_628_218_144, max_relative = 1e-9);
        // Weakest bus sits at the end of the heavily loaded lateral.
        let (min_idx, &min_u) = sol
            .u_pu
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert_eq!(case.buses[min_idx].id, 65);
        assert_relative_eq!(min_u, 0.909_189_118_398, max_relative = 1e-8);
        let i27 = case.buses.iter().position(|b| b.id == 27).unwrap();
        assert_relative_eq!(sol.u_pu[i27], 0.956_340_222_014, max_relative = 1e-8);
    }

    #[test]
    fn dg_case_69_bus_regression() {
        let case = NetworkCase::pge69();
        let injections = [
            Injection { bus: 61, p_kw: 1556.0, q_kvar: 0.0 },
            Injection { bus: 50, p_kw: 183.0, q_kvar: 0.0 },
            Injection { bus: 49, p_kw: 185.0, q_kvar: 0.0 },
            Injection { bus: 64, p_kw: 30.0, q_kvar: 0.0 },
        ];
        let sol = solve_with(
            &case,
            &injections,
            &SweepOptions { tolerance_pu: 1e-8, max_iterations: 100 },
        )
        .unwrap();
        assert_relative_eq!(sol.p_loss_kw, 84.867_177_255_916, max_relative = 1e-8);
        let (min_idx, _) = sol
            .u_pu
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert_eq!(case.buses[min_idx].id, 27, "DG support moves the weakest bus");
    }

    #[test]
    fn energy_balance_holds() {
        let case = NetworkCase::pge69();
        let injections = [Injection { bus: 61, p_kw: 1000.0, q_kvar: 250.0 }];
        let sol = solve_with(
            &case,
            &injections,
            &SweepOptions { tolerance_pu: 1e-10, max_iterations: 100 },
        )
        .unwrap();
        let (p_load, q_load) = case.total_load();
        let p_residual = sol.p_swing_kw + 1000.0 - p_load - sol.p_loss_kw;
        let q_residual = sol.q_swing_kvar + 250.0 - q_load - sol.q_loss_kvar;
        assert!(p_residual.abs() < 1e-3, "P residual {p_residual}");
        assert!(q_residual.abs() < 1e-3, "Q residual {q_residual}");
    }

    #[test]
    fn branch_flow_quantities_are_self_consistent() {
        let case = NetworkCase::pge69();
        let sol = solve(&case, &[]).unwrap();
        let topo = case.topology().unwrap();
        let z_base = case.z_base_ohm();
        let s_base = case.s_base_kw();
        for (m, br) in case.branches.iter().enumerate() {
            // Receiving-end reconstruction: loss = R (P² + Q²) / U².
            let recv = topo.index_of(br.to).unwrap();
            let recv = if topo.parent[recv].map(|(_, mm)| mm) == Some(m) {
                recv
            } else {
                topo.index_of(br.from).unwrap()
            };
            let u2 = sol.u_pu[recv] * sol.u_pu[recv];
            let p = sol.branch_p_kw[m] / s_base;
            let q = sol.branch_q_kvar[m] / s_base;
            let expect = br.r_ohm / z_base * (p * p + q * q) / u2 * s_base;
            assert_relative_eq!(sol.branch_loss_kw[m], expect, max_relative = 1e-9);
        }
        assert_relative_eq!(total_loss(&case, &sol), sol.p_loss_kw, max_relative = 1e-12);
        assert_relative_eq!(branch_loss(&case, &sol, 1).unwrap() , sol.branch_loss_kw[0]);
        assert!(matches!(
            branch_loss(&case, &sol, 999),
            Err(SolveError::UnknownBranch(999))
        ));
    }

    #[test]
    fn exact_loss_agrees_with_branch_sum() {
        let case = NetworkCase::pge69();
        let opts = SweepOptions { tolerance_pu: 1e-10, max_iterations: 100 };
        let base = solve_with(&case, &[], &opts).unwrap();
        assert_relative_eq!(
            exact_loss(&case, &base).unwrap(),
            base.p_loss_kw,
            max_relative = 1e-9
        );
        let injections = [
            Injection { bus: 61, p_kw: 1556.0, q_kvar: 0.0 },
            Injection { bus: 50, p_kw: 183.0, q_kvar: 0.0 },
        ];
        let dg = solve_with(&case, &injections, &opts).unwrap();
        assert_relative_eq!(
            exact_loss(&case, &dg).unwrap(),
            dg.p_loss_kw,
            max_relative = 1e-9
        );
    }

    #[test]
    fn exact_loss_zero_case() {
        let mut case = NetworkCase::pge69();
        for bus in &mut case.buses {
            bus.p_kw = 0.0;
            bus.q_kvar = 0.0;
        }
        let sol = solve(&case, &[]).unwrap();
        assert!(exact_loss(&case, &sol).unwrap().abs() < 1e-12);
    }

    #[test]
    fn non_convergence_is_reported_not_thrown() {
        let case = NetworkCase::pge69();
        let sol = solve_with(
            &case,
            &[],
            &SweepOptions { tolerance_pu: 1e-30, max_iterations: 3 },
        )
        .unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 3);
        assert!(sol.max_mismatch_pu > 1e-30);
    }

    #[test]
    fn voltage_collapse_is_an_error_with_trace() {
        // 10 pu of load on a 0.1 pu feeder has no operating point.
        let case = two_bus(0.1, 0.0, 10.0, 0.0);
        match solve(&case, &[]) {
            Err(SolveError::VoltageCollapse { iteration, min_u_pu, trace }) => {
                assert!(min_u_pu < 0.5);
                assert_eq!(trace.len(), iteration);
            }
            other => panic!("expected collapse, got {other:?}"),
        }
    }

    #[test]
    fn bad_injections_are_rejected() {
        let case = NetworkCase::pge69();
        assert!(matches!(
            solve(&case, &[Injection { bus: 423, p_kw: 1.0, q_kvar: 0.0 }]),
            Err(SolveError::UnknownBus(423))
        ));
        assert!(matches!(
            solve(&case, &[Injection { bus: 1, p_kw: 1.0, q_kvar: 0.0 }]),
            Err(SolveError::SwingInjection(1))
        ));
    }

    #[test]
    fn small_leaf_injection_never_increases_loss() {
        // On the 2-bus feeder, loss decreases monotonically as injection
        // approaches the local load.
        let case = two_bus(0.08, 0.04, 0.1, 0.05);
        let mut last = f64::INFINITY;
        for step in 0..=10 {
            let p = 1000.0 * f64::from(step) / 10.0;
            let sol = solve(&case, &[Injection { bus: 2, p_kw: p, q_kvar: 0.0 }]).unwrap();
            assert!(
                sol.p_loss_kw <= last + 1e-12,
                "loss rose from {last} to {} at {p} kW",
                sol.p_loss_kw
            );
            last = sol.p_loss_kw;
        }
    }

    #[test]
    fn solve_is_deterministic() {
        let case = NetworkCase::pge69();
        let injections = [Injection { bus: 61, p_kw: 777.0, q_kvar: 123.0 }];
        let a = solve(&case, &injections).unwrap();
        let b = solve(&case, &injections).unwrap();
        assert_eq!(a.u_pu, b.u_pu);
        assert_eq!(a.p_loss_kw, b.p_loss_kw);
        assert_eq!(a.iterations, b.iterations);
    }
}
