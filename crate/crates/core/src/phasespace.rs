//! Closed-form evolution of the branch-resolved displaced-oscillator
//! dynamics: trajectories, enclosed areas, conditional phases, and the
//! resulting two-qubit gate, for one or many modes.

use crate::error::CcrError;
use crate::hilbert::{Anharmonicity, SystemSpec};
use crate::{Result, C64};

/// One assignment of +-1 to every qubit's Z.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BranchLabel(pub Vec<i8>);

impl BranchLabel {
    pub fn all(n_qubits: usize) -> Vec<BranchLabel> {
        (0..1usize << n_qubits)
            .map(|mask| {
                BranchLabel(
                    (0..n_qubits).map(|i| if mask >> i & 1 == 0 { 1 } else { -1 }).collect(),
                )
            })
            .collect()
    }

    pub fn z(&self, i: usize) -> f64 {
        self.0[i] as f64
    }
}

impl std::fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &s in &self.0 {
            write!(f, "{}", if s > 0 { '+' } else { '-' })?;
        }
        Ok(())
    }
}

/// Per-branch displaced-oscillator data for one mode:
/// H = eps_eff b^dag b + m_coeff (b + b^dag).
#[derive(Clone, Copy, Debug)]
pub struct BranchHamiltonian {
    /// Effective mode frequency eps' (bare detuning plus dispersive shifts).
    pub eps_eff: f64,
    /// Bare mode detuning (without Z-dependent shifts); pulse tracing needs
    /// it to flip the dispersive part.
    pub eps_bare: f64,
    /// Conditional displacement drive M.
    pub m_coeff: f64,
    pub mode_id: usize,
}

/// Dressing data per driven site.
#[derive(Clone, Debug)]
pub struct DressingAngles {
    pub theta: Vec<f64>,
    pub sin_theta: Vec<f64>,
    pub cos_theta: Vec<f64>,
    /// Effective transverse matrix element A_i: sin(theta) for qubits,
    /// -Omega eta/(Delta(Delta-eta)) for transmons.
    pub a_coeff: Vec<f64>,
}

/// Compute dressing angles and effective drive matrix elements.
pub fn dress(spec: &SystemSpec) -> Result<DressingAngles> {
    spec.validate()?;
    let n = spec.site_count();
    let mut theta = Vec::with_capacity(n);
    let mut sin_t = Vec::with_capacity(n);
    let mut cos_t = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    for i in 0..n {
        let delta = spec.delta(i);
        let omega = spec.rabi[i];
        let gap = (delta * delta + omega * omega).sqrt();
        if gap == 0.0 {
            return Err(CcrError::Resonance(format!("site {i}: Delta = Omega = 0")));
        }
        theta.push(omega.atan2(delta));
        sin_t.push(omega / gap);
        cos_t.push(delta / gap);
        match spec.eta[i] {
            Anharmonicity::Infinite => a.push(omega / gap),
            Anharmonicity::Finite(eta) => {
                if delta == 0.0 {
                    return Err(CcrError::Resonance(format!("site {i}: Delta = 0")));
                }
                if eta != 0.0 && delta == eta {
                    return Err(CcrError::Resonance(format!("site {i}: Delta = eta")));
                }
                a.push(-omega * eta / (delta * (delta - eta)));
            }
        }
    }
    Ok(DressingAngles { theta, sin_theta: sin_t, cos_theta: cos_t, a_coeff: a })
}

/// Branch-resolved Hamiltonians: one `BranchHamiltonian` per mode per branch.
/// `f_coeffs[i][k]` is the dispersive coefficient of qubit i on mode k.
pub fn branch_hamiltonians(
    spec: &SystemSpec,
    angles: &DressingAngles,
    f_coeffs: &[Vec<f64>],
) -> Result<Vec<(BranchLabel, Vec<BranchHamiltonian>)>> {
    let n = spec.site_count();
    let nm = spec.mode_count();
    if f_coeffs.len() != n {
        return Err(CcrError::DimensionMismatch { expected: n, got: f_coeffs.len() });
    }
    for row in f_coeffs {
        if row.len() != nm {
            return Err(CcrError::DimensionMismatch { expected: nm, got: row.len() });
        }
    }
    let mut out = Vec::new();
    for branch in BranchLabel::all(n) {
        let mut per_mode = Vec::with_capacity(nm);
        for k in 0..nm {
            let eps_bare = spec.eps(k);
            let mut eps_eff = eps_bare;
            let mut m = 0.0;
            for i in 0..n {
                eps_eff += f_coeffs[i][k] * branch.z(i);
                m += 0.5 * spec.g[i][k] * angles.a_coeff[i] * branch.z(i);
            }
            per_mode.push(BranchHamiltonian { eps_eff, eps_bare, m_coeff: m, mode_id: k });
        }
        out.push((branch, per_mode));
    }
    Ok(out)
}

/// Result of closed-form evolution over a time t.
#[derive(Clone, Copy, Debug)]
pub struct ClosedFormStep {
    /// Rotating-frame displacement (M/eps')(1 - e^{i eps' t}).
    pub displacement: C64,
    /// Accumulated phase (M/eps')^2 (eps' t - sin eps' t).
    pub phase: f64,
    /// Set when eps' t is numerically degenerate (series limit used).
    pub degenerate: bool,
}

/// (1 - e^{iu})/u, stable for small |u|.
fn expm1i_over(u: f64) -> C64 {
    if u.abs() < 1e-5 {
        // -i(1 + iu/2 - u^2/6 - i u^3/24)
        let series = C64::new(1.0, 0.0)
            + C64::new(0.0, u / 2.0)
            + C64::new(-u * u / 6.0, 0.0)
            + C64::new(0.0, -u * u * u / 24.0);
        C64::new(0.0, -1.0) * series
    } else {
        (C64::new(1.0, 0.0) - C64::from_polar(1.0, u)) / u
    }
}

/// (u - sin u)/u^2, stable for small |u|.
fn usinc2(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        u / 6.0 - u * u * u / 120.0
    } else {
        (u - u.sin()) / (u * u)
    }
}

/// Closed-form displacement and phase after evolving for time t.
pub fn evolve_closed_form(bh: &BranchHamiltonian, t: f64) -> ClosedFormStep {
    let u = bh.eps_eff * t;
    let degenerate = u.abs() < 1e-8;
    let displacement = bh.m_coeff * t * expm1i_over(u);
    let phase = bh.m_coeff * bh.m_coeff * t * t * usinc2(u);
    ClosedFormStep { displacement, phase, degenerate }
}

#[derive(Clone, Debug)]
pub struct BranchTrajectory {
    pub branch: BranchLabel,
    pub mode: usize,
    /// Rotating-frame samples (t, <b>).
    pub samples: Vec<(f64, C64)>,
    /// |<b(T)> - <b(0)>|.
    pub closure_residual: f64,
    /// Signed enclosed area from shoelace quadrature of the samples.
    pub area: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrajectoryResult {
    pub trajectories: Vec<BranchTrajectory>,
    /// Analytic accumulated phase per branch (summed over modes).
    pub phases: Vec<(BranchLabel, f64)>,
}

impl TrajectoryResult {
    pub fn phase(&self, branch: &BranchLabel) -> Option<f64> {
        self.phases.iter().find(|(b, _)| b == branch).map(|(_, p)| *p)
    }

    pub fn max_closure_residual(&self) -> f64 {
        self.trajectories.iter().map(|t| t.closure_residual).fold(0.0, f64::max)
    }

    /// CSV serialization: branch,mode,t,re_b,im_b.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("branch,mode,t,re_b,im_b\n");
        for tr in &self.trajectories {
            for &(t, b) in &tr.samples {
                out.push_str(&format!(
                    "{},{},{:.12e},{:.12e},{:.12e}\n",
                    tr.branch, tr.mode, t, b.re, b.im
                ));
            }
        }
        out
    }
}

/// Trapezoidal shoelace area of a sampled closed path.
pub fn shoelace_area(samples: &[(f64, C64)]) -> f64 {
    let mut area = 0.0;
    for w in samples.windows(2) {
        let (a, b) = (w[0].1, w[1].1);
        area += 0.5 * (a.re * b.im - b.re * a.im);
    }
    if let (Some(first), Some(last)) = (samples.first(), samples.last()) {
        let (a, b) = (last.1, first.1);
        area += 0.5 * (a.re * b.im - b.re * a.im);
    }
    area
}

/// Conditional-phase gate summary over all branches.
#[derive(Clone, Debug)]
pub struct ConditionalGate {
    pub phases: Vec<(BranchLabel, f64)>,
    /// Final photon displacement norm per branch (summed in quadrature over
    /// modes).
    pub residual_entanglement: Vec<(BranchLabel, f64)>,
}

impl ConditionalGate {
    pub fn phase(&self, z: &[i8]) -> f64 {
        self.phases
            .iter()
            .find(|(b, _)| b.0 == z)
            .map(|(_, p)| *p)
            .expect("branch not present")
    }

    /// |phi(++) + phi(--) - phi(+-) - phi(-+)| for the first two qubits.
    pub fn nonlinear_phase(&self) -> f64 {
        let n = self.phases[0].0 .0.len();
        let mut acc = 0.0;
        // average over spectator settings (they carry no nonlinear content
        // for branch-diagonal dynamics, but keep this well-defined)
        let mut count = 0.0;
        let spectators: Vec<Vec<i8>> = if n > 2 {
            BranchLabel::all(n - 2).into_iter().map(|b| b.0).collect()
        } else {
            vec![vec![]]
        };
        for rest in &spectators {
            let mut combo = 0.0;
            for (z1, z2, sign) in
                [(1i8, 1i8, 1.0), (-1, -1, 1.0), (1, -1, -1.0), (-1, 1, -1.0)]
            {
                let mut z = vec![z1, z2];
                z.extend_from_slice(rest);
                combo += sign * self.phase(&z);
            }
            acc += combo;
            count += 1.0;
        }
        (acc / count).abs()
    }

    pub fn max_residual(&self) -> f64 {
        self.residual_entanglement.iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }

    pub fn is_cz(&self, tol: f64) -> bool {
        let p = self.nonlinear_phase();
        let wrapped = (p.rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI).abs();
        wrapped < tol && self.max_residual() < tol
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (b, p) in &self.phases {
            let r = self.residual_entanglement.iter().find(|(bb, _)| bb == b).map(|(_, r)| *r);
            out.push_str(&format!(
                "branch {}: phase {:.12e} residual {:.12e}\n",
                b,
                p,
                r.unwrap_or(0.0)
            ));
        }
        out.push_str(&format!("nonlinear_phase: {:.12e}\n", self.nonlinear_phase()));
        out
    }
}

/// Number of trajectory samples per petal/circle.
pub const SAMPLES_PER_PETAL: usize = 512;

/// Run the plain constant-duration gate: every branch/mode evolves freely for
/// `tau`. Branches with eps' ~ 0 and nonzero M simply report their (large)
/// residual; that is data, not an error.
pub fn run_gate(
    spec: &SystemSpec,
    f_coeffs: &[Vec<f64>],
    tau: f64,
) -> Result<(ConditionalGate, TrajectoryResult)> {
    if tau <= 0.0 {
        return Err(CcrError::InvalidParameter("duration must be positive".into()));
    }
    let angles = dress(spec)?;
    let bh = branch_hamiltonians(spec, &angles, f_coeffs)?;
    let mut phases = Vec::new();
    let mut residuals = Vec::new();
    let mut trajectories = Vec::new();
    for (branch, mods) in &bh {
        let mut phase = 0.0;
        let mut resid2 = 0.0;
        for m in mods {
            let step = evolve_closed_form(m, tau);
            phase += step.phase;
            resid2 += step.displacement.norm_sqr();
            let n_loops = (m.eps_eff.abs() * tau / (2.0 * std::f64::consts::PI)).ceil().max(1.0);
            let n_samples = SAMPLES_PER_PETAL * n_loops as usize;
            let samples: Vec<(f64, C64)> = (0..=n_samples)
                .map(|j| {
                    let t = tau * j as f64 / n_samples as f64;
                    (t, evolve_closed_form(m, t).displacement)
                })
                .collect();
            let area = shoelace_area(&samples);
            trajectories.push(BranchTrajectory {
                branch: branch.clone(),
                mode: m.mode_id,
                closure_residual: step.displacement.norm(),
                area,
                samples,
            });
        }
        phases.push((branch.clone(), phase));
        residuals.push((branch.clone(), resid2.sqrt()));
    }
    Ok((
        ConditionalGate { phases: phases.clone(), residual_entanglement: residuals },
        TrajectoryResult { trajectories, phases },
    ))
}

/// Phase and gate time for a two-level (qubit) mediator driven through one
/// full Rabi-like cycle: time pi/sqrt(M^2 + (eps/2)^2), conditional phase
/// pi (1 - eps/sqrt(eps^2 + 4 M^2)).
pub fn qubit_mediator_phase(m: f64, eps: f64) -> Result<(f64, f64)> {
    if m == 0.0 && eps == 0.0 {
        return Err(CcrError::InvalidParameter("M and eps cannot both vanish".into()));
    }
    let time = std::f64::consts::PI / (m * m + eps * eps / 4.0).sqrt();
    let phase = std::f64::consts::PI * (1.0 - eps / (eps * eps + 4.0 * m * m).sqrt());
    Ok((phase, time))
}

/// Integer-tuned gate: eps' tau = pi (n_eps + n1 z1 + n2 z2) for every
/// branch, so every branch closes exactly; the phase is M^2 tau / eps'.
pub fn integers_phase(
    spec: &SystemSpec,
    n_eps: i64,
    n1: i64,
    n2: i64,
    tau: f64,
) -> Result<ConditionalGate> {
    if (n_eps + n1 + n2) % 2 != 0 {
        return Err(CcrError::InvalidParameter(format!(
            "n_eps + n1 + n2 = {} must be even",
            n_eps + n1 + n2
        )));
    }
    for (s1, s2) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
        if n_eps + s1 * n1 + s2 * n2 == 0 {
            return Err(CcrError::InvalidParameter(
                "n_eps +- n1 +- n2 = 0: branch never disentangles".into(),
            ));
        }
    }
    if tau <= 0.0 {
        return Err(CcrError::InvalidParameter("tau must be positive".into()));
    }
    let angles = dress(spec)?;
    let mut phases = Vec::new();
    let mut residuals = Vec::new();
    for branch in BranchLabel::all(2) {
        let combo = n_eps as f64 + branch.z(0) * n1 as f64 + branch.z(1) * n2 as f64;
        let eps_eff = std::f64::consts::PI * combo / tau;
        let m = 0.5
            * (spec.g[0][0] * angles.a_coeff[0] * branch.z(0)
                + spec.g[1][0] * angles.a_coeff[1] * branch.z(1));
        phases.push((branch.clone(), m * m * tau / eps_eff));
        residuals.push((branch, 0.0));
    }
    Ok(ConditionalGate { phases, residual_entanglement: residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use std::f64::consts::PI;

    #[test]
    fn dress_qubit_limit() {
        let spec = SystemSpec::two_qubit_one_mode(1.1, [2.0, 2.0], [0.05, 0.05], [0.1, 0.0], 1.0);
        let d = dress(&spec).unwrap();
        assert_relative_eq!(d.a_coeff[0], 0.1 / 1.01f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(d.sin_theta[0], 0.1 / 1.01f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(d.theta[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(d.a_coeff[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dress_transmon_matrix_element() {
        let mut spec = SystemSpec::two_qubit_one_mode(1.1, [2.0, 2.0], [0.05, 0.05], [0.1, 0.1], 1.0);
        spec.eta = vec![Anharmonicity::Finite(0.3), Anharmonicity::Finite(0.0)];
        let d = dress(&spec).unwrap();
        assert_relative_eq!(d.a_coeff[0], -0.1 * 0.3 / (1.0 * 0.7), epsilon = 1e-12);
        assert_relative_eq!(d.a_coeff[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn branch_m_and_eps_patterns() {
        let spec = SystemSpec::two_qubit_one_mode(1.1, [2.0, 2.0], [0.1, 0.1], [0.3, 0.3], 1.0);
        let d = dress(&spec).unwrap();
        let s = 0.5 * 0.1 * d.a_coeff[0];
        let f = 0.01;
        let bh = branch_hamiltonians(&spec, &d, &[vec![f], vec![f]]).unwrap();
        for (branch, mods) in &bh {
            let m = mods[0].m_coeff;
            let expect_m = s * (branch.z(0) + branch.z(1));
            assert_relative_eq!(m, expect_m, epsilon = 1e-14);
            assert_relative_eq!(
                mods[0].eps_eff,
                0.1 + f * (branch.z(0) + branch.z(1)),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn closed_form_point_checks() {
        let bh = BranchHamiltonian { eps_eff: 2.0, eps_bare: 2.0, m_coeff: 1.0, mode_id: 0 };
        let full = evolve_closed_form(&bh, PI);
        assert!(full.displacement.norm() < 1e-12);
        assert_relative_eq!(full.phase, PI / 2.0, epsilon = 1e-12);
        let half = evolve_closed_form(&bh, PI / 2.0);
        assert!((half.displacement - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn degenerate_branch_limit() {
        let bh = BranchHamiltonian { eps_eff: 0.0, eps_bare: 0.0, m_coeff: 0.3, mode_id: 0 };
        let s = evolve_closed_form(&bh, 2.0);
        assert!(s.degenerate);
        assert!((s.displacement - C64::new(0.0, -0.6)).norm() < 1e-10);
        assert!(s.phase.abs() < 1e-10);
        // continuity against a tiny but finite eps'
        let bh2 = BranchHamiltonian { eps_eff: 1e-7, ..bh };
        let s2 = evolve_closed_form(&bh2, 2.0);
        assert!((s.displacement - s2.displacement).norm() < 1e-6);
    }

    #[test]
    fn plain_gate_cz_point() {
        // g1 = g2 = 0.1, sin(theta) ~ 1 via huge Omega: use directly tuned
        // branch data instead: G = g1 g2 s1 s2, eps = 2 sqrt(G), tau = pi/sqrt(G).
        let g = 0.1;
        let omega = 1e4;
        let delta = 1.0;
        let spec = SystemSpec::two_qubit_one_mode(
            1.0 + delta,
            [1.0 + delta, 1.0 + delta],
            [g, g],
            [omega, omega],
            1.0 + delta - 2.0 * g, // eps = 2 g sin(theta) ~ 2g
        );
        let d = dress(&spec).unwrap();
        let s1 = d.sin_theta[0];
        let gph = g * g * s1 * s1;
        // eps must be exactly 2 sqrt(G) for closure
        let mut spec = spec;
        spec.omega_d = spec.nu_modes[0] - 2.0 * gph.sqrt();
        let d = dress(&spec).unwrap();
        let gph = g * g * d.sin_theta[0] * d.sin_theta[1];
        let tau = PI / gph.sqrt();
        let (gate, _) = run_gate(&spec, &[vec![0.0], vec![0.0]], tau).unwrap();
        assert!(gate.max_residual() < 1e-9, "residual {}", gate.max_residual());
        assert_relative_eq!(gate.nonlinear_phase(), PI, epsilon = 1e-8);
    }

    #[test]
    fn mediator_phase_points() {
        let (phi, _) = qubit_mediator_phase(0.3, 0.0).unwrap();
        assert_relative_eq!(phi, PI, epsilon = 1e-12);
        let (phi, _) = qubit_mediator_phase(0.5, 1.0).unwrap();
        assert_relative_eq!(phi, PI * (1.0 - 1.0 / 2.0f64.sqrt()), epsilon = 1e-12);
        let (phi, _) = qubit_mediator_phase(1e-9, 1.0).unwrap();
        assert!(phi < 1e-8);
    }

    #[test]
    fn integers_validity_conditions() {
        let spec = SystemSpec::two_qubit_one_mode(1.1, [2.0, 2.0], [0.1, 0.1], [0.3, 0.3], 1.0);
        assert!(integers_phase(&spec, 4, 1, 1, 10.0).is_ok());
        assert!(integers_phase(&spec, 2, 1, 1, 10.0).is_err()); // 2-1-1 = 0
        assert!(integers_phase(&spec, 3, 1, 1, 10.0).is_err()); // parity
    }

    #[test]
    fn integers_reduces_to_plain_when_untuned() {
        let spec = SystemSpec::two_qubit_one_mode(1.1, [2.0, 2.0], [0.1, 0.1], [0.3, 0.3], 1.0);
        let tau = 20.0;
        let g = integers_phase(&spec, 4, 0, 0, tau).unwrap();
        let eps = 4.0 * PI / tau;
        let d = dress(&spec).unwrap();
        let m = 0.5 * (0.1 * d.a_coeff[0] + 0.1 * d.a_coeff[1]);
        assert_relative_eq!(g.phase(&[1, 1]), m * m * tau / eps, epsilon = 1e-12);
    }

    #[test]
    fn circle_geometry_invariant() {
        let bh = BranchHamiltonian { eps_eff: 0.9, eps_bare: 0.9, m_coeff: 0.2, mode_id: 0 };
        let r = bh.m_coeff / bh.eps_eff;
        let center = C64::new(r, 0.0);
        for j in 0..100 {
            let t = 7.0 * j as f64 / 100.0;
            let b = evolve_closed_form(&bh, t).displacement;
            assert!(((b - center).norm() - r.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_equals_twice_area_full_circle() {
        let bh = BranchHamiltonian { eps_eff: 0.8, eps_bare: 0.8, m_coeff: 0.3, mode_id: 0 };
        let tau = 2.0 * PI / 0.8;
        let n = 4096;
        let samples: Vec<(f64, C64)> = (0..=n)
            .map(|j| {
                let t = tau * j as f64 / n as f64;
                (t, evolve_closed_form(&bh, t).displacement)
            })
            .collect();
        let area = shoelace_area(&samples);
        let phase = evolve_closed_form(&bh, tau).phase;
        assert_relative_eq!(phase, 2.0 * area, epsilon = 1e-6);
    }

    /// Closed form vs truncated-Fock propagation of the same branch
    /// Hamiltonian: displacement and accumulated phase to 1e-8.
    #[test]
    fn closed_form_vs_fock_oracle() {
        let bh = BranchHamiltonian { eps_eff: 0.6, eps_bare: 0.6, m_coeff: 0.18, mode_id: 0 };
        let cutoff = hilbert::fock_cutoff_for(bh.m_coeff / bh.eps_eff) + 10;
        let b = hilbert::lowering(cutoff);
        let h = hilbert::number_op(cutoff).scale(bh.eps_eff) + (&b + &b.adjoint()).scale(bh.m_coeff);
        let op = hilbert::OperatorMatrix::hermitian_checked(h).unwrap();
        let mut vac = DVector::zeros(cutoff);
        vac[0] = C64::new(1.0, 0.0);
        let tau = 2.0 * PI / bh.eps_eff; // one full circle
        let state =
            &hilbert::propagate(&hilbert::Hamiltonian::Static(op), &vac, &[tau], 1e-12).unwrap()[0];
        let overlap = state[0]; // <0|psi>: closure means pure phase
        let cf = evolve_closed_form(&bh, tau);
        assert!(cf.displacement.norm() < 1e-12);
        let phase_num = overlap.arg();
        let dphi = (phase_num - cf.phase).rem_euclid(2.0 * PI);
        let dphi = dphi.min(2.0 * PI - dphi);
        assert!(dphi < 1e-8, "phase mismatch {dphi}");
        assert!((overlap.norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn effective_zz_regime() {
        // large-eps regime: conditional phases reduce to the static ZZ form
        let g = 0.05;
        let spec = SystemSpec::two_qubit_one_mode(2.0, [3.0, 3.0], [g, g], [0.5, 0.5], 1.0);
        let d = dress(&spec).unwrap();
        let eps = 1.0;
        let m_max = 0.5 * g * (d.a_coeff[0] + d.a_coeff[1]);
        assert!(eps >= 10.0 * m_max.abs());
        let tau = 2.0 * PI / eps * 3.0;
        let (gate, _) = run_gate(&spec, &[vec![0.0], vec![0.0]], tau).unwrap();
        let zz = -g * g * d.sin_theta[0] * d.sin_theta[1] / (2.0 * eps);
        // phi(z) ~ -tau * zz_coeff * z1 z2 (+ single-qubit terms, equal here)
        let nl_expect = (4.0 * tau * zz).abs();
        let rel = (gate.nonlinear_phase() - nl_expect).abs() / nl_expect;
        let bound = 2.0 * (m_max / eps).powi(2) * 10.0;
        assert!(rel < bound.max(1e-4), "rel {rel} bound {bound}");
    }
}
