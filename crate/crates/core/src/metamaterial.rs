//! Coupled-cavity-chain ("metamaterial") mode analysis: normal-mode
//! decomposition of the cavity chain, feasibility margins for driving many
//! disjoint qubit pairs simultaneously, closed-form error-scaling estimators
//! with exact branch-enumeration experiments, multi-mode gate reports, and
//! the 2D-grid frequency assignment that nulls every nearest-neighbor ZZ
//! coupling.

use crate::error::CcrError;
use crate::flowers::{
    compose_schedule, gate_from_trace, make_flower_schedule, trace_flower, FlipSemantics,
    PulseSchedule, ScheduleStyle,
};
use crate::hilbert::hermitian_eigen_sorted;
use crate::perturbation::{order_fit, zero_zz_cavity_frequency};
use crate::phasespace::{evolve_closed_form, BranchHamiltonian, BranchLabel, ConditionalGate};
use crate::{C64, Result};
use nalgebra::DMatrix;
use std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Chain diagonalization
// ---------------------------------------------------------------------------

/// One qubit attached to one cavity of the chain.
#[derive(Clone, Copy, Debug)]
pub struct Attachment {
    pub qubit: usize,
    pub cavity: usize,
    pub g: f64,
}

/// A chain of identical cavities with nearest-neighbor hopping, plus qubit
/// attachments.
#[derive(Clone, Debug)]
pub struct ChainSpec {
    pub n_cavities: usize,
    pub nu_local: f64,
    pub j: f64,
    pub attachments: Vec<Attachment>,
    /// Open boundary by default; periodic closes the ring.
    pub periodic: bool,
}

impl ChainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_cavities == 0 {
            return Err(CcrError::InvalidParameter("chain needs at least one cavity".into()));
        }
        for a in &self.attachments {
            if a.cavity >= self.n_cavities {
                return Err(CcrError::InvalidParameter(format!(
                    "attachment of qubit {} references cavity {} >= {}",
                    a.qubit, a.cavity, self.n_cavities
                )));
            }
        }
        Ok(())
    }
}

/// Normal-mode decomposition of the chain.
#[derive(Clone, Debug)]
pub struct ModeStructure {
    /// Eigenfrequencies, ascending.
    pub nu_k: Vec<f64>,
    /// Orthogonal mode matrix; entry (i, k) maps cavity i to mode k.
    pub eta_ik: DMatrix<f64>,
    /// Derived couplings per attachment: (qubit index, g_i * eta_{cavity, k}).
    pub g_ik: Vec<(usize, Vec<f64>)>,
    pub min_spacing: f64,
    pub mean_spacing: f64,
}

impl ModeStructure {
    pub fn mode_count(&self) -> usize {
        self.nu_k.len()
    }

    /// Per-mode couplings of one qubit, if attached.
    pub fn qubit_couplings(&self, qubit: usize) -> Option<&[f64]> {
        self.g_ik.iter().find(|(q, _)| *q == qubit).map(|(_, g)| g.as_slice())
    }

    /// Nearest spacing from mode k to any other mode.
    pub fn spacing_from(&self, k: usize) -> f64 {
        self.nu_k
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, &v)| (v - self.nu_k[k]).abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,frequency\n");
        for (k, v) in self.nu_k.iter().enumerate() {
            out.push_str(&format!("{k},{v:.12e}\n"));
        }
        out
    }
}

/// Exact normal modes of the tridiagonal (or ring) cavity chain; for the
/// open chain the spectrum is nu + 2 J cos(k pi/(N+1)) with sine-wave mode
/// vectors.
pub fn diagonalize_chain(chain: &ChainSpec) -> Result<ModeStructure> {
    chain.validate()?;
    let n = chain.n_cavities;
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = C64::new(chain.nu_local, 0.0);
        if i + 1 < n {
            m[(i, i + 1)] = C64::new(chain.j, 0.0);
            m[(i + 1, i)] = C64::new(chain.j, 0.0);
        }
    }
    if chain.periodic && n > 2 {
        m[(0, n - 1)] += C64::new(chain.j, 0.0);
        m[(n - 1, 0)] += C64::new(chain.j, 0.0);
    }
    let (vals, vecs) = hermitian_eigen_sorted(&m);
    let nu_k: Vec<f64> = vals.iter().cloned().collect();
    let eta_ik = DMatrix::from_fn(n, n, |i, k| vecs[(i, k)].re);
    let dev = (eta_ik.transpose() * &eta_ik - DMatrix::<f64>::identity(n, n)).amax();
    if dev > 1e-10 {
        return Err(CcrError::NonHermitian { deviation: dev });
    }
    let g_ik = chain
        .attachments
        .iter()
        .map(|a| (a.qubit, (0..n).map(|k| a.g * eta_ik[(a.cavity, k)]).collect()))
        .collect();
    let spacings: Vec<f64> = nu_k.windows(2).map(|w| w[1] - w[0]).collect();
    let (min_spacing, mean_spacing) = if spacings.is_empty() {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (
            spacings.iter().cloned().fold(f64::INFINITY, f64::min),
            spacings.iter().sum::<f64>() / spacings.len() as f64,
        )
    };
    Ok(ModeStructure { nu_k, eta_ik, g_ik, min_spacing, mean_spacing })
}

// ---------------------------------------------------------------------------
// Pair assignment feasibility
// ---------------------------------------------------------------------------

/// Drive settings per qubit (indexed by qubit index used in attachments).
#[derive(Clone, Debug)]
pub struct DriveParams {
    pub omega: Vec<f64>,
    pub rabi: Vec<f64>,
    pub omega_d: f64,
}

/// Margins for one driven pair; every margin is a dimensionless ratio that
/// should be large.
#[derive(Clone, Debug)]
pub struct PairMargins {
    pub qubits: (usize, usize),
    pub mode: usize,
    /// Nearest-mode spacing over cross-resonance strength (the condition for
    /// neglecting the other chain modes).
    pub coupling_to_spacing: f64,
    /// Mode separation between simultaneously driven pairs over the larger
    /// of the two gate strengths.
    pub cross_drive: f64,
    /// Smallest flip-flop resonance mismatch |omega_i + nu_p - omega_j -
    /// nu_k| across pairs, over the geometric mean of the gate strengths.
    pub dispersive_resonance: f64,
}

impl PairMargins {
    pub fn min(&self) -> f64 {
        self.coupling_to_spacing.min(self.cross_drive).min(self.dispersive_resonance)
    }
}

#[derive(Clone, Debug)]
pub struct FeasibilityReport {
    pub per_pair: Vec<PairMargins>,
    pub margin_factor: f64,
    pub feasible: bool,
}

impl FeasibilityReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "feasible: {} (margin factor {:.3})\n",
            self.feasible, self.margin_factor
        );
        for p in &self.per_pair {
            out.push_str(&format!(
                "pair ({},{}) mode {}: spacing {:.3e} cross-drive {:.3e} flip-flop {:.3e}\n",
                p.qubits.0,
                p.qubits.1,
                p.mode,
                p.coupling_to_spacing,
                p.cross_drive,
                p.dispersive_resonance
            ));
        }
        out
    }
}

/// Check whether disjoint qubit pairs, each assigned its own chain mode, can
/// be driven simultaneously: every margin must exceed `margin_factor`
/// (default 10 when NaN is passed... use `pair_assignment_check` with an
/// explicit factor).
pub fn pair_assignment_check(
    modes: &ModeStructure,
    pairs: &[(usize, usize, usize)],
    drive: &DriveParams,
    margin_factor: f64,
) -> Result<FeasibilityReport> {
    let mut seen_qubits = std::collections::HashSet::new();
    let mut seen_modes = std::collections::HashSet::new();
    for &(a, b, k) in pairs {
        if a == b || !seen_qubits.insert(a) || !seen_qubits.insert(b) {
            return Err(CcrError::InvalidParameter(format!(
                "pairs must be disjoint; qubit {} reused",
                if a == b || !seen_qubits.contains(&b) { a } else { b }
            )));
        }
        if !seen_modes.insert(k) {
            return Err(CcrError::InvalidParameter(format!("mode {k} assigned twice")));
        }
        if k >= modes.mode_count() {
            return Err(CcrError::InvalidParameter(format!("mode {k} out of range")));
        }
    }
    // gate strength of qubit q driven near mode k: |g_{q,k} Omega_q / Delta_q|
    let strength = |q: usize, k: usize| -> Result<f64> {
        let g = modes
            .qubit_couplings(q)
            .ok_or_else(|| CcrError::InvalidParameter(format!("qubit {q} not attached")))?[k];
        let delta = drive.omega[q] - modes.nu_k[k];
        if delta == 0.0 {
            return Err(CcrError::Resonance(format!("qubit {q} resonant with mode {k}")));
        }
        Ok((g * drive.rabi[q] / delta).abs())
    };
    let mut per_pair = Vec::new();
    for &(qa, qb, ka) in pairs {
        let sa = strength(qa, ka)?;
        let sb = strength(qb, ka)?;
        let spacing = modes.spacing_from(ka);
        let coupling_to_spacing = spacing / sa.max(sb);
        let mut cross_drive = f64::INFINITY;
        let mut dispersive = f64::INFINITY;
        for &(qc, qd, kb) in pairs {
            if kb == ka {
                continue;
            }
            let sc = strength(qc, kb)?.max(strength(qd, kb)?);
            cross_drive =
                cross_drive.min((modes.nu_k[ka] - modes.nu_k[kb]).abs() / sa.max(sb).max(sc));
            for &i in &[qa, qb] {
                for &j in &[qc, qd] {
                    let mismatch =
                        (drive.omega[i] + modes.nu_k[ka] - drive.omega[j] - modes.nu_k[kb]).abs();
                    let scale = (strength(i, ka)? * strength(j, kb)?).sqrt();
                    dispersive = dispersive.min(mismatch / scale);
                }
            }
        }
        per_pair.push(PairMargins {
            qubits: (qa, qb),
            mode: ka,
            coupling_to_spacing,
            cross_drive,
            dispersive_resonance: dispersive,
        });
    }
    let feasible = per_pair.iter().all(|p| p.min() >= margin_factor);
    Ok(FeasibilityReport { per_pair, margin_factor, feasible })
}

// ---------------------------------------------------------------------------
// Infidelity estimators and exact scaling experiments
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Uncancelled,
    Integers,
    Flowers,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Case {
    Worst,
    Average,
}

/// Parameters of the N-qubit, single-mode error estimate.
#[derive(Clone, Copy, Debug)]
pub struct ScalingParams {
    /// Number of qubits coupled to the mode.
    pub n: usize,
    pub g: f64,
    pub delta: f64,
    pub eps0: f64,
    pub rabi: f64,
}

/// Order-of-magnitude infidelity estimate with unit prefactor: uncancelled
/// and integers scale as (x g^2/(Delta eps0))^2, flowers as (x g/Omega)^4,
/// where x = N in the worst case (constructive interference) and sqrt(N) on
/// average (random walk).
pub fn infidelity_estimates(p: &ScalingParams, scheme: Scheme, case: Case) -> f64 {
    let x = match case {
        Case::Worst => p.n as f64,
        Case::Average => (p.n as f64).sqrt(),
    };
    match scheme {
        Scheme::Uncancelled | Scheme::Integers => {
            (x * p.g * p.g / (p.delta * p.eps0)).powi(2)
        }
        Scheme::Flowers => (x * p.g / p.rabi).powi(4),
    }
}

/// Fixed drive parameters for the exact scaling experiments; the small
/// parameter swept is n_qubits * g / Omega.
#[derive(Clone, Debug)]
pub struct ScalingBase {
    pub delta: f64,
    pub rabi: f64,
    pub ratios: Vec<f64>,
}

impl Default for ScalingBase {
    fn default() -> Self {
        ScalingBase { delta: 1.0, rabi: 0.05, ratios: vec![0.02, 0.04, 0.08] }
    }
}

#[derive(Clone, Debug)]
pub struct ScalingExperiment {
    pub scheme: Scheme,
    /// (spectator count, small parameter, worst-case infidelity).
    pub rows: Vec<(usize, f64, f64)>,
    /// Fitted infidelity exponent per spectator count.
    pub exponents: Vec<(usize, f64)>,
}

impl ScalingExperiment {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("spectators,small_parameter,infidelity\n");
        for (n, s, i) in &self.rows {
            out.push_str(&format!("{n},{s:.12e},{i:.12e}\n"));
        }
        out
    }
}

/// Coherent-state overlap <beta|alpha>.
fn coherent_overlap(alpha: C64, beta: C64) -> C64 {
    (C64::new(-(alpha.norm_sqr() + beta.norm_sqr()) / 2.0, 0.0) + beta.conj() * alpha).exp()
}

/// Per-branch fidelity amplitude of the actual evolution against the
/// spectator-free desired evolution.
fn branch_amplitude(
    scheme: Scheme,
    eps0: f64,
    x_act: f64,
    x_des: f64,
    m: f64,
    schedule: &PulseSchedule,
) -> Result<C64> {
    let bh = |x: f64| BranchHamiltonian {
        eps_eff: eps0 * (1.0 + x),
        eps_bare: eps0,
        m_coeff: m,
        mode_id: 0,
    };
    match scheme {
        Scheme::Uncancelled => {
            // single circle eps0 tau = 2 pi, no pulses; compare full lab
            // states (coherent displacement plus accumulated phase)
            let tau = 2.0 * PI / eps0;
            let state = |x: f64| {
                let b = bh(x);
                let step = evolve_closed_form(&b, tau);
                let lab = step.displacement * C64::from_polar(1.0, -b.eps_eff * tau);
                (lab, step.phase)
            };
            let (a_lab, a_ph) = state(x_act);
            let (d_lab, d_ph) = state(x_des);
            Ok(coherent_overlap(a_lab, d_lab) * C64::from_polar(1.0, a_ph - d_ph))
        }
        Scheme::Integers => {
            // closure by assumption; only the conditional phase M^2 tau/eps'
            // differs between actual and desired
            let tau = 2.0 * PI / eps0;
            let ph = |x: f64| m * m * tau / (eps0 * (1.0 + x));
            Ok(C64::from_polar(1.0, ph(x_act) - ph(x_des)))
        }
        Scheme::Flowers => {
            let (s_act, ph_act) = compose_schedule(&bh(x_act), schedule, FlipSemantics::ZFlip)?;
            let (s_des, ph_des) = compose_schedule(&bh(x_des), schedule, FlipSemantics::ZFlip)?;
            Ok(coherent_overlap(s_act, s_des) * C64::from_polar(1.0, ph_act - ph_des))
        }
    }
}

/// Exact worst-case infidelity of the N-qubit single-mode gate by full
/// branch enumeration: the worst input is an equal superposition of the two
/// branch states minimizing |(A_b + A_b')/2|^2.
pub fn worst_case_infidelity(
    scheme: Scheme,
    spectators: usize,
    small_parameter: f64,
    base: &ScalingBase,
) -> Result<f64> {
    let n_q = spectators + 2;
    if n_q > 12 {
        return Err(CcrError::InvalidParameter(format!(
            "branch budget exceeded: {n_q} qubits -> {} branches",
            1u64 << n_q
        )));
    }
    let omega = base.rabi;
    let delta = base.delta;
    let g = small_parameter * omega / n_q as f64;
    let sin_theta = omega / (delta * delta + omega * omega).sqrt();
    let f = g * g / delta;
    let eps0 = g * sin_theta;
    let schedule = make_flower_schedule(4, eps0, ScheduleStyle::Original, 0)?;
    let mut amps = Vec::with_capacity(1 << n_q);
    for branch in BranchLabel::all(n_q) {
        let zsum: f64 = (0..n_q).map(|i| branch.z(i)).sum();
        let pair_sum = branch.z(0) + branch.z(1);
        let x_act = f * zsum / eps0;
        let x_des = f * pair_sum / eps0;
        let m = 0.5 * g * sin_theta * pair_sum;
        amps.push(branch_amplitude(scheme, eps0, x_act, x_des, m, &schedule)?);
    }
    let mut f_min = 1.0f64;
    for (i, &a) in amps.iter().enumerate() {
        for &b in &amps[i..] {
            f_min = f_min.min(((a + b) * 0.5).norm_sqr());
        }
    }
    Ok(1.0 - f_min)
}

/// Sweep the small parameter for each spectator count and fit the
/// infidelity exponent; exact branch simulation, no perturbative input.
pub fn scaling_experiment(
    scheme: Scheme,
    spectator_counts: &[usize],
    base: &ScalingBase,
) -> Result<ScalingExperiment> {
    let mut rows = Vec::new();
    let mut exponents = Vec::new();
    for &n in spectator_counts {
        let mut infs = Vec::new();
        for &s in &base.ratios {
            let inf = worst_case_infidelity(scheme, n, s, base)?;
            rows.push((n, s, inf));
            infs.push(inf);
        }
        exponents.push((n, order_fit(&base.ratios, &infs)));
    }
    Ok(ScalingExperiment { scheme, rows, exponents })
}

// ---------------------------------------------------------------------------
// Multi-mode gate report and the two-oscillator closed form
// ---------------------------------------------------------------------------

/// Per-mode closure and total conditional phase for a pair gate run through
/// a chain with all attached qubits enumerated as branches.
#[derive(Clone, Debug)]
pub struct MultimodeGateReport {
    pub gate: ConditionalGate,
    /// Worst closure residual per mode over all branches.
    pub per_mode_closure: Vec<(usize, f64)>,
}

impl MultimodeGateReport {
    pub fn to_text(&self) -> String {
        let mut out = self.gate.to_text();
        for (k, r) in &self.per_mode_closure {
            out.push_str(&format!("mode {k} worst closure residual: {r:.3e}\n"));
        }
        out
    }
}

/// Run the closed-form multi-mode gate: dispersive shifts f_{i,k} =
/// g_{i,k}^2/(omega_i - omega_d) for every attached qubit on every mode,
/// conditional drive from the driven pair only.
pub fn multimode_gate_report(
    chain: &ChainSpec,
    drive: &DriveParams,
    pair: (usize, usize),
    schedule: &PulseSchedule,
) -> Result<MultimodeGateReport> {
    let modes = diagonalize_chain(chain)?;
    let qubits: Vec<usize> = modes.g_ik.iter().map(|(q, _)| *q).collect();
    let pos = |q: usize| -> Result<usize> {
        qubits
            .iter()
            .position(|&x| x == q)
            .ok_or_else(|| CcrError::InvalidParameter(format!("qubit {q} not attached")))
    };
    let (pa, pb) = (pos(pair.0)?, pos(pair.1)?);
    let n_q = qubits.len();
    let nm = modes.mode_count();
    let sin_theta: Vec<f64> = qubits
        .iter()
        .map(|&q| {
            let d = drive.omega[q] - drive.omega_d;
            drive.rabi[q] / (d * d + drive.rabi[q] * drive.rabi[q]).sqrt()
        })
        .collect();
    let mut branches = Vec::new();
    for branch in BranchLabel::all(n_q) {
        let mut per_mode = Vec::with_capacity(nm);
        for k in 0..nm {
            let eps_bare = modes.nu_k[k] - drive.omega_d;
            let mut eps_eff = eps_bare;
            let mut m = 0.0;
            for (idx, &q) in qubits.iter().enumerate() {
                let gik = modes.qubit_couplings(q).expect("attached")[k];
                let delta = drive.omega[q] - drive.omega_d;
                eps_eff += gik * gik / delta * branch.z(idx);
                if idx == pa || idx == pb {
                    m += 0.5 * gik * sin_theta[idx] * branch.z(idx);
                }
            }
            per_mode.push(BranchHamiltonian { eps_eff, eps_bare, m_coeff: m, mode_id: k });
        }
        branches.push((branch, per_mode));
    }
    let trace = trace_flower(&branches, schedule, FlipSemantics::ZFlip)?;
    let per_mode_closure = (0..nm)
        .map(|k| {
            let worst = trace
                .trajectories
                .iter()
                .filter(|t| t.mode == k)
                .map(|t| t.closure_residual)
                .fold(0.0, f64::max);
            (k, worst)
        })
        .collect();
    Ok(MultimodeGateReport { gate: gate_from_trace(&trace), per_mode_closure })
}

/// Nonlinear two-qubit phase of the smooth (pulse-free) two-mode gate:
/// g1 g2 sin(theta1) sin(theta2) tau (1/eps_s - 1/eps_a). Vanishes when the
/// mode-mode coupling vanishes (eps_s = eps_a).
pub fn two_mode_nonlinear_phase(
    g1: f64,
    g2: f64,
    sin_t1: f64,
    sin_t2: f64,
    tau: f64,
    eps_s: f64,
    eps_a: f64,
) -> f64 {
    g1 * g2 * sin_t1 * sin_t2 * tau * (1.0 / eps_s - 1.0 / eps_a)
}

/// Closed-form CZ tuning of the pulse-free two-oscillator gate.
#[derive(Clone, Copy, Debug)]
pub struct TwoOscillatorGate {
    pub tau: f64,
    pub eps_s: f64,
    pub eps_a: f64,
    pub n_a: i64,
}

/// Solve the smooth two-oscillator CZ: eps_s tau = 2 pi, eps_a = n_a eps_s
/// (both circles close), total nonlinear phase pi. The required gate time is
/// tau = sqrt(2) pi / sqrt(G (1 - 1/n_a)) with G = g1 g2 sin(theta1)
/// sin(theta2); as |n_a| grows this approaches the sqrt(2)-slower-than-
/// single-mode limit.
pub fn two_oscillator_gate(
    g1: f64,
    g2: f64,
    sin_t1: f64,
    sin_t2: f64,
    n_a: i64,
) -> Result<TwoOscillatorGate> {
    if n_a == 0 || n_a == 1 {
        return Err(CcrError::InvalidParameter(
            "n_a = 0 or 1 means eps_a in {0, eps_s}: no two-qubit phase".into(),
        ));
    }
    let g_eff = g1 * g2 * sin_t1 * sin_t2;
    if g_eff <= 0.0 {
        return Err(CcrError::InvalidParameter("g1 g2 sin(t1) sin(t2) must be positive".into()));
    }
    let factor = 1.0 - 1.0 / n_a as f64;
    let tau = std::f64::consts::SQRT_2 * PI / (g_eff * factor).sqrt();
    let eps_s = 2.0 * PI / tau;
    Ok(TwoOscillatorGate { tau, eps_s, eps_a: n_a as f64 * eps_s, n_a })
}

// ---------------------------------------------------------------------------
// 2D grid frequency assignment
// ---------------------------------------------------------------------------

/// One nearest-neighbor bond of the 2D grid with its mediating oscillator
/// frequency.
#[derive(Clone, Copy, Debug)]
pub struct GridEdge {
    /// Transmon frequency indices (0..4) on the two ends.
    pub qubits: (usize, usize),
    pub nu: f64,
}

/// The eight oscillator frequencies of the 2D-grid pattern with four
/// transmon frequencies and shared anharmonicity.
#[derive(Clone, Debug)]
pub struct GridAssignment {
    pub omega: [f64; 4],
    pub eta: f64,
    /// nu_1..nu_4 then nu~_1..nu~_4.
    pub nu: [f64; 8],
    pub edges: Vec<GridEdge>,
}

/// Build the grid frequency assignment: every bond class gets the ZZ-free
/// oscillator frequencies from the corresponding transmon pair. Bond classes:
/// (0,1) -> nu_1, nu_3; (2,3) -> nu~_1, nu~_3; (0,2) -> nu_2, nu_4;
/// (1,3) -> nu~_2, nu~_4. Errors when any pair is split by more than eta
/// (no real roots).
pub fn grid_frequency_assignment(omega: [f64; 4], eta: f64) -> Result<GridAssignment> {
    let classes = [(0usize, 1usize), (2, 3), (0, 2), (1, 3)];
    let mut nu = [0.0f64; 8];
    let mut edges = Vec::new();
    for (c, &(i, j)) in classes.iter().enumerate() {
        let roots = zero_zz_cavity_frequency(omega[i], omega[j], eta);
        if roots.len() < 2 {
            return Err(CcrError::InvalidParameter(format!(
                "no ZZ-free oscillator frequency for transmons {i},{j}: eta {eta} < |{} - {}|",
                omega[i], omega[j]
            )));
        }
        // classes 0,1 fill nu_1/nu_3 and nu~_1/nu~_3; classes 2,3 fill
        // nu_2/nu_4 and nu~_2/nu~_4
        let (slot_lo, slot_hi) = match c {
            0 => (0, 2),
            1 => (4, 6),
            2 => (1, 3),
            _ => (5, 7),
        };
        nu[slot_lo] = roots[0].nu;
        nu[slot_hi] = roots[1].nu;
        for r in &roots {
            edges.push(GridEdge { qubits: (i, j), nu: r.nu });
        }
    }
    Ok(GridAssignment { omega, eta, nu, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{
        fock_cutoff_for, lowering, number_op, propagate, Anharmonicity, Hamiltonian,
        OperatorMatrix, SystemSpec,
    };
    use crate::perturbation::zz_single_cavity;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn chain(n: usize, nu: f64, j: f64, attachments: Vec<Attachment>) -> ChainSpec {
        ChainSpec { n_cavities: n, nu_local: nu, j, attachments, periodic: false }
    }

    #[test]
    fn chain_modes_small_cases() {
        let m1 = diagonalize_chain(&chain(1, 5.0, 0.1, vec![])).unwrap();
        assert_eq!(m1.nu_k.len(), 1);
        assert_relative_eq!(m1.nu_k[0], 5.0, epsilon = 1e-12);
        let m2 = diagonalize_chain(&chain(
            2,
            5.0,
            0.1,
            vec![Attachment { qubit: 0, cavity: 0, g: 0.02 }],
        ))
        .unwrap();
        assert_relative_eq!(m2.nu_k[0], 4.9, epsilon = 1e-12);
        assert_relative_eq!(m2.nu_k[1], 5.1, epsilon = 1e-12);
        let r = 1.0 / 2.0f64.sqrt();
        for k in 0..2 {
            let col = [m2.eta_ik[(0, k)].abs(), m2.eta_ik[(1, k)].abs()];
            assert_relative_eq!(col[0], r, epsilon = 1e-12);
            assert_relative_eq!(col[1], r, epsilon = 1e-12);
        }
        // derived coupling g_{0,k} = g * eta
        let g0 = m2.qubit_couplings(0).unwrap();
        assert_relative_eq!(g0[0].abs(), 0.02 * r, epsilon = 1e-12);
        // attachment referencing a missing cavity
        assert!(diagonalize_chain(&chain(
            2,
            5.0,
            0.1,
            vec![Attachment { qubit: 0, cavity: 5, g: 0.02 }]
        ))
        .is_err());
    }

    #[test]
    fn chain_modes_analytic_spectrum() {
        let n = 20;
        let (nu, j) = (5.0, 0.07);
        let m = diagonalize_chain(&chain(n, nu, j, vec![])).unwrap();
        let mut analytic: Vec<f64> = (1..=n)
            .map(|k| nu + 2.0 * j * (k as f64 * PI / (n as f64 + 1.0)).cos())
            .collect();
        analytic.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in m.nu_k.iter().zip(&analytic) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        let min_analytic = analytic
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        assert!((m.min_spacing - min_analytic).abs() < 1e-10);
        // orthogonality enforced inside diagonalize_chain; spot check anyway
        let dev =
            (m.eta_ik.transpose() * &m.eta_ik - DMatrix::<f64>::identity(n, n)).amax();
        assert!(dev < 1e-10);
        // periodic ring: nu + 2 J cos(2 pi k/N) as a set
        let ring = diagonalize_chain(&ChainSpec {
            n_cavities: n,
            nu_local: nu,
            j,
            attachments: vec![],
            periodic: true,
        })
        .unwrap();
        let mut ring_analytic: Vec<f64> = (0..n)
            .map(|k| nu + 2.0 * j * (2.0 * PI * k as f64 / n as f64).cos())
            .collect();
        ring_analytic.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in ring.nu_k.iter().zip(&ring_analytic) {
            assert!((got - want).abs() < 1e-10, "ring {got} vs {want}");
        }
    }

    #[test]
    fn pair_assignment_margins() {
        // single pair on an N=2 chain: feasible when the gate strength is far
        // below the symmetric/antisymmetric splitting 2J, infeasible otherwise
        let attach = vec![
            Attachment { qubit: 0, cavity: 0, g: 0.02 },
            Attachment { qubit: 1, cavity: 1, g: 0.02 },
        ];
        let drive = DriveParams { omega: vec![6.0, 6.0], rabi: vec![0.3, 0.3], omega_d: 0.0 };
        let wide = diagonalize_chain(&chain(2, 5.0, 0.05, attach.clone())).unwrap();
        let rep = pair_assignment_check(&wide, &[(0, 1, 1)], &drive, 10.0).unwrap();
        assert!(rep.feasible, "margins {:?}", rep.per_pair);
        let narrow = diagonalize_chain(&chain(2, 5.0, 1e-4, attach.clone())).unwrap();
        let rep2 = pair_assignment_check(&narrow, &[(0, 1, 1)], &drive, 10.0).unwrap();
        assert!(!rep2.feasible);
        // four disjoint pairs on an 8-cavity chain, distinct modes
        let attach8: Vec<Attachment> = (0..8)
            .map(|i| Attachment { qubit: i, cavity: i, g: 0.002 })
            .collect();
        let m8 = diagonalize_chain(&chain(8, 5.0, 0.4, attach8)).unwrap();
        let drive8 = DriveParams {
            omega: (0..8).map(|i| 6.0 + 0.01 * i as f64).collect(),
            rabi: vec![0.05; 8],
            omega_d: 0.0,
        };
        let pairs = [(0, 1, 0), (2, 3, 2), (4, 5, 4), (6, 7, 6)];
        let rep8 = pair_assignment_check(&m8, &pairs, &drive8, 10.0).unwrap();
        assert!(rep8.feasible, "{}", rep8.to_text());
        // duplicate mode and overlapping pair are rejected
        assert!(pair_assignment_check(&m8, &[(0, 1, 0), (2, 3, 0)], &drive8, 10.0).is_err());
        assert!(pair_assignment_check(&m8, &[(0, 1, 0), (1, 2, 3)], &drive8, 10.0).is_err());
    }

    #[test]
    fn estimate_formulas() {
        let p = ScalingParams { n: 9, g: 0.01, delta: 1.0, eps0: 0.002, rabi: 0.05 };
        assert_relative_eq!(
            infidelity_estimates(&p, Scheme::Uncancelled, Case::Worst),
            (9.0 * 1e-4 / 0.002f64).powi(2),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            infidelity_estimates(&p, Scheme::Flowers, Case::Worst),
            (9.0 * 0.01 / 0.05f64).powi(4),
            max_relative = 1e-12
        );
        // average case substitutes sqrt(N) for N
        assert_relative_eq!(
            infidelity_estimates(&p, Scheme::Integers, Case::Average),
            (3.0 * 1e-4 / 0.002f64).powi(2),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            infidelity_estimates(&p, Scheme::Uncancelled, Case::Worst),
            infidelity_estimates(&p, Scheme::Integers, Case::Worst),
            max_relative = 1e-12
        );
    }

    #[test]
    fn scaling_exponents_by_scheme() {
        let base = ScalingBase::default();
        let ns = [4usize, 6, 8];
        let fl = scaling_experiment(Scheme::Flowers, &ns, &base).unwrap();
        for &(n, e) in &fl.exponents {
            assert!((e - 4.0).abs() < 0.3, "flowers N={n}: exponent {e}");
        }
        let it = scaling_experiment(Scheme::Integers, &ns, &base).unwrap();
        for &(n, e) in &it.exponents {
            assert!((e - 2.0).abs() < 0.3, "integers N={n}: exponent {e}");
        }
        let un = scaling_experiment(Scheme::Uncancelled, &ns, &base).unwrap();
        for &(n, e) in &un.exponents {
            assert!((e - 2.0).abs() < 0.3, "uncancelled N={n}: exponent {e}");
        }
        // no spectators: both cancellation schemes are exact
        for scheme in [Scheme::Integers, Scheme::Flowers] {
            let inf = worst_case_infidelity(scheme, 0, 0.05, &base).unwrap();
            assert!(inf < 1e-12, "{scheme:?}: {inf}");
        }
        // branch budget guard
        assert!(worst_case_infidelity(Scheme::Integers, 11, 0.05, &base).is_err());
    }

    /// Closed-form branch evolution against truncated-Fock propagation for
    /// spectator-laden branches (one mode): displacement magnitude at an
    /// open time, vacuum overlap phase at closure.
    #[test]
    fn branch_diagonal_matches_fock() {
        let eps0 = 0.02;
        let f = [0.0013, 0.0011, -0.0009, 0.0008];
        let g_sin = 0.015;
        for branch in BranchLabel::all(4) {
            let eps_eff: f64 =
                eps0 + (0..4).map(|i| f[i] * branch.z(i)).sum::<f64>();
            let m = 0.5 * g_sin * (branch.z(0) + branch.z(1));
            let bh = BranchHamiltonian { eps_eff, eps_bare: eps0, m_coeff: m, mode_id: 0 };
            let cutoff = fock_cutoff_for((m / eps_eff).abs()) + 8;
            let b = lowering(cutoff);
            let h = number_op(cutoff).scale(eps_eff) + (&b + &b.adjoint()).scale(m);
            let op = OperatorMatrix::hermitian_checked(h).unwrap();
            let mut vac = DVector::zeros(cutoff);
            vac[0] = C64::new(1.0, 0.0);
            // open time: displacement magnitude
            let t_open = 0.37 * 2.0 * PI / eps_eff;
            let tau = 2.0 * PI / eps_eff;
            let states =
                propagate(&Hamiltonian::Static(op), &vac, &[t_open, tau], 1e-12).unwrap();
            let b_exp = (states[0].adjoint()
                * crate::hilbert::HilbertSpec::new(vec![], vec![cutoff])
                    .unwrap()
                    .embed(0, &b)
                * &states[0])[(0, 0)];
            let step = evolve_closed_form(&bh, t_open);
            assert!(
                (b_exp.norm() - step.displacement.norm()).abs() < 1e-8,
                "branch {branch:?}: |<b>| {} vs {}",
                b_exp.norm(),
                step.displacement.norm()
            );
            // closure: full return to vacuum with the closed-form phase
            let overlap = (vac.adjoint() * &states[1])[(0, 0)];
            let step_tau = evolve_closed_form(&bh, tau);
            assert!(step_tau.displacement.norm() < 1e-12);
            assert!(1.0 - overlap.norm() < 1e-8, "branch {branch:?}");
            let dphi = (overlap.arg() - step_tau.phase).rem_euclid(2.0 * PI);
            let dphi = dphi.min(2.0 * PI - dphi);
            assert!(dphi < 1e-6, "branch {branch:?}: phase dev {dphi}");
        }
    }

    #[test]
    fn two_mode_gate_esa() {
        // pulse-free N=2 chain gate: both modes close, nonlinear phase pi
        let (g, rabi, delta) = (0.002f64, 0.4f64, 2.0f64);
        let sin_t = rabi / (delta * delta + rabi * rabi).sqrt();
        let g_half = g / 2.0f64.sqrt(); // per-mode coupling g/sqrt(2)
        let n_a = -3i64;
        let sol = two_oscillator_gate(g, g, sin_t, sin_t, n_a).unwrap();
        // chain realization: nu_s - nu_a = 2J = eps_s - eps_a
        let j = (sol.eps_s - sol.eps_a) / 2.0;
        let nu = 5.0;
        let omega_d = nu + j - sol.eps_s;
        let chain2 = chain(
            2,
            nu,
            j,
            vec![
                Attachment { qubit: 0, cavity: 0, g },
                Attachment { qubit: 1, cavity: 1, g },
            ],
        );
        let drive = DriveParams {
            omega: vec![omega_d + delta, omega_d + delta],
            rabi: vec![rabi, rabi],
            omega_d,
        };
        let schedule = PulseSchedule {
            events: vec![],
            total_time: sol.tau,
            style: ScheduleStyle::Custom,
        };
        let report = multimode_gate_report(&chain2, &drive, (0, 1), &schedule).unwrap();
        // branch-dependent dispersive shifts 2 g_k^2/Delta detune each mode
        // away from exact closure; the residual is linear in g and bounded by
        // |m/eps| * (2 f tau)
        let f_shift = g_half * g_half / delta;
        for (k, r) in &report.per_mode_closure {
            // modes sort ascending in frequency: mode 0 is nu - J (eps_a),
            // mode 1 is nu + J (eps_s)
            let eps = if *k == 0 { sol.eps_a } else { sol.eps_s };
            let bound = 2.0 * (g_half * sin_t / eps).abs() * 2.0 * f_shift * sol.tau;
            assert!(*r < bound, "mode {k} closure {r} vs bound {bound}");
        }
        // dispersive shifts detune eps slightly; the phase stays near pi
        let nl = report.gate.nonlinear_phase();
        assert!((nl - PI).abs() < 0.05, "nonlinear phase {nl}");
        // closed form matches the eq directly at the ideal detunings
        let formula =
            two_mode_nonlinear_phase(g, g, sin_t, sin_t, sol.tau, sol.eps_s, sol.eps_a);
        assert_relative_eq!(formula, PI, max_relative = 1e-12);
        // Fock oracle: propagate each mode independently per branch, sum the
        // phases, and compare the nonlinear combination
        let mut phases = Vec::new();
        for branch in BranchLabel::all(2) {
            let mut total = 0.0;
            for (eps, sign) in [(sol.eps_s, 1.0), (sol.eps_a, -1.0)] {
                let m = 0.5
                    * g_half
                    * sin_t
                    * (branch.z(0) + sign * branch.z(1));
                if m == 0.0 {
                    continue;
                }
                let cutoff = fock_cutoff_for((m / eps).abs());
                let b = lowering(cutoff);
                let h = number_op(cutoff).scale(eps) + (&b + &b.adjoint()).scale(m);
                let op = OperatorMatrix::hermitian_checked(h).unwrap();
                let mut vac = DVector::zeros(cutoff);
                vac[0] = C64::new(1.0, 0.0);
                let out =
                    propagate(&Hamiltonian::Static(op), &vac, &[sol.tau], 1e-12).unwrap();
                let overlap = (vac.adjoint() * &out[0])[(0, 0)];
                assert!(1.0 - overlap.norm() < 1e-8);
                total += overlap.arg();
            }
            phases.push(total);
        }
        let combo =
            (phases[0] + phases[3] - phases[1] - phases[2]).rem_euclid(2.0 * PI);
        assert!((combo - PI).abs() < 1e-6, "oracle combo {combo}");
        // g~ = 0 sanity: eps_s = eps_a gives zero nonlinear phase
        assert_eq!(two_mode_nonlinear_phase(g, g, sin_t, sin_t, sol.tau, 0.1, 0.1), 0.0);
        // sqrt(2) slowdown recovered for large |n_a| within 1%
        let vanilla = PI / (g * g * sin_t * sin_t).sqrt();
        let slow = two_oscillator_gate(g, g, sin_t, sin_t, -101).unwrap();
        let ratio = slow.tau / vanilla;
        assert!(
            (ratio - 2.0f64.sqrt()).abs() < 0.01 * 2.0f64.sqrt(),
            "slowdown ratio {ratio}"
        );
        // degenerate n_a rejected
        assert!(two_oscillator_gate(g, g, sin_t, sin_t, 1).is_err());
        assert!(two_oscillator_gate(g, g, sin_t, sin_t, 0).is_err());
    }

    #[test]
    fn grid_assignment_nulls_every_edge() {
        let omega = [6.00, 6.08, 6.16, 6.24];
        let eta = 0.30;
        let grid = grid_frequency_assignment(omega, eta).unwrap();
        assert_eq!(grid.edges.len(), 8);
        // all eight oscillator frequencies distinct
        for a in 0..8 {
            for b in (a + 1)..8 {
                assert!(
                    (grid.nu[a] - grid.nu[b]).abs() > 1e-6,
                    "nu[{a}] = nu[{b}] = {}",
                    grid.nu[a]
                );
            }
        }
        for e in &grid.edges {
            let spec = SystemSpec {
                nu_modes: vec![e.nu],
                omega: vec![omega[e.qubits.0], omega[e.qubits.1]],
                eta: vec![Anharmonicity::Finite(eta); 2],
                eta_mode: 0.0,
                g: vec![vec![0.01], vec![0.01]],
                g_tilde: 0.0,
                rabi: vec![0.0, 0.0],
                omega_d: 0.0,
                chain_j: 0.0,
            };
            let j = zz_single_cavity(&spec).unwrap().formula_4th.unwrap();
            assert!(
                j.abs() < 1e-12,
                "edge {:?} at nu {}: J_ZZ {j}",
                e.qubits,
                e.nu
            );
        }
        // too-small anharmonicity: some pair has no real root
        assert!(grid_frequency_assignment(omega, 0.05).is_err());
    }
}
