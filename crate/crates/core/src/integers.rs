//! Integer-tuned scheduling: find (tau, omega_d, one extra hardware knob)
//! such that eps*tau/pi and f_i*tau/pi are simultaneously integers obeying
//! parity and non-degeneracy constraints, with drive amplitudes rescaled so
//! the nonlinear phase is exactly pi.

use crate::error::CcrError;
use crate::hilbert::SystemSpec;
use crate::perturbation::dispersive_shift;
use crate::phasespace::{
    branch_hamiltonians, dress, evolve_closed_form, integers_phase, ConditionalGate,
};
use crate::Result;
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

/// The tunable hardware parameter used as the third knob alongside tau and
/// omega_d.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Knob {
    /// Coupling g_1.
    G1,
    /// Coupling g_2.
    G2,
    /// Site frequency omega_1.
    Freq1,
    /// Site frequency omega_2.
    Freq2,
    /// Mode frequency nu.
    Nu,
}

impl Knob {
    pub fn name(self) -> &'static str {
        match self {
            Knob::G1 => "g1",
            Knob::G2 => "g2",
            Knob::Freq1 => "omega1",
            Knob::Freq2 => "omega2",
            Knob::Nu => "nu",
        }
    }

    fn read(self, spec: &SystemSpec) -> f64 {
        match self {
            Knob::G1 => spec.g[0][0],
            Knob::G2 => spec.g[1][0],
            Knob::Freq1 => spec.omega[0],
            Knob::Freq2 => spec.omega[1],
            Knob::Nu => spec.nu_modes[0],
        }
    }

    fn write(self, spec: &mut SystemSpec, value: f64) {
        match self {
            Knob::G1 => spec.g[0][0] = value,
            Knob::G2 => spec.g[1][0] = value,
            Knob::Freq1 => spec.omega[0] = value,
            Knob::Freq2 => spec.omega[1] = value,
            Knob::Nu => spec.nu_modes[0] = value,
        }
    }
}

/// Deviation of each tuning condition from its target.
#[derive(Clone, Copy, Debug)]
pub struct ConditionResiduals {
    /// |eps*tau/pi - n_eps|.
    pub n_eps: f64,
    /// |f_1*tau/pi - n_1|.
    pub n1: f64,
    /// |f_2*tau/pi - n_2|.
    pub n2: f64,
    /// |nonlinear phase - pi|.
    pub phase: f64,
}

impl ConditionResiduals {
    pub fn max(&self) -> f64 {
        self.n_eps.max(self.n1).max(self.n2).max(self.phase)
    }
}

/// A fully solved integer tuning: physical parameters, the integer triple,
/// and the resulting conditional gate.
#[derive(Clone, Debug)]
pub struct IntegerSolution {
    pub tau: f64,
    pub omega_d: f64,
    /// (knob identity, solved value).
    pub knob: (Knob, f64),
    pub n_eps: i64,
    pub n1: i64,
    pub n2: i64,
    /// Nonlinear phase after drive rescaling (target pi).
    pub achieved_phase: f64,
    pub residuals: ConditionResiduals,
    /// The tuned system (omega_d, knob and rescaled drives applied).
    pub spec: SystemSpec,
    pub gate: ConditionalGate,
}

impl IntegerSolution {
    /// Structured text report of all parameters, integers, and residuals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("tau: {:.12e}\n", self.tau));
        out.push_str(&format!("omega_d: {:.12e}\n", self.omega_d));
        out.push_str(&format!("knob {}: {:.12e}\n", self.knob.0.name(), self.knob.1));
        out.push_str(&format!(
            "integers: n_eps {} n1 {} n2 {}\n",
            self.n_eps, self.n1, self.n2
        ));
        out.push_str(&format!(
            "rabi: {:.12e} {:.12e}\n",
            self.spec.rabi[0], self.spec.rabi[1]
        ));
        out.push_str(&format!("achieved_phase: {:.12e}\n", self.achieved_phase));
        out.push_str(&format!(
            "residuals: n_eps {:.3e} n1 {:.3e} n2 {:.3e} phase {:.3e}\n",
            self.residuals.n_eps, self.residuals.n1, self.residuals.n2, self.residuals.phase
        ));
        out.push_str(&self.gate.to_text());
        out
    }
}

/// Validate the integer triple: parity (sum even) and non-degeneracy
/// (n_eps +- n1 +- n2 nonzero for all four signs, so no branch sits at
/// eps' = 0 and fails to disentangle).
pub fn validate_triple(n_eps: i64, n1: i64, n2: i64) -> Result<()> {
    if (n_eps + n1 + n2) % 2 != 0 {
        return Err(CcrError::InvalidParameter(format!(
            "n_eps + n1 + n2 = {} must be even",
            n_eps + n1 + n2
        )));
    }
    for (s1, s2) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
        if n_eps + s1 * n1 + s2 * n2 == 0 {
            return Err(CcrError::InvalidParameter(
                "n_eps +- n1 +- n2 = 0: that branch never disentangles".into(),
            ));
        }
    }
    Ok(())
}

/// Dispersive coefficients [f_1, f_2] of both sites on mode 0. An override
/// models the idealized no-dispersive-coupling limit without changing the
/// drive-dressed gate itself.
fn f_pair(spec: &SystemSpec, f_override: Option<[f64; 2]>) -> Result<[f64; 2]> {
    if let Some(f) = f_override {
        return Ok(f);
    }
    Ok([dispersive_shift(spec, 0, 0)?, dispersive_shift(spec, 1, 0)?])
}

/// Damped Newton with finite-difference Jacobian on a square system.
/// `tol_vec` is the per-equation absolute tolerance.
fn newton_solve<F>(fun: F, v0: DVector<f64>, tol_vec: &[f64]) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let dim = v0.len();
    let mut v = v0;
    let mut f = fun(&v)?;
    for _ in 0..60 {
        if f.iter().zip(tol_vec).all(|(r, t)| r.abs() < *t) {
            return Ok(v);
        }
        let mut jac = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let h = 1e-7 * v[j].abs().max(1e-3);
            let mut vp = v.clone();
            vp[j] += h;
            let fp = fun(&vp)?;
            for i in 0..dim {
                jac[(i, j)] = (fp[i] - f[i]) / h;
            }
        }
        let step = jac
            .lu()
            .solve(&f)
            .ok_or_else(|| CcrError::NotFound("singular Jacobian in Newton solve".into()))?;
        // backtracking line search on ||F||
        let base_norm = f.norm();
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..14 {
            let trial = &v - &step.scale(lambda);
            if let Ok(ft) = fun(&trial) {
                if ft.norm() < base_norm {
                    v = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(CcrError::NotFound("Newton line search stalled".into()));
        }
    }
    if f.iter().zip(tol_vec).all(|(r, t)| r.abs() < *t) {
        Ok(v)
    } else {
        Err(CcrError::ToleranceNotReached { tol: tol_vec.iter().cloned().fold(f64::MAX, f64::min) })
    }
}

const MAX_N_EPS: i64 = 400;
/// Knob excursion allowed around its initial value (relative).
const KNOB_RANGE: f64 = 0.5;
/// Allowed relative drift of eps from its initial value. The mode detuning
/// is a design constant of the gate; solutions that reach small n_eps by
/// collapsing eps itself change the operating point rather than tune it.
const EPS_DRIFT: f64 = 0.02;

/// Solve the integer scheduling problem for `spec` using `knob` as the third
/// tunable. Candidate integer triples are enumerated in increasing |n_eps|
/// (bounding the gate time) unless `target_ns` pins one; the continuous
/// conditions are solved by damped Newton on (tau, omega_d, knob) and the
/// drive amplitudes are then rescaled so the nonlinear phase is pi.
/// `tol` is the relative tolerance on each integer condition.
pub fn solve_integers(
    spec: &SystemSpec,
    knob: Knob,
    target_ns: Option<(i64, i64, i64)>,
    tol: f64,
) -> Result<IntegerSolution> {
    solve_integers_with_f(spec, knob, None, target_ns, tol)
}

/// As `solve_integers`, but with an optional override of the dispersive
/// coefficients (e.g. [0, 0] recovers the idealized dispersion-free tuning
/// eps*tau = 2*pi*integer with n1 = n2 = 0).
pub fn solve_integers_with_f(
    spec: &SystemSpec,
    knob: Knob,
    f_override: Option<[f64; 2]>,
    target_ns: Option<(i64, i64, i64)>,
    tol: f64,
) -> Result<IntegerSolution> {
    spec.validate()?;
    if spec.site_count() != 2 || spec.mode_count() != 1 {
        return Err(CcrError::InvalidParameter(
            "integer tuning needs exactly two sites and one mode".into(),
        ));
    }
    if tol <= 0.0 {
        return Err(CcrError::InvalidParameter("tol must be positive".into()));
    }
    let eps0 = spec.eps(0);
    if eps0 == 0.0 {
        return Err(CcrError::Resonance("eps = 0 at the starting point".into()));
    }
    let f0 = f_pair(spec, f_override)?;
    let trivial = [f0[0] == 0.0, f0[1] == 0.0];
    let knob0 = knob.read(spec);

    let candidates: Vec<(i64, i64, i64)> = if let Some(t) = target_ns {
        vec![t]
    } else {
        let s = if eps0 > 0.0 { 1 } else { -1 };
        let mut list = Vec::new();
        for mag in 1..=MAX_N_EPS {
            let n_eps = s * mag;
            let base: Vec<i64> = (0..2)
                .map(|i| (f0[i] / eps0 * n_eps as f64).round() as i64)
                .collect();
            for d1 in -1i64..=1 {
                for d2 in -1i64..=1 {
                    let n1 = if trivial[0] { 0 } else { base[0] + d1 };
                    let n2 = if trivial[1] { 0 } else { base[1] + d2 };
                    // with a nonzero dispersive coefficient, f_i*tau = pi*n_i
                    // and tau > 0 force n_i nonzero with the sign of f_i
                    if !trivial[0] && (n1 == 0 || (n1 > 0) != (f0[0] > 0.0)) {
                        continue;
                    }
                    if !trivial[1] && (n2 == 0 || (n2 > 0) != (f0[1] > 0.0)) {
                        continue;
                    }
                    if !list.contains(&(n_eps, n1, n2)) {
                        list.push((n_eps, n1, n2));
                    }
                }
            }
        }
        list
    };

    let mut last_err: Option<CcrError> = None;
    for (n_eps, n1, n2) in candidates {
        if let Err(e) = validate_triple(n_eps, n1, n2) {
            if target_ns.is_some() {
                return Err(e);
            }
            continue;
        }
        if (trivial[0] && n1 != 0) || (trivial[1] && n2 != 0) {
            let e = CcrError::InvalidParameter(
                "n_i must be 0 when the dispersive coefficient f_i vanishes".into(),
            );
            if target_ns.is_some() {
                return Err(e);
            }
            continue;
        }
        match try_triple(spec, knob, f_override, (n_eps, n1, n2), tol, eps0, knob0, &trivial) {
            Ok(sol) => return Ok(sol),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| {
        CcrError::NotFound(format!("no integer solution with |n_eps| <= {MAX_N_EPS}"))
    }))
}

#[allow(clippy::too_many_arguments)]
fn try_triple(
    spec: &SystemSpec,
    knob: Knob,
    f_override: Option<[f64; 2]>,
    ns: (i64, i64, i64),
    tol: f64,
    eps0: f64,
    knob0: f64,
    trivial: &[bool; 2],
) -> Result<IntegerSolution> {
    let (n_eps, n1, n2) = ns;
    // active equations: the eps condition always; each f condition only when
    // f_i is not identically zero. Unknowns are (tau, omega_d, knob) trimmed
    // to the same count.
    let n_eq = 1 + trivial.iter().filter(|t| !**t).count();
    let targets = [n_eps as f64, n1 as f64, n2 as f64];
    let residual_fn = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let tau = v[0];
        if tau <= 0.0 {
            return Err(CcrError::InvalidParameter("tau went non-positive".into()));
        }
        let mut s2 = spec.clone();
        if v.len() > 1 {
            s2.omega_d = v[1];
        }
        if v.len() > 2 {
            knob.write(&mut s2, v[2]);
        }
        let f = f_pair(&s2, f_override)?;
        let mut out = Vec::with_capacity(n_eq);
        out.push(s2.eps(0) * tau - PI * targets[0]);
        for i in 0..2 {
            if !trivial[i] {
                out.push(f[i] * tau - PI * targets[1 + i]);
            }
        }
        Ok(DVector::from_vec(out))
    };
    let v0 = {
        let mut v = vec![PI * n_eps as f64 / eps0];
        if n_eq > 1 {
            v.push(spec.omega_d);
        }
        if n_eq > 2 {
            v.push(knob0);
        }
        DVector::from_vec(v)
    };
    let tol_vec: Vec<f64> = {
        let mut t = vec![tol * PI * (n_eps.abs().max(1)) as f64];
        for (i, tv) in trivial.iter().enumerate() {
            if !tv {
                t.push(tol * PI * (targets[1 + i].abs().max(1.0)));
            }
        }
        t
    };
    let v = newton_solve(residual_fn, v0, &tol_vec)?;
    let tau = v[0];
    let omega_d = if v.len() > 1 { v[1] } else { spec.omega_d };
    let knob_val = if v.len() > 2 { v[2] } else { knob0 };
    if (knob_val - knob0).abs() > KNOB_RANGE * knob0.abs().max(1e-12) {
        return Err(CcrError::NotFound(format!(
            "knob {} left its allowed range: {knob_val:.6e} vs initial {knob0:.6e}",
            knob.name()
        )));
    }
    let mut tuned = spec.clone();
    tuned.omega_d = omega_d;
    knob.write(&mut tuned, knob_val);
    if (tuned.eps(0) / eps0 - 1.0).abs() > EPS_DRIFT {
        return Err(CcrError::NotFound(format!(
            "solution drifts eps from {eps0:.6e} to {:.6e}",
            tuned.eps(0)
        )));
    }

    // rescale both drives so the nonlinear phase is exactly pi; the phases
    // scale as the square of the drive up to the weak dressing nonlinearity,
    // so iterate
    let mut gate = integers_phase(&tuned, n_eps, n1, n2, tau)?;
    for _ in 0..60 {
        let nl = gate.nonlinear_phase();
        if (nl - PI).abs() < 1e-13 {
            break;
        }
        if nl <= 0.0 || !nl.is_finite() {
            return Err(CcrError::NotFound(
                "nonlinear phase vanishes: no drive rescaling reaches pi".into(),
            ));
        }
        let s = (PI / nl).sqrt();
        tuned.rabi[0] *= s;
        tuned.rabi[1] *= s;
        gate = integers_phase(&tuned, n_eps, n1, n2, tau)?;
    }
    let achieved_phase = gate.nonlinear_phase();
    let f = f_pair(&tuned, f_override)?;
    let residuals = ConditionResiduals {
        n_eps: (tuned.eps(0) * tau / PI - n_eps as f64).abs(),
        n1: (f[0] * tau / PI - n1 as f64).abs(),
        n2: (f[1] * tau / PI - n2 as f64).abs(),
        phase: (achieved_phase - PI).abs(),
    };
    if (achieved_phase - PI).abs() > 1e-10 {
        return Err(CcrError::ToleranceNotReached { tol: 1e-10 });
    }
    Ok(IntegerSolution {
        tau,
        omega_d,
        knob: (knob, knob_val),
        n_eps,
        n1,
        n2,
        achieved_phase,
        residuals,
        spec: tuned,
        gate,
    })
}

/// Drift of the gate under one parameter perturbation.
#[derive(Clone, Copy, Debug)]
pub struct Sensitivity {
    /// Change in the worst per-branch closure residual.
    pub closure_drift: f64,
    /// Change in the nonlinear phase.
    pub phase_drift: f64,
}

/// Closure residual (max over branches) and nonlinear phase of `spec` run
/// for `tau`, from the closed-form branch dynamics with the dispersive
/// coefficients recomputed from the perturbed parameters.
fn gate_metrics(spec: &SystemSpec, tau: f64, f_override: Option<[f64; 2]>) -> Result<(f64, f64)> {
    let f = f_pair(spec, f_override)?;
    let angles = dress(spec)?;
    let bh = branch_hamiltonians(spec, &angles, &[vec![f[0]], vec![f[1]]])?;
    let mut phases = Vec::new();
    let mut worst = 0.0f64;
    for (branch, mods) in &bh {
        let mut phase = 0.0;
        let mut r2 = 0.0;
        for m in mods {
            let step = evolve_closed_form(m, tau);
            phase += step.phase;
            r2 += step.displacement.norm_sqr();
        }
        worst = worst.max(r2.sqrt());
        phases.push((branch.clone(), phase));
    }
    let gate = ConditionalGate {
        phases,
        residual_entanglement: bh.iter().map(|(b, _)| (b.clone(), 0.0)).collect(),
    };
    Ok((worst, gate.nonlinear_phase()))
}

/// Finite-difference drifts of closure residual and nonlinear phase under
/// the named parameter perturbations. Recognized names: tau, omega_d, nu,
/// g1, g2, omega1, omega2, rabi1, rabi2, g_tilde, chain_j.
pub fn sensitivity(
    sol: &IntegerSolution,
    deltas: &[(&str, f64)],
) -> Result<Vec<(String, Sensitivity)>> {
    let (base_res, base_phase) = gate_metrics(&sol.spec, sol.tau, None)?;
    let mut out = Vec::with_capacity(deltas.len());
    for &(name, delta) in deltas {
        let mut s = sol.spec.clone();
        let mut tau = sol.tau;
        match name {
            "tau" => tau += delta,
            "omega_d" => s.omega_d += delta,
            "nu" => s.nu_modes[0] += delta,
            "g1" => s.g[0][0] += delta,
            "g2" => s.g[1][0] += delta,
            "omega1" => s.omega[0] += delta,
            "omega2" => s.omega[1] += delta,
            "rabi1" => s.rabi[0] += delta,
            "rabi2" => s.rabi[1] += delta,
            "g_tilde" => s.g_tilde += delta,
            "chain_j" => s.chain_j += delta,
            other => {
                return Err(CcrError::InvalidParameter(format!(
                    "unknown parameter '{other}'"
                )))
            }
        }
        let (res, phase) = gate_metrics(&s, tau, None)?;
        out.push((
            name.to_string(),
            Sensitivity { closure_drift: res - base_res, phase_drift: phase - base_phase },
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{
        self, fock_cutoff_for, lowering, number_op, Hamiltonian, OperatorMatrix,
    };
    use crate::phasespace::BranchLabel;
    use crate::C64;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    /// eps/f = 40 with split sites; g2 is chosen so f1 = f2 exactly at the
    /// starting drive frequency.
    fn slowdown_spec() -> SystemSpec {
        let g = (0.0025f64 * 5.0).sqrt(); // f = g^2/Delta = 0.0025 at Delta = 5
        let g2 = g * (5.25f64 / 5.0).sqrt();
        SystemSpec::two_qubit_one_mode(5.1, [10.0, 10.25], [g, g2], [0.12, 0.12], 5.0)
    }

    #[test]
    fn triple_validation() {
        assert!(validate_triple(40, 1, 1).is_ok());
        assert!(validate_triple(3, 1, 1).is_err()); // parity
        assert!(validate_triple(2, 1, 1).is_err()); // 2 - 1 - 1 = 0
        assert!(validate_triple(0, 1, 1).is_err()); // 0 + 1 - 1 = 0
        assert!(validate_triple(2, 0, 0).is_ok());
    }

    #[test]
    fn dispersion_free_reduction() {
        // with f1 = f2 = 0 the tuning collapses to eps*tau = 2*pi*integer
        // with n1 = n2 = 0 and even n_eps
        let spec =
            SystemSpec::two_qubit_one_mode(5.1, [10.0, 10.3], [0.5, 0.6], [0.1, 0.1], 5.0);
        let sol =
            solve_integers_with_f(&spec, Knob::Nu, Some([0.0, 0.0]), None, 1e-10).unwrap();
        assert_eq!((sol.n1, sol.n2), (0, 0));
        assert_eq!(sol.n_eps % 2, 0);
        assert_eq!(sol.n_eps, 2);
        assert_relative_eq!(sol.spec.eps(0) * sol.tau, 2.0 * PI, max_relative = 1e-9);
        assert_relative_eq!(sol.achieved_phase, PI, epsilon = 1e-10);
        // untouched knobs stay put
        assert_eq!(sol.omega_d, spec.omega_d);
        assert_eq!(sol.knob.1, spec.nu_modes[0]);
    }

    #[test]
    fn slowdown_scales_as_sqrt_half_n_eps() {
        let spec = slowdown_spec();
        let sol = solve_integers(&spec, Knob::Nu, None, 1e-8).unwrap();
        assert_eq!(sol.n_eps, 40);
        assert_eq!((sol.n1, sol.n2), (1, 1));
        assert!(sol.residuals.max() < 1e-7);
        // measured slowdown vs the fastest dispersion-free gate
        // tau_f = pi / sqrt(g1 a1 g2 a2)
        let angles = dress(&sol.spec).unwrap();
        let ab = sol.spec.g[0][0]
            * angles.a_coeff[0]
            * sol.spec.g[1][0]
            * angles.a_coeff[1];
        let tau_f = PI / ab.sqrt();
        let ratio = sol.tau / tau_f;
        let expect = (sol.n_eps as f64 / 2.0).sqrt();
        assert!(
            (ratio - expect).abs() / expect < 0.02,
            "slowdown {ratio} vs sqrt(n_eps/2) = {expect}"
        );
        // well above the sqrt(eps/f)/sqrt(2) floor
        assert!(ratio > 4.0);
    }

    #[test]
    fn solution_closes_in_fock_oracle() {
        // moderate n_eps keeps the oracle cheap: eps/f = 6
        let g = (0.02f64 * 3.0).sqrt();
        let g2 = g * (3.31f64 / 3.0).sqrt();
        let spec =
            SystemSpec::two_qubit_one_mode(3.12, [6.0, 6.31], [g, g2], [0.35, 0.33], 3.0);
        let sol = solve_integers(&spec, Knob::Nu, None, 1e-9).unwrap();
        let angles = dress(&sol.spec).unwrap();
        let mut oracle_phases = Vec::new();
        for branch in BranchLabel::all(2) {
            let combo =
                sol.n_eps as f64 + branch.z(0) * sol.n1 as f64 + branch.z(1) * sol.n2 as f64;
            let eps_eff = PI * combo / sol.tau;
            let m = 0.5
                * (sol.spec.g[0][0] * angles.a_coeff[0] * branch.z(0)
                    + sol.spec.g[1][0] * angles.a_coeff[1] * branch.z(1));
            let cutoff = fock_cutoff_for((m / eps_eff).abs());
            let b = lowering(cutoff);
            let h = number_op(cutoff).scale(eps_eff) + (&b + &b.adjoint()).scale(m);
            let op = OperatorMatrix::hermitian_checked(h).unwrap();
            let mut vac = DVector::zeros(cutoff);
            vac[0] = C64::new(1.0, 0.0);
            let out =
                hilbert::propagate(&Hamiltonian::Static(op), &vac, &[sol.tau], 1e-12).unwrap();
            let overlap = (vac.adjoint() * &out[0])[(0, 0)];
            assert!(
                1.0 - overlap.norm() < 1e-6,
                "branch {branch:?}: residual {}",
                1.0 - overlap.norm()
            );
            oracle_phases.push(overlap.arg());
        }
        // |phi(++) + phi(--) - phi(+-) - phi(-+)| = pi, phases from the oracle
        let combo = (oracle_phases[0] + oracle_phases[3]
            - oracle_phases[1]
            - oracle_phases[2])
            .rem_euclid(2.0 * PI);
        let dev = (combo - PI).abs();
        assert!(dev < 1e-4, "oracle nonlinear phase {combo} vs pi");
        // closed-form residual invariant
        assert!(sol.gate.max_residual() < 1e-8);
    }

    #[test]
    fn target_triple_is_respected_and_validated() {
        let spec = slowdown_spec();
        // parity violation
        assert!(solve_integers(&spec, Knob::Nu, Some((41, 1, 1)), 1e-8).is_err());
        // degenerate branch: 2 - 1 - 1 = 0
        assert!(solve_integers(&spec, Knob::Nu, Some((2, 1, 1)), 1e-8).is_err());
        // valid triple but it would drag eps off its design value
        assert!(solve_integers(&spec, Knob::Nu, Some((48, 1, 1)), 1e-8).is_err());
        let sol = solve_integers(&spec, Knob::Nu, Some((80, 2, 2)), 1e-8).unwrap();
        assert_eq!((sol.n_eps, sol.n1, sol.n2), (80, 2, 2));
        assert!(sol.residuals.max() < 1e-7);
    }

    #[test]
    fn sensitivity_linear_in_delta() {
        let spec = slowdown_spec();
        let sol = solve_integers(&spec, Knob::Nu, None, 1e-10).unwrap();
        let d = 1e-4 * sol.tau;
        let s1 = sensitivity(&sol, &[("tau", d)]).unwrap();
        let s2 = sensitivity(&sol, &[("tau", d / 2.0)]).unwrap();
        let (full, half) = (s1[0].1.closure_drift, s2[0].1.closure_drift);
        assert!(full > 0.0);
        // halving delta halves the drift to 5%
        assert!(
            (full / half - 2.0).abs() < 0.05 * 2.0,
            "drift ratio {} not ~2",
            full / half
        );
        // parameters entering no condition produce exactly zero drift
        let s3 = sensitivity(&sol, &[("chain_j", 0.1), ("g_tilde", 0.05)]).unwrap();
        assert_eq!(s3[0].1.closure_drift, 0.0);
        assert_eq!(s3[0].1.phase_drift, 0.0);
        assert_eq!(s3[1].1.closure_drift, 0.0);
        assert_eq!(s3[1].1.phase_drift, 0.0);
        assert!(sensitivity(&sol, &[("bogus", 0.1)]).is_err());
    }

    #[test]
    fn closure_drift_tracks_n_eps() {
        // residual growth under a tau error is ~ |eps' * dtau * M/eps'|-ish;
        // compare two solutions and check the drift grows with n_eps at
        // fixed relative dtau
        let spec = slowdown_spec();
        let sol_a = solve_integers(&spec, Knob::Nu, None, 1e-10).unwrap();
        let sol_b = solve_integers(&spec, Knob::Nu, Some((80, 2, 2)), 1e-10).unwrap();
        let rel = 1e-5;
        let da = sensitivity(&sol_a, &[("tau", rel * sol_a.tau)]).unwrap()[0].1.closure_drift;
        let db = sensitivity(&sol_b, &[("tau", rel * sol_b.tau)]).unwrap()[0].1.closure_drift;
        assert!(da > 0.0 && db > da, "drifts {da} {db}");
    }
}
