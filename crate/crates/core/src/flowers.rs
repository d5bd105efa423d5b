//! Dynamical-decoupling "flower" schedules: sequences of instantaneous pi
//! pulses that close every branch's phase-space loop and thereby cancel the
//! dispersive coupling. Covers the P-petal family, CPMG-shifted variants,
//! Rabi-sign-flip variants, multi-mode closure, Uhrig sequences, and ZZ echo
//! factors.

use crate::error::CcrError;
use crate::hilbert::SystemSpec;
use crate::phasespace::{
    dress, evolve_closed_form, shoelace_area, BranchHamiltonian, BranchLabel, BranchTrajectory,
    ConditionalGate, TrajectoryResult, SAMPLES_PER_PETAL,
};
use crate::{Result, C64};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlipAction {
    FlipZAllGateQubits,
    FlipOmegaSign,
    FlipZSpectators,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScheduleStyle {
    Original,
    /// First inter-pulse interval shortened to the given duration.
    CpmgShifted(f64),
    Uhrig(u32),
    Custom,
}

/// An ordered sequence of instantaneous flip events over a total duration.
#[derive(Clone, Debug)]
pub struct PulseSchedule {
    /// (time, action); times strictly increasing in (0, total_time].
    pub events: Vec<(f64, FlipAction)>,
    pub total_time: f64,
    pub style: ScheduleStyle,
}

impl PulseSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.total_time <= 0.0 {
            return Err(CcrError::InvalidSchedule("total_time must be positive".into()));
        }
        let mut prev = 0.0;
        for &(t, _) in &self.events {
            if t <= prev {
                return Err(CcrError::InvalidSchedule(format!(
                    "event times must be strictly increasing in (0, T]; got {t} after {prev}"
                )));
            }
            prev = t;
        }
        if prev > self.total_time + 1e-12 * self.total_time {
            return Err(CcrError::InvalidSchedule(format!(
                "event at {prev} past total_time {}",
                self.total_time
            )));
        }
        Ok(())
    }

    /// Segment boundaries: 0, every event time, and total_time.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        for &(t, _) in &self.events {
            b.push(t);
        }
        if (b[b.len() - 1] - self.total_time).abs() > 1e-12 * self.total_time.max(1.0) {
            b.push(self.total_time);
        } else {
            *b.last_mut().unwrap() = self.total_time;
        }
        b
    }

    /// The +-1 sign trace: starts at +1 and toggles at every event.
    /// Returns (segment_start, sign) pairs covering [0, total_time).
    pub fn sign_trace(&self) -> Vec<(f64, i8)> {
        let mut out = vec![(0.0, 1i8)];
        let mut sign = 1i8;
        for &(t, _) in &self.events {
            if t >= self.total_time {
                break;
            }
            sign = -sign;
            out.push((t, sign));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("style: {:?}\ntotal_time: {:.12e}\n", self.style, self.total_time);
        for &(t, a) in &self.events {
            out.push_str(&format!("{:.12e} {:?}\n", t, a));
        }
        out
    }
}

/// P-petal schedule: inter-pulse spacing tau = pi/eps + 2 pi/(P eps) plus m
/// extra full loops (tau -> tau + 2 pi m/eps); total time T = P tau. The
/// CPMG-shifted style moves the first pulse earlier by tau - tilde_tau while
/// keeping T fixed.
pub fn make_flower_schedule(
    p: u32,
    eps: f64,
    style: ScheduleStyle,
    m: u32,
) -> Result<PulseSchedule> {
    if p < 4 {
        return Err(CcrError::InvalidSchedule(format!(
            "P = {p} < 4 (P = 2 cannot close for x != 0; use make_flower_schedule_allow_p2 \
             for the negative demonstration)"
        )));
    }
    make_flower_schedule_allow_p2(p, eps, style, m)
}

/// Same as `make_flower_schedule` but admits P = 2 for non-closure
/// demonstrations.
pub fn make_flower_schedule_allow_p2(
    p: u32,
    eps: f64,
    style: ScheduleStyle,
    m: u32,
) -> Result<PulseSchedule> {
    if p < 2 || p % 2 != 0 {
        return Err(CcrError::InvalidSchedule(format!("P must be even and >= 2; got {p}")));
    }
    if eps == 0.0 {
        return Err(CcrError::InvalidSchedule("eps must be nonzero".into()));
    }
    let tau = PI / eps + 2.0 * PI / (p as f64 * eps) + 2.0 * PI * m as f64 / eps;
    let total = p as f64 * tau;
    let first = match style {
        ScheduleStyle::Original => tau,
        ScheduleStyle::CpmgShifted(tt) => {
            if !(tt > 0.0 && tt <= tau) {
                return Err(CcrError::InvalidSchedule(format!(
                    "shifted first interval {tt} outside (0, tau = {tau}]"
                )));
            }
            tt
        }
        _ => {
            return Err(CcrError::InvalidSchedule(
                "make_flower_schedule builds original or cpmg_shifted styles only".into(),
            ))
        }
    };
    let events = (0..p)
        .map(|k| (first + k as f64 * tau, FlipAction::FlipZAllGateQubits))
        .collect();
    Ok(PulseSchedule { events, total_time: total, style })
}

/// How a flip event transforms a branch Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlipSemantics {
    /// Z flip: reflects the dispersive shift about the bare detuning and
    /// negates the conditional drive (both x and M change sign).
    ZFlip,
    /// Rabi-sign flip: negates the conditional drive only (M changes sign,
    /// x does not).
    OmegaSignFlip,
}

fn flipped(bh: &BranchHamiltonian, sign: f64, semantics: FlipSemantics) -> BranchHamiltonian {
    if sign > 0.0 {
        return *bh;
    }
    match semantics {
        FlipSemantics::ZFlip => BranchHamiltonian {
            eps_eff: 2.0 * bh.eps_bare - bh.eps_eff,
            m_coeff: -bh.m_coeff,
            ..*bh
        },
        FlipSemantics::OmegaSignFlip => BranchHamiltonian { m_coeff: -bh.m_coeff, ..*bh },
    }
}

struct Segment {
    t0: f64,
    dt: f64,
    bh: BranchHamiltonian,
    /// Rotating-frame displacement accumulated before this segment.
    s_start: C64,
    /// Accumulated rotation angle sum(eps_k dt_k) before this segment.
    phi_start: f64,
}

/// Piecewise closed-form composition for one branch/mode. Returns segments,
/// final displacement, and the total accumulated phase.
fn compose_segments(
    bh: &BranchHamiltonian,
    schedule: &PulseSchedule,
    semantics: FlipSemantics,
) -> (Vec<Segment>, C64, f64) {
    let bounds = schedule.boundaries();
    let mut segments = Vec::with_capacity(bounds.len() - 1);
    let mut s = C64::new(0.0, 0.0);
    let mut phi = 0.0;
    let mut theta_sum = 0.0;
    let mut gamma = 0.0;
    let mut sign = 1.0;
    for w in bounds.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let dt = t1 - t0;
        let eff = flipped(bh, sign, semantics);
        segments.push(Segment { t0, dt, bh: eff, s_start: s, phi_start: phi });
        let step = evolve_closed_form(&eff, dt);
        let alpha = C64::from_polar(1.0, phi) * step.displacement;
        // cross term: the segment-local phase formula assumes a start at the
        // origin; starting from s adds twice the swept triangle area
        gamma += (alpha * s.conj()).im;
        theta_sum += step.phase;
        s += alpha;
        phi += eff.eps_eff * dt;
        sign = -sign;
    }
    (segments, s, theta_sum + gamma)
}

fn sample_segments(segments: &[Segment], total_time: f64, n_samples: usize) -> Vec<(f64, C64)> {
    let mut out = Vec::with_capacity(n_samples + 1);
    let mut k = 0usize;
    for j in 0..=n_samples {
        let t = total_time * j as f64 / n_samples as f64;
        while k + 1 < segments.len() && t > segments[k].t0 + segments[k].dt + 1e-15 * total_time {
            k += 1;
        }
        let seg = &segments[k];
        let local = evolve_closed_form(&seg.bh, (t - seg.t0).max(0.0)).displacement;
        out.push((t, seg.s_start + C64::from_polar(1.0, seg.phi_start) * local));
    }
    out
}

/// Closure displacement and accumulated phase for one branch/mode, without
/// trajectory sampling. Cheap enough for large branch enumerations.
pub fn compose_schedule(
    bh: &BranchHamiltonian,
    schedule: &PulseSchedule,
    semantics: FlipSemantics,
) -> Result<(C64, f64)> {
    schedule.validate()?;
    let (_, s_final, phase) = compose_segments(bh, schedule, semantics);
    Ok((s_final, phase))
}

/// Trace every branch and mode through the schedule, with pulses acting as
/// instantaneous coefficient flips.
pub fn trace_flower(
    branches: &[(BranchLabel, Vec<BranchHamiltonian>)],
    schedule: &PulseSchedule,
    semantics: FlipSemantics,
) -> Result<TrajectoryResult> {
    schedule.validate()?;
    // grid size depends only on the pulse count so that shifted variants of
    // the same schedule sample on identical grids; 8x the base density keeps
    // the trapezoid area cross-check well below 1e-6
    let n_samples = schedule.events.len().max(1) * SAMPLES_PER_PETAL * 8;
    let mut trajectories = Vec::new();
    let mut phases = Vec::new();
    for (branch, mods) in branches {
        let mut phase = 0.0;
        for bh in mods {
            let (segments, s_final, ph) = compose_segments(bh, schedule, semantics);
            phase += ph;
            let samples = sample_segments(&segments, schedule.total_time, n_samples);
            let area = shoelace_area(&samples);
            trajectories.push(BranchTrajectory {
                branch: branch.clone(),
                mode: bh.mode_id,
                samples,
                closure_residual: s_final.norm(),
                area,
            });
        }
        phases.push((branch.clone(), phase));
    }
    Ok(TrajectoryResult { trajectories, phases })
}

/// Aggregate a traced schedule into a conditional gate: phases per branch and
/// closure residual (over modes, in quadrature) per branch.
pub fn gate_from_trace(trace: &TrajectoryResult) -> ConditionalGate {
    let residual_entanglement = trace
        .phases
        .iter()
        .map(|(b, _)| {
            let r2: f64 = trace
                .trajectories
                .iter()
                .filter(|t| &t.branch == b)
                .map(|t| t.closure_residual * t.closure_residual)
                .sum();
            (b.clone(), r2.sqrt())
        })
        .collect();
    ConditionalGate { phases: trace.phases.clone(), residual_entanglement }
}

/// Geometry of one closed P-petal trajectory with dispersive ratio x.
#[derive(Clone, Copy, Debug)]
pub struct FlowerGeometry {
    pub p: u32,
    pub x: f64,
    /// Petal radii M/(eps(1 +- x)).
    pub r1: f64,
    pub r2: f64,
    /// Half-gap angles; beta1 + beta2 depends on P only, not on x.
    pub beta1: f64,
    pub beta2: f64,
    pub m_over_eps: f64,
}

impl FlowerGeometry {
    pub fn new(p: u32, x: f64, m: f64, eps: f64) -> Result<Self> {
        if p < 4 || p % 2 != 0 {
            return Err(CcrError::InvalidParameter(format!("P must be even and >= 4; got {p}")));
        }
        if x.abs() >= 1.0 {
            return Err(CcrError::InvalidParameter(format!(
                "|x| = {} >= 1: the slow-branch radius diverges",
                x.abs()
            )));
        }
        if eps == 0.0 {
            return Err(CcrError::InvalidParameter("eps must be nonzero".into()));
        }
        let tau_eps = PI + 2.0 * PI / p as f64; // eps * tau
        Ok(FlowerGeometry {
            p,
            x,
            r1: m / (eps * (1.0 + x)),
            r2: m / (eps * (1.0 - x)),
            beta1: (2.0 * PI - (1.0 + x) * tau_eps) / 2.0,
            beta2: (2.0 * PI - (1.0 - x) * tau_eps) / 2.0,
            m_over_eps: m / eps,
        })
    }
}

/// Closed-form areas of the flower: inner polygon area A_p, combined
/// circular-parts area A_c, and the accumulated phase 2 (A_p + A_c).
pub fn flower_areas(geom: &FlowerGeometry) -> (f64, f64, f64) {
    let p = geom.p as f64;
    let r = geom.r1 + geom.r2;
    let a_p = p * (r * r / 2.0) * geom.beta1.sin() * geom.beta2.sin() / (2.0 * PI / p).sin();
    let a_c = ((p + 2.0) / 2.0) * PI * geom.m_over_eps * geom.m_over_eps / (1.0 - geom.x * geom.x);
    (a_p, a_c, 2.0 * (a_p + a_c))
}

/// Per-branch flower area for the CZ condition: branch z determines both the
/// drive M_b and the dispersive ratio x_b = sum_i f_i z_i / eps.
fn branch_area(p: u32, eps: f64, m_b: f64, f_sum: f64) -> Result<f64> {
    let x = f_sum / eps;
    let geom = FlowerGeometry::new(p, x, m_b, eps)?;
    let (a_p, a_c, _) = flower_areas(&geom);
    Ok(a_p + a_c)
}

/// Solve for the detuning eps at which the P-petal flower implements a CZ:
/// the branch-resolved area condition 4 |A(++) - A(+-)| = pi. Returns
/// (eps, T_tot, gate re-simulated through trace_flower).
pub fn solve_cz_flower(
    spec: &SystemSpec,
    f_coeffs: &[Vec<f64>],
    p: u32,
) -> Result<(f64, f64, ConditionalGate)> {
    if p < 4 || p % 2 != 0 {
        return Err(CcrError::InvalidParameter(format!("P must be even and >= 4; got {p}")));
    }
    let angles = dress(spec)?;
    let g1a1 = spec.g[0][0] * angles.a_coeff[0];
    let g2a2 = spec.g[1][0] * angles.a_coeff[1];
    let product = g1a1 * g2a2;
    if product <= 0.0 {
        return Err(CcrError::InvalidParameter(
            "g1 g2 A1 A2 must be positive for a CZ flower".into(),
        ));
    }
    let m_pp = 0.5 * (g1a1 + g2a2);
    let m_pm = 0.5 * (g1a1 - g2a2);
    let (f1, f2) = (f_coeffs[0][0], f_coeffs[1][0]);
    let objective = |eps: f64| -> Result<f64> {
        let a_pp = branch_area(p, eps, m_pp, f1 + f2)?;
        let a_pm = branch_area(p, eps, m_pm, f1 - f2)?;
        Ok(4.0 * (a_pp - a_pm).abs())
    };
    // the phase scales as ~1/eps^2: bracket around the x=0 closed-form seed
    let pf = p as f64;
    let k_p = pf * (PI / pf).cos() / (PI / pf).sin() + (pf + 2.0) / 2.0 * PI;
    let seed = 2.0 * (m_pp * m_pp - m_pm * m_pm).abs().sqrt() * (k_p / PI).sqrt();
    let x_bound = (f1.abs() + f2.abs()) * 1.001 + 1e-300;
    let mut lo = (0.02 * seed).max(x_bound);
    let mut hi = 50.0 * seed;
    let (f_lo, f_hi) = (objective(lo)?, objective(hi)?);
    if (f_lo - PI) * (f_hi - PI) > 0.0 {
        return Err(CcrError::NotFound(format!(
            "no CZ root in eps bracket [{lo:.3e}, {hi:.3e}]"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = objective(mid)?;
        if (f_mid - PI) * (f_lo - PI) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let eps = 0.5 * (lo + hi);
    let tau = PI / eps + 2.0 * PI / (pf * eps);
    let t_tot = pf * tau;
    // re-simulate through the generic tracer
    let schedule = make_flower_schedule(p, eps, ScheduleStyle::Original, 0)?;
    let branches: Vec<(BranchLabel, Vec<BranchHamiltonian>)> = BranchLabel::all(2)
        .into_iter()
        .map(|b| {
            let m_b = 0.5 * (g1a1 * b.z(0) + g2a2 * b.z(1));
            let eps_eff = eps + f1 * b.z(0) + f2 * b.z(1);
            (b, vec![BranchHamiltonian { eps_eff, eps_bare: eps, m_coeff: m_b, mode_id: 0 }])
        })
        .collect();
    let trace = trace_flower(&branches, &schedule, FlipSemantics::ZFlip)?;
    Ok((eps, t_tot, gate_from_trace(&trace)))
}

/// Closure residual of every (mode, branch) under one shared schedule.
pub fn multimode_closure_check(
    branches: &[(BranchLabel, Vec<BranchHamiltonian>)],
    schedule: &PulseSchedule,
) -> Result<Vec<(usize, BranchLabel, f64)>> {
    let trace = trace_flower(branches, schedule, FlipSemantics::ZFlip)?;
    Ok(trace
        .trajectories
        .iter()
        .map(|t| (t.mode, t.branch.clone(), t.closure_residual))
        .collect())
}

/// A consistent multi-mode pulse assignment: one shared inter-pulse spacing
/// tau with per-mode petal counts P_k and loop counts m_k.
#[derive(Clone, Debug)]
pub struct MultimodeAssignment {
    pub tau: f64,
    /// (P_k, m_k) per mode, in input order.
    pub per_mode: Vec<(u32, u32)>,
    /// Common multiple of all P_k: pulses needed for every mode to complete.
    pub petal_count: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Search for (P_k, m_k) so that tau = pi/eps_k + 2 pi/(P_k eps_k)
/// + 2 pi m_k / eps_k is shared by all modes. Returns None when the search
/// budget is exhausted without a consistent assignment.
pub fn schedule_multimode(eps_list: &[f64]) -> Result<Option<MultimodeAssignment>> {
    if eps_list.is_empty() {
        return Err(CcrError::InvalidParameter("no modes given".into()));
    }
    for (i, &e) in eps_list.iter().enumerate() {
        if e == 0.0 {
            return Err(CcrError::InvalidParameter(format!("eps[{i}] = 0")));
        }
        for &e2 in &eps_list[..i] {
            if (e - e2).abs() < 1e-12 * e.abs().max(e2.abs()) {
                return Err(CcrError::InvalidParameter("eps values must be distinct".into()));
            }
        }
    }
    const P_MAX: u32 = 16;
    const M_MAX: u32 = 24;
    const PETAL_BUDGET: u64 = 10_000;
    let tol = 1e-9;
    let e0 = eps_list[0];
    let mut best: Option<MultimodeAssignment> = None;
    for p0 in (4..=P_MAX).step_by(2) {
        for m0 in 0..=M_MAX {
            let tau = PI / e0 + 2.0 * PI / (p0 as f64 * e0) + 2.0 * PI * m0 as f64 / e0;
            let mut per_mode = vec![(p0, m0)];
            let mut lcm: u64 = p0 as u64;
            let mut ok = true;
            for &ek in &eps_list[1..] {
                // tau ek = pi + 2 pi/P + 2 pi m  =>  m = (tau ek - pi)/(2 pi) - 1/P
                let base = (tau * ek - PI) / (2.0 * PI);
                let mut found = None;
                for pk in (4..=P_MAX).step_by(2) {
                    let mk = base - 1.0 / pk as f64;
                    let mk_round = mk.round();
                    if mk_round >= 0.0 && (mk - mk_round).abs() < tol {
                        found = Some((pk, mk_round as u32));
                        break;
                    }
                }
                match found {
                    Some((pk, mk)) => {
                        lcm = lcm / gcd(lcm, pk as u64) * pk as u64;
                        per_mode.push((pk, mk));
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok && lcm <= PETAL_BUDGET {
                let cand = MultimodeAssignment { tau, per_mode, petal_count: lcm };
                if best.as_ref().map_or(true, |b| cand.petal_count < b.petal_count) {
                    best = Some(cand);
                }
            }
        }
    }
    Ok(best)
}

/// Pulse times of the p-pulse Uhrig sequence over total time tau_c.
pub fn uhrig_schedule(p: u32, tau_c: f64) -> Result<PulseSchedule> {
    if p < 1 {
        return Err(CcrError::InvalidSchedule("p must be >= 1".into()));
    }
    if tau_c <= 0.0 {
        return Err(CcrError::InvalidSchedule("tau_c must be positive".into()));
    }
    let events = (1..=p)
        .map(|i| {
            let s = (PI * i as f64 / (2.0 * (p as f64 + 1.0))).sin();
            (tau_c * s * s, FlipAction::FlipZAllGateQubits)
        })
        .collect();
    Ok(PulseSchedule { events, total_time: tau_c, style: ScheduleStyle::Uhrig(p) })
}

/// Dimensionless end displacement of the x = 0 Uhrig flower: sum of petal
/// chords with alternating signs, in units of M/eps.
fn uhrig_end_displacement(p: u32, u_total: f64) -> f64 {
    // t_k/tau_c = sin^2(pi k/(2(p+1))), k = 0..p+1; segment k carries sign
    // (-1)^k and contributes e^{i u t_k} - e^{i u t_{k+1}}
    let mut e = C64::new(0.0, 0.0);
    let frac = |k: u32| {
        let s = (PI * k as f64 / (2.0 * (p as f64 + 1.0))).sin();
        s * s
    };
    let mut sign = 1.0;
    for k in 0..=p {
        let a = C64::from_polar(1.0, u_total * frac(k));
        let b = C64::from_polar(1.0, u_total * frac(k + 1));
        e += (a - b) * sign;
        sign = -sign;
    }
    e.norm()
}

/// Smallest tau_c > 0 closing the p-pulse Uhrig flower at x = 0, with the
/// traced trajectory. Root-finding is a bracket scan over the analytic end
/// displacement followed by bisection on its derivative sign via golden
/// refinement of the scan minimum.
pub fn uhrig_flower(p: u32, eps: f64) -> Result<(f64, TrajectoryResult)> {
    if p < 1 {
        return Err(CcrError::InvalidParameter("p must be >= 1".into()));
    }
    if eps == 0.0 {
        return Err(CcrError::InvalidParameter("eps must be nonzero".into()));
    }
    let period = 2.0 * PI / eps.abs();
    let step = 0.01 * period;
    let bound = 10.0 * period;
    // skip the trivial tau_c -> 0 root: the end displacement vanishes
    // quadratically there, so start the scan half a step in
    let mut tau_c = None;
    let mut k = 0.5_f64;
    while k * step < bound {
        let g0 = uhrig_end_displacement(p, eps * k * step);
        let g1 = uhrig_end_displacement(p, eps * (k + 1.0) * step);
        let g2 = uhrig_end_displacement(p, eps * (k + 2.0) * step);
        if g1 <= g0 && g1 <= g2 {
            // golden-section refinement of the local minimum
            let (mut a, mut b) = (k * step, (k + 2.0) * step);
            const INV_PHI: f64 = 0.618_033_988_749_894_8;
            let mut c = b - INV_PHI * (b - a);
            let mut d = a + INV_PHI * (b - a);
            let mut fc = uhrig_end_displacement(p, eps * c);
            let mut fd = uhrig_end_displacement(p, eps * d);
            for _ in 0..200 {
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - INV_PHI * (b - a);
                    fc = uhrig_end_displacement(p, eps * c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + INV_PHI * (b - a);
                    fd = uhrig_end_displacement(p, eps * d);
                }
            }
            let t = 0.5 * (a + b);
            if uhrig_end_displacement(p, eps * t) < 1e-9 {
                tau_c = Some(t);
                break;
            }
        }
        k += 1.0;
    }
    let tau_c = tau_c.ok_or_else(|| {
        CcrError::NotFound(format!("no Uhrig closure with tau_c <= 10 periods for p = {p}"))
    })?;
    let schedule = uhrig_schedule(p, tau_c)?;
    let bh = BranchHamiltonian { eps_eff: eps, eps_bare: eps, m_coeff: eps.abs(), mode_id: 0 };
    let branches = vec![(BranchLabel(vec![1]), vec![bh])];
    let trace = trace_flower(&branches, &schedule, FlipSemantics::ZFlip)?;
    Ok((tau_c, trace))
}

/// Time-averaged product of the two +-1 sign traces; 1 for identical
/// schedules, 0 when one echoes the other away.
pub fn zz_echo_factor(a: &PulseSchedule, b: &PulseSchedule) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let t_total = a.total_time;
    if (t_total - b.total_time).abs() > 1e-12 * t_total.max(b.total_time) {
        return Err(CcrError::InvalidSchedule(format!(
            "total times differ: {} vs {}",
            a.total_time, b.total_time
        )));
    }
    let sa = a.sign_trace();
    let sb = b.sign_trace();
    let mut cuts: Vec<f64> = sa.iter().chain(sb.iter()).map(|&(t, _)| t).collect();
    cuts.push(t_total);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-15 * t_total);
    let sign_at = |trace: &[(f64, i8)], t: f64| -> f64 {
        let mut s = 1.0;
        for &(t0, sign) in trace {
            if t0 <= t + 1e-15 * t_total {
                s = sign as f64;
            } else {
                break;
            }
        }
        s
    };
    let mut integral = 0.0;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        integral += (w[1] - w[0]) * sign_at(&sa, mid) * sign_at(&sb, mid);
    }
    Ok(integral / t_total)
}
