//! Task execution: each task renders a list of (file name, contents) pairs.
//! All numeric output is formatted with fixed precision so identical inputs
//! produce byte-identical artifacts.

use crate::scenario::{Scenario, Semantics, TaskConfig};
use ccr_core::flowers::{
    make_flower_schedule_allow_p2, solve_cz_flower, trace_flower, uhrig_flower, zz_echo_factor,
    FlipSemantics, PulseSchedule, ScheduleStyle,
};
use ccr_core::hilbert::hermitian_eigen_sorted;
use ccr_core::integers::{solve_integers_with_f, Knob};
use ccr_core::metamaterial::{
    diagonalize_chain, multimode_gate_report, pair_assignment_check, scaling_experiment,
    two_mode_nonlinear_phase, two_oscillator_gate, Attachment, ChainSpec, DriveParams,
    ScalingBase, Scheme,
};
use ccr_core::perturbation::{
    dispersive_shift, order_fit, order_fit_csv, random_problem, schrieffer_wolff,
    zero_zz_cavity_frequency, zz_direct_coupling, zz_eta_expansion, zz_single_cavity,
    zz_two_oscillators,
};
use ccr_core::phasespace::{run_gate, BranchHamiltonian, BranchLabel};
use ccr_core::C64;
use nalgebra::DMatrix;
use std::f64::consts::PI;

pub struct Artifact {
    pub name: String,
    pub contents: String,
}

fn art(name: &str, contents: String) -> Artifact {
    Artifact { name: name.to_string(), contents }
}

/// Execute the scenario's task. `seed_override` and `tol` come from the
/// command line.
pub fn execute(
    sc: &Scenario,
    seed_override: Option<u64>,
    tol: Option<f64>,
) -> Result<Vec<Artifact>, String> {
    match &sc.task {
        TaskConfig::Gate { tau, f_override } => gate_task(sc, *tau, f_override.as_deref()),
        TaskConfig::Flower {
            p,
            x,
            m_coeff,
            eps,
            loops,
            first_fraction,
            semantics,
            echo_partner,
            solve_cz,
        } => {
            if *solve_cz {
                solve_cz_task(sc, *p)
            } else {
                flower_task(*p, *x, *m_coeff, *eps, *loops, *first_fraction, *semantics, *echo_partner)
            }
        }
        TaskConfig::Uhrig { pulses, eps } => uhrig_task(pulses, *eps),
        TaskConfig::Integers { knob, target, dispersion_free } => {
            integers_task(sc, knob, *target, *dispersion_free, tol.unwrap_or(1e-8))
        }
        TaskConfig::Zz { variant, omega_pair, eta } => zz_task(sc, variant, *omega_pair, *eta),
        TaskConfig::SwOrderFit { seed, orders, scales } => {
            sw_task(seed_override.unwrap_or(*seed), orders, scales)
        }
        TaskConfig::Metamaterial { .. } => metamaterial_task(sc),
        TaskConfig::Scaling { scheme, spectators, ratios, delta, rabi } => scaling_task(
            scheme,
            spectators,
            ratios.clone(),
            delta.unwrap_or(1.0),
            rabi.unwrap_or(0.05),
        ),
    }
}

fn sys_spec(sc: &Scenario) -> Result<ccr_core::SystemSpec, String> {
    sc.system.as_ref().ok_or_else(|| "system: missing".to_string())?.to_spec()
}

fn f_coeffs_for(spec: &ccr_core::SystemSpec) -> Result<Vec<Vec<f64>>, String> {
    let mut f = Vec::new();
    for i in 0..spec.site_count() {
        let mut row = Vec::new();
        for k in 0..spec.mode_count() {
            row.push(dispersive_shift(spec, i, k).map_err(|e| e.to_string())?);
        }
        f.push(row);
    }
    Ok(f)
}

fn gate_task(sc: &Scenario, tau: f64, f_override: Option<&[f64]>) -> Result<Vec<Artifact>, String> {
    let spec = sys_spec(sc)?;
    let f = match f_override {
        Some(f) => vec![vec![f[0]], vec![f[1]]],
        None => f_coeffs_for(&spec)?,
    };
    let (gate, trace) = run_gate(&spec, &f, tau).map_err(|e| e.to_string())?;
    let mut report = format!("task: gate\ntau: {tau:.12e}\n");
    report.push_str(&gate.to_text());
    report.push_str(&format!("max_residual: {:.12e}\n", gate.max_residual()));
    Ok(vec![art("gate.txt", report), art("trajectory.csv", trace.to_csv())])
}

#[allow(clippy::too_many_arguments)]
fn flower_task(
    p: u32,
    x: f64,
    m_coeff: f64,
    eps: f64,
    loops: u32,
    first_fraction: f64,
    semantics: Semantics,
    echo_partner: bool,
) -> Result<Vec<Artifact>, String> {
    let tau = PI / eps + 2.0 * PI / (p as f64 * eps) + 2.0 * PI * loops as f64 / eps;
    let style = if (first_fraction - 1.0).abs() < 1e-15 {
        ScheduleStyle::Original
    } else {
        ScheduleStyle::CpmgShifted(first_fraction * tau)
    };
    let schedule = make_flower_schedule_allow_p2(p, eps, style, loops).map_err(|e| e.to_string())?;
    let sem = match semantics {
        Semantics::ZFlip => FlipSemantics::ZFlip,
        Semantics::OmegaFlip => FlipSemantics::OmegaSignFlip,
    };
    let bh = BranchHamiltonian {
        eps_eff: eps * (1.0 + x),
        eps_bare: eps,
        m_coeff,
        mode_id: 0,
    };
    let branches = vec![(BranchLabel(vec![1]), vec![bh])];
    let trace = trace_flower(&branches, &schedule, sem).map_err(|e| e.to_string())?;
    let t = &trace.trajectories[0];
    let mut report = format!(
        "task: flower\np: {p}\nx: {x:.12e}\nphase: {:.12e}\nclosure_residual: {:.12e}\n\
         area: {:.12e}\ntotal_time: {:.12e}\n",
        trace.phases[0].1, t.closure_residual, t.area, schedule.total_time
    );
    if echo_partner {
        let partner_first = if (first_fraction - 0.5).abs() < 1e-15 { 1.0 } else { 0.5 };
        let partner_style = if partner_first >= 1.0 {
            ScheduleStyle::Original
        } else {
            ScheduleStyle::CpmgShifted(partner_first * tau)
        };
        let partner =
            make_flower_schedule_allow_p2(p, eps, partner_style, loops).map_err(|e| e.to_string())?;
        let echo = zz_echo_factor(&schedule, &partner).map_err(|e| e.to_string())?;
        report.push_str(&format!("echo_factor_vs_shifted_partner: {echo:.12e}\n"));
    }
    Ok(vec![art("flower.txt", report), art("flower.csv", trace.to_csv())])
}

fn solve_cz_task(sc: &Scenario, p: u32) -> Result<Vec<Artifact>, String> {
    let spec = sys_spec(sc)?;
    let f = f_coeffs_for(&spec)?;
    let (eps, t_tot, gate) = solve_cz_flower(&spec, &f, p).map_err(|e| e.to_string())?;
    let mut report = format!(
        "task: flower (solve_cz)\np: {p}\neps: {eps:.12e}\ntotal_time: {t_tot:.12e}\n"
    );
    report.push_str(&gate.to_text());
    Ok(vec![art("flower_cz.txt", report)])
}

fn uhrig_task(pulses: &[u32], eps: f64) -> Result<Vec<Artifact>, String> {
    let mut report = String::from("task: uhrig\n");
    let mut out = Vec::new();
    for &p in pulses {
        let (tau_c, trace) = uhrig_flower(p, eps).map_err(|e| e.to_string())?;
        report.push_str(&format!(
            "p {p}: tau_c {tau_c:.12e} tau_c_over_2pi_per_eps {:.9}\n",
            tau_c * eps.abs() / (2.0 * PI)
        ));
        out.push(art(&format!("uhrig_p{p}.csv"), trace.to_csv()));
    }
    out.insert(0, art("uhrig.txt", report));
    Ok(out)
}

fn integers_task(
    sc: &Scenario,
    knob: &str,
    target: Option<[i64; 3]>,
    dispersion_free: bool,
    tol: f64,
) -> Result<Vec<Artifact>, String> {
    let spec = sys_spec(sc)?;
    let knob = match knob {
        "g1" => Knob::G1,
        "g2" => Knob::G2,
        "omega1" => Knob::Freq1,
        "omega2" => Knob::Freq2,
        _ => Knob::Nu,
    };
    let f_override = if dispersion_free { Some([0.0, 0.0]) } else { None };
    let sol = solve_integers_with_f(&spec, knob, f_override, target.map(|t| (t[0], t[1], t[2])), tol)
        .map_err(|e| e.to_string())?;
    Ok(vec![art("integers.txt", format!("task: integers\n{}", sol.to_text()))])
}

fn zz_task(
    sc: &Scenario,
    variant: &str,
    omega_pair: Option<[f64; 2]>,
    eta: Option<f64>,
) -> Result<Vec<Artifact>, String> {
    if variant == "zero_roots" {
        let [wi, wj] = omega_pair.ok_or("task.omega_pair: missing")?;
        let eta = eta.ok_or("task.eta: missing")?;
        let roots = zero_zz_cavity_frequency(wi, wj, eta);
        let mut report = format!("task: zz (zero_roots)\nomega_i: {wi:.12e}\nomega_j: {wj:.12e}\neta: {eta:.12e}\n");
        if roots.is_empty() {
            report.push_str("roots: none (eta below the frequency split)\n");
        }
        for (k, r) in roots.iter().enumerate() {
            report.push_str(&format!("root {k}: nu {:.12e} resonant {}\n", r.nu, r.resonant));
        }
        return Ok(vec![art("zz_roots.txt", report)]);
    }
    let spec = sys_spec(sc)?;
    let rep = match variant {
        "single_cavity" => zz_single_cavity(&spec),
        "direct" => zz_direct_coupling(&spec),
        "eta_expansion" => zz_eta_expansion(&spec),
        _ => zz_two_oscillators(&spec),
    }
    .map_err(|e| e.to_string())?;
    Ok(vec![art("zz.txt", format!("task: zz ({variant})\n{}", rep.to_text()))])
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

fn sw_task(seed: u64, orders: &[usize], scales: &[f64]) -> Result<Vec<Artifact>, String> {
    let p = random_problem(seed);
    let l = p.low_dim();
    let mut report = format!("task: sw_order_fit\nseed: {seed}\n");
    let mut out = Vec::new();
    for &order in orders {
        let mut residuals = Vec::new();
        for &sc in scales {
            let pt = p.rescaled(0.04 * sc);
            let r = schrieffer_wolff(&pt, order).map_err(|e| e.to_string())?;
            let (vals, _) = hermitian_eigen_sorted(&complexify(&r.effective));
            let mut approx: Vec<f64> = vals.iter().cloned().collect();
            approx.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (fvals, fvecs) = hermitian_eigen_sorted(&complexify(&pt.full_matrix(1.0)));
            let mut weighted: Vec<(f64, f64)> = (0..fvals.len())
                .map(|j| {
                    let w: f64 = (0..l).map(|i| fvecs[(i, j)].norm_sqr()).sum();
                    (w, fvals[j])
                })
                .collect();
            weighted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let mut exact: Vec<f64> = weighted.iter().take(l).map(|&(_, v)| v).collect();
            exact.sort_by(|a, b| a.partial_cmp(b).unwrap());
            residuals.push(
                approx
                    .iter()
                    .zip(exact.iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            );
        }
        let slope = order_fit(scales, &residuals);
        report.push_str(&format!("order {order}: residual_slope {slope:.6}\n"));
        out.push(art(&format!("sw_order{order}.csv"), order_fit_csv(scales, &residuals)));
    }
    out.insert(0, art("sw.txt", report));
    Ok(out)
}

fn metamaterial_task(sc: &Scenario) -> Result<Vec<Artifact>, String> {
    let TaskConfig::Metamaterial {
        mode,
        n_cavities,
        nu_local,
        j,
        periodic,
        attachments,
        pairs,
        drive,
        margin_factor,
        g,
        rabi,
        delta,
        n_a,
    } = &sc.task
    else {
        unreachable!()
    };
    if mode == "chain" {
        let chain = ChainSpec {
            n_cavities: n_cavities.unwrap(),
            nu_local: nu_local.unwrap(),
            j: j.unwrap(),
            attachments: attachments
                .as_deref()
                .unwrap_or(&[])
                .iter()
                .map(|a| Attachment { qubit: a.qubit, cavity: a.cavity, g: a.g })
                .collect(),
            periodic: *periodic,
        };
        let modes = diagonalize_chain(&chain).map_err(|e| e.to_string())?;
        let mut report = format!(
            "task: metamaterial (chain)\nmodes: {}\nmin_spacing: {:.12e}\nmean_spacing: {:.12e}\n",
            modes.mode_count(),
            modes.min_spacing,
            modes.mean_spacing
        );
        if let Some(pairs) = pairs {
            let d = drive.as_ref().unwrap();
            let dp = DriveParams {
                omega: d.omega.clone(),
                rabi: d.rabi.clone(),
                omega_d: d.omega_d,
            };
            let triples: Vec<(usize, usize, usize)> =
                pairs.iter().map(|p| (p[0], p[1], p[2])).collect();
            let rep = pair_assignment_check(&modes, &triples, &dp, *margin_factor)
                .map_err(|e| e.to_string())?;
            report.push_str(&rep.to_text());
        }
        return Ok(vec![art("chain.txt", report), art("modes.csv", modes.to_csv())]);
    }
    // two_mode_gate: symmetric/antisymmetric pair gate on an N = 2 chain
    let (g, rabi, delta, n_a) = (g.unwrap(), rabi.unwrap(), delta.unwrap(), n_a.unwrap());
    let sin_t = rabi / (delta * delta + rabi * rabi).sqrt();
    let sol = two_oscillator_gate(g, g, sin_t, sin_t, n_a).map_err(|e| e.to_string())?;
    let jc = (sol.eps_s - sol.eps_a) / 2.0;
    let nu = 5.0;
    let omega_d = nu + jc - sol.eps_s;
    let chain = ChainSpec {
        n_cavities: 2,
        nu_local: nu,
        j: jc,
        attachments: vec![
            Attachment { qubit: 0, cavity: 0, g },
            Attachment { qubit: 1, cavity: 1, g },
        ],
        periodic: false,
    };
    let dp = DriveParams {
        omega: vec![omega_d + delta, omega_d + delta],
        rabi: vec![rabi, rabi],
        omega_d,
    };
    let schedule = PulseSchedule {
        events: vec![],
        total_time: sol.tau,
        style: ScheduleStyle::Custom,
    };
    let rep = multimode_gate_report(&chain, &dp, (0, 1), &schedule).map_err(|e| e.to_string())?;
    let formula = two_mode_nonlinear_phase(g, g, sin_t, sin_t, sol.tau, sol.eps_s, sol.eps_a);
    let mut report = format!(
        "task: metamaterial (two_mode_gate)\nn_a: {n_a}\ntau: {:.12e}\neps_s: {:.12e}\n\
         eps_a: {:.12e}\nnonlinear_phase_formula: {formula:.12e}\n",
        sol.tau, sol.eps_s, sol.eps_a
    );
    report.push_str(&rep.to_text());
    Ok(vec![art("two_mode.txt", report)])
}

fn scaling_task(
    scheme: &str,
    spectators: &[usize],
    ratios: Option<Vec<f64>>,
    delta: f64,
    rabi: f64,
) -> Result<Vec<Artifact>, String> {
    let scheme = match scheme {
        "uncancelled" => Scheme::Uncancelled,
        "integers" => Scheme::Integers,
        _ => Scheme::Flowers,
    };
    let mut base = ScalingBase { delta, rabi, ..ScalingBase::default() };
    if let Some(r) = ratios {
        base.ratios = r;
    }
    let exp = scaling_experiment(scheme, spectators, &base).map_err(|e| e.to_string())?;
    let mut report = format!("task: scaling ({scheme:?})\n");
    for (n, e) in &exp.exponents {
        report.push_str(&format!("spectators {n}: infidelity_exponent {e:.6}\n"));
    }
    Ok(vec![art("scaling.txt", report), art("scaling.csv", exp.to_csv())])
}
