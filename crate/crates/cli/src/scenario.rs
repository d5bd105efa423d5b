//! Scenario schema: a TOML file with a name, a unit declaration, an optional
//! physical system table, and one task. Validation never executes tasks and
//! reports the offending field by name.

use ccr_core::hilbert::{Anharmonicity, SystemSpec};
use serde::Deserialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Angular-frequency unit declaration; every frequency-like number in the
    /// file is in this unit and every time in its inverse.
    pub units: String,
    #[serde(default)]
    pub system: Option<SystemTable>,
    pub task: TaskConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemTable {
    pub nu: Vec<f64>,
    pub omega: Vec<f64>,
    pub eta: Vec<EtaField>,
    #[serde(default)]
    pub eta_mode: f64,
    pub g: Vec<Vec<f64>>,
    #[serde(default)]
    pub g_tilde: f64,
    pub rabi: Vec<f64>,
    pub omega_d: f64,
    #[serde(default)]
    pub chain_j: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum EtaField {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, Copy, Deserialize, Default, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Semantics {
    #[default]
    ZFlip,
    OmegaFlip,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    /// Plain constant-duration gate on a two-qubit/one-mode system.
    Gate {
        tau: f64,
        /// Override of the two dispersive coefficients (e.g. [0, 0]).
        #[serde(default)]
        f_override: Option<Vec<f64>>,
    },
    /// Pulsed single-branch trajectory, or (with solve_cz) the full
    /// branch-resolved CZ flower solved from a system table.
    Flower {
        p: u32,
        #[serde(default)]
        x: f64,
        #[serde(default)]
        m_coeff: f64,
        #[serde(default)]
        eps: f64,
        #[serde(default)]
        loops: u32,
        /// First-interval fraction of tau; 1.0 is the unshifted schedule.
        #[serde(default = "one")]
        first_fraction: f64,
        #[serde(default)]
        semantics: Semantics,
        /// Also report the echo factor against the half-shifted partner.
        #[serde(default)]
        echo_partner: bool,
        /// Solve the branch-resolved CZ condition from [system] instead of
        /// tracing a raw single branch.
        #[serde(default)]
        solve_cz: bool,
    },
    /// Closure times of pulse-position-modulated sequences.
    Uhrig { pulses: Vec<u32>, eps: f64 },
    /// Integer-tuned gate search on a two-qubit/one-mode system.
    Integers {
        knob: String,
        #[serde(default)]
        target: Option<[i64; 3]>,
        #[serde(default)]
        dispersion_free: bool,
    },
    /// Always-on ZZ report.
    Zz {
        variant: String,
        #[serde(default)]
        omega_pair: Option<[f64; 2]>,
        #[serde(default)]
        eta: Option<f64>,
    },
    /// Residual-order fit of the block-diagonalization engine on a random
    /// problem.
    SwOrderFit {
        seed: u64,
        orders: Vec<usize>,
        #[serde(default = "default_scales")]
        scales: Vec<f64>,
    },
    /// Cavity-chain normal modes and pair-assignment feasibility, or the
    /// two-mode pair gate.
    Metamaterial {
        mode: String,
        #[serde(default)]
        n_cavities: Option<usize>,
        #[serde(default)]
        nu_local: Option<f64>,
        #[serde(default)]
        j: Option<f64>,
        #[serde(default)]
        periodic: bool,
        /// (qubit, cavity, g) triples.
        #[serde(default)]
        attachments: Option<Vec<Attach>>,
        /// (qubit_a, qubit_b, mode) triples.
        #[serde(default)]
        pairs: Option<Vec<[usize; 3]>>,
        #[serde(default)]
        drive: Option<DriveTable>,
        #[serde(default = "ten")]
        margin_factor: f64,
        // two_mode_gate fields
        #[serde(default)]
        g: Option<f64>,
        #[serde(default)]
        rabi: Option<f64>,
        #[serde(default)]
        delta: Option<f64>,
        #[serde(default)]
        n_a: Option<i64>,
    },
    /// Exact branch-enumeration error-scaling sweep.
    Scaling {
        scheme: String,
        spectators: Vec<usize>,
        #[serde(default)]
        ratios: Option<Vec<f64>>,
        #[serde(default)]
        delta: Option<f64>,
        #[serde(default)]
        rabi: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attach {
    pub qubit: usize,
    pub cavity: usize,
    pub g: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveTable {
    pub omega: Vec<f64>,
    pub rabi: Vec<f64>,
    pub omega_d: f64,
}

fn one() -> f64 {
    1.0
}
fn ten() -> f64 {
    10.0
}
fn default_scales() -> Vec<f64> {
    vec![1.0, 0.5, 0.25]
}

impl SystemTable {
    pub fn to_spec(&self) -> Result<SystemSpec, String> {
        let mut eta = Vec::new();
        for (i, e) in self.eta.iter().enumerate() {
            match e {
                EtaField::Value(v) => eta.push(Anharmonicity::Finite(*v)),
                EtaField::Keyword(k) if k == "inf" => eta.push(Anharmonicity::Infinite),
                EtaField::Keyword(k) => {
                    return Err(format!("system.eta[{i}]: expected a number or \"inf\", got {k:?}"))
                }
            }
        }
        let spec = SystemSpec {
            nu_modes: self.nu.clone(),
            omega: self.omega.clone(),
            eta,
            eta_mode: self.eta_mode,
            g: self.g.clone(),
            g_tilde: self.g_tilde,
            rabi: self.rabi.clone(),
            omega_d: self.omega_d,
            chain_j: self.chain_j,
        };
        spec.validate().map_err(|e| format!("system: {e}"))?;
        Ok(spec)
    }
}

impl Scenario {
    /// Structural validation only; never executes the task.
    pub fn validate(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        if self.name.is_empty() {
            return Err("name: must not be empty".into());
        }
        if self.units.is_empty() {
            return Err("units: must declare the angular-frequency unit".into());
        }
        if let Some(sys) = &self.system {
            sys.to_spec()?;
        }
        let need_system = |what: &str| -> Result<(), String> {
            if self.system.is_none() {
                Err(format!("system: required for {what}"))
            } else {
                Ok(())
            }
        };
        match &self.task {
            TaskConfig::Gate { tau, f_override } => {
                need_system("task type \"gate\"")?;
                if *tau <= 0.0 {
                    return Err("task.tau: must be positive".into());
                }
                if let Some(f) = f_override {
                    if f.len() != 2 {
                        return Err("task.f_override: needs exactly two entries".into());
                    }
                }
            }
            TaskConfig::Flower { p, eps, first_fraction, x, solve_cz, .. } => {
                if *p < 2 || *p % 2 != 0 {
                    return Err(format!("task.p: must be even and >= 2, got {p}"));
                }
                if *solve_cz {
                    need_system("task type \"flower\" with solve_cz")?;
                    if *p < 4 {
                        return Err("task.p: solve_cz needs P >= 4".into());
                    }
                } else if *eps == 0.0 {
                    return Err("task.eps: must be nonzero".into());
                }
                if !(*first_fraction > 0.0 && *first_fraction <= 1.0) {
                    return Err("task.first_fraction: must lie in (0, 1]".into());
                }
                if x.abs() >= 1.0 {
                    return Err("task.x: |x| must be < 1".into());
                }
            }
            TaskConfig::Uhrig { pulses, eps } => {
                if pulses.is_empty() {
                    return Err("task.pulses: must not be empty".into());
                }
                if pulses.iter().any(|&p| p < 1) {
                    return Err("task.pulses: entries must be >= 1".into());
                }
                if *eps == 0.0 {
                    return Err("task.eps: must be nonzero".into());
                }
            }
            TaskConfig::Integers { knob, target, .. } => {
                need_system("task type \"integers\"")?;
                if !["g1", "g2", "omega1", "omega2", "nu"].contains(&knob.as_str()) {
                    return Err(format!(
                        "task.knob: expected one of g1, g2, omega1, omega2, nu; got {knob:?}"
                    ));
                }
                if let Some([n_eps, n1, n2]) = target {
                    ccr_core::integers::validate_triple(*n_eps, *n1, *n2)
                        .map_err(|e| format!("task.target: {e}"))?;
                }
            }
            TaskConfig::Zz { variant, omega_pair, eta } => match variant.as_str() {
                "single_cavity" | "direct" | "eta_expansion" | "two_oscillators" => {
                    need_system(&format!("task type \"zz\" variant {variant:?}"))?;
                }
                "zero_roots" => {
                    if omega_pair.is_none() {
                        return Err("task.omega_pair: required for variant \"zero_roots\"".into());
                    }
                    if eta.is_none() {
                        return Err("task.eta: required for variant \"zero_roots\"".into());
                    }
                }
                other => {
                    return Err(format!(
                        "task.variant: expected single_cavity, direct, eta_expansion, \
                         two_oscillators, or zero_roots; got {other:?}"
                    ))
                }
            },
            TaskConfig::SwOrderFit { orders, scales, .. } => {
                if orders.is_empty() {
                    return Err("task.orders: must not be empty".into());
                }
                if orders.iter().any(|o| ![2, 4, 6].contains(o)) {
                    return Err("task.orders: entries must be 2, 4, or 6".into());
                }
                if scales.len() < 2 {
                    return Err("task.scales: need at least two scales for a fit".into());
                }
            }
            TaskConfig::Metamaterial {
                mode,
                n_cavities,
                nu_local,
                j,
                attachments,
                pairs,
                drive,
                margin_factor,
                g,
                rabi,
                delta,
                n_a,
                ..
            } => match mode.as_str() {
                "chain" => {
                    if n_cavities.unwrap_or(0) == 0 {
                        return Err("task.n_cavities: required and must be >= 1".into());
                    }
                    if nu_local.is_none() || j.is_none() {
                        return Err("task.nu_local, task.j: required for mode \"chain\"".into());
                    }
                    if pairs.is_some() && (drive.is_none() || attachments.is_none()) {
                        return Err(
                            "task.drive, task.attachments: required when pairs are given".into()
                        );
                    }
                    if *margin_factor <= 0.0 {
                        return Err("task.margin_factor: must be positive".into());
                    }
                }
                "two_mode_gate" => {
                    for (name, v) in [("g", g), ("rabi", rabi), ("delta", delta)] {
                        if v.is_none() {
                            return Err(format!("task.{name}: required for mode \"two_mode_gate\""));
                        }
                    }
                    match n_a {
                        None => return Err("task.n_a: required for mode \"two_mode_gate\"".into()),
                        Some(0) | Some(1) => {
                            return Err("task.n_a: must be an integer other than 0 and 1".into())
                        }
                        _ => {}
                    }
                }
                other => {
                    return Err(format!(
                        "task.mode: expected \"chain\" or \"two_mode_gate\", got {other:?}"
                    ))
                }
            },
            TaskConfig::Scaling { scheme, spectators, ratios, .. } => {
                if !["uncancelled", "integers", "flowers"].contains(&scheme.as_str()) {
                    return Err(format!(
                        "task.scheme: expected uncancelled, integers, or flowers; got {scheme:?}"
                    ));
                }
                if spectators.is_empty() {
                    return Err("task.spectators: must not be empty".into());
                }
                if spectators.iter().any(|&n| n + 2 > 12) {
                    return Err("task.spectators: at most 10 (branch enumeration budget)".into());
                }
                if let Some(r) = ratios {
                    if r.len() < 2 || r.iter().any(|&v| v <= 0.0) {
                        return Err("task.ratios: need >= 2 positive values".into());
                    }
                }
            }
        }
        Ok(())
    }
}
