//! Block Schrieffer–Wolff perturbation engine (three consecutive
//! transformations, carried to sixth order) plus closed-form dispersive
//! shifts and always-on ZZ interaction formulas, each verified against exact
//! diagonalization of the excitation-conserving blocks.

use crate::error::CcrError;
use crate::hilbert::{adiabatic_track, hermitian_eigen_sorted, Anharmonicity, SystemSpec};
use crate::{Result, C64};
use nalgebra::{DMatrix, DVector};

// ---------------------------------------------------------------------------
// Schrieffer–Wolff engine
// ---------------------------------------------------------------------------

/// Highest expansion order carried by the engine.
pub const MAX_ORDER: usize = 6;

/// A matrix-valued polynomial in the formal order parameter t, truncated at
/// `MAX_ORDER`. Commutators convolve the orders and drop anything beyond the
/// truncation.
#[derive(Clone)]
struct OrderPoly {
    t: Vec<DMatrix<f64>>,
}

impl OrderPoly {
    fn zero(n: usize) -> Self {
        OrderPoly { t: vec![DMatrix::zeros(n, n); MAX_ORDER + 1] }
    }

    fn single(order: usize, m: DMatrix<f64>) -> Self {
        let mut p = OrderPoly::zero(m.nrows());
        p.t[order] = m;
        p
    }

    fn add(&self, o: &OrderPoly) -> OrderPoly {
        OrderPoly {
            t: self.t.iter().zip(&o.t).map(|(a, b)| a + b).collect(),
        }
    }

    fn scale(&self, s: f64) -> OrderPoly {
        OrderPoly { t: self.t.iter().map(|a| a.scale(s)).collect() }
    }

    /// [self, o] with order convolution truncated at MAX_ORDER.
    fn comm(&self, o: &OrderPoly) -> OrderPoly {
        let n = self.t[0].nrows();
        let mut out = OrderPoly::zero(n);
        for i in 0..=MAX_ORDER {
            if self.t[i].amax() == 0.0 {
                continue;
            }
            for j in 0..=(MAX_ORDER - i) {
                if o.t[j].amax() == 0.0 {
                    continue;
                }
                out.t[i + j] += &self.t[i] * &o.t[j] - &o.t[j] * &self.t[i];
            }
        }
        out
    }
}

/// Block perturbation problem: a zero-energy low block coupled to a
/// "high-energy" block with diagonal energies W (nonzero, either sign),
/// through an off-diagonal coupling X and a high-block perturbation Y, both
/// first order in the formal small parameter.
#[derive(Clone, Debug)]
pub struct SWProblem {
    /// High-block diagonal energies (all nonzero).
    pub w: DVector<f64>,
    /// low_dim x high_dim coupling block.
    pub x: DMatrix<f64>,
    /// high_dim x high_dim symmetric perturbation.
    pub y: DMatrix<f64>,
}

impl SWProblem {
    pub fn new(w: DVector<f64>, x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        let h = w.len();
        if x.ncols() != h {
            return Err(CcrError::DimensionMismatch { expected: h, got: x.ncols() });
        }
        if y.nrows() != h || y.ncols() != h {
            return Err(CcrError::DimensionMismatch { expected: h, got: y.nrows() });
        }
        if x.nrows() == 0 {
            return Err(CcrError::InvalidParameter("low block must be nonempty".into()));
        }
        if w.iter().any(|&e| e == 0.0) {
            return Err(CcrError::InvalidParameter(
                "every high-block energy must be nonzero".into(),
            ));
        }
        let dev = (&y - y.transpose()).amax();
        if dev > 1e-12 * y.amax().max(1.0) {
            return Err(CcrError::NonHermitian { deviation: dev });
        }
        Ok(SWProblem { w, x, y })
    }

    pub fn low_dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn high_dim(&self) -> usize {
        self.w.len()
    }

    /// Full Hamiltonian [[0, X], [X^T, diag(W) + Y]] with the formal
    /// parameter set to `t`.
    pub fn full_matrix(&self, t: f64) -> DMatrix<f64> {
        let (l, h) = (self.low_dim(), self.high_dim());
        let n = l + h;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..h {
            m[(l + i, l + i)] = self.w[i];
        }
        for i in 0..l {
            for j in 0..h {
                m[(i, l + j)] = t * self.x[(i, j)];
                m[(l + j, i)] = t * self.x[(i, j)];
            }
        }
        for i in 0..h {
            for j in 0..h {
                m[(l + i, l + j)] += t * self.y[(i, j)];
            }
        }
        m
    }

    /// Uniformly rescale the perturbation: X, Y -> s X, s Y.
    pub fn rescaled(&self, s: f64) -> SWProblem {
        SWProblem { w: self.w.clone(), x: self.x.scale(s), y: self.y.scale(s) }
    }
}

/// Absorb a non-perturbative symmetric high-block part into the diagonal by
/// rotating the high-block basis: the returned problem has
/// W' = eig(diag(W) + y_absorb), X' = X Q, Y' = Q^T Y Q, where Q is the
/// orthogonal diagonalizing rotation (also returned). Needed whenever part
/// of the high-block coupling must be treated exactly rather than as a
/// perturbation.
pub fn pre_rotate(p: &SWProblem, y_absorb: &DMatrix<f64>) -> Result<(SWProblem, DMatrix<f64>)> {
    let h = p.high_dim();
    if y_absorb.nrows() != h || y_absorb.ncols() != h {
        return Err(CcrError::DimensionMismatch { expected: h, got: y_absorb.nrows() });
    }
    let mut full = y_absorb.clone();
    for i in 0..h {
        full[(i, i)] += p.w[i];
    }
    let complex = DMatrix::from_fn(h, h, |i, j| C64::new(full[(i, j)], 0.0));
    let (vals, vecs) = hermitian_eigen_sorted(&complex);
    let q = DMatrix::from_fn(h, h, |i, j| vecs[(i, j)].re);
    let w = DVector::from_fn(h, |i, _| vals[i]);
    if w.iter().any(|&e| e.abs() < 1e-12) {
        return Err(CcrError::Resonance(
            "absorbed high block has a zero eigenvalue".into(),
        ));
    }
    let x = &p.x * &q;
    let y = q.transpose() * &p.y * &q;
    // symmetrize away rotation roundoff
    let y = (&y + y.transpose()).scale(0.5);
    Ok((SWProblem { w, x, y }, q))
}

/// Result of the block diagonalization: the effective low-block Hamiltonian
/// and its per-order contributions.
#[derive(Clone, Debug)]
pub struct SWResult {
    /// Sum of the per-order contributions up to `order`.
    pub effective: DMatrix<f64>,
    pub order: usize,
    /// Low-block contribution at each order 0..=MAX_ORDER.
    pub per_order: Vec<DMatrix<f64>>,
}

/// Three consecutive Schrieffer–Wolff transformations carried to sixth order
/// in the formal parameter; the effective low-block Hamiltonian reproduces
/// the exact eigenvalues adiabatically connected to zero up to
/// O(t^{order+1}).
pub fn schrieffer_wolff(p: &SWProblem, order: usize) -> Result<SWResult> {
    if !(order == 2 || order == 4 || order == 6) {
        return Err(CcrError::InvalidParameter(format!(
            "order {order} unsupported (choose 2, 4, or 6)"
        )));
    }
    let (l, h) = (p.low_dim(), p.high_dim());
    let n = l + h;
    let mut h0m = DMatrix::zeros(n, n);
    let mut h0inv_m = DMatrix::zeros(n, n);
    for i in 0..h {
        h0m[(l + i, l + i)] = p.w[i];
        h0inv_m[(l + i, l + i)] = 1.0 / p.w[i];
    }
    let mut hx_m = DMatrix::zeros(n, n);
    for i in 0..l {
        for j in 0..h {
            hx_m[(i, l + j)] = p.x[(i, j)];
            hx_m[(l + j, i)] = p.x[(i, j)];
        }
    }
    let mut hy_m = DMatrix::zeros(n, n);
    for i in 0..h {
        for j in 0..h {
            hy_m[(l + i, l + j)] = p.y[(i, j)];
        }
    }
    let h0inv = OrderPoly::single(0, h0inv_m);
    let hx = OrderPoly::single(1, hx_m);
    let hy = OrderPoly::single(1, hy_m);

    let nest = |s: &OrderPoly, m: &OrderPoly, k: usize| -> OrderPoly {
        let mut out = m.clone();
        for _ in 0..k {
            out = s.comm(&out);
        }
        out
    };

    // first transformation: S = [H0^{-1}, Hx]
    let s = h0inv.comm(&hx);
    let h2x = s
        .comm(&hy)
        .add(&nest(&s, &hx, 2).scale(1.0 / 2.0 - 1.0 / 6.0))
        .add(&nest(&s, &hy, 3).scale(1.0 / 6.0))
        .add(&nest(&s, &hx, 4).scale(1.0 / 24.0 - 1.0 / 120.0))
        .add(&nest(&s, &hy, 5).scale(1.0 / 120.0));
    let h2y = hy
        .add(&nest(&s, &hx, 1).scale(1.0 - 1.0 / 2.0))
        .add(&nest(&s, &hy, 2).scale(1.0 / 2.0))
        .add(&nest(&s, &hx, 3).scale(1.0 / 6.0 - 1.0 / 24.0))
        .add(&nest(&s, &hy, 4).scale(1.0 / 24.0))
        .add(&nest(&s, &hx, 5).scale(1.0 / 120.0 - 1.0 / 720.0));

    // second transformation: S2 = [H0^{-1}, H2x]
    let s2 = h0inv.comm(&h2x);
    let h3x = s2
        .comm(&h2y)
        .add(&nest(&s2, &h2x, 2).scale(1.0 / 2.0 - 1.0 / 6.0));
    let h3y = h2y
        .add(&nest(&s2, &h2x, 1).scale(1.0 - 1.0 / 2.0))
        .add(&nest(&s2, &h2y, 2).scale(1.0 / 2.0));

    // third transformation: S3 = [H0^{-1}, H3x]
    let s3 = h0inv.comm(&h3x);
    let h4y = h3y.add(&nest(&s3, &h3x, 1).scale(1.0 - 1.0 / 2.0));

    let per_order: Vec<DMatrix<f64>> = h4y
        .t
        .iter()
        .map(|m| DMatrix::from_fn(l, l, |i, j| m[(i, j)]))
        .collect();
    let mut effective = DMatrix::zeros(l, l);
    for item in per_order.iter().take(order + 1) {
        effective += item;
    }
    let dev = (&effective - effective.transpose()).amax();
    if dev > 1e-12 * effective.amax().max(1.0) {
        return Err(CcrError::NonHermitian { deviation: dev });
    }
    Ok(SWResult { effective, order, per_order })
}

/// Deterministic splitmix64 stream for seeded randomized problems.
struct SplitMix(u64);

impl SplitMix {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Seeded random SWProblem with low_dim <= 3, high_dim <= 9, high-block
/// energies bounded away from zero, and order-one X, Y (rescale before use).
pub fn random_problem(seed: u64) -> SWProblem {
    let mut rng = SplitMix(seed);
    let l = 1 + (rng.next_u64() % 3) as usize;
    let h = 1 + (rng.next_u64() % 9) as usize;
    let w = DVector::from_fn(h, |_, _| {
        let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
        sign * (0.7 + 1.3 * rng.next_f64())
    });
    let x = DMatrix::from_fn(l, h, |_, _| 2.0 * rng.next_f64() - 1.0);
    let y0 = DMatrix::from_fn(h, h, |_, _| 2.0 * rng.next_f64() - 1.0);
    let y = (&y0 + y0.transpose()).scale(0.5);
    SWProblem::new(w, x, y).expect("random problem construction")
}

/// Least-squares slope of ln|residual| against ln(scale); the estimated
/// power of the leading residual term.
pub fn order_fit(scales: &[f64], residuals: &[f64]) -> f64 {
    assert_eq!(scales.len(), residuals.len());
    let n = scales.len() as f64;
    let xs: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = residuals.iter().map(|r| r.abs().max(1e-300).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// CSV serialization of an order-fit data set: scale,residual.
pub fn order_fit_csv(scales: &[f64], residuals: &[f64]) -> String {
    let mut out = String::from("scale,residual\n");
    for (s, r) in scales.iter().zip(residuals) {
        out.push_str(&format!("{s:.12e},{r:.12e}\n"));
    }
    out
}

// ---------------------------------------------------------------------------
// Dispersive shift
// ---------------------------------------------------------------------------

/// Closed-form dispersive coefficient f_i of site `site` on mode `mode`: the
/// strength of the Z_i b^dag b term, with the drive detuning
/// Delta = omega_i - omega_d. Qubit limit g^2/Delta; transmon
/// -g^2 eta / (Delta (Delta - eta)), which reduces to the qubit value as
/// eta -> infinity and vanishes at eta = 0. Valid for |Delta|,
/// |Delta - eta| >> g.
pub fn dispersive_shift(spec: &SystemSpec, site: usize, mode: usize) -> Result<f64> {
    if site >= spec.site_count() || mode >= spec.mode_count() {
        return Err(CcrError::InvalidParameter(format!(
            "site {site} / mode {mode} out of range"
        )));
    }
    let g = spec.g[site][mode];
    let delta = spec.delta(site);
    if delta == 0.0 {
        return Err(CcrError::Resonance(format!("site {site}: Delta = 0")));
    }
    match spec.eta[site] {
        Anharmonicity::Infinite => Ok(g * g / delta),
        Anharmonicity::Finite(eta) => {
            if delta == eta {
                return Err(CcrError::Resonance(format!("site {site}: Delta = eta")));
            }
            Ok(-g * g * eta / (delta * (delta - eta)))
        }
    }
}

// ---------------------------------------------------------------------------
// ZZ interaction reports
// ---------------------------------------------------------------------------

/// Which coupling dominates the always-on ZZ in the presence of a direct
/// site-site coupling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// g~ << g^2/Delta: the cavity-mediated fourth-order term dominates.
    DispersiveDominated,
    /// g~ >> g^2/Delta: the quadratic direct-coupling term dominates.
    DirectDominated,
    Intermediate,
}

/// Per-power breakdown of the ZZ strength in the direct coupling g~.
#[derive(Clone, Copy, Debug)]
pub struct DirectCouplingZZ {
    /// g~-independent fourth-order term.
    pub j0: f64,
    /// Linear in g~ (third order overall).
    pub j1: f64,
    /// Quadratic in g~ (second plus fourth order pieces).
    pub j2: f64,
    /// Quartic in g~.
    pub j4: f64,
    pub total: f64,
    pub regime: Regime,
}

/// ZZ interaction strengths by method, plus the underlying level shifts.
#[derive(Clone, Debug, Default)]
pub struct ZZReport {
    /// Fourth-order-in-g closed form (single cavity incl. anharmonic cavity,
    /// or the g~-exact two-oscillator variant).
    pub formula_4th: Option<f64>,
    /// Second-order-in-eta, all-orders-in-g value.
    pub formula_eta2_allg: Option<f64>,
    /// (first-order, second-order) eta contributions behind
    /// `formula_eta2_allg`.
    pub eta_parts: Option<(f64, f64)>,
    /// Direct-coupling breakdown.
    pub formula_direct_g: Option<DirectCouplingZZ>,
    /// Sixth-order two-oscillator closed form.
    pub formula_6th_two_osc: Option<f64>,
    /// Adiabatically tracked exact value from the excitation-conserving
    /// blocks.
    pub exact: f64,
    pub e1: f64,
    pub e2: f64,
    pub e12: f64,
    pub warnings: Vec<String>,
}

impl ZZReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                out.push_str(&format!("{k}: {v:.12e}\n"));
            }
        };
        line("J_ZZ formula_4th", self.formula_4th);
        line("J_ZZ formula_eta2_allg", self.formula_eta2_allg);
        line("J_ZZ formula_6th_two_osc", self.formula_6th_two_osc);
        if let Some(d) = &self.formula_direct_g {
            out.push_str(&format!(
                "J_ZZ direct breakdown: j0 {:.12e} j1 {:.12e} j2 {:.12e} j4 {:.12e} total {:.12e} regime {:?}\n",
                d.j0, d.j1, d.j2, d.j4, d.total, d.regime
            ));
        }
        out.push_str(&format!("J_ZZ exact: {:.12e}\n", self.exact));
        out.push_str(&format!(
            "levels: E1 {:.12e} E2 {:.12e} E12 {:.12e}\n",
            self.e1, self.e2, self.e12
        ));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
enum EtaCase {
    Finite(f64, f64),
    Infinite,
}

fn eta_case(spec: &SystemSpec) -> Result<EtaCase> {
    match (spec.eta[0], spec.eta[1]) {
        (Anharmonicity::Finite(a), Anharmonicity::Finite(b)) => Ok(EtaCase::Finite(a, b)),
        (Anharmonicity::Infinite, Anharmonicity::Infinite) => Ok(EtaCase::Infinite),
        _ => Err(CcrError::InvalidParameter(
            "mixed finite/infinite anharmonicities are not supported".into(),
        )),
    }
}

fn check_denominators(pairs: &[(&str, f64)], scale: f64) -> Result<()> {
    for (name, v) in pairs {
        if v.abs() < 1e-12 * scale.max(1.0) {
            return Err(CcrError::Resonance(format!("vanishing denominator {name}")));
        }
    }
    Ok(())
}

/// Single-excitation block for the level shift of site 1 (energies relative
/// to omega_1), basis {|100>, |010>, |001>}.
fn h1_single(d1: f64, d2: f64, g1: f64, g2: f64, gt: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, gt, g1, gt, d2 - d1, g2, g1, g2, -d1])
}

/// Two-excitation block (relative to omega_1 + omega_2), basis
/// {|110>, |101>, |011>, |002>, |200>, |020>}; the last two states are
/// dropped in the qubit limit.
fn h12_single(
    d1: f64,
    d2: f64,
    eta: EtaCase,
    eta_t: f64,
    g1: f64,
    g2: f64,
    gt: f64,
) -> DMatrix<f64> {
    let r2 = std::f64::consts::SQRT_2;
    match eta {
        EtaCase::Finite(e1, e2) => DMatrix::from_row_slice(
            6,
            6,
            &[
                0.0, g2, g1, 0.0, r2 * gt, r2 * gt, //
                g2, -d2, gt, r2 * g1, r2 * g1, 0.0, //
                g1, gt, -d1, r2 * g2, 0.0, r2 * g2, //
                0.0, r2 * g1, r2 * g2, -d1 - d2 - eta_t, 0.0, 0.0, //
                r2 * gt, r2 * g1, 0.0, 0.0, d1 - d2 - e1, 0.0, //
                r2 * gt, 0.0, r2 * g2, 0.0, 0.0, d2 - d1 - e2,
            ],
        ),
        EtaCase::Infinite => DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, g2, g1, 0.0, //
                g2, -d2, gt, r2 * g1, //
                g1, gt, -d1, r2 * g2, //
                0.0, r2 * g1, r2 * g2, -d1 - d2 - eta_t,
            ],
        ),
    }
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<C64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| C64::new(m[(i, j)], 0.0))
}

const TRACK_POINTS: usize = 50;

/// Track the eigenvalue adiabatically connected to basis state 0 as the
/// couplings ramp from 0 to full strength.
fn track_shift(h_of_s: impl Fn(f64) -> DMatrix<f64>) -> Result<f64> {
    let grid: Vec<f64> = (0..TRACK_POINTS)
        .map(|i| i as f64 / (TRACK_POINTS - 1) as f64)
        .collect();
    let vals = adiabatic_track(|s| complexify(&h_of_s(s)), 0, &grid)?;
    Ok(*vals.last().expect("nonempty grid"))
}

/// Exact (E1, E2, E12, J_ZZ) for the single-cavity system from the
/// excitation-conserving blocks.
fn exact_zz_single(
    d1: f64,
    d2: f64,
    eta: EtaCase,
    eta_t: f64,
    g1: f64,
    g2: f64,
    gt: f64,
) -> Result<(f64, f64, f64, f64)> {
    let e1 = track_shift(|s| h1_single(d1, d2, s * g1, s * g2, s * gt))?;
    let e2 = track_shift(|s| h1_single(d2, d1, s * g2, s * g1, s * gt))?;
    let e12 = track_shift(|s| h12_single(d1, d2, eta, eta_t, s * g1, s * g2, s * gt))?;
    Ok((e1, e2, e12, (e12 - e1 - e2) / 4.0))
}

/// Fourth-order-in-g closed form for the single-cavity ZZ, with cavity
/// anharmonicity eta_t (finite site anharmonicities).
fn zz_formula_finite(d1: f64, d2: f64, e1: f64, e2: f64, eta_t: f64, g1: f64, g2: f64) -> f64 {
    let num = (d1 + d2) * (d1 * d1 * e1 + d2 * d2 * e2 + (d1 + d2) * e1 * e2)
        + ((d1 - d2) * (d1 - d2) * (d1 + d2) + d2 * d2 * e1 + d1 * d1 * e2) * eta_t;
    let den = 2.0 * d1 * d1 * d2 * d2 * (e1 + d2 - d1) * (e2 + d1 - d2) * (eta_t + d1 + d2);
    num * g1 * g1 * g2 * g2 / den
}

fn site_params(spec: &SystemSpec) -> Result<(f64, f64, f64, f64)> {
    if spec.site_count() != 2 || spec.mode_count() != 1 {
        return Err(CcrError::InvalidParameter(
            "ZZ analysis needs exactly two sites and one mode".into(),
        ));
    }
    let nu = spec.nu_modes[0];
    Ok((spec.omega[0] - nu, spec.omega[1] - nu, spec.g[0][0], spec.g[1][0]))
}

/// Always-on ZZ for two transmons coupled via one (possibly anharmonic)
/// cavity, no direct coupling: fourth-order closed form plus the exact
/// adiabatically tracked value.
pub fn zz_single_cavity(spec: &SystemSpec) -> Result<ZZReport> {
    if spec.g_tilde != 0.0 {
        return Err(CcrError::InvalidParameter(
            "direct coupling present: use zz_direct_coupling".into(),
        ));
    }
    let (d1, d2, g1, g2) = site_params(spec)?;
    let eta = eta_case(spec)?;
    let eta_t = spec.eta_mode;
    let scale = d1.abs().max(d2.abs());
    let mut warnings = Vec::new();
    let formula = match eta {
        EtaCase::Finite(e1, e2) => {
            check_denominators(
                &[
                    ("Delta_1", d1),
                    ("Delta_2", d2),
                    ("eta_1 + Delta_2 - Delta_1", e1 + d2 - d1),
                    ("eta_2 + Delta_1 - Delta_2", e2 + d1 - d2),
                    ("eta~ + Delta_1 + Delta_2", eta_t + d1 + d2),
                ],
                scale,
            )?;
            zz_formula_finite(d1, d2, e1, e2, eta_t, g1, g2)
        }
        EtaCase::Infinite => {
            if eta_t != 0.0 {
                return Err(CcrError::InvalidParameter(
                    "anharmonic cavity requires finite site anharmonicities".into(),
                ));
            }
            check_denominators(&[("Delta_1", d1), ("Delta_2", d2)], scale)?;
            if (d1 + d2).abs() < 1e-9 * scale {
                warnings.push(
                    "Delta_2 = -Delta_1: both excitations transfer resonantly onto the \
                     cavity; the vanishing formula value is not trustworthy"
                        .into(),
                );
            }
            (d1 + d2) * g1 * g1 * g2 * g2 / (2.0 * d1 * d1 * d2 * d2)
        }
    };
    let (e1, e2, e12, exact) = exact_zz_single(d1, d2, eta, eta_t, g1, g2, 0.0)?;
    Ok(ZZReport {
        formula_4th: Some(formula),
        exact,
        e1,
        e2,
        e12,
        warnings,
        ..Default::default()
    })
}

/// Always-on ZZ including a direct site-site coupling g~, expanded in powers
/// of g~ (finite anharmonicities required).
pub fn zz_direct_coupling(spec: &SystemSpec) -> Result<ZZReport> {
    let (d1, d2, g1, g2) = site_params(spec)?;
    let (e1a, e2a) = match eta_case(spec)? {
        EtaCase::Finite(a, b) => (a, b),
        EtaCase::Infinite => {
            return Err(CcrError::InvalidParameter(
                "direct-coupling expansion needs finite anharmonicities".into(),
            ))
        }
    };
    let gt = spec.g_tilde;
    let eta_t = spec.eta_mode;
    let scale = d1.abs().max(d2.abs());
    check_denominators(
        &[
            ("Delta_1", d1),
            ("Delta_2", d2),
            ("Delta_1 - Delta_2 - eta_1", d1 - d2 - e1a),
            ("Delta_1 - Delta_2 + eta_2", d1 - d2 + e2a),
            ("eta~ + Delta_1 + Delta_2", eta_t + d1 + d2),
        ],
        scale,
    )?;
    let j0 = zz_formula_finite(d1, d2, e1a, e2a, eta_t, g1, g2);
    let j1 = -(d1 * e1a + d2 * e2a + e1a * e2a) * g1 * g2 * gt
        / (d1 * d2 * (d1 - d2 - e1a) * (d1 - d2 + e2a));
    let j2 = gt * gt / (2.0 * (d2 - d1 + e1a))
        + gt * gt / (2.0 * (d1 - d2 + e2a))
        + (gt * gt * g1 * g1 / (2.0 * d1 * d1))
            * ((2.0 * d1 - d2) * (d2 + e1a) / (d2 * (d2 - d1 + e1a) * (d2 - d1 + e1a))
                - d1 / ((d1 - d2 + e2a) * (d1 - d2 + e2a))
                - 1.0 / (d1 - d2 + e2a))
        + (gt * gt * g2 * g2 / (2.0 * d2 * d2))
            * ((2.0 * d2 - d1) * (d1 + e2a) / (d1 * (d1 - d2 + e2a) * (d1 - d2 + e2a))
                - d2 / ((d2 - d1 + e1a) * (d2 - d1 + e1a))
                - 1.0 / (d2 - d1 + e1a));
    let j4 = (e1a + e2a)
        * (2.0 * d1 * d1 + 2.0 * d2 * d2
            + e1a * e1a
            + e2a * e2a
            + 2.0 * (d2 - d1) * (e1a - e2a)
            - 4.0 * d1 * d2)
        * gt.powi(4)
        / ((d1 - d2 - e1a).powi(3) * (d1 - d2 + e2a).powi(3));
    let total = j0 + j1 + j2 + j4;
    let gg = (g1.abs() * g2.abs()).sqrt();
    let ratio = if gg > 0.0 { gt.abs() * scale / (gg * gg) } else { f64::INFINITY };
    let regime = if ratio < 0.2 {
        Regime::DispersiveDominated
    } else if ratio > 5.0 {
        Regime::DirectDominated
    } else {
        Regime::Intermediate
    };
    let eta = EtaCase::Finite(e1a, e2a);
    let (e1, e2, e12, exact) = exact_zz_single(d1, d2, eta, eta_t, g1, g2, gt)?;
    Ok(ZZReport {
        formula_direct_g: Some(DirectCouplingZZ { j0, j1, j2, j4, total, regime }),
        exact,
        e1,
        e2,
        e12,
        ..Default::default()
    })
}

/// Always-on ZZ to second order in the anharmonicities and all orders in the
/// couplings: the quadratic Hamiltonian is diagonalized exactly and the
/// quartic part treated in first- plus second-order perturbation theory.
pub fn zz_eta_expansion(spec: &SystemSpec) -> Result<ZZReport> {
    let (d1, d2, g1, g2) = site_params(spec)?;
    let nu = spec.nu_modes[0];
    let (ea, eb) = match eta_case(spec)? {
        EtaCase::Finite(a, b) => (a, b),
        EtaCase::Infinite => {
            return Err(CcrError::InvalidParameter(
                "eta expansion needs finite anharmonicities".into(),
            ))
        }
    };
    let eta_t = spec.eta_mode;
    let gt = spec.g_tilde;
    // quadratic Hamiltonian in the (c1, c2, b) basis
    let k = DMatrix::from_row_slice(
        3,
        3,
        &[
            spec.omega[0],
            gt,
            g1,
            gt,
            spec.omega[1],
            g2,
            g1,
            g2,
            nu,
        ],
    );
    let (vals, vecs_c) = hermitian_eigen_sorted(&complexify(&k));
    let u_all = DMatrix::from_fn(3, 3, |i, j| vecs_c[(i, j)].re);
    // assign eigencolumns to (c~1, c~2, b~) by the permutation with maximal
    // overlap on the bare modes
    let perms: [[usize; 3]; 6] =
        [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let best = perms
        .iter()
        .max_by(|a, b| {
            let score = |p: &[usize; 3]| {
                u_all[(0, p[0])].abs() * u_all[(1, p[1])].abs() * u_all[(2, p[2])].abs()
            };
            score(a).partial_cmp(&score(b)).unwrap()
        })
        .unwrap();
    let u = |i: usize, j: usize| u_all[(i, best[j])]; // j: 0 = c~1, 1 = c~2, 2 = b~
    let (w1t, w2t, nut) = (vals[best[0]], vals[best[1]], vals[best[2]]);
    let scale = d1.abs().max(d2.abs()).max(1.0);
    check_denominators(
        &[
            ("nu~ - omega~_1", nut - w1t),
            ("nu~ - omega~_2", nut - w2t),
            ("omega~_1 - omega~_2", w1t - w2t),
            ("2 nu~ - omega~_1 - omega~_2", 2.0 * nut - w1t - w2t),
        ],
        scale,
    )?;
    let etas = [ea, eb];
    // first order: expectation value of the quartic part
    let mut jzz1 = -eta_t / 2.0 * u(2, 0).powi(2) * u(2, 1).powi(2);
    for (i, &ei) in etas.iter().enumerate() {
        jzz1 -= ei / 2.0 * u(i, 0).powi(2) * u(i, 1).powi(2);
    }
    // second order: the five reachable intermediate states
    let me = |p0: u32, p1: u32, p2: u32| -> f64 {
        // numerator eta~ g-products with powers (p0,p1,p2) on (c~1,c~2,b~)
        let mut v = eta_t
            * u(2, 0).powi(p0 as i32)
            * u(2, 1).powi(p1 as i32)
            * u(2, 2).powi(p2 as i32);
        for (i, &ei) in etas.iter().enumerate() {
            v += ei
                * u(i, 0).powi(p0 as i32)
                * u(i, 1).powi(p1 as i32)
                * u(i, 2).powi(p2 as i32);
        }
        v
    };
    let jzz2 = -me(2, 1, 1).powi(2) / (nut - w2t)
        - me(1, 2, 1).powi(2) / (nut - w1t)
        - me(3, 1, 0).powi(2) / (2.0 * (w1t - w2t))
        - me(1, 3, 0).powi(2) / (2.0 * (w2t - w1t))
        - me(1, 1, 2).powi(2) / (2.0 * (2.0 * nut - w1t - w2t));
    let (e1, e2, e12, exact) =
        exact_zz_single(d1, d2, EtaCase::Finite(ea, eb), eta_t, g1, g2, gt)?;
    Ok(ZZReport {
        formula_eta2_allg: Some(jzz1 + jzz2),
        eta_parts: Some((jzz1, jzz2)),
        exact,
        e1,
        e2,
        e12,
        ..Default::default()
    })
}

// ---------------------------------------------------------------------------
// Two-oscillator ZZ
// ---------------------------------------------------------------------------

/// Single-excitation block for the shift of site 1 in the two-oscillator
/// system (relative to omega_1), basis {|1000>, |0100>, |0010>, |0001>}.
fn h1_two_osc(d1: f64, d2: f64, g1: f64, g2: f64, gt: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, 0.0, g1, 0.0, //
            0.0, d2 - d1, 0.0, g2, //
            g1, 0.0, -d1, gt, //
            0.0, g2, gt, -d1,
        ],
    )
}

/// Two-excitation block (relative to omega_1 + omega_2), basis
/// {|1100>, |1010>, |1001>, |0110>, |0101>, |0011>, |0020>, |0002>, |2000>,
/// |0200>}; the last two are dropped in the qubit limit.
fn h12_two_osc(
    d1: f64,
    d2: f64,
    eta: EtaCase,
    g1: f64,
    g2: f64,
    gt: f64,
) -> DMatrix<f64> {
    let r2 = std::f64::consts::SQRT_2;
    let mut m = DMatrix::zeros(10, 10);
    let diag = [
        0.0,
        -d2,
        -d2,
        -d1,
        -d1,
        -(d1 + d2),
        -(d1 + d2),
        -(d1 + d2),
        0.0, // filled below for finite eta
        0.0,
    ];
    for (i, &v) in diag.iter().enumerate() {
        m[(i, i)] = v;
    }
    let mut set = |i: usize, j: usize, v: f64| {
        m[(i, j)] = v;
        m[(j, i)] = v;
    };
    set(0, 2, g2);
    set(0, 3, g1);
    set(1, 2, gt);
    set(1, 6, r2 * g1);
    set(1, 8, r2 * g1);
    set(2, 5, g1);
    set(3, 4, gt);
    set(3, 5, g2);
    set(4, 7, r2 * g2);
    set(4, 9, r2 * g2);
    set(5, 6, r2 * gt);
    set(5, 7, r2 * gt);
    match eta {
        EtaCase::Finite(e1, e2) => {
            m[(8, 8)] = d1 - d2 - e1;
            m[(9, 9)] = d2 - d1 - e2;
            m
        }
        EtaCase::Infinite => {
            // |2000> and |0200> are absent in the qubit limit
            let mut q = DMatrix::zeros(8, 8);
            for i in 0..8 {
                for j in 0..8 {
                    q[(i, j)] = m[(i, j)];
                }
            }
            q
        }
    }
}

fn two_osc_params(spec: &SystemSpec) -> Result<(f64, f64, f64, f64, f64)> {
    if spec.site_count() != 2 || spec.mode_count() != 2 {
        return Err(CcrError::InvalidParameter(
            "two-oscillator ZZ needs exactly two sites and two modes".into(),
        ));
    }
    if (spec.nu_modes[0] - spec.nu_modes[1]).abs() > 1e-12 * spec.nu_modes[0].abs().max(1.0) {
        return Err(CcrError::InvalidParameter(
            "the two oscillators must share one frequency".into(),
        ));
    }
    if spec.g[0][1] != 0.0 || spec.g[1][0] != 0.0 {
        return Err(CcrError::InvalidParameter(
            "each site couples only to its own oscillator".into(),
        ));
    }
    let nu = spec.nu_modes[0];
    Ok((
        spec.omega[0] - nu,
        spec.omega[1] - nu,
        spec.g[0][0],
        spec.g[1][1],
        spec.g_tilde,
    ))
}

/// Always-on ZZ for two transmons coupled through two mutually coupled
/// oscillators: the sixth-order closed form (all couplings small), the
/// fourth-order g~-exact variant, and the exact tracked value.
pub fn zz_two_oscillators(spec: &SystemSpec) -> Result<ZZReport> {
    let (d1, d2, g1, g2, gt) = two_osc_params(spec)?;
    let eta = eta_case(spec)?;
    let scale = d1.abs().max(d2.abs());
    let (formula6, formula4) = match eta {
        EtaCase::Finite(e1, e2) => {
            check_denominators(
                &[
                    ("Delta_1", d1),
                    ("Delta_2", d2),
                    ("Delta_1 - Delta_2 - eta_1", d1 - d2 - e1),
                    ("Delta_1 - Delta_2 + eta_2", d1 - d2 + e2),
                    ("Delta_1^2 - g~^2", d1 * d1 - gt * gt),
                    ("Delta_2^2 - g~^2", d2 * d2 - gt * gt),
                ],
                scale,
            )?;
            let j6 = -(d1.powi(4) * e1
                + d2.powi(4) * e2
                + (d1 + d2) * (d1 * d1 + d2 * d2) * e1 * e2)
                * g1
                * g1
                * g2
                * g2
                * gt
                * gt
                / (2.0 * d1.powi(4) * d2.powi(4) * (d1 - d2 - e1) * (d1 - d2 + e2));
            let num4 = -d2.powi(4) * e2 - e1 * d1.powi(4)
                - e1 * e2 * (d1 + d2) * (d1 * d1 + d2 * d2)
                + 2.0 * (d1 * d1 * e1 + d2 * d2 * e2 + (d1 + d2) * e1 * e2) * gt * gt
                - (e1 + e2) * gt.powi(4);
            let j4 = g1 * g1 * g2 * g2 * gt * gt * num4
                / (2.0
                    * (d1 - d2 - e1)
                    * (d1 - d2 + e2)
                    * (d1 * d1 - gt * gt).powi(2)
                    * (d2 * d2 - gt * gt).powi(2));
            (j6, j4)
        }
        EtaCase::Infinite => {
            check_denominators(
                &[
                    ("Delta_1", d1),
                    ("Delta_2", d2),
                    ("Delta_1^2 - g~^2", d1 * d1 - gt * gt),
                    ("Delta_2^2 - g~^2", d2 * d2 - gt * gt),
                ],
                scale,
            )?;
            let j6 = (d1 + d2) * (d1 * d1 + d2 * d2) * g1 * g1 * g2 * g2 * gt * gt
                / (2.0 * d1.powi(4) * d2.powi(4));
            let j4 = g1 * g1 * g2 * g2 * gt * gt * (d1 + d2)
                * (d1 * d1 + d2 * d2 - 2.0 * gt * gt)
                / (2.0 * (d1 * d1 - gt * gt).powi(2) * (d2 * d2 - gt * gt).powi(2));
            (j6, j4)
        }
    };
    let e1 = track_shift(|s| h1_two_osc(d1, d2, s * g1, s * g2, s * gt))?;
    let e2 = track_shift(|s| h1_two_osc(d2, d1, s * g2, s * g1, s * gt))?;
    let e12 = track_shift(|s| h12_two_osc(d1, d2, eta, s * g1, s * g2, s * gt))?;
    Ok(ZZReport {
        formula_6th_two_osc: Some(formula6),
        formula_4th: Some(formula4),
        exact: (e12 - e1 - e2) / 4.0,
        e1,
        e2,
        e12,
        ..Default::default()
    })
}

// ---------------------------------------------------------------------------
// Zero-ZZ cavity frequency and transmon couplings
// ---------------------------------------------------------------------------

/// One root of the zero-ZZ quadratic.
#[derive(Clone, Copy, Debug)]
pub struct ZeroZzRoot {
    pub nu: f64,
    /// True when the root coincides with a transmon frequency and is
    /// therefore unusable (resonant).
    pub resonant: bool,
}

/// Real roots nu of (omega_i - nu)^2 + (omega_j - nu)^2 +
/// (omega_i + omega_j - 2 nu) eta = 0; empty when eta < |omega_i - omega_j|.
pub fn zero_zz_cavity_frequency(omega_i: f64, omega_j: f64, eta: f64) -> Vec<ZeroZzRoot> {
    // nu^2 - (omega_i + omega_j + eta) nu
    //     + (omega_i^2 + omega_j^2 + (omega_i + omega_j) eta)/2 = 0
    let b = omega_i + omega_j + eta;
    let c = (omega_i * omega_i + omega_j * omega_j + (omega_i + omega_j) * eta) / 2.0;
    let disc4 = b * b / 4.0 - c; // = (eta^2 - (omega_i - omega_j)^2)/4
    if disc4 < 0.0 {
        return Vec::new();
    }
    let s = disc4.sqrt();
    let scale = omega_i.abs().max(omega_j.abs()).max(1.0);
    [b / 2.0 - s, b / 2.0 + s]
        .into_iter()
        .map(|nu| ZeroZzRoot {
            nu,
            resonant: (nu - omega_i).abs() < 1e-9 * scale
                || (nu - omega_j).abs() < 1e-9 * scale,
        })
        .collect()
}

/// Per-site good (gate) and bad (dispersive) coupling strengths of driven
/// transmons, and their ratio ~ Omega/(2 g).
#[derive(Clone, Debug)]
pub struct TransmonCouplings {
    /// Gate coupling -g Omega eta / (2 Delta (Delta - eta)) per site.
    pub good: Vec<f64>,
    /// Dispersive coefficient f per site.
    pub bad: Vec<f64>,
    /// good/bad per site (NaN where both vanish).
    pub ratio: Vec<f64>,
}

/// Good-vs-bad coupling strengths for every driven site; Delta is the drive
/// detuning omega_i - omega_d. Valid when eps, g, Omega << Delta.
pub fn transmon_effective_couplings(spec: &SystemSpec) -> Result<TransmonCouplings> {
    let mut good = Vec::new();
    let mut bad = Vec::new();
    let mut ratio = Vec::new();
    for i in 0..spec.site_count() {
        let g = spec.g[i][0];
        let omega = spec.rabi[i];
        let delta = spec.delta(i);
        if delta == 0.0 {
            return Err(CcrError::Resonance(format!("site {i}: Delta = 0")));
        }
        let gd = match spec.eta[i] {
            Anharmonicity::Infinite => g * omega / (2.0 * delta),
            Anharmonicity::Finite(eta) => {
                if delta == eta {
                    return Err(CcrError::Resonance(format!("site {i}: Delta = eta")));
                }
                -g * omega * eta / (2.0 * delta * (delta - eta))
            }
        };
        let bd = dispersive_shift(spec, i, 0)?;
        good.push(gd);
        bad.push(bd);
        ratio.push(if bd != 0.0 { gd / bd } else { f64::NAN });
    }
    Ok(TransmonCouplings { good, bad, ratio })
}
