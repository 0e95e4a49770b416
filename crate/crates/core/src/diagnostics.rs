//! Entropy functionals, decay-rate fits and checks of the discrete
//! logarithmic Sobolev and Csiszár-Kullback inequalities.

use serde::{Deserialize, Serialize};

use crate::dspace::{self, Field};
use crate::error::{invalid, Result};
use crate::mesh::Mesh;
use crate::scheme::{ModelParams, State};

/// `H(s) = s (log s − 1) + 1`, with `H(0) = 1`.
pub fn entropy_density(s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        s * (s.ln() - 1.0) + 1.0
    }
}

/// `E = Σ_K m(K) H(n_K)`.
pub fn entropy(mesh: &Mesh, n: &Field) -> Result<f64> {
    if let Some(k) = n.values().iter().position(|v| *v < 0.0) {
        return Err(invalid(format!("entropy of a negative density (cell {k})")));
    }
    Ok(mesh
        .cells()
        .iter()
        .zip(n.values())
        .map(|(c, &v)| c.area * entropy_density(v))
        .sum())
}

/// Relative entropy `E[n|n*] = Σ_K m(K) n_K log(n_K / n*)`.
///
/// Evaluated termwise as `n log(n/n*) − n + n* = n* φ(n/n* − 1)` with
/// `φ(r) = (1+r) log(1+r) − r`, which is nonnegative cell by cell and equal to
/// the plain sum whenever `Σ m(K) n_K = n* m(Ω)`. `φ` is summed as a series
/// for small `r`, so the value keeps full relative precision as `n → n*`.
pub fn relative_entropy(mesh: &Mesh, n: &Field, n_star: f64) -> Result<f64> {
    if !(n_star > 0.0) {
        return Err(invalid(format!("steady density must be positive, got {n_star}")));
    }
    if let Some(k) = n.values().iter().position(|v| *v < 0.0) {
        return Err(invalid(format!("relative entropy of a negative density (cell {k})")));
    }
    Ok(mesh
        .cells()
        .iter()
        .zip(n.values())
        .map(|(c, &v)| c.area * n_star * phi((v - n_star) / n_star))
        .sum())
}

/// `φ(r) = (1+r) log(1+r) − r` for `r ≥ −1`.
pub(crate) fn phi(r: f64) -> f64 {
    if r.abs() < 0.1 {
        // φ(r) = Σ_{j≥2} (−r)^j / (j (j−1)); 0.1^17 is below rounding.
        let mut term = r * r;
        let mut sum = 0.0;
        for j in 2..20 {
            sum += term / (j * (j - 1)) as f64;
            term *= -r;
        }
        sum
    } else if r <= -1.0 {
        1.0
    } else {
        (1.0 + r) * r.ln_1p() - r
    }
}

/// Homogeneous steady state `n* = ‖n₀‖_{L¹}/m(Ω)`, `S* = μ n*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub n_star: f64,
    pub s_star: f64,
    pub mass: f64,
}

impl SteadyState {
    pub fn from_mass(mesh: &Mesh, params: &ModelParams, mass: f64) -> Self {
        let n_star = mass / mesh.domain_measure();
        Self {
            n_star,
            s_star: params.mu * n_star,
            mass,
        }
    }
}

/// Constants entering `C_L`. The defaults are placeholders: the discrete
/// Sobolev and Poincaré-Wirtinger constants have no published numeric value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogSobolevConstants {
    /// Sobolev exponent `q > 2`.
    pub q: f64,
    /// `C_S(q)`.
    pub sobolev: f64,
    /// `C_P(2)`.
    pub poincare: f64,
}

impl Default for LogSobolevConstants {
    fn default() -> Self {
        Self {
            q: 4.0,
            sobolev: 1.0,
            poincare: 1.0,
        }
    }
}

impl LogSobolevConstants {
    /// `C_L = q/((q−2)ξ) (C_S² + C_S² C_P²/ξ + (q−4)/q C_P²)`.
    pub fn c_l(&self, xi: f64) -> Result<f64> {
        if !(self.q > 2.0) {
            return Err(invalid(format!("Sobolev exponent must exceed 2, got {}", self.q)));
        }
        if !(xi > 0.0) {
            return Err(invalid(format!("mesh regularity must be positive, got {xi}")));
        }
        let (q, cs2, cp2) = (self.q, self.sobolev * self.sobolev, self.poincare * self.poincare);
        Ok(q / ((q - 2.0) * xi) * (cs2 + cs2 * cp2 / xi + (q - 4.0) / q * cp2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSobolevCheck {
    /// `∫ u² log(u² / (m⁻¹ ‖u‖²_{0,2}))`.
    pub lhs: f64,
    /// `C_L |u|²_{1,2}`.
    pub rhs: f64,
    /// `lhs / |u|²_{1,2}` (0 when both vanish).
    pub ratio: f64,
    pub c_l: f64,
}

impl LogSobolevCheck {
    /// Whether the theoretical constant covers this field.
    pub fn within_bound(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-12)
    }
}

pub fn log_sobolev_check(mesh: &Mesh, u: &Field, constants: &LogSobolevConstants) -> Result<LogSobolevCheck> {
    let l2sq: f64 = mesh.cells().iter().zip(u.values()).map(|(c, v)| c.area * v * v).sum();
    if !(l2sq > 0.0) {
        return Err(invalid("log-Sobolev check needs a nonzero field"));
    }
    let mean_sq = l2sq / mesh.domain_measure();
    // Σ m u² ln(u²/a) = a Σ m φ(u²/a − 1) + Σ m (u² − a); the first sum has
    // no cancellation, the second vanishes when the cells tile the domain.
    let total: f64 = mesh.cells().iter().map(|c| c.area).sum();
    let lhs: f64 = mesh
        .cells()
        .iter()
        .zip(u.values())
        .map(|(c, v)| c.area * mean_sq * phi(v * v / mean_sq - 1.0))
        .sum::<f64>()
        + mean_sq * (mesh.domain_measure() - total);
    let semi = dspace::seminorm_12_squared(mesh, u);
    let c_l = constants.c_l(mesh.xi())?;
    let ratio = if semi > 0.0 { lhs / semi } else { 0.0 };
    Ok(LogSobolevCheck {
        lhs,
        rhs: c_l * semi,
        ratio,
        c_l,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsiszarKullbackCheck {
    /// `‖n − n*‖²_{0,1}`.
    pub lhs: f64,
    /// `4 ‖n‖_{0,1} E[n|n*]`.
    pub rhs: f64,
}

impl CsiszarKullbackCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 1e-14 * self.rhs.abs().max(self.lhs.abs())
    }

    pub fn ratio(&self) -> f64 {
        if self.rhs > 0.0 {
            self.lhs / self.rhs
        } else {
            0.0
        }
    }
}

/// Both sides of `‖n − n*‖²_{0,1} ≤ 4 ‖n₀‖_{L¹} E[n|n*]` for a density whose
/// mass matches `n* m(Ω)`.
pub fn csiszar_kullback_check(mesh: &Mesh, n: &Field, n_star: f64) -> Result<CsiszarKullbackCheck> {
    let mass = dspace::integral(mesh, n);
    let expected = n_star * mesh.domain_measure();
    if (mass - expected).abs() > 1e-8 * expected.abs() {
        return Err(invalid(format!(
            "density mass {mass} does not match n* m(Ω) = {expected}"
        )));
    }
    let e = relative_entropy(mesh, n, n_star)?;
    let l1 = dspace::norm_0p(mesh, &n.shifted(-n_star), 1.0)?;
    Ok(CsiszarKullbackCheck {
        lhs: l1 * l1,
        rhs: 4.0 * mass * e,
    })
}

/// `C* = μ² C(Ω)² ‖n₀‖_{L¹} / (δ ξ)`. `c_omega` is the `BV ↪ L²` embedding
/// constant, for which no numeric value is known; 1 is a placeholder.
pub fn cstar(params: &ModelParams, mass: f64, xi: f64, c_omega: f64) -> Result<f64> {
    if !(params.delta > 0.0) {
        return Err(invalid("C* is undefined for delta = 0"));
    }
    if !(xi > 0.0) {
        return Err(invalid("mesh regularity must be positive"));
    }
    Ok(params.mu * params.mu * c_omega * c_omega * mass / (params.delta * xi))
}

/// One row of the per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub k: usize,
    pub t: f64,
    pub mass: f64,
    pub entropy: f64,
    pub rel_entropy: f64,
    pub linf_n: f64,
    /// `‖S − S*‖_{1,2}`.
    pub s_h1_err: f64,
    pub picard_iters: usize,
    /// `Σ_{σ int} τ_σ |D(√n)_σ|²`.
    pub sqrt_n_dissipation: f64,
    /// `Σ_K m(K) S_K²`.
    pub s_l2_sq: f64,
    /// `Σ_{σ int} τ_σ |DS_σ|²`.
    pub s_gradient_sq: f64,
    /// Empirical constant of the entropy-stability estimate:
    /// `(E^{k+1} − E^k)/Δt + ½ Σ τ|D√n|² + (Σ m S² + Σ τ|DS|²)/δ`.
    /// Absent for the initial row and for `δ = 0`.
    pub stability_constant: Option<f64>,
}

/// Per-step time series of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RecordRow>,
}

impl RunRecord {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn rel_entropies(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rel_entropy).collect()
    }

    pub fn sup_norms(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.linf_n).collect()
    }

    pub fn last(&self) -> Option<&RecordRow> {
        self.rows.last()
    }

    /// Largest relative deviation of the mass from its initial value.
    pub fn max_mass_drift(&self) -> f64 {
        let Some(first) = self.rows.first() else {
            return 0.0;
        };
        let m0 = first.mass;
        self.rows
            .iter()
            .map(|r| if m0 != 0.0 { (r.mass - m0).abs() / m0.abs() } else { r.mass.abs() })
            .fold(0.0, f64::max)
    }
}

/// Diagnostics of `state`. `previous` carries `(E^k, Δt)` for the step that
/// produced it.
pub fn record_row(
    mesh: &Mesh,
    params: &ModelParams,
    steady: &SteadyState,
    state: &State,
    picard_iters: usize,
    previous: Option<(f64, f64)>,
) -> RecordRow {
    let n = &state.n;
    let s = &state.s;
    let mass = dspace::integral(mesh, n);
    let entropy = entropy(mesh, n).unwrap_or(f64::NAN);
    let rel_entropy = if steady.n_star > 0.0 {
        relative_entropy(mesh, n, steady.n_star).unwrap_or(f64::NAN)
    } else {
        0.0
    };
    let ds = s.shifted(-steady.s_star);
    let s_h1_err = dspace::norm_1p(mesh, &ds, 2.0).expect("p = 2 is valid");
    let sqrt_n = n.map(|v| v.max(0.0).sqrt());
    let sqrt_n_dissipation = dspace::seminorm_12_squared(mesh, &sqrt_n);
    let s_l2_sq: f64 = mesh.cells().iter().zip(s.values()).map(|(c, v)| c.area * v * v).sum();
    let s_gradient_sq = dspace::seminorm_12_squared(mesh, s);
    let stability_constant = match previous {
        Some((e_prev, dt)) if params.delta > 0.0 => Some(
            (entropy - e_prev) / dt + 0.5 * sqrt_n_dissipation + (s_l2_sq + s_gradient_sq) / params.delta,
        ),
        _ => None,
    };
    RecordRow {
        k: state.k,
        t: state.time,
        mass,
        entropy,
        rel_entropy,
        linf_n: n.max(),
        s_h1_err,
        picard_iters,
        sqrt_n_dissipation,
        s_l2_sq,
        s_gradient_sq,
        stability_constant,
    }
}

/// Least-squares fit of `log E[n^k|n*] ≈ intercept + slope t^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// `d log E / dt`; for geometric data `E^k = E⁰ ρ^k` this is `log(ρ)/Δt`.
    pub slope: f64,
    /// Decay rate `−slope`, positive for decaying entropy.
    pub rate: f64,
    pub intercept: f64,
    /// Root mean square of the residuals in `log E`.
    pub residual: f64,
    pub points: usize,
}

/// Fit the decay of the relative entropy over the rows with `t` in
/// `[window.0, window.1]`.
pub fn fit_decay_rate(record: &RunRecord, window: (f64, f64)) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = record
        .rows
        .iter()
        .filter(|r| r.t >= window.0 && r.t <= window.1)
        .map(|r| (r.t, r.rel_entropy))
        .collect();
    if pts.len() < 3 {
        return Err(invalid(format!("decay fit needs at least 3 points, got {}", pts.len())));
    }
    if let Some((t, e)) = pts.iter().find(|(_, e)| !(*e > 0.0)) {
        return Err(invalid(format!("relative entropy {e} at t = {t} is not positive")));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    Ok(DecayFit {
        slope,
        rate: -slope,
        intercept,
        residual,
        points: xs.len(),
    })
}

/// A time window over which a series stays nearly constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau {
    pub start: f64,
    pub end: f64,
    /// Mean value over the window.
    pub level: f64,
    /// `(max − min) / min` over the window.
    pub variation: f64,
}

/// Maximal windows, scanned left to right, lasting at least `min_duration`
/// over which the relative variation of `values` stays strictly below
/// `max_variation`. Windows do not overlap.
pub fn find_plateaus(times: &[f64], values: &[f64], max_variation: f64, min_duration: f64) -> Vec<Plateau> {
    assert_eq!(times.len(), values.len());
    let n = values.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let (mut lo, mut hi) = (values[i], values[i]);
        let mut j = i;
        while j + 1 < n {
            let v = values[j + 1];
            let (l, h) = (lo.min(v), hi.max(v));
            if !(l > 0.0) || (h - l) >= max_variation * l {
                break;
            }
            lo = l;
            hi = h;
            j += 1;
        }
        if times[j] - times[i] >= min_duration && lo > 0.0 {
            let level = values[i..=j].iter().sum::<f64>() / (j - i + 1) as f64;
            out.push(Plateau {
                start: times[i],
                end: times[j],
                level,
                variation: (hi - lo) / lo,
            });
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Straight-line least squares, `(slope, intercept)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Rect;

    fn halves() -> Mesh {
        Mesh::cartesian(2, 1, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn entropy_values() {
        let mesh = Mesh::cartesian(3, 3, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
        assert!(entropy(&mesh, &Field::constant(&mesh, 1.0)).unwrap().abs() < 1e-15);
        assert!((entropy(&mesh, &Field::zeros(&mesh)).unwrap() - 1.0).abs() < 1e-15);
        let m = halves();
        let e = entropy(&m, &Field::new(&m, vec![2.0, 0.0]).unwrap()).unwrap();
        assert!((e - 2f64.ln()).abs() < 1e-15);
        assert!(entropy(&m, &Field::new(&m, vec![-1.0, 0.0]).unwrap()).is_err());
    }

    #[test]
    fn relative_entropy_values() {
        let m = halves();
        let ns = 1.7;
        assert!(relative_entropy(&m, &Field::constant(&m, ns), ns).unwrap().abs() < 1e-15);
        let two_level = Field::new(&m, vec![2.0 * ns, 0.0]).unwrap();
        let e = relative_entropy(&m, &two_level, ns).unwrap();
        assert!((e - ns * 2f64.ln()).abs() < 1e-14);
        assert!(relative_entropy(&m, &two_level, 0.0).is_err());
    }

    #[test]
    fn plateaus_of_a_step_series() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
        // Fast rise, level 1 on [0.05, 0.4], ramp, level 3 from 0.6 on.
        let values: Vec<f64> = times
            .iter()
            .map(|&t| {
                if t < 0.05 {
                    0.2 + 16.0 * t
                } else if t <= 0.4 {
                    1.0 + 0.01 * (t - 0.05)
                } else if t < 0.6 {
                    1.0 + 10.0 * (t - 0.4)
                } else {
                    3.0
                }
            })
            .collect();
        let p = find_plateaus(&times, &values, 0.05, 0.1);
        assert_eq!(p.len(), 2, "{p:?}");
        assert!((p[0].start - 0.05).abs() < 1e-12);
        assert!(p[0].end >= 0.4 - 1e-12 && p[0].end < 0.41);
        // The ramp's last samples (2.9 and up) already lie within 5% of 3.
        assert!(p[1].start >= 0.58 && p[1].start <= 0.6 + 1e-12);
        assert!((p[1].level - 3.0).abs() < 0.01);
        assert!(p[1].variation <= 0.05);
        assert!(find_plateaus(&times, &values, 0.05, 2.0).is_empty());
    }

    #[test]
    fn phi_branches_agree() {
        for r in [-0.0999, -0.05, 0.03, 0.0999] {
            let direct = (1.0 + r) * f64::ln_1p(r) - r;
            assert!((phi(r) - direct).abs() < 1e-15, "{r}");
        }
        // Leading term r²/2 dominates for tiny r; the direct formula would
        // return rounding noise here.
        let r = 3e-9;
        assert!((phi(r) / (0.5 * r * r) - 1.0).abs() < 1e-8);
        assert_eq!(phi(-1.0), 1.0);
        assert_eq!(phi(0.0), 0.0);
    }

    #[test]
    fn csiszar_kullback_basic() {
        let m = halves();
        let ns = 2.0;
        let c = csiszar_kullback_check(&m, &Field::constant(&m, ns), ns).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
        // Two-level field: lhs = (n*)^2, rhs = 4 n* (n* log 2).
        let f = Field::new(&m, vec![2.0 * ns, 0.0]).unwrap();
        let c = csiszar_kullback_check(&m, &f, ns).unwrap();
        assert!((c.lhs - ns * ns).abs() < 1e-14);
        assert!((c.rhs - 4.0 * ns * ns * 2f64.ln()).abs() < 1e-13);
        assert!(c.holds());
        let p = Field::new(&m, vec![ns + 1e-3, ns - 1e-3]).unwrap();
        let c = csiszar_kullback_check(&m, &p, ns).unwrap();
        assert!(c.lhs < c.rhs);
        assert!(csiszar_kullback_check(&m, &Field::constant(&m, 1.0), ns).is_err());
    }

    #[test]
    fn log_sobolev_constant_field() {
        let mesh = Mesh::cartesian(4, 4, Rect::centered_unit_square()).unwrap();
        let c = log_sobolev_check(&mesh, &Field::constant(&mesh, 3.0), &LogSobolevConstants::default()).unwrap();
        assert!(c.lhs.abs() < 1e-13);
        assert_eq!(c.ratio, 0.0);
        assert!(log_sobolev_check(&mesh, &Field::zeros(&mesh), &LogSobolevConstants::default()).is_err());
    }

    #[test]
    fn log_sobolev_two_level_field() {
        // u = (1, 0) on two half cells of the unit square: ‖u‖² = 1/2,
        // lhs = 1/2 · log(1 / (1/2)) = log(2)/2, |u|²_{1,2} = τ = 1/(1/2) = 2.
        let m = halves();
        let c = log_sobolev_check(&m, &Field::new(&m, vec![1.0, 0.0]).unwrap(), &LogSobolevConstants::default()).unwrap();
        assert!((c.lhs - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((c.ratio - 0.25 * 2f64.ln()).abs() < 1e-15);
        // ξ = 1/2, q = 4, C_S = C_P = 1: C_L = 4/(2·½)(1 + 2 + 0) = 12.
        assert!((c.c_l - 12.0).abs() < 1e-14);
        assert!(c.within_bound());
    }

    #[test]
    fn cstar_scalings() {
        let p = ModelParams::new(1e-2, 1.0).unwrap();
        let base = cstar(&p, 5.0, 0.5, 1.0).unwrap();
        let doubled = cstar(&ModelParams::new(2e-2, 1.0).unwrap(), 5.0, 0.5, 1.0).unwrap();
        assert!((doubled - base / 2.0).abs() < 1e-12 * base);
        let small_mu = cstar(&ModelParams::new(1e-2, 1e-4).unwrap(), 5.0, 0.5, 1.0).unwrap();
        assert!((small_mu - base * 1e-8).abs() < 1e-12 * base);
        assert!(cstar(&ModelParams::new(0.0, 1.0).unwrap(), 5.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn decay_fit_recovers_geometric_rate() {
        let (rho, dt, e0): (f64, f64, f64) = (0.97, 0.01, 3.0);
        let rows = (0..50)
            .map(|k| RecordRow {
                k,
                t: k as f64 * dt,
                mass: 1.0,
                entropy: 0.0,
                rel_entropy: e0 * rho.powi(k as i32),
                linf_n: 1.0,
                s_h1_err: 0.0,
                picard_iters: 1,
                sqrt_n_dissipation: 0.0,
                s_l2_sq: 0.0,
                s_gradient_sq: 0.0,
                stability_constant: None,
            })
            .collect();
        let rec = RunRecord { rows };
        let fit = fit_decay_rate(&rec, (0.0, 1.0)).unwrap();
        let expected = rho.ln() / dt;
        assert!((fit.slope - expected).abs() < 1e-12 * expected.abs());
        assert!((fit.rate + expected).abs() < 1e-12 * expected.abs());
        assert!(fit.residual < 1e-12);
        assert!(fit_decay_rate(&rec, (0.0, 0.015)).is_err());
    }
}
