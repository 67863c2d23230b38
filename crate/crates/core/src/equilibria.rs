//! Critical points, their linear stability, and the ground-state
//! transition curves.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{hamiltonian, jacobian_at, observables, vector_field, ModelParams, PhaseState};

/// Eigenvalues with modulus (or real part, for the saddle test) below this
/// are treated as zero.
pub const ZERO_EIGEN_TOL: f64 = 1e-9;

/// Maximum `‖F(x)‖` accepted by [`classify`].
pub const EQUILIBRIUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }

    /// Principal square root.
    pub fn sqrt(self) -> Complex {
        let r = self.abs();
        if r == 0.0 {
            return Complex::default();
        }
        let re = ((r + self.re) / 2.0).sqrt();
        let im = ((r - self.re) / 2.0).sqrt();
        Complex::new(re, if self.im < 0.0 { -im } else { im })
    }

    fn neg(self) -> Complex {
        Complex::new(-self.re, -self.im)
    }
}

impl fmt::Display for Complex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im >= 0.0 {
            write!(f, "{}+{}i", self.re, self.im)
        } else {
            write!(f, "{}{}i", self.re, self.im)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    #[serde(rename = "center")]
    Center,
    #[serde(rename = "saddle")]
    Saddle,
    /// Double zero eigenvalue (Bogdanov–Takens point).
    #[serde(rename = "degenerate-BT")]
    DegenerateBt,
}

impl Stability {
    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Center => "center",
            Stability::Saddle => "saddle",
            Stability::DegenerateBt => "degenerate-BT",
        }
    }
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub point: PhaseState,
    pub eigenvalues: [Complex; 4],
    pub classification: Stability,
    pub gamma_ratio: f64,
}

/// `𝕏₀` always; `𝕏₊` and `𝕏₋` (in that order) when `γ > γ_c`.
pub fn critical_points(mp: &ModelParams) -> Result<Vec<PhaseState>> {
    mp.validate()?;
    let mut points = vec![PhaseState::ORIGIN];
    let gc = mp.gamma_c();
    if mp.gamma > gc {
        let g2 = mp.gamma * mp.gamma;
        let ratio2 = gc * gc / g2;
        // Stationarity of ṗ gives q = γ|Q|r/ω.
        let q = 2.0 * mp.gamma / mp.omega * (1.0 - ratio2 * ratio2).sqrt();
        let qa = (2.0 * (1.0 - ratio2)).sqrt();
        points.push(PhaseState::new(0.0, q, 0.0, -qa)?);
        points.push(PhaseState::new(0.0, -q, 0.0, qa)?);
    }
    Ok(points)
}

/// Eigenvalues of a Hamiltonian 4×4 matrix.
///
/// The Jacobian of a canonical flow is `Ω·∇²H`, whose characteristic
/// polynomial is even: `λ⁴ + c₂λ² + det`. Solving the quadratic in `λ²`
/// keeps a double zero exact instead of smearing it to `O(√ε)` as a
/// general eigensolver does on the Jordan block at `γ = γ_c`.
pub fn hamiltonian_eigenvalues(m: &[[f64; 4]; 4]) -> [Complex; 4] {
    let mut c2 = 0.0;
    for i in 0..4 {
        for j in (i + 1)..4 {
            c2 += m[i][i] * m[j][j] - m[i][j] * m[j][i];
        }
    }
    let det = det4(m);
    // μ² + c₂μ + det = 0
    let disc = c2 * c2 - 4.0 * det;
    let (mu1, mu2) = if disc >= 0.0 {
        let s = disc.sqrt();
        let t = -0.5 * (c2 + if c2 >= 0.0 { s } else { -s });
        if t == 0.0 {
            (Complex::default(), Complex::default())
        } else {
            (Complex::new(t, 0.0), Complex::new(det / t, 0.0))
        }
    } else {
        let s = (-disc).sqrt();
        (Complex::new(-0.5 * c2, 0.5 * s), Complex::new(-0.5 * c2, -0.5 * s))
    };
    let l1 = mu1.sqrt();
    let l2 = mu2.sqrt();
    let mut ev = [l1, l1.neg(), l2, l2.neg()];
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    ev
}

fn det4(m: &[[f64; 4]; 4]) -> f64 {
    let minor = |r: [usize; 3], c: [usize; 3]| {
        m[r[0]][c[0]] * (m[r[1]][c[1]] * m[r[2]][c[2]] - m[r[1]][c[2]] * m[r[2]][c[1]])
            - m[r[0]][c[1]] * (m[r[1]][c[0]] * m[r[2]][c[2]] - m[r[1]][c[2]] * m[r[2]][c[0]])
            + m[r[0]][c[2]] * (m[r[1]][c[0]] * m[r[2]][c[1]] - m[r[1]][c[1]] * m[r[2]][c[0]])
    };
    let rows = [1, 2, 3];
    m[0][0] * minor(rows, [1, 2, 3]) - m[0][1] * minor(rows, [0, 2, 3]) + m[0][2] * minor(rows, [0, 1, 3])
        - m[0][3] * minor(rows, [0, 1, 2])
}

pub fn classify_eigenvalues(ev: &[Complex; 4]) -> Stability {
    let zeros = ev.iter().filter(|l| l.abs() < ZERO_EIGEN_TOL).count();
    if zeros >= 2 {
        Stability::DegenerateBt
    } else if ev.iter().any(|l| l.re.abs() > ZERO_EIGEN_TOL) {
        Stability::Saddle
    } else {
        Stability::Center
    }
}

pub fn classify(point: &PhaseState, mp: &ModelParams) -> Result<EquilibriumReport> {
    let f = vector_field(point, mp)?;
    let residual = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if residual > EQUILIBRIUM_TOL {
        return Err(Error::NotEquilibrium { residual });
    }
    let eigenvalues = hamiltonian_eigenvalues(&jacobian_at(point, mp)?);
    Ok(EquilibriumReport {
        point: *point,
        eigenvalues,
        classification: classify_eigenvalues(&eigenvalues),
        gamma_ratio: mp.gamma_ratio(),
    })
}

/// Minimal classical energy at coupling `gamma` (frequencies from `mp`).
pub fn ground_state_energy(gamma: f64, mp: &ModelParams) -> f64 {
    let gc = mp.gamma_c();
    if gamma <= gc {
        -mp.omega0
    } else {
        let r2 = (gamma / gc).powi(2);
        -0.5 * mp.omega0 * (1.0 / r2 + r2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsptRecord {
    pub gamma_ratio: f64,
    pub e0: f64,
    pub n_cl: f64,
    pub jz_cl: f64,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::invalid("gamma_grid", "values must be finite and >= 0"));
    }
    Ok(())
}

/// Ground-state energy and observables over a grid of `γ/γ_c`.
pub fn gspt_curves(ratio_grid: &[f64], mp: &ModelParams) -> Result<Vec<GsptRecord>> {
    mp.validate()?;
    check_grid(ratio_grid)?;
    ratio_grid
        .iter()
        .map(|&ratio| {
            let m = mp.with_gamma_ratio(ratio);
            let mut best: Option<(f64, PhaseState)> = None;
            for p in critical_points(&m)? {
                let e = hamiltonian(&p, &m)?;
                if best.is_none_or(|(b, _)| e < b) {
                    best = Some((e, p));
                }
            }
            let (_, ground) = best.expect("origin is always critical");
            let (n_cl, jz_cl) = observables(&ground);
            Ok(GsptRecord {
                gamma_ratio: ratio,
                e0: ground_state_energy(m.gamma, &m),
                n_cl,
                jz_cl,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationRecord {
    pub gamma_ratio: f64,
    pub count: usize,
    /// Stability of `𝕏₀`.
    pub origin_class: Stability,
}

/// Number of real equilibria and the type of `𝕏₀` along a sorted grid.
pub fn bifurcation_scan(ratio_grid: &[f64], mp: &ModelParams) -> Result<Vec<BifurcationRecord>> {
    mp.validate()?;
    check_grid(ratio_grid)?;
    if ratio_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("gamma_grid", "must be sorted ascending"));
    }
    ratio_grid
        .iter()
        .map(|&ratio| {
            let m = mp.with_gamma_ratio(ratio);
            let count = critical_points(&m)?.len();
            let origin = classify(&PhaseState::ORIGIN, &m)?;
            Ok(BifurcationRecord {
                gamma_ratio: ratio,
                count,
                origin_class: origin.classification,
            })
        })
        .collect()
}

/// Writes `gamma_ratio,E0,n_cl,jz_cl,count,class`, one row per grid value.
pub fn write_phase_diagram_csv<W: Write>(
    mut w: W,
    gspt: &[GsptRecord],
    scan: &[BifurcationRecord],
) -> std::io::Result<()> {
    writeln!(w, "gamma_ratio,E0,n_cl,jz_cl,count,class")?;
    for (g, b) in gspt.iter().zip(scan) {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
            g.gamma_ratio, g.e0, g.n_cl, g.jz_cl, b.count, b.origin_class
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resonant(ratio: f64) -> ModelParams {
        ModelParams::resonant(ratio)
    }

    #[test]
    fn critical_point_counts() {
        assert_eq!(critical_points(&ModelParams::new(1.0, 1.0, 0.4).unwrap()).unwrap().len(), 1);
        assert_eq!(critical_points(&resonant(1.0)).unwrap(), vec![PhaseState::ORIGIN]);
        let pts = critical_points(&resonant(2.0)).unwrap();
        assert_eq!(pts.len(), 3);
        assert!((pts[1].q() - 1.93649).abs() < 1e-5);
        assert!((pts[1].atom_q() + 1.22474).abs() < 1e-5);
        assert!((pts[2].q() + 1.93649).abs() < 1e-5);
        assert!((pts[2].atom_q() - 1.22474).abs() < 1e-5);
    }

    #[test]
    fn critical_points_are_stationary() {
        for mp in [
            resonant(2.0),
            resonant(1.01),
            ModelParams::new(0.5, 0.7, 0.66).unwrap(),
            ModelParams::new(2.0, 0.3, 1.7).unwrap(),
        ] {
            for p in critical_points(&mp).unwrap() {
                let f = vector_field(&p, &mp).unwrap();
                let n = f.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(n < 1e-12, "{mp:?} {p:?} {n}");
            }
        }
    }

    #[test]
    fn origin_saddle_above_critical() {
        let r = classify(&PhaseState::ORIGIN, &resonant(2.0)).unwrap();
        assert_eq!(r.classification, Stability::Saddle);
        let reals: Vec<f64> = r.eigenvalues.iter().map(|l| l.re).collect();
        assert!((reals[0] - 1.0).abs() < 1e-12 && (reals[3] + 1.0).abs() < 1e-12);
        let imag = r.eigenvalues[1].im.abs();
        assert!((imag - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn origin_center_below_critical() {
        let r = classify(&PhaseState::ORIGIN, &resonant(0.5)).unwrap();
        assert_eq!(r.classification, Stability::Center);
        assert!(r.eigenvalues.iter().all(|l| l.re == 0.0 && l.im != 0.0));
    }

    #[test]
    fn double_zero_at_critical() {
        let r = classify(&PhaseState::ORIGIN, &resonant(1.0)).unwrap();
        assert_eq!(r.classification, Stability::DegenerateBt);
        let zeros = r.eigenvalues.iter().filter(|l| l.abs() < 1e-9).count();
        assert_eq!(zeros, 2);
    }

    #[test]
    fn side_points_are_centers() {
        for ratio in [1.05, 1.5, 2.0, 3.0, 5.0] {
            let mp = resonant(ratio);
            for p in &critical_points(&mp).unwrap()[1..] {
                assert_eq!(classify(p, &mp).unwrap().classification, Stability::Center, "{ratio}");
            }
        }
    }

    #[test]
    fn classify_rejects_non_equilibrium() {
        let s = PhaseState::new(0.0, 1.0, 0.0, 0.0).unwrap();
        assert!(matches!(classify(&s, &resonant(2.0)), Err(Error::NotEquilibrium { .. })));
    }

    #[test]
    fn ground_energy_branches() {
        let mp = resonant(1.0);
        assert_eq!(ground_state_energy(0.8 * mp.gamma_c(), &mp), -1.0);
        assert!((ground_state_energy(2.0 * mp.gamma_c(), &mp) + 2.125).abs() < 1e-15);
        assert_eq!(ground_state_energy(mp.gamma_c(), &mp), -1.0);
        let above = ground_state_energy(mp.gamma_c() * (1.0 + 1e-12), &mp);
        assert!((above + 1.0).abs() < 1e-12);
    }

    #[test]
    fn gspt_examples() {
        let mp = resonant(1.0);
        let recs = gspt_curves(&[0.5, 1.0, 2.0], &mp).unwrap();
        assert_eq!((recs[0].e0, recs[0].n_cl, recs[0].jz_cl), (-1.0, 0.0, 0.0));
        assert_eq!((recs[1].e0, recs[1].n_cl, recs[1].jz_cl), (-1.0, 0.0, 0.0));
        assert!((recs[2].e0 + 2.125).abs() < 1e-12);
        assert!((recs[2].n_cl - 1.875).abs() < 1e-12);
        assert!((recs[2].jz_cl - 0.75).abs() < 1e-12);
    }

    #[test]
    fn bifurcation_examples() {
        let scan = bifurcation_scan(&[0.8, 1.0, 1.2], &resonant(1.0)).unwrap();
        let counts: Vec<usize> = scan.iter().map(|r| r.count).collect();
        assert_eq!(counts, vec![1, 1, 3]);
        assert_eq!(scan[0].origin_class, Stability::Center);
        assert_eq!(scan[1].origin_class, Stability::DegenerateBt);
        assert_eq!(scan[2].origin_class, Stability::Saddle);
        assert!(bifurcation_scan(&[1.0, 0.5], &resonant(1.0)).is_err());
    }

    #[test]
    fn complex_quadruplet() {
        // Hamiltonian matrix with eigenvalues ±1±i.
        let m = [
            [1.0, -1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, -1.0, -1.0],
            [0.0, 0.0, 1.0, -1.0],
        ];
        let ev = hamiltonian_eigenvalues(&m);
        for l in ev {
            assert!((l.re.abs() - 1.0).abs() < 1e-12 && (l.im.abs() - 1.0).abs() < 1e-12, "{l}");
        }
    }
}
