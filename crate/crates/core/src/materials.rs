//! Strain-energy densities and their derivatives.
//!
//! Stresses and tangents come from forward-mode differentiation of the
//! energy; no stress formula is coded by hand. Deformation gradients are
//! passed row-major (`F[i*d + j] = F_ij`), `d` = 1 for the bar and 2 for the
//! plane-strain models.
//!
//! All three energies are linear in Young's modulus, so the hot path works
//! with a unit-modulus model and scales by the local modulus afterwards.

use serde::{Deserialize, Serialize};

use crate::dual::{Dual, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialKind {
    /// `Ψ(ε) = (1+ε)^{3/2} - 3ε/2 - 1`, scaled by `E`.
    Bar1d,
    /// St. Venant–Kirchhoff with invariants of the Green strain.
    #[serde(alias = "saint_venant_kirchhoff", alias = "st_venant_kirchhoff")]
    Svk,
    NeoHookean,
}

impl MaterialKind {
    pub fn dim(self) -> usize {
        match self {
            MaterialKind::Bar1d => 1,
            MaterialKind::Svk | MaterialKind::NeoHookean => 2,
        }
    }
}

pub fn lame_parameters(youngs: f64, poisson: f64) -> Result<(f64, f64)> {
    if poisson == 0.5 {
        return Err(Error::IncompressibilityUnsupported);
    }
    let lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = youngs / (2.0 * (1.0 + poisson));
    Ok((lambda, mu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    pub kind: MaterialKind,
    pub youngs: f64,
    pub poisson: f64,
    #[serde(skip)]
    lambda: f64,
    #[serde(skip)]
    mu: f64,
}

impl MaterialModel {
    pub fn new(kind: MaterialKind, youngs: f64, poisson: f64) -> Result<Self> {
        if !(youngs > 0.0 && youngs.is_finite()) {
            return Err(Error::config(format!(
                "Young's modulus must be positive, got {youngs}"
            )));
        }
        if poisson == 0.5 {
            return Err(Error::IncompressibilityUnsupported);
        }
        if !(poisson > -1.0 && poisson < 0.5) {
            return Err(Error::config(format!(
                "Poisson's ratio must lie in (-1, 0.5), got {poisson}"
            )));
        }
        let (lambda, mu) = lame_parameters(youngs, poisson)?;
        Ok(Self {
            kind,
            youngs,
            poisson,
            lambda,
            mu,
        })
    }

    pub fn bar1d() -> Self {
        Self::new(MaterialKind::Bar1d, 1.0, 0.0).expect("valid bar parameters")
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn lame(&self) -> (f64, f64) {
        (self.lambda, self.mu)
    }

    /// Same model with Young's modulus replaced.
    pub fn with_youngs(&self, youngs: f64) -> Result<Self> {
        Self::new(self.kind, youngs, self.poisson)
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        let d = self.dim();
        if f.len() != d * d {
            return Err(Error::Argument(format!(
                "{:?} expects a {d}x{d} deformation gradient, got {} components",
                self.kind,
                f.len()
            )));
        }
        Ok(())
    }

    /// Rejects states outside the energy's domain (J ≤ 0, or 1+ε ≤ 0).
    pub fn check_admissible(&self, f: &[f64]) -> Result<()> {
        let j = determinant(f);
        if !(j > 0.0) {
            return Err(Error::Inadmissible {
                point: [f64::NAN; 2],
                detail: format!("det F = {j:.6e} is not positive"),
            });
        }
        Ok(())
    }

    fn energy<T: Real>(&self, f: &[T]) -> T {
        match self.kind {
            MaterialKind::Bar1d => {
                let stretch = f[0];
                (stretch.powf(1.5) - (stretch - 1.0) * 1.5 - 1.0) * self.youngs
            }
            MaterialKind::NeoHookean => {
                let j = f[0] * f[3] - f[1] * f[2];
                // plane strain: C padded with C_33 = 1
                let i1 = f[0] * f[0] + f[1] * f[1] + f[2] * f[2] + f[3] * f[3] + 1.0;
                let lnj = j.ln();
                lnj * lnj * (0.5 * self.lambda) - lnj * self.mu + (i1 - 3.0) * (0.5 * self.mu)
            }
            MaterialKind::Svk => {
                let c00 = f[0] * f[0] + f[2] * f[2];
                let c01 = f[0] * f[1] + f[2] * f[3];
                let c11 = f[1] * f[1] + f[3] * f[3];
                let e00 = (c00 - 1.0) * 0.5;
                let e01 = c01 * 0.5;
                let e11 = (c11 - 1.0) * 0.5;
                let i1 = e00 + e11;
                let tr_e2 = e00 * e00 + e01 * e01 * 2.0 + e11 * e11;
                let i2 = (i1 * i1 - tr_e2) * 0.5;
                i1 * i1 * (0.5 * (self.lambda + 2.0 * self.mu)) - i2 * (2.0 * self.mu)
            }
        }
    }

    pub fn energy_density(&self, f: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        self.check_admissible(f)?;
        Ok(self.energy(f))
    }

    /// First Piola–Kirchhoff stress `∂W/∂F`, row-major.
    pub fn pk1_stress(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        match f.len() {
            1 => Ok(self.stress_fixed::<1>(&[f[0]])?.to_vec()),
            _ => Ok(self.stress_fixed::<4>(&[f[0], f[1], f[2], f[3]])?.to_vec()),
        }
    }

    /// `∂P_ij/∂F_kl` as a `d²×d²` row-major matrix indexed by `(ij, kl)`.
    pub fn pk1_tangent(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        match f.len() {
            1 => Ok(self.tangent_fixed::<1>(&[f[0]])?.concat()),
            _ => Ok(self.tangent_fixed::<4>(&[f[0], f[1], f[2], f[3]])?.concat()),
        }
    }

    pub(crate) fn stress_fixed<const N: usize>(&self, f: &[f64; N]) -> Result<[f64; N]> {
        self.check_admissible(f)?;
        let vars: [Dual<f64, N>; N] = std::array::from_fn(|k| Dual::variable(f[k], k));
        Ok(self.energy(&vars).eps)
    }

    /// Stress and the vector–Jacobian product `∂(G : P)/∂F` in one nested pass.
    pub(crate) fn stress_vjp_fixed<const N: usize>(
        &self,
        f: &[f64; N],
        g: &[f64; N],
    ) -> Result<([f64; N], [f64; N])> {
        self.check_admissible(f)?;
        let vars: [Dual<Dual<f64, 1>, N>; N] = std::array::from_fn(|k| {
            Dual::variable(Dual::new(f[k], [g[k]]), k)
        });
        let w = self.energy(&vars);
        Ok((w.eps.map(|e| e.re), w.eps.map(|e| e.eps[0])))
    }

    pub(crate) fn tangent_fixed<const N: usize>(&self, f: &[f64; N]) -> Result<[[f64; N]; N]> {
        self.check_admissible(f)?;
        let vars: [Dual<Dual<f64, N>, N>; N] = std::array::from_fn(|k| {
            let mut eps = [Dual::from_real(0.0); N];
            eps[k] = Dual::from_real(1.0);
            Dual::new(Dual::variable(f[k], k), eps)
        });
        let w = self.energy(&vars);
        Ok(std::array::from_fn(|ij| std::array::from_fn(|kl| w.eps[kl].eps[ij])))
    }
}

fn determinant(f: &[f64]) -> f64 {
    match f.len() {
        1 => f[0],
        4 => f[0] * f[3] - f[1] * f[2],
        _ => f64::NAN,
    }
}

/// Derived kinematic quantities of a 2D deformation gradient, with the
/// plane-strain embedding `F_33 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub f: [f64; 4],
    /// Right Cauchy–Green tensor, row-major.
    pub c: [f64; 4],
    /// Green–Lagrange strain `½(C - I)`, row-major.
    pub green: [f64; 4],
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub j: f64,
}

impl Kinematics {
    pub fn new(f: [f64; 4]) -> Self {
        let c = [
            f[0] * f[0] + f[2] * f[2],
            f[0] * f[1] + f[2] * f[3],
            f[0] * f[1] + f[2] * f[3],
            f[1] * f[1] + f[3] * f[3],
        ];
        let green = [0.5 * (c[0] - 1.0), 0.5 * c[1], 0.5 * c[2], 0.5 * (c[3] - 1.0)];
        let j = f[0] * f[3] - f[1] * f[2];
        let tr = c[0] + c[3] + 1.0;
        let tr_c2 = c[0] * c[0] + 2.0 * c[1] * c[2] + c[3] * c[3] + 1.0;
        Self {
            f,
            c,
            green,
            i1: tr,
            i2: 0.5 * (tr * tr - tr_c2),
            i3: j * j,
            j,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nh() -> MaterialModel {
        MaterialModel::new(MaterialKind::NeoHookean, 1000.0, 0.3).unwrap()
    }

    fn svk() -> MaterialModel {
        MaterialModel::new(MaterialKind::Svk, 1.7, 0.35).unwrap()
    }

    struct Lcg(u64);
    impl Lcg {
        fn next(&mut self) -> f64 {
            self.0 = self
                .0
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (self.0 >> 11) as f64 / (1u64 << 53) as f64
        }
        fn f(&mut self) -> [f64; 4] {
            loop {
                let f = [
                    1.0 + 0.4 * (self.next() - 0.5),
                    0.4 * (self.next() - 0.5),
                    0.4 * (self.next() - 0.5),
                    1.0 + 0.4 * (self.next() - 0.5),
                ];
                if f[0] * f[3] - f[1] * f[2] > 0.2 {
                    return f;
                }
            }
        }
    }

    #[test]
    fn lame_values() {
        let (l, m) = lame_parameters(1000.0, 0.3).unwrap();
        assert!((l - 576.923_076_923_076_9).abs() < 1e-9);
        assert!((m - 384.615_384_615_384_6).abs() < 1e-9);
        let (l, m) = lame_parameters(2.0, 0.0).unwrap();
        assert_eq!((l, m), (0.0, 1.0));
        let (l, m) = lame_parameters(1000.0, 0.35).unwrap();
        assert!((l - 864.197_530_864_197_5).abs() < 1e-9);
        assert!((m - 370.370_370_370_370_4).abs() < 1e-9);
        assert!(matches!(
            lame_parameters(1.0, 0.5),
            Err(Error::IncompressibilityUnsupported)
        ));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(MaterialModel::new(MaterialKind::Svk, 0.0, 0.3).is_err());
        assert!(MaterialModel::new(MaterialKind::Svk, 1.0, -1.0).is_err());
        assert!(matches!(
            MaterialModel::new(MaterialKind::Svk, 1.0, 0.5),
            Err(Error::IncompressibilityUnsupported)
        ));
    }

    #[test]
    fn zero_energy_at_reference_state() {
        let id = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(nh().energy_density(&id).unwrap(), 0.0);
        assert_eq!(svk().energy_density(&id).unwrap(), 0.0);
        assert_eq!(MaterialModel::bar1d().energy_density(&[1.0]).unwrap(), 0.0);
        assert!(nh().pk1_stress(&id).unwrap().iter().all(|&p| p.abs() < 1e-13));
    }

    #[test]
    fn neo_hookean_uniaxial_stretch_by_hand() {
        let m = nh();
        let (l, mu) = m.lame();
        let j: f64 = 1.1;
        let expected = 0.5 * l * j.ln().powi(2) - mu * j.ln() + 0.5 * mu * (1.21 + 1.0 + 1.0 - 3.0);
        let w = m.energy_density(&[1.1, 0.0, 0.0, 1.0]).unwrap();
        assert!((w - expected).abs() < 1e-12 * expected.abs());
    }

    #[test]
    fn neo_hookean_stress_matches_closed_form() {
        let m = nh();
        let (l, mu) = m.lame();
        let mut rng = Lcg(7);
        for _ in 0..100 {
            let f = rng.f();
            let p = m.pk1_stress(&f).unwrap();
            let j = f[0] * f[3] - f[1] * f[2];
            // F^{-T}
            let fit = [f[3] / j, -f[2] / j, -f[1] / j, f[0] / j];
            for k in 0..4 {
                let closed = mu * f[k] + (l * j.ln() - mu) * fit[k];
                assert!((p[k] - closed).abs() <= 1e-12 * closed.abs().max(mu));
            }
        }
    }

    #[test]
    fn stress_matches_energy_finite_differences() {
        let mut rng = Lcg(11);
        for m in [nh(), svk()] {
            for _ in 0..100 {
                let f = rng.f();
                let p = m.pk1_stress(&f).unwrap();
                let scale = p.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                for k in 0..4 {
                    let h = 1e-6;
                    let mut fp = f;
                    let mut fm = f;
                    fp[k] += h;
                    fm[k] -= h;
                    let fd = (m.energy_density(&fp).unwrap() - m.energy_density(&fm).unwrap())
                        / (2.0 * h);
                    assert!((fd - p[k]).abs() <= 1e-6 * scale.max(1e-12), "{:?}", m.kind);
                }
            }
        }
    }

    #[test]
    fn bar_stress_and_tangent() {
        let m = MaterialModel::bar1d();
        for &eps in &[0.0, 0.3, 7.0 / 9.0, -0.2] {
            let f = [1.0 + eps];
            let s = m.pk1_stress(&f).unwrap()[0];
            assert!((s - 1.5 * ((1.0 + eps).sqrt() - 1.0)).abs() < 1e-14);
            let t = m.pk1_tangent(&f).unwrap()[0];
            assert!((t - 0.75 / (1.0 + eps).sqrt()).abs() < 1e-14);
        }
        for k in 0..=20 {
            let x = -1.0 + 0.1 * k as f64;
            let eps = (x.powi(4) - 8.0 * x * x + 7.0) / 9.0;
            let s = m.pk1_stress(&[1.0 + eps]).unwrap()[0];
            assert!((s - 0.5 * (1.0 - x * x)).abs() < 1e-14);
        }
        assert!(matches!(
            m.energy_density(&[-0.1]),
            Err(Error::Inadmissible { .. })
        ));
    }

    #[test]
    fn tangent_has_major_symmetry_and_matches_fd() {
        let mut rng = Lcg(3);
        for m in [nh(), svk()] {
            for _ in 0..20 {
                let f = rng.f();
                let t = m.pk1_tangent(&f).unwrap();
                let scale = t.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                for a in 0..4 {
                    for b in 0..4 {
                        assert!((t[a * 4 + b] - t[b * 4 + a]).abs() <= 1e-10 * scale);
                    }
                }
            }
        }
        let m = nh();
        let id = [1.0, 0.0, 0.0, 1.0];
        let t = m.pk1_tangent(&id).unwrap();
        let scale = t.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for kl in 0..4 {
            let h = 1e-6;
            let mut fp = id;
            let mut fm = id;
            fp[kl] += h;
            fm[kl] -= h;
            let pp = m.pk1_stress(&fp).unwrap();
            let pm = m.pk1_stress(&fm).unwrap();
            for ij in 0..4 {
                let fd = (pp[ij] - pm[ij]) / (2.0 * h);
                assert!((fd - t[ij * 4 + kl]).abs() <= 1e-6 * scale);
            }
        }
    }

    #[test]
    fn vjp_matches_tangent_contraction() {
        let m = svk();
        let mut rng = Lcg(5);
        let f = rng.f();
        let g = [0.3, -1.2, 0.7, 2.0];
        let (p, h) = m.stress_vjp_fixed::<4>(&f, &g).unwrap();
        let t = m.tangent_fixed::<4>(&f).unwrap();
        let p2 = m.stress_fixed::<4>(&f).unwrap();
        for kl in 0..4 {
            let expect: f64 = (0..4).map(|ij| g[ij] * t[ij][kl]).sum();
            assert!((h[kl] - expect).abs() < 1e-12 * expect.abs().max(1.0));
            assert_eq!(p[kl], p2[kl]);
        }
    }

    #[test]
    fn frame_indifference() {
        let mut rng = Lcg(17);
        for m in [nh(), svk()] {
            for _ in 0..50 {
                let f = rng.f();
                let th = 2.0 * std::f64::consts::PI * rng.next();
                let (c, s) = (th.cos(), th.sin());
                let rf = [
                    c * f[0] - s * f[2],
                    c * f[1] - s * f[3],
                    s * f[0] + c * f[2],
                    s * f[1] + c * f[3],
                ];
                let w = m.energy_density(&f).unwrap();
                let wr = m.energy_density(&rf).unwrap();
                assert!((w - wr).abs() <= 1e-12 * w.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn inadmissible_state_rejected() {
        assert!(matches!(
            nh().energy_density(&[1.0, 0.0, 0.0, -0.5]),
            Err(Error::Inadmissible { .. })
        ));
        assert!(matches!(
            nh().pk1_stress(&[1.0, 2.0]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn kinematics_invariants() {
        let k = Kinematics::new([1.1, 0.2, -0.1, 0.9]);
        assert!((k.j - (0.99 + 0.02)).abs() < 1e-15);
        assert!((k.i3 - k.j * k.j).abs() < 1e-15);
        assert!((k.green[1] - k.green[2]).abs() < 1e-16);
        let id = Kinematics::new([1.0, 0.0, 0.0, 1.0]);
        assert_eq!(id.green, [0.0; 4]);
        assert_eq!(id.i1, 3.0);
        assert_eq!(id.i2, 3.0);
    }
}
