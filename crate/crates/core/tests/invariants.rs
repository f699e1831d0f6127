use proptest::prelude::*;

use nim_core::discretization::{build_node_grid, Domain, Point, MAX_DIM};
use nim_core::experiments::{grf_modulus, symmetric_modulus};
use nim_core::materials::{MaterialKind, MaterialModel};
use nim_core::optimizer::{lbfgs_minimize, relative_l2, LbfgsOptions, RecordExtras};
use nim_core::rk_basis::{evaluate_shape, RkConfig};

fn point(x: f64, y: f64) -> Point {
    let mut p = [0.0; MAX_DIM];
    p[0] = x;
    p[1] = y;
    p
}

fn near_identity() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-0.3..0.3f64).prop_map(|d| [1.0 + d[0], d[1], d[2], 1.0 + d[3]])
}

fn rotate(theta: f64, f: &[f64; 4]) -> [f64; 4] {
    let (s, c) = theta.sin_cos();
    [
        c * f[0] - s * f[2],
        c * f[1] - s * f[3],
        s * f[0] + c * f[2],
        s * f[1] + c * f[3],
    ]
}

fn models() -> Vec<MaterialModel> {
    vec![
        MaterialModel::new(MaterialKind::Svk, 3.0, 0.3).unwrap(),
        MaterialModel::new(MaterialKind::NeoHookean, 3.0, 0.3).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rk_reproduces_quadratics(x in 0.0..1.0f64, y in 0.0..1.0f64) {
        let domain = Domain::rectangle((0.0, 1.0), (0.0, 1.0)).unwrap();
        let nodes = build_node_grid(&domain, &[9, 9]).unwrap();
        let cfg = RkConfig::new(2, 2.5);
        let s = evaluate_shape(&point(x, y), &nodes, &cfg).unwrap();
        let pts = nodes.positions();
        let mut sums = [0.0f64; 6];
        let mut grad_xy = [0.0f64; 2];
        for ((&i, &v), g) in s.indices.iter().zip(&s.values).zip(&s.gradients) {
            let (a, b) = (pts[i][0], pts[i][1]);
            for (k, m) in [1.0, a, b, a * a, a * b, b * b].into_iter().enumerate() {
                sums[k] += v * m;
            }
            grad_xy[0] += g[0] * a * b;
            grad_xy[1] += g[1] * a * b;
        }
        let exact = [1.0, x, y, x * x, x * y, y * y];
        for k in 0..6 {
            prop_assert!((sums[k] - exact[k]).abs() < 1e-10, "monomial {k}: {} vs {}", sums[k], exact[k]);
        }
        prop_assert!((grad_xy[0] - y).abs() < 1e-8);
        prop_assert!((grad_xy[1] - x).abs() < 1e-8);
    }

    #[test]
    fn singular_kernel_keeps_partition_of_unity(x in 0.0..1.0f64, y in 0.0..1.0f64) {
        let domain = Domain::rectangle((0.0, 1.0), (0.0, 1.0)).unwrap();
        let nodes = build_node_grid(&domain, &[9, 9]).unwrap();
        let boundary: Vec<usize> = (0..nodes.len())
            .filter(|&i| {
                let p = nodes.position(i);
                p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0
            })
            .collect();
        let cfg = RkConfig::new(2, 2.5).with_singular_nodes(boundary);
        let s = evaluate_shape(&point(x, y), &nodes, &cfg).unwrap();
        let sum: f64 = s.values.iter().sum();
        let gsum: f64 = s.gradients.iter().map(|g| g[0].abs().max(g[1].abs())).fold(0.0, |acc, v| acc + v);
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(gsum.is_finite());
        let gx: f64 = s.gradients.iter().map(|g| g[0]).sum();
        prop_assert!(gx.abs() < 1e-8 * gsum.max(1.0));
    }

    #[test]
    fn stress_is_the_energy_gradient(f in near_identity()) {
        for m in models() {
            let p = m.pk1_stress(&f).unwrap();
            for k in 0..4 {
                let h = 1e-6;
                let mut fp = f;
                let mut fm = f;
                fp[k] += h;
                fm[k] -= h;
                let fd = (m.energy_density(&fp).unwrap() - m.energy_density(&fm).unwrap()) / (2.0 * h);
                prop_assert!((fd - p[k]).abs() < 1e-6 * (1.0 + p[k].abs()), "{:?} component {k}", m);
            }
        }
    }

    #[test]
    fn energy_is_frame_indifferent(f in near_identity(), theta in -3.0..3.0f64) {
        for m in models() {
            let w = m.energy_density(&f).unwrap();
            let wq = m.energy_density(&rotate(theta, &f)).unwrap();
            prop_assert!((w - wq).abs() < 1e-12 * (1.0 + w.abs()));
        }
    }

    #[test]
    fn stress_is_linear_in_the_modulus(f in near_identity(), e in 0.1..10.0f64) {
        for m in models() {
            let unit = m.with_youngs(1.0).unwrap().pk1_stress(&f).unwrap();
            let scaled = m.with_youngs(e).unwrap().pk1_stress(&f).unwrap();
            for k in 0..4 {
                prop_assert!((scaled[k] - e * unit[k]).abs() < 1e-12 * (1.0 + scaled[k].abs()));
            }
        }
    }

    #[test]
    fn symmetric_modulus_is_antisymmetric_about_its_midline(x in 0.0..1.0f64, y in 0.0..1.0f64) {
        // the raw field flips sign under y -> 1 - y, so E mirrors about 1.5
        let e = symmetric_modulus(x, y);
        prop_assert!((1.0 - 1e-3..=2.0 + 1e-3).contains(&e));
        prop_assert!((e + symmetric_modulus(x, 1.0 - y) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn grf_is_normalized(seed in 0u64..1000) {
        let g = grf_modulus(32, 3.0, seed).unwrap();
        let lo = g.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = g.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((lo - 1.0).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
    }

    #[test]
    fn relative_l2_is_scale_invariant(v in prop::collection::vec(-5.0..5.0f64, 3..20), s in 0.1..10.0f64) {
        let r: Vec<f64> = v.iter().map(|x| x + 1.0).collect();
        let (a, _) = relative_l2(&v, &r).unwrap();
        let vs: Vec<f64> = v.iter().map(|x| s * x).collect();
        let rs: Vec<f64> = r.iter().map(|x| s * x).collect();
        let (b, _) = relative_l2(&vs, &rs).unwrap();
        prop_assert!((a - b).abs() < 1e-12 * a.max(1.0));
    }

    #[test]
    fn lbfgs_solves_convex_quadratics(diag in prop::collection::vec(0.5..20.0f64, 2..8), shift in -3.0..3.0f64) {
        let n = diag.len();
        let target: Vec<f64> = (0..n).map(|i| shift + i as f64).collect();
        let objective = |x: &[f64], g: &mut [f64]| {
            let mut f = 0.0;
            for i in 0..n {
                let d = x[i] - target[i];
                f += 0.5 * diag[i] * d * d;
                g[i] = diag[i] * d;
            }
            Ok(f)
        };
        let opts = LbfgsOptions { ftol: 0.0, gtol: 1e-10, ..LbfgsOptions::default() };
        let r = lbfgs_minimize(objective, &vec![0.0; n], &opts, |_| RecordExtras::default()).unwrap();
        prop_assert!(r.stop.converged(), "{}", r.stop);
        for i in 0..n {
            prop_assert!((r.x[i] - target[i]).abs() < 1e-8);
        }
        let losses: Vec<f64> = r.history.records.iter().map(|h| h.loss).collect();
        prop_assert!(losses.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn identity_is_stress_free() {
    for m in models() {
        let p = m.pk1_stress(&[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-14));
        assert_eq!(m.energy_density(&[1.0, 0.0, 0.0, 1.0]).unwrap(), 0.0);
    }
}

#[test]
fn inverted_deformation_is_rejected() {
    let m = MaterialModel::new(MaterialKind::NeoHookean, 1.0, 0.3).unwrap();
    assert!(m.pk1_stress(&[1.0, 0.0, 0.0, -0.5]).is_err());
}
