use nim_core::materials::MaterialKind;
use nim_core::residual::Scheme;
use nim_py::{parse_kind, parse_scheme, shape_at};

#[test]
fn material_names_parse() {
    assert_eq!(parse_kind("SVK").unwrap(), MaterialKind::Svk);
    assert_eq!(parse_kind("neo_hookean").unwrap(), MaterialKind::NeoHookean);
    assert_eq!(parse_kind("bar1d").unwrap(), MaterialKind::Bar1d);
    assert!(parse_kind("rubber").unwrap_err().is_validation());
}

#[test]
fn scheme_names_parse() {
    assert_eq!(parse_scheme(Some("h")).unwrap(), Some(Scheme::NimH));
    assert_eq!(parse_scheme(Some("c")).unwrap(), Some(Scheme::NimC));
    assert_eq!(parse_scheme(None).unwrap(), None);
    assert!(parse_scheme(Some("q")).is_err());
}

#[test]
fn shape_functions_form_a_partition_of_unity() {
    let (idx, vals, grads) = shape_at(&[0.37, 0.81], &[(0.0, 1.0), (0.0, 1.0)], &[6, 6], 2, 2.5).unwrap();
    assert_eq!(idx.len(), vals.len());
    assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for axis in 0..2 {
        let g: f64 = grads.iter().map(|g| g[axis]).sum();
        assert!(g.abs() < 1e-10);
    }
}

#[test]
fn shape_point_dimension_is_checked() {
    assert!(shape_at(&[0.5], &[(0.0, 1.0), (0.0, 1.0)], &[6, 6], 2, 2.5).is_err());
}
