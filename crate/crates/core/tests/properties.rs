use proptest::prelude::*;
use sobfno_core::fno::{param_count, FnoConfig, FnoParams};
use sobfno_core::spectral::{
    differentiate, forward_transform, h1_fd_norm_sq, hs_norm, inverse_transform, project_modes, PeriodicGrid, RealField,
};
use sobfno_core::train::{h1_loss, h1_loss_gradient};

fn grid_sizes() -> impl Strategy<Value = usize> {
    prop_oneof![Just(8usize), Just(12), Just(16), Just(30), Just(64), Just(100)]
}

fn field(n: usize) -> impl Strategy<Value = RealField> {
    proptest::collection::vec(-2.0f64..2.0, n).prop_map(move |v| RealField::new(PeriodicGrid::new(n).unwrap(), v).unwrap())
}

fn sized_field() -> impl Strategy<Value = RealField> {
    grid_sizes().prop_flat_map(field)
}

fn pair() -> impl Strategy<Value = (RealField, RealField)> {
    grid_sizes().prop_flat_map(|n| (field(n), field(n)))
}

proptest! {
    #[test]
    fn parseval(f in sized_field()) {
        let spec = forward_transform(&f);
        let n = f.grid().len();
        let c = spec.coeffs();
        let mut energy = c[0].norm_sqr() + c[n / 2].norm_sqr();
        energy += 2.0 * c[1..n / 2].iter().map(|z| z.norm_sqr()).sum::<f64>();
        prop_assert!((energy - f.l2_norm_sq()).abs() <= 1e-12 * (1.0 + energy));
        prop_assert!((hs_norm(&f, 0.0).unwrap().powi(2) - energy).abs() <= 1e-12 * (1.0 + energy));
    }

    #[test]
    fn transform_round_trip(f in sized_field()) {
        let back = inverse_transform(&forward_transform(&f));
        for (a, b) in f.values().iter().zip(back.values()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn projection_is_idempotent_and_orthogonal(f in sized_field(), frac in 0.0f64..1.0) {
        let m = 1 + (frac * (f.grid().len() / 2) as f64) as usize;
        let p = project_modes(&f, m).unwrap();
        let pp = project_modes(&p, m).unwrap();
        for (a, b) in p.values().iter().zip(pp.values()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let rest = f.sub(&p).unwrap();
        let h = f.grid().spacing();
        let inner: f64 = rest.values().iter().zip(p.values()).map(|(a, b)| a * b).sum::<f64>() * h;
        prop_assert!(inner.abs() <= 1e-12 * (1.0 + f.l2_norm_sq()));
        prop_assert!(p.l2_norm_sq() <= f.l2_norm_sq() + 1e-12);
    }

    #[test]
    fn sobolev_norms_are_ordered(f in sized_field(), s in 0.0f64..2.0) {
        let lo = hs_norm(&f, s).unwrap();
        let hi = hs_norm(&f, s + 0.5).unwrap();
        prop_assert!(lo <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn derivative_kills_constants(c in -5.0f64..5.0, n in grid_sizes()) {
        let f = RealField::constant(PeriodicGrid::new(n).unwrap(), c).unwrap();
        // transform roundoff is amplified by wavenumbers up to n/2
        prop_assert!(differentiate(&f, 1).unwrap().max_abs() <= 1e-13 * n as f64 * (1.0 + c.abs()));
        prop_assert!((h1_fd_norm_sq(&f) - c * c).abs() <= 1e-12 * (1.0 + c * c));
    }

    #[test]
    fn loss_bounds_and_symmetry((p, t) in pair()) {
        let l = h1_loss(std::slice::from_ref(&p), std::slice::from_ref(&t)).unwrap();
        let back = h1_loss(std::slice::from_ref(&t), std::slice::from_ref(&p)).unwrap();
        prop_assert!((l - back).abs() <= 1e-12 * (1.0 + l));
        prop_assert!(l + 1e-12 >= p.sub(&t).unwrap().l2_norm_sq());
    }

    #[test]
    fn cotangent_is_linear_in_the_error((p, t) in pair(), alpha in -3.0f64..3.0) {
        let scaled = t.combine(1.0, &p.sub(&t).unwrap(), alpha).unwrap();
        let g1 = h1_loss_gradient(std::slice::from_ref(&p), std::slice::from_ref(&t)).unwrap();
        let ga = h1_loss_gradient(&[scaled], std::slice::from_ref(&t)).unwrap();
        for (a, b) in g1[0].values().iter().zip(ga[0].values()) {
            prop_assert!((alpha * a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn directional_derivative_of_loss((p, t) in pair(), dir in proptest::collection::vec(-1.0f64..1.0, 100)) {
        let n = p.grid().len();
        let d = RealField::new(p.grid(), dir[..n].to_vec()).unwrap();
        let g = h1_loss_gradient(std::slice::from_ref(&p), std::slice::from_ref(&t)).unwrap();
        let analytic: f64 = g[0].values().iter().zip(d.values()).map(|(a, b)| a * b).sum();
        let eps = 1e-5;
        let loss = |s: f64| h1_loss(&[p.combine(1.0, &d, s).unwrap()], std::slice::from_ref(&t)).unwrap();
        let fd = (loss(eps) - loss(-eps)) / (2.0 * eps);
        // the loss is quadratic, so central differences are exact up to rounding
        prop_assert!((analytic - fd).abs() <= 1e-6 * analytic.abs().max(1.0));
    }

    #[test]
    fn param_layout_matches_count(m in 1usize..6, w in 1usize..6, layers in 1usize..4, hidden in 1usize..9) {
        let cfg = FnoConfig { layers, fc_hidden: hidden, ..FnoConfig::new(m, w) };
        let p = FnoParams::zeros(&cfg).unwrap();
        prop_assert_eq!(p.len(), param_count(&cfg));
        let expected = layers * (2 * w * w * m + w * w + w) + (2 * w + w) + (w * hidden + hidden) + (hidden + 1);
        prop_assert_eq!(param_count(&cfg), expected);
    }
}
