use occusurf::background::{effective_alphas, strategy_loss_ray, BackgroundStrategy};
use occusurf::geom::Rgb;
use occusurf::loss::{nerf_loss_ray, radiance_field_loss_ray, ColorMetric, RelaxedFrozen};
use occusurf::march::transmittance;
use occusurf::oracle::{enumerate_expectation, finite_diff_check, grad_equivalence, RayParam};
use proptest::prelude::*;

fn ray() -> impl Strategy<Value = (Vec<f64>, Vec<Rgb>, Rgb)> {
    (2usize..=8).prop_flat_map(|m| {
        (
            prop::collection::vec(0.02f64..0.98, m),
            prop::collection::vec(prop::array::uniform3(0.0f64..1.0), m),
            prop::array::uniform3(0.0f64..1.0),
        )
            .prop_map(|(mut a, c, t)| {
                *a.last_mut().unwrap() = 1.0;
                (a, c.into_iter().map(Rgb::from).collect(), Rgb::from(t))
            })
    })
}

fn metric() -> impl Strategy<Value = ColorMetric> {
    prop_oneof![Just(ColorMetric::L2), Just(ColorMetric::L1)]
}

proptest! {
    #[test]
    fn training_gradients_match_closed_form((a, c, t) in ray(), m in metric()) {
        let eq = grad_equivalence(&a, &c, &t, m).unwrap();
        prop_assert!(eq.max_relative < 1e-9);
        let ours = radiance_field_loss_ray(&a, &c, &t, m).unwrap();
        for (p, g) in &eq.closed_form {
            let v = match *p {
                RayParam::Alpha(i) => ours.d_alpha[i],
                RayParam::Color(i, ch) => ours.d_color[i][ch],
            };
            prop_assert!((v - g).abs() <= 1e-9 * g.abs().max(1e-3), "{p:?}: {v} vs {g}");
        }
    }

    #[test]
    fn loss_value_is_closed_form((a, c, t) in ray(), m in metric()) {
        let losses: Vec<f64> = c.iter().map(|x| m.eval(x, &t)).collect();
        let e = enumerate_expectation(&a, &losses).unwrap();
        let ours = radiance_field_loss_ray(&a, &c, &t, m).unwrap();
        prop_assert!((ours.loss - e.closed_form).abs() < 1e-12);
        prop_assert!((e.total - e.closed_form - e.constant).abs() < 1e-12);
    }

    #[test]
    fn enumeration_shift_is_color_independent((a, c, t) in ray(), shift in 0.0f64..1.0) {
        // Adding the same loss to every sample moves the enumerated total and
        // the closed form by amounts that depend on the occupancies only.
        let m = ColorMetric::L2;
        let base: Vec<f64> = c.iter().map(|x| m.eval(x, &t)).collect();
        let moved: Vec<f64> = base.iter().map(|l| l + shift).collect();
        let e0 = enumerate_expectation(&a, &base).unwrap();
        let e1 = enumerate_expectation(&a, &moved).unwrap();
        let ones = enumerate_expectation(&a, &vec![shift; a.len()]).unwrap();
        prop_assert!((e1.total - e0.total - ones.total).abs() < 1e-12);
        prop_assert!((e1.closed_form - e0.closed_form - shift).abs() < 1e-12);
    }

    #[test]
    fn finite_differences_agree((a, c, t) in ray()) {
        let m = ColorMetric::L2;
        let rf = finite_diff_check(|a, c| radiance_field_loss_ray(a, c, &t, m).unwrap(), &a, &c, 1e-6).unwrap();
        let nerf = finite_diff_check(|a, c| nerf_loss_ray(a, c, &t, m).unwrap(), &a, &c, 1e-6).unwrap();
        let frozen = RelaxedFrozen::freeze(&a, &c, &t, m).unwrap();
        let relaxed = finite_diff_check(|a, c| frozen.eval(a, c, m), &a, &c, 1e-4).unwrap();
        prop_assert!(rf < 1e-4 && nerf < 1e-4 && relaxed < 1e-4, "{rf} {nerf} {relaxed}");
    }

    #[test]
    fn free_flight_strategy_is_the_plain_loss((a, c, t) in ray(), m in metric()) {
        let plain = radiance_field_loss_ray(&a, &c, &t, m).unwrap();
        let ff = strategy_loss_ray(&BackgroundStrategy::FreeFlight, &a, &c, &t, m, None).unwrap();
        prop_assert_eq!(plain.d_color, ff.d_color);
        for (x, y) in plain.d_alpha.iter().zip(&ff.d_alpha) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn strategy_weights_stay_normalized((a, c, t) in ray(), cdep in 0.0f64..32.0, thr in 0.05f64..0.95) {
        for s in [
            BackgroundStrategy::FreeFlight,
            BackgroundStrategy::LevelSet { threshold: thr },
            BackgroundStrategy::ColorDependent { c: cdep },
        ] {
            let w = effective_alphas(&s, &a, &c, &t, ColorMetric::L2);
            prop_assert!(w.iter().all(|x| (0.0..=1.0).contains(x)));
            let total: f64 = transmittance(&w).iter().zip(&w).map(|(t, a)| t * a).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
