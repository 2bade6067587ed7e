mod common;

use proptest::prelude::*;

use psgrasp::geom::{approach_set, unit, UnitVec3, Vec3, DEFAULT_ANGLE_RANGE};
use psgrasp::losses::{
    focal_loss, nll_baseline, quality_l1, total_loss, width_loss, KappaMap, LossParts, LossWeights,
};
use psgrasp::power_spherical::{kappa_map, ps_log_pdf, PowerSpherical};
use psgrasp::volumetric::VoxelClass;

fn direction() -> impl Strategy<Value = UnitVec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-degenerate", |(x, y, z)| Vec3::new(*x, *y, *z).norm() > 0.1)
        .prop_map(|(x, y, z)| UnitVec3::new_normalize(Vec3::new(x, y, z)))
}

proptest! {
    #[test]
    fn mode_beats_any_direction(mu in direction(), x in direction(), kappa in 0.01f64..200.0) {
        let d = PowerSpherical::new(mu, kappa).unwrap();
        prop_assert!(ps_log_pdf(&mu, &d).unwrap() >= ps_log_pdf(&x, &d).unwrap());
    }

    #[test]
    fn kappa_stays_in_range(kp in -10.0f64..10.0, k0 in 0.5f64..100.0) {
        let k = kappa_map(kp, k0, 1e-6);
        prop_assert!(k >= k0 && k <= 4.0 * k0);
    }

    #[test]
    fn losses_are_non_negative(
        z in prop::array::uniform3(-5.0f64..5.0),
        class in 0usize..3,
        mu in direction(),
        b in direction(),
        kp in 0.0f64..1.5,
        q in (0.0f64..1.0, 0.0f64..1.0),
        w in 0.005f64..0.08,
    ) {
        let (l, _) = focal_loss(&[z], &[VoxelClass::ALL[class]], &[10.0, 5.0, 0.1], 2.0).unwrap();
        prop_assert!(l >= 0.0);
        let nll = nll_baseline(&mu.into_inner(), kp, &[b], &KappaMap::default()).unwrap();
        prop_assert!(nll.value.is_finite());
        prop_assert!(quality_l1(q.0, q.1).0 >= 0.0);
        let c = Vec3::new(0.1, 0.0, 0.05);
        let pair = (c, c + b.into_inner() * 0.04);
        prop_assert!(width_loss(&c, &mu, w, &[pair]).unwrap().0 >= 0.0);
    }

    #[test]
    fn baseline_gradient_vanishes_at_truth(b in direction(), kp in 0.3f64..0.95, scale in 0.2f64..5.0) {
        let l = nll_baseline(&(b.into_inner() * scale), kp, &[b], &KappaMap::default()).unwrap();
        prop_assert!(l.grad_nu.norm() < 1e-12);
    }

    #[test]
    fn total_loss_is_linear(parts in prop::array::uniform5(0.0f64..10.0), k in 0.0f64..5.0, which in 0usize..5) {
        let w = LossWeights::default();
        let p = LossParts { label: parts[0], baseline: parts[1], approach: parts[2], width: parts[3], quality: parts[4] };
        let mut scaled = p;
        let field = match which {
            0 => &mut scaled.label,
            1 => &mut scaled.baseline,
            2 => &mut scaled.approach,
            3 => &mut scaled.width,
            _ => &mut scaled.quality,
        };
        *field *= k;
        let base = total_loss(&p, &w).unwrap();
        let zeroed = {
            let mut z = p;
            match which {
                0 => z.label = 0.0,
                1 => z.baseline = 0.0,
                2 => z.approach = 0.0,
                3 => z.width = 0.0,
                _ => z.quality = 0.0,
            }
            total_loss(&z, &w).unwrap()
        };
        let expect = zeroed + k * (base - zeroed);
        prop_assert!((total_loss(&scaled, &w).unwrap() - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
    }

    #[test]
    fn approaches_are_unit_and_perpendicular(b in direction()) {
        let (lo, hi) = DEFAULT_ANGLE_RANGE;
        let fan = approach_set(&b, 18, lo, hi).unwrap();
        prop_assert_eq!(fan.len(), 18);
        for (_, a) in &fan {
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
            prop_assert!(a.dot(&b).abs() < 1e-12);
        }
    }
}

#[test]
fn uniform_limit_density() {
    let d = PowerSpherical::new(unit(Vec3::z()).unwrap(), 1e-12).unwrap();
    let p = ps_log_pdf(&Vec3::x(), &d).unwrap().exp();
    assert!((p - 1.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-10);
}

#[test]
fn quadrature_rule_integrates_polynomials() {
    let rule = common::gauss_legendre(16);
    let w: f64 = rule.iter().map(|(_, w)| w).sum();
    assert!((w - 2.0).abs() < 1e-13);
    let x4: f64 = rule.iter().map(|(x, w)| w * x.powi(4)).sum();
    assert!((x4 - 0.4).abs() < 1e-13);
}
