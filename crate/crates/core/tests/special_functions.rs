use aucal::audit::two_proportion_test;
use aucal::special::{chi_square_sf, gamma_p, gamma_q, gauss_legendre, ln_gamma, normal_cdf, normal_two_sided};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn ln_gamma_against_statrs() {
    for i in 1..400 {
        let x = i as f64 * 0.37;
        let want = statrs::function::gamma::ln_gamma(x);
        assert!((ln_gamma(x) - want).abs() < 1e-12 * want.abs().max(1.0), "x = {x}");
    }
}

#[test]
fn incomplete_gamma_against_statrs() {
    for dof in 1..=80 {
        let a = dof as f64 / 2.0;
        for j in 1..=120 {
            let x = j as f64 * (a + 1.0) / 30.0;
            let p = statrs::function::gamma::gamma_lr(a, x);
            let q = statrs::function::gamma::gamma_ur(a, x);
            // compare each tail where it is not dominated by cancellation
            if p > 1e-300 && p < 0.5 {
                assert!(rel(gamma_p(a, x).unwrap(), p) < 1e-10, "P({a}, {x})");
            }
            if q > 1e-300 && q < 0.5 {
                assert!(rel(gamma_q(a, x).unwrap(), q) < 1e-10, "Q({a}, {x})");
            }
        }
    }
}

#[test]
fn chi_square_tail_against_statrs() {
    for dof in [1.0, 2.0, 3.0, 4.0, 7.0, 12.0, 30.0] {
        let d = ChiSquared::new(dof).unwrap();
        for x in [0.01, 0.5, 1.0, 3.84, 6.63, 10.0, 25.0, 60.0] {
            let want = d.sf(x);
            assert!(rel(chi_square_sf(x, dof), want) < 1e-9, "sf({x}; {dof})");
        }
    }
}

#[test]
fn normal_tails_against_statrs() {
    // statrs' normal cdf is good to about 1e-10 relative
    let n = Normal::new(0.0, 1.0).unwrap();
    for i in -80..=80 {
        let z = i as f64 * 0.1;
        assert!(rel(normal_cdf(z), n.cdf(z)) < 1e-9, "z = {z}");
        assert!(rel(normal_two_sided(z), 2.0 * n.sf(z.abs())) < 1e-9, "z = {z}");
    }
    for (z, want) in [
        (-1.0, 0.158_655_253_931_457_05),
        (-2.0, 0.022_750_131_948_179_195),
        (-3.0, 0.001_349_898_031_630_094_6),
        (-5.0, 2.866_515_718_791_939e-7),
        (-8.0, 6.220_960_574_271_785e-16),
    ] {
        assert!(rel(normal_cdf(z), want) < 1e-13, "z = {z}");
    }
}

#[test]
fn two_proportion_value() {
    // pooled p = 0.8, se = sqrt(0.8 * 0.2 * 0.02)
    let z = 0.2 / (0.8f64 * 0.2 * 0.02).sqrt();
    let want = 2.0 * Normal::new(0.0, 1.0).unwrap().sf(z);
    let got = two_proportion_test(90, 100, 70, 100).unwrap();
    assert!(rel(got, want) < 1e-9);
    assert!((got - 4.07e-4).abs() < 5e-6);
}

#[test]
fn gauss_legendre_weights_and_exactness() {
    let (x, w) = gauss_legendre(64);
    assert_eq!(x.len(), 64);
    assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
    // exact for degree 127; check a smooth non-polynomial too
    let exp: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.exp()).sum();
    assert!((exp - (1f64.exp() - (-1f64).exp())).abs() < 1e-13);
}
