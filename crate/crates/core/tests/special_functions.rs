#![allow(clippy::excessive_precision)]

use memkit::special::{exp_integral_ei, scaled_e1_complex, scaled_ei};
use memkit::Complex64;
use proptest::prelude::*;

type Pair = (f64, f64);

// Reference values computed at 40 significant digits; arguments are the
// exact binary doubles written below.
const EI_TABLE: &[(f64, f64)] = &[
    (-50.0, -3.7832640295504590187e-24),
    (-37.5, -1.3451647205424983748e-18),
    (-20.0, -9.8355252906498816904e-11),
    (-12.0, -4.7510818246724939326e-7),
    (-6.5, -2.0342986683939819737e-4),
    (-6.0, -3.600824521626586593e-4),
    (-5.9, -4.0390350894312922631e-4),
    (-3.0, -1.3048381094197037413e-2),
    (-1.0000001, -2.1938389760757981385e-1),
    (-1.0, -2.1938393439552027368e-1),
    (-0.9999999, -2.1938397118346805025e-1),
    (-0.5, -5.5977359477616081175e-1),
    (-0.1, -1.8229239584193906159),
    (-0.01, -4.0379295765381138112),
    (-0.001, -6.3315393641361493112),
    (0.001, -6.3295393640250381967),
    (0.01, -4.0179294654266693657),
    (0.1, -1.6228128139692766136),
    (0.5, 4.5421990486317357992e-1),
    (1.0, 1.8951178163559367555),
    (2.0, 4.9542343560018901634),
    (5.9, 7.9538190144887592825e+1),
    (6.0, 8.5989762142439204804e+1),
    (6.1, 9.3002009986963661551e+1),
    (10.0, 2.4922289762418777591e+3),
    (20.0, 2.561565266405658882e+7),
    (30.0, 3.6897320940727419706e+11),
    (39.9, 5.4790320489018935262e+15),
    (40.0, 6.0397182636112415784e+15),
    (40.1, 6.6578251916071000358e+15),
    (45.0, 7.9439160357044537715e+17),
    (50.0, 1.0585636897131690963e+20),
];

// (z, e^z E1(z)) on the lower half plane, where the truncated Lorentzian
// kernel evaluates it.
const SCALED_E1_TABLE: &[(Pair, Pair)] = &[
    ((-1.0, -100.0), (-1.9956184079500174818e-8, 9.9990008973647012347e-3)),
    ((-50.0, -5000.0), (-1.9598115477490259957e-6, 1.9998078584904547813e-4)),
    ((-170.0, -17000.0), (-5.8471729461018065503e-7, 5.8817716430471585574e-5)),
    ((1.0, -100.0), (1.9984032463975725296e-4, 9.9950064805386273791e-3)),
    ((170.0, -17000.0), (5.9163563391296619579e-7, 5.8817578049850340692e-5)),
    ((-3.0, -3.0), (-1.3625023053993542486e-1, 2.238550064827346607e-1)),
    ((-0.5, -0.05), (-1.8738953194727127222e-1, 1.8173161382092785976)),
    ((-30.0, -1.0), (-3.4485832885438426418e-2, 1.1923563131977415393e-3)),
    ((2.0, -0.5), (3.479998561090638162e-1, 6.6574187541757275119e-2)),
    ((-8.0, -0.5), (-1.4634199441917723629e-1, 1.222397130081673902e-2)),
];

#[test]
fn ei_matches_reference_table() {
    for &(x, want) in EI_TABLE {
        let got = exp_integral_ei(x).unwrap();
        let rel = ((got - want) / want).abs();
        assert!(rel <= 1e-12, "Ei({x}) = {got:e}, want {want:e} (rel {rel:e})");
    }
}

#[test]
fn scaled_e1_matches_reference_table() {
    for &((re, im), (wr, wi)) in SCALED_E1_TABLE {
        let got = scaled_e1_complex(Complex64::new(re, im)).unwrap();
        let want = Complex64::new(wr, wi);
        let rel = (got - want).norm() / want.norm();
        assert!(rel <= 1e-12, "z = {re}{im:+}i: {got} vs {want} (rel {rel:e})");
    }
}

#[test]
fn ei_is_continuous_across_regime_boundaries() {
    for &x0 in &[-1.0f64, 40.0] {
        let below = exp_integral_ei(x0 * (1.0 - 1e-13)).unwrap();
        let above = exp_integral_ei(x0 * (1.0 + 1e-13)).unwrap();
        assert!(((below - above) / above).abs() < 1e-11, "x0 = {x0}");
    }
}

proptest! {
    // d/dx Ei(x) = e^x / x
    #[test]
    fn ei_derivative(x in prop_oneof![-30.0f64..-0.05, 0.05f64..60.0]) {
        let h = 1e-5 * x.abs();
        let d = (scaled_ei(x + h).unwrap() * (h).exp() - scaled_ei(x - h).unwrap() * (-h).exp()) / (2.0 * h);
        let want = 1.0 / x;
        prop_assert!((d - want).abs() <= 1e-7 * want.abs().max(1.0), "x = {x}: {d} vs {want}");
    }

    #[test]
    fn ei_sign_pattern(x in -700.0f64..700.0) {
        prop_assume!(x != 0.0);
        let v = scaled_ei(x).unwrap();
        // Ei < 0 below its root near 0.3725, > 0 above
        if x < 0.37 {
            prop_assert!(v < 0.0);
        } else if x > 0.38 {
            prop_assert!(v > 0.0);
        }
    }
}
