//! `K_nu` against two independent references: a table frozen from a
//! 40-digit evaluation, and trapezoidal quadrature of
//! `K_nu(z) = int_0^inf exp(-z cosh t) cosh(nu t) dt`.

use matern_core::special_functions::{bessel_k, bessel_k_any_order, log_bessel_k, BesselOrder};

mod reference {
    //! `(nu, z, ln K_nu(z))`, 20 significant digits.
    pub const LN_BESSEL_K_TABLE: &[(f64, f64, f64)] = &[
        (0.05, 1e-06, 2.7157225974829268974),
        (0.05, 0.001, 1.9716690035148845973),
        (0.05, 0.1, 0.89077568482974351199),
        (0.05, 0.5, -0.077061145192732394856),
        (0.05, 1.0, -0.86415057768261796376),
        (0.05, 1.9, -2.048596188832152602),
        (0.05, 2.0, -2.171969953908093257),
        (0.05, 2.1, -2.2942811625047058592),
        (0.05, 5.0, -5.6016020509077803382),
        (0.05, 10.0, -10.9373134870068596),
        (0.05, 30.0, -31.478865858215517723),
        (0.05, 100.0, -102.07802511629217734),
        (0.1, 1e-06, 2.9467464507698968216),
        (0.1, 0.001, 2.0377846308823502366),
        (0.1, 0.1, 0.9030244871822132702),
        (0.1, 0.5, -0.072477655086122359354),
        (0.1, 1.0, -0.86140976163042263353),
        (0.1, 1.9, -2.04697227752864477),
        (0.1, 2.0, -2.1704153460412888595),
        (0.1, 2.1, -2.2927900687793687834),
        (0.1, 5.0, -5.6009145778642460397),
        (0.1, 10.0, -10.936955481306387266),
        (0.1, 30.0, -31.47874287023615659),
        (0.1, 100.0, -102.07798780179685428),
        (0.3, 1e-06, 4.7550084143166223856),
        (0.3, 0.001, 2.6676827927587384953),
        (0.3, 0.1, 1.0314236724695096689),
        (0.3, 0.5, -0.02380702734543257338),
        (0.3, 1.0, -0.83223449486755587527),
        (0.3, 1.9, -2.0296657660207179297),
        (0.3, 2.0, -2.1538463942836319554),
        (0.3, 2.1, -2.276897166774938189),
        (0.3, 5.0, -5.5935829670318899895),
        (0.3, 10.0, -10.933136977225417797),
        (0.3, 30.0, -31.477431008272061829),
        (0.3, 100.0, -102.0775897807965681),
        (0.5, 1e-06, 7.133545631626864507),
        (0.5, 0.001, 3.678668992135795948),
        (0.5, 0.1, 1.2770838991417502411),
        (0.5, 0.5, 0.072364942924700087072),
        (0.5, 1.0, -0.77420864735527256764),
        (0.5, 1.9, -1.9951355904414698434),
        (0.5, 2.0, -2.1207822376352452223),
        (0.5, 2.1, -2.2451773197199613338),
        (0.5, 5.0, -5.5789276035723227549),
        (0.5, 10.0, -10.92550119385229541),
        (0.5, 30.0, -31.474807338186350255),
        (0.5, 100.0, -102.07679374034931825),
        (0.7, 1e-06, 9.7237804779728320946),
        (0.7, 0.001, 4.8882739014386683186),
        (0.7, 0.1, 1.6224528521683554233),
        (0.7, 0.5, 0.21386699849660094014),
        (0.7, 1.0, -0.68795811710829174891),
        (0.7, 1.9, -1.9435446593267689138),
        (0.7, 2.0, -2.0713680497470023461),
        (0.7, 2.1, -2.1977604956699982076),
        (0.7, 5.0, -5.5569641382392463631),
        (0.7, 10.0, -10.914050577526244649),
        (0.7, 30.0, -31.470871967644770977),
        (0.7, 100.0, -102.07559968356169582),
        (1.0, 1e-06, 13.815510557957058428),
        (1.0, 0.001, 6.907751517131146853),
        (1.0, 0.1, 2.2878617121071676644),
        (1.0, 0.5, 0.50467139730465117731),
        (1.0, 1.0, -0.50765194821075233095),
        (1.0, 1.9, -1.8347077662739776039),
        (1.0, 2.0, -1.9670713025605138915),
        (1.0, 2.1, -2.0976347466777363231),
        (1.0, 5.0, -5.5103692965852233155),
        (1.0, 10.0, -10.889730180588070981),
        (1.0, 30.0, -31.462509841343925037),
        (1.0, 100.0, -102.07306232835992423),
        (1.3, 1e-06, 18.059933070012846973),
        (1.3, 0.001, 9.0798503836976910904),
        (1.3, 0.1, 3.0862966125400922997),
        (1.3, 0.5, 0.87972088262819763309),
        (1.3, 1.0, -0.2696497831689460926),
        (1.3, 1.9, -1.689110595342391024),
        (1.3, 2.0, -1.8274424187204386943),
        (1.3, 2.1, -1.9634987201364655267),
        (1.3, 5.0, -5.44749537166862147),
        (1.3, 10.0, -10.856852359803523403),
        (1.3, 30.0, -31.451197536351087459),
        (1.3, 100.0, -102.06962946951888925),
        (2.0, 1e-06, 28.324168296488243608),
        (2.0, 0.001, 14.508657488524673977),
        (2.0, 0.1, 5.295834109025257421),
        (2.0, 0.5, 2.0215718743880472033),
        (2.0, 1.0, 0.48540867156564619815),
        (2.0, 1.9, -1.214328579892768487),
        (2.0, 2.0, -1.3713673077253718409),
        (2.0, 2.1, -1.5247058238483956019),
        (2.0, 5.0, -5.2383623877680452598),
        (2.0, 10.0, -10.747001122069369434),
        (2.0, 30.0, -31.413335605197376368),
        (2.0, 100.0, -102.05813713541277808),
        (2.5, 1e-06, 35.86318003622335583),
        (2.5, 0.001, 18.593791672101540791),
        (2.5, 0.1, 7.0792022745188130362),
        (2.5, 0.5, 3.0168039220911405471),
        (2.5, 1.0, 1.1717015017000407375),
        (2.5, 1.9, -0.76843142258989720868),
        (2.5, 2.0, -0.94212724129359910513),
        (2.5, 2.1, -1.1109265156044929742),
        (2.5, 5.0, -5.0366033127469610807),
        (2.5, 10.0, -10.640322251618633013),
        (2.5, 30.0, -31.376471437465488414),
        (2.5, 100.0, -102.04694371838043295),
        (3.7, 1e-06, 54.416958778644964802),
        (3.7, 0.001, 28.858264153818558759),
        (3.7, 0.1, 11.81820888405500602),
        (3.7, 0.5, 5.8412180670518472424),
        (3.7, 1.0, 3.2092142486141442573),
        (3.7, 1.9, 0.6144666647602544655),
        (3.7, 2.0, 0.39337393679327552756),
        (3.7, 2.1, 0.18030460742334697637),
        (3.7, 5.0, -4.3821104808869180599),
        (3.7, 10.0, -10.289756514228235819),
        (3.7, 30.0, -31.254674304842541185),
        (3.7, 100.0, -102.00993373366978749),
        (5.0, 1e-06, 75.028195342409035104),
        (5.0, 0.001, 40.489418884998412665),
        (5.0, 0.1, 17.462943082635024389),
        (5.0, 0.5, 9.4007937321946314369),
        (5.0, 1.0, 5.888768782293728388),
        (5.0, 1.9, 2.5232448626072000582),
        (5.0, 2.0, 2.2440073418461981624),
        (5.0, 2.1, 1.976265585020972609),
        (5.0, 5.0, -3.4201883628440003858),
        (5.0, 10.0, -9.7629980490662249065),
        (5.0, 30.0, -31.069816472791915068),
        (5.0, 100.0, -101.95368115466478686),
        (7.2, 1e-06, 110.72603661670273736),
        (7.2, 0.001, 60.990198567708808716),
        (7.2, 0.1, 27.832570058742432783),
        (7.2, 0.5, 16.234949394233605486),
        (7.2, 1.0, 11.214192398903444571),
        (7.2, 1.9, 6.4893982289335544937),
        (7.2, 2.0, 6.1047941378092482326),
        (7.2, 2.1, 5.7374729213343713444),
        (7.2, 5.0, -1.265026359694009185),
        (7.2, 10.0, -8.5401749048425461517),
        (7.2, 30.0, -30.632524713701237413),
        (7.2, 100.0, -101.82022828265354179),
        (10.0, 1e-06, 157.19525768476369111),
        (10.0, 0.001, 88.117704867164569979),
        (10.0, 0.1, 42.065725262105931629),
        (10.0, 0.5, 25.964682476379306856),
        (10.0, 1.0, 19.012422299626312917),
        (10.0, 1.9, 12.52195229059325406),
        (10.0, 2.0, 11.998324991686167052),
        (10.0, 2.1, 11.499195441874088108),
        (10.0, 5.0, 2.2781451384736612693),
        (10.0, 10.0, -6.4288815429625959032),
        (10.0, 30.0, -29.852688474145610365),
        (10.0, 100.0, -101.58091424896991745),
        (15.0, 1e-06, 242.12794008004201022),
        (15.0, 0.001, 138.51161087745282846),
        (15.0, 0.1, 69.433879535286456617),
        (15.0, 0.5, 45.288025899415444446),
        (15.0, 1.0, 34.877436807980250076),
        (15.0, 1.9, 25.203167832129866919),
        (15.0, 2.0, 24.426840124078313669),
        (15.0, 2.1, 23.687708001334075961),
        (15.0, 5.0, 10.314595586040016703),
        (15.0, 10.0, -1.3255515915340407779),
        (15.0, 30.0, -27.855919053438562236),
        (15.0, 100.0, -100.96063723003916062),
        (20.5, 1e-06, 337.56583743371733888),
        (20.5, 0.001, 195.95685420176302797),
        (20.5, 0.1, 101.55073719714368877),
        (20.5, 0.5, 68.554183346300214255),
        (20.5, 1.0, 54.335054920608340788),
        (20.5, 1.9, 41.143641967200692173),
        (20.5, 2.0, 40.087142543560085546),
        (20.5, 2.1, 39.081702991675214667),
        (20.5, 5.0, 21.036591952492469055),
        (20.5, 10.0, 5.9034411061401526433),
        (20.5, 30.0, -24.808815696333479176),
        (20.5, 100.0, -99.994240564739642019),
        (33.3, 1e-06, 565.0488790939514567),
        (33.3, 0.001, 335.02062829610637996),
        (33.3, 0.1, 181.66838371115777965),
        (33.3, 0.5, 128.07224370167307936),
        (33.3, 1.0, 104.98463853231000573),
        (33.3, 1.9, 83.590714383818262365),
        (33.3, 2.0, 81.879631939555644973),
        (33.3, 2.1, 80.251749390771560597),
        (33.3, 5.0, 51.205189656071585811),
        (33.3, 10.0, 27.551559058617106452),
        (33.3, 30.0, -14.626436553350585302),
        (33.3, 100.0, -96.609230083215904727),
        (50.0, 1e-06, 869.30548369199590854),
        (50.0, 0.001, 523.91771973778701692),
        (50.0, 0.1, 293.65915942310343973),
        (50.0, 0.5, 213.18603932852192557),
        (50.0, 1.0, 178.52485402408102134),
        (50.0, 1.9, 146.41884664968151894),
        (50.0, 2.0, 143.85219293848001624),
        (50.0, 2.1, 141.41059382738788528),
        (50.0, 5.0, 97.930678013084470575),
        (50.0, 10.0, 62.893170152631150313),
        (50.0, 30.0, 4.0736431975685874201),
        (50.0, 100.0, -89.876132578510445022),
    ];
}

/// `ln K_nu(z)` by the trapezoidal rule on the integral representation,
/// accumulated in the log domain.
fn quadrature_ln_k(nu: f64, z: f64) -> f64 {
    let h = 0.002;
    let ln_f = |t: f64| -z * t.cosh() + ln_cosh(nu * t);
    // integrand is log-concave enough here: walk until it is 60 nats below its peak
    let mut values = Vec::new();
    let mut peak = f64::NEG_INFINITY;
    let mut t = 0.0;
    loop {
        let v = ln_f(t);
        peak = peak.max(v);
        values.push(v);
        if v < peak - 60.0 && t > 1.0 {
            break;
        }
        t += h;
    }
    let sum: f64 = values
        .iter()
        .enumerate()
        .map(|(i, v)| if i == 0 { 0.5 } else { 1.0 } * (v - peak).exp())
        .sum();
    peak + (sum * h).ln()
}

fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (0.5 * (1.0 + (-2.0 * a).exp())).ln()
}

#[test]
fn matches_frozen_high_precision_table() {
    let mut worst = 0.0f64;
    for &(nu, z, ln_k) in reference::LN_BESSEL_K_TABLE {
        let order = BesselOrder::new(nu).unwrap();
        let ln = log_bessel_k(&order, z).unwrap();
        assert!(
            (ln - ln_k).abs() <= 1e-10 * ln_k.abs().max(1.0),
            "ln K_{nu}({z}): got {ln}, expected {ln_k}"
        );
        if ln_k < 700.0 {
            let k = bessel_k(&order, z).unwrap();
            let rel = (k / ln_k.exp() - 1.0).abs();
            worst = worst.max(rel);
            assert!(rel <= 1e-10, "K_{nu}({z}): relative error {rel:e}");
        } else {
            assert!(bessel_k(&order, z).is_err());
        }
    }
    eprintln!("worst relative error against table: {worst:e}");
}

#[test]
fn matches_quadrature_on_lattice() {
    let nus = [0.05, 0.25, 0.5, 0.75, 1.0, 1.25, 2.0, 3.3, 4.5, 6.0, 9.9, 12.0, 25.0, 41.7, 50.0];
    let zs = [1e-6, 1e-4, 0.01, 0.3, 1.0, 1.99, 2.0, 2.01, 4.0, 8.0, 20.0, 55.0, 100.0];
    for &nu in &nus {
        for &z in &zs {
            let expected = quadrature_ln_k(nu, z);
            let got = log_bessel_k(&BesselOrder::new(nu).unwrap(), z).unwrap();
            // log-domain error translates to relative error in K
            assert!(
                (got - expected).abs() <= 1e-10,
                "ln K_{nu}({z}): got {got}, quadrature {expected}"
            );
        }
    }
}

#[test]
fn recurrence_residual() {
    for i in 0..=38 {
        let nu = 1.0 + 0.5 * i as f64;
        for j in 0..50 {
            let z = 0.01 * (3000f64).powf(j as f64 / 49.0);
            let k = |v: f64| bessel_k_any_order(v, z).unwrap();
            let (lo, mid, hi) = (k(nu - 1.0), k(nu), k(nu + 1.0));
            let residual = (hi - lo - 2.0 * nu / z * mid).abs() / hi;
            assert!(residual <= 1e-8, "nu={nu} z={z} residual={residual:e}");
        }
    }
}

#[test]
fn monotone_in_argument_and_order() {
    let zs: Vec<f64> = (0..60).map(|j| 0.02 * 1.12f64.powi(j)).collect();
    for nu in [0.3, 1.0, 1.5, 2.7, 8.0] {
        let order = BesselOrder::new(nu).unwrap();
        let values: Vec<f64> = zs.iter().map(|&z| bessel_k(&order, z).unwrap()).collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]), "not decreasing in z for nu={nu}");
    }
    for &z in &[0.05, 0.5, 1.0, 3.0, 10.0] {
        let values: Vec<f64> = (1..60)
            .map(|i| log_bessel_k(&BesselOrder::new(0.25 * i as f64).unwrap(), z).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] > w[0]), "not increasing in nu for z={z}");
    }
}

#[test]
fn order_zero_reference() {
    // K_0(1) and K_0(0.01), 40-digit reference values
    assert!((bessel_k_any_order(0.0, 1.0).unwrap() / 0.42102443824070833334 - 1.0).abs() < 1e-13);
    assert!((bessel_k_any_order(0.0, 0.01).unwrap() / 4.7212447301610949 - 1.0).abs() < 1e-12);
    assert_eq!(bessel_k_any_order(-2.3, 1.7).unwrap(), bessel_k_any_order(2.3, 1.7).unwrap());
}

#[test]
fn order_reflection_on_half_integers() {
    // K_{-1/2} = K_{1/2} and K_{3/2} = K_{-1/2} + (1/z) K_{1/2}
    for &z in &[0.01, 0.7, 3.0, 40.0] {
        let half = bessel_k(&BesselOrder::new(0.5).unwrap(), z).unwrap();
        let three_halves = bessel_k(&BesselOrder::new(1.5).unwrap(), z).unwrap();
        let reflected = three_halves - half / z;
        assert!((reflected / half - 1.0).abs() < 1e-12);
    }
}

#[test]
fn log_and_linear_paths_agree() {
    for i in 1..=40 {
        let nu = 0.37 * i as f64;
        let order = BesselOrder::new(nu).unwrap();
        for &z in &[1e-3, 0.05, 0.9, 2.5, 17.0, 90.0] {
            if let Ok(k) = bessel_k(&order, z) {
                let via_log = log_bessel_k(&order, z).unwrap().exp();
                assert!((via_log / k - 1.0).abs() <= 1e-8, "nu={nu} z={z}");
            }
        }
    }
}

#[test]
fn very_large_orders_match_reference() {
    // 40-digit values on both sides of the switch to the uniform expansion
    for (nu, z, expected) in [
        (999.7, 5.0, 4986.4330417263976148),
        (1000.3, 5.0, 4990.0276241531291193),
        (1000.0, 1000.0, -536.24136319035368649),
        (2500.5, 0.01, 30308.783376870072169),
    ] {
        let got = log_bessel_k(&BesselOrder::new(nu).unwrap(), z).unwrap();
        assert!((got - expected).abs() <= 1e-13 * expected.abs(), "nu={nu} z={z}: {got} vs {expected}");
    }
}

#[test]
fn enormous_order_terminates() {
    let v = log_bessel_k(&BesselOrder::new(1e300).unwrap(), 1.0).unwrap();
    assert!(v.is_finite() && v > 1e302);
}
