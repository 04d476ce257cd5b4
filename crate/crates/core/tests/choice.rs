use std::collections::BTreeMap;

use proptest::prelude::*;
use spsim_core::choice::{
    build_dataset, choice_shares, estimate, estimate_joint, loglik_grad, null_loglik, read_dataset, rho_squared,
    simulate_choices, synthetic_profiles, write_dataset, ChoiceError, ChoiceObservation, DesignMatrix, UtilitySpec,
};
use spsim_core::experiment::{
    build_session, City, Preference, RespondentProfile, Session, Stage, TravelMode, TrialParams,
};

fn profile(id: &str, age: f64, female: bool, mode: TravelMode, city: City, hmd: bool) -> RespondentProfile {
    RespondentProfile { id: id.into(), age, female, primary_mode: mode, city, hmd_experience: hmd }
}

fn session(p: RespondentProfile, stage: Stage, pref: Preference) -> Session {
    let mut s = build_session(p, stage, &TrialParams::default()).unwrap();
    s.preference = Some(pref);
    s
}

fn sim(n: usize, stage: Stage, beta: &[f64], scale: f64, seed: u64) -> Vec<ChoiceObservation> {
    let profiles = synthetic_profiles(n, stage, seed);
    simulate_choices(&profiles, beta, &BTreeMap::from([(stage, scale)]), seed + 1000)
}

/// Log-likelihood by the textbook formula, one row at a time.
fn naive_loglik(data: &[ChoiceObservation], beta: &[f64], scales: &BTreeMap<Stage, f64>) -> f64 {
    data.iter()
        .map(|o| {
            let v: f64 = o.x.iter().zip(beta).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-scales[&o.dataset] * v).exp());
            if o.chosen {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

#[test]
fn covariates_of_a_male_cyclist_at_the_mean_age() {
    let sessions = vec![
        session(profile("a", 26.0, false, TravelMode::Bike, City::Montreal, false), Stage::Vire, Preference::Av),
        session(profile("b", 20.0, true, TravelMode::Car, City::Toronto, true), Stage::Vire, Preference::Current),
        session(profile("c", 32.0, false, TravelMode::Walk, City::Toronto, false), Stage::Vire, Preference::Av),
    ];
    let data = build_dataset(&sessions).unwrap();
    assert_eq!(data[0].x, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    assert!(data[0].chosen);
    assert!(!data[1].chosen);
    assert_eq!(data[1].x[5], 1.0);
    // Sample sd of {20, 26, 32} is 6.
    assert!((data[1].x[1] + 1.0).abs() < 1e-12);
    assert!((data[2].x[1] - 1.0).abs() < 1e-12);
}

#[test]
fn text_stage_rows_have_no_hmd_column() {
    let sessions = vec![
        session(profile("a", 24.0, true, TravelMode::Car, City::Toronto, true), Stage::Text, Preference::Av),
        session(profile("b", 28.0, false, TravelMode::Bike, City::Montreal, false), Stage::Text, Preference::Av),
    ];
    let data = build_dataset(&sessions).unwrap();
    assert_eq!(data[0].x.len(), 5);
    assert_eq!(data[0].x[0], 1.0);
    assert_eq!(&data[0].x[2..], &[1.0, 0.0, 1.0]);
    assert_eq!(data[1].x[3], 1.0);
}

#[test]
fn one_row_per_session_and_stage() {
    let people = spsim_core::experiment::synthetic_respondents(42, 3);
    let mut sessions = Vec::new();
    for stage in [Stage::Text, Stage::Visual] {
        for (i, p) in people.iter().enumerate() {
            let pref = if i % 2 == 0 { Preference::Av } else { Preference::Current };
            sessions.push(session(p.clone(), stage, pref));
        }
    }
    let data = build_dataset(&sessions).unwrap();
    let shares = choice_shares(&data);
    assert_eq!(shares[&Stage::Text], (42, 0.5));
    assert_eq!(shares[&Stage::Visual].0, 42);
}

#[test]
fn missing_preference_is_an_error() {
    let s = build_session(profile("a", 30.0, true, TravelMode::Car, City::Toronto, false), Stage::Text, &TrialParams::default())
        .unwrap();
    assert!(matches!(build_dataset(&[s]), Err(ChoiceError::MissingPreference(id)) if id == "a-text"));
}

#[test]
fn zero_coefficients_give_the_null_likelihood() {
    let data = sim(42, Stage::Visual, &[0.3, -0.2, 0.5, 0.1, -0.4], 1.0, 9);
    let spec = UtilitySpec::for_data(&data, None).unwrap();
    let (l, _) = loglik_grad(&data, &spec, &[0.0; 5], &[1.0]).unwrap();
    assert!((l - 42.0 * 0.5f64.ln()).abs() < 1e-12);
    assert!((l + 29.112).abs() < 1e-3);
    assert!((l - null_loglik(42)).abs() < 1e-12);
}

#[test]
fn likelihood_matches_the_textbook_formula() {
    let mut data = sim(200, Stage::Text, &[0.2, 0.4, -0.3, 0.6, -0.1], 1.0, 4);
    data.extend(sim(200, Stage::Vire, &[0.2, 0.4, -0.3, 0.6, -0.1, 0.5], 1.0, 5));
    let spec = UtilitySpec::for_data(&data, None).unwrap();
    let beta = [0.1, -0.5, 0.8, 0.3, -0.2, 0.7];
    let scales = BTreeMap::from([(Stage::Text, 1.3), (Stage::Vire, 1.0)]);
    let (l, _) = loglik_grad(&data, &spec, &beta, &[1.3, 1.0]).unwrap();
    assert!((l - naive_loglik(&data, &beta, &scales)).abs() < 1e-9);
}

#[test]
fn gradient_matches_central_differences() {
    let mut data = sim(300, Stage::Text, &[0.2, 0.4, -0.3, 0.6, -0.1], 0.8, 11);
    data.extend(sim(300, Stage::Vire, &[0.2, 0.4, -0.3, 0.6, -0.1, 0.5], 1.0, 12));
    let spec = UtilitySpec::for_data(&data, None).unwrap();
    let beta = vec![0.3, -0.4, 0.2, 0.9, -0.6, 0.4];
    let scales = vec![0.9, 1.0];
    let (_, g) = loglik_grad(&data, &spec, &beta, &scales).unwrap();
    let h = 1e-6;
    let at = |b: &[f64], s: &[f64]| loglik_grad(&data, &spec, b, s).unwrap().0;
    for a in 0..beta.len() {
        let (mut up, mut dn) = (beta.clone(), beta.clone());
        up[a] += h;
        dn[a] -= h;
        let fd = (at(&up, &scales) - at(&dn, &scales)) / (2.0 * h);
        assert!((fd - g[a]).abs() <= 1e-5 * g[a].abs().max(1.0), "beta {a}: {fd} vs {}", g[a]);
    }
    let fd = (at(&beta, &[0.9 + h, 1.0]) - at(&beta, &[0.9 - h, 1.0])) / (2.0 * h);
    assert!((fd - g[6]).abs() <= 1e-5 * g[6].abs().max(1.0));
}

#[test]
fn hessian_matches_differences_of_the_gradient() {
    let mut data = sim(300, Stage::Text, &[0.2, 0.4, -0.3, 0.6, -0.1], 0.8, 21);
    data.extend(sim(300, Stage::Visual, &[0.2, 0.4, -0.3, 0.6, -0.1], 1.0, 22));
    let spec = UtilitySpec::for_data(&data, None).unwrap();
    let d: DesignMatrix<f64> = spec.design(&data).unwrap();
    let theta = vec![0.3, -0.4, 0.2, 0.9, -0.6, 1.2];
    let ev = d.evaluate(&theta, true);
    let n = d.dim();
    let h = 1e-6;
    for b in 0..n {
        let (mut up, mut dn) = (theta.clone(), theta.clone());
        up[b] += h;
        dn[b] -= h;
        let (gu, gd) = (d.evaluate(&up, false).gradient, d.evaluate(&dn, false).gradient);
        for a in 0..n {
            let fd = (gu[a] - gd[a]) / (2.0 * h);
            let an = ev.hessian[a * n + b];
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "H[{a},{b}]: {fd} vs {an}");
        }
    }
}

#[test]
fn rho_squared_of_the_reported_fits() {
    let l0 = -29.112;
    assert!((rho_squared(-18.98, l0).unwrap() - 0.348).abs() < 5e-4);
    assert!((rho_squared(-25.28, l0).unwrap() - 0.132).abs() < 5e-4);
    assert!((rho_squared(-25.18, l0).unwrap() - 0.135).abs() < 5e-4);
    assert_eq!(rho_squared(l0, l0).unwrap(), 0.0);
}

#[test]
fn balanced_intercept_only_model_sits_at_the_null() {
    let data: Vec<ChoiceObservation> = (0..40)
        .map(|i| ChoiceObservation { respondent: format!("r{i}"), dataset: Stage::Text, x: vec![1.0], chosen: i % 2 == 0 })
        .collect();
    let spec = UtilitySpec::for_data(&data, None).unwrap();
    let r = estimate(&data, &spec).unwrap();
    assert!(r.beta[0].value.abs() < 1e-9);
    assert!((r.loglik - r.null_loglik).abs() < 1e-9);
    // Binomial information at p = 1/2: var = 4/n.
    assert!((r.beta[0].std_err - (4.0f64 / 40.0).sqrt()).abs() < 1e-9);
}

#[test]
fn coefficients_are_recovered_from_5000_rows() {
    let truth = [-0.4, 0.6, -0.9, 1.1, 0.5];
    let data = sim(5000, Stage::Visual, &truth, 1.0, 31);
    let spec = UtilitySpec::for_data(&data, None).unwrap();
    let r = estimate(&data, &spec).unwrap();
    assert!(r.converged);
    for (b, t) in r.beta.iter().zip(truth) {
        assert!((b.value - t).abs() < 3.0 * b.std_err, "{} vs {t} (se {})", b.value, b.std_err);
    }
}

#[test]
fn identical_populations_have_unit_relative_scale() {
    let truth = [-0.4, 0.6, -0.9, 1.1, 0.5];
    let mut data = sim(3000, Stage::Text, &truth, 1.0, 41);
    data.extend(sim(3000, Stage::Visual, &truth, 1.0, 43));
    let spec = UtilitySpec::for_data(&data, None).unwrap();
    let r = estimate_joint(&data, &spec).unwrap();
    let s = r.scale(Stage::Text).unwrap();
    assert!((s.value - 1.0).abs() < 2.0 * s.std_err.unwrap(), "{} ± {:?}", s.value, s.std_err);
    assert_eq!(r.scale(Stage::Visual).unwrap().std_err, None);
}

#[test]
fn scaled_utilities_recover_their_scale() {
    let truth = [-0.4, 0.6, -0.9, 1.1, 0.5];
    let mut data = sim(4000, Stage::Text, &truth, 1.16, 51);
    data.extend(sim(4000, Stage::Visual, &truth, 1.0, 53));
    let spec = UtilitySpec::for_data(&data, Some(Stage::Visual)).unwrap();
    let r = estimate_joint(&data, &spec).unwrap();
    let s = r.scale(Stage::Text).unwrap();
    let se = s.std_err.unwrap();
    assert!((s.value - 1.16).abs() <= 2.0 * se, "{} ± {se}", s.value);
}

#[test]
fn swapping_the_reference_rescales_coefficients() {
    let truth = [-0.4, 0.6, -0.9, 1.1, 0.5];
    let mut data = sim(1500, Stage::Text, &truth, 0.7, 61);
    data.extend(sim(1500, Stage::Visual, &truth, 1.0, 63));
    let by_visual = estimate_joint(&data, &UtilitySpec::for_data(&data, Some(Stage::Visual)).unwrap()).unwrap();
    let by_text = estimate_joint(&data, &UtilitySpec::for_data(&data, Some(Stage::Text)).unwrap()).unwrap();
    let mu_text = by_visual.scale(Stage::Text).unwrap().value;
    let mu_visual = by_text.scale(Stage::Visual).unwrap().value;
    assert!((mu_text * mu_visual - 1.0).abs() < 1e-6);
    for (a, b) in by_visual.beta_values().iter().zip(by_text.beta_values()) {
        assert!((a * mu_text - b).abs() < 1e-6, "{a} * {mu_text} vs {b}");
    }
    assert!((by_visual.loglik - by_text.loglik).abs() < 1e-8);
}

#[test]
fn huge_intercept_saturates_choices() {
    let profiles = synthetic_profiles(500, Stage::Text, 7);
    let data = simulate_choices(&profiles, &[60.0, 0.0, 0.0, 0.0, 0.0], &BTreeMap::new(), 1);
    assert!(data.iter().all(|o| o.chosen));
}

#[test]
fn zero_coefficients_give_even_shares() {
    let profiles = synthetic_profiles(20_000, Stage::Visual, 8);
    let data = simulate_choices(&profiles, &[0.0; 5], &BTreeMap::new(), 2);
    let share = choice_shares(&data)[&Stage::Visual].1;
    // 99.9% binomial interval.
    assert!((share - 0.5).abs() < 3.3 * (0.25f64 / 20_000.0).sqrt(), "{share}");
}

#[test]
fn simulation_is_seeded() {
    let profiles = synthetic_profiles(300, Stage::Vire, 9);
    let beta = [0.1, 0.2, -0.3, 0.4, -0.5, 0.6];
    let scales = BTreeMap::from([(Stage::Vire, 1.2)]);
    assert_eq!(simulate_choices(&profiles, &beta, &scales, 5), simulate_choices(&profiles, &beta, &scales, 5));
    assert_ne!(simulate_choices(&profiles, &beta, &scales, 5), simulate_choices(&profiles, &beta, &scales, 6));
}

#[test]
fn everyone_choosing_one_side_is_separation() {
    let data: Vec<ChoiceObservation> = (0..10)
        .map(|i| ChoiceObservation { respondent: format!("r{i}"), dataset: Stage::Text, x: vec![1.0, i as f64], chosen: true })
        .collect();
    let spec = UtilitySpec::for_data(&data, None).unwrap();
    assert!(matches!(estimate(&data, &spec), Err(ChoiceError::NoVariation("current"))));
}

#[test]
fn a_perfect_predictor_is_separation() {
    let data: Vec<ChoiceObservation> = (0..40)
        .map(|i| ChoiceObservation {
            respondent: format!("r{i}"),
            dataset: Stage::Text,
            x: vec![1.0, (i as f64) - 19.5],
            chosen: i >= 20,
        })
        .collect();
    let spec = UtilitySpec::for_data(&data, None).unwrap();
    let r = estimate(&data, &spec);
    assert!(matches!(r, Err(ChoiceError::Separation { .. })), "{r:?}");
}

#[test]
fn a_constant_covariate_is_singular() {
    let mut data = sim(200, Stage::Text, &[0.3, 0.5, 0.0, 0.0, 0.0], 1.0, 71);
    for o in &mut data {
        o.x[4] = 1.0;
    }
    let spec = UtilitySpec::for_data(&data, None).unwrap();
    assert!(matches!(estimate(&data, &spec), Err(ChoiceError::SingularInformation)));
}

#[test]
fn non_finite_covariates_are_rejected() {
    let mut data = sim(20, Stage::Text, &[0.3; 5], 1.0, 72);
    data[3].x[1] = f64::NAN;
    let spec = UtilitySpec::for_data(&data, None).unwrap();
    assert!(matches!(estimate(&data, &spec), Err(ChoiceError::NonFinite { row: 3, .. })));
}

#[test]
fn unknown_reference_is_rejected() {
    let data = sim(20, Stage::Text, &[0.3; 5], 1.0, 73);
    assert!(matches!(UtilitySpec::for_data(&data, Some(Stage::Vire)), Err(ChoiceError::InvalidSpec(_))));
}

#[test]
fn hmd_outside_the_immersive_stage_is_rejected() {
    let csv = "ASC_AV,Age,Female,Bike_male,Toronto,HMD,dataset,chosen,respondent\n1,0,1,0,1,1,text,1,a\n";
    assert!(matches!(read_dataset(csv.as_bytes()), Err(ChoiceError::InvalidRow { row: 1, .. })));
}

fn observations() -> impl Strategy<Value = Vec<ChoiceObservation>> {
    let row = (prop::collection::vec(-2.0f64..2.0, 4), any::<bool>(), 0usize..2).prop_map(|(x, chosen, g)| {
        ChoiceObservation {
            respondent: String::new(),
            dataset: if g == 0 { Stage::Text } else { Stage::Visual },
            x: std::iter::once(1.0).chain(x).collect(),
            chosen,
        }
    });
    prop::collection::vec(row, 2..60)
}

proptest! {
    #[test]
    fn loglik_is_never_positive(data in observations(), beta in prop::collection::vec(-5.0f64..5.0, 5), mu in 0.1f64..3.0) {
        let spec = UtilitySpec::for_data(&data, None).unwrap();
        let scales = vec![mu; spec.group_count()];
        let (l, _) = loglik_grad(&data, &spec, &beta, &scales).unwrap();
        prop_assert!(l <= 0.0);
    }

    #[test]
    fn loglik_depends_on_scale_times_beta(
        data in observations(),
        beta in prop::collection::vec(-3.0f64..3.0, 5),
        mu in 0.2f64..3.0,
        c in 0.2f64..5.0,
    ) {
        let spec = UtilitySpec::for_data(&data, None).unwrap();
        let d: DesignMatrix<f64> = spec.design(&data).unwrap();
        let scales = vec![mu; d.groups];
        let scaled_beta: Vec<f64> = beta.iter().map(|b| b * c).collect();
        let scaled_mu: Vec<f64> = scales.iter().map(|s| s / c).collect();
        let a = d.loglik(&beta, &scales);
        let b = d.loglik(&scaled_beta, &scaled_mu);
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn csv_round_trip(data in observations()) {
        let mut buf = Vec::new();
        write_dataset(&data, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), data.len());
        for (a, b) in back.iter().zip(&data) {
            prop_assert_eq!(&a.x, &b.x);
            prop_assert_eq!(a.chosen, b.chosen);
            prop_assert_eq!(a.dataset, b.dataset);
        }
    }
}
