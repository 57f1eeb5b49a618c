mod common;

use mimar::dataset::{load_csv, write_csv, Dataset, Role, Schema};
use mimar::estimators::{fit_cc, fit_full_ml, fit_mi, fit_sipw};
use mimar::imputation::{build_donor_index, impute, DonorPool, Method};
use mimar::logit::{inv_logit, SolverOptions};
use mimar::selection::estimate_selection_probs;
use mimar::simulation::{gen_dataset, relative_efficiency, Scenario, StudyConfig};
use mimar::variance::{g_matrix, phi_hat, psi_hat, sstar_mi2, InfluenceSet};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn study1(n: usize, label: &str, seed: u64) -> (Dataset, Dataset) {
    let cfg = StudyConfig::preset(1).unwrap();
    let sc = cfg
        .scenarios()
        .into_iter()
        .find(|s| s.label == label)
        .unwrap();
    let sc = Scenario { n, ..sc };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = gen_dataset(&cfg, &sc, &mut rng).unwrap();
    (g.full, g.observed)
}

fn designs(ds: &Dataset) -> (Vec<Vec<f64>>, Vec<u8>) {
    (0..ds.n())
        .filter_map(|i| ds.design(i).map(|x| (x, ds.record(i).y)))
        .unzip()
}

#[test]
fn full_ml_matches_irls() {
    let (full, _) = study1(200, "0.72", 11);
    let fit = fit_full_ml(&full, &SolverOptions::default()).unwrap();
    let (xs, ys) = designs(&full);
    let oracle = irls(&xs, &ys, &vec![1.0; xs.len()]);
    assert!(
        close(&fit.beta_hat, &oracle, 1e-6),
        "{} vs {}",
        fit.beta_hat,
        oracle
    );
}

#[test]
fn sipw_matches_weighted_irls() {
    let (_, obs) = study1(400, "0.48", 12);
    let table = estimate_selection_probs(&obs);
    let index = build_donor_index(&obs);
    let fit = fit_sipw(&obs, &table, &index, &SolverOptions::default()).unwrap();
    let pis = oracle_selection(&obs);
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for (i, pi) in pis.iter().enumerate() {
        if let Some(x) = obs.design(i) {
            xs.push(x);
            ys.push(obs.record(i).y);
            ws.push(1.0 / pi[0]);
        }
    }
    let oracle = irls(&xs, &ys, &ws);
    assert!(close(&fit.beta_hat, &oracle, 1e-8));
}

#[test]
fn sipw_equals_cc_without_missingness() {
    let (full, _) = study1(300, "0.30", 13);
    let opts = SolverOptions::default();
    let cc = fit_cc(&full, &opts).unwrap();
    let sipw = fit_sipw(
        &full,
        &estimate_selection_probs(&full),
        &build_donor_index(&full),
        &opts,
    )
    .unwrap();
    assert!(close(&cc.beta_hat, &sipw.beta_hat, 1e-12));
}

#[test]
fn sipw_invariant_to_duplication() {
    let (_, obs) = study1(300, "0.48", 14);
    let doubled = obs
        .with_records(obs.records().iter().chain(obs.records()).cloned().collect())
        .unwrap();
    let opts = SolverOptions::default();
    let fit = |ds: &Dataset| {
        fit_sipw(
            ds,
            &estimate_selection_probs(ds),
            &build_donor_index(ds),
            &opts,
        )
        .unwrap()
        .beta_hat
    };
    assert!(close(&fit(&obs), &fit(&doubled), 1e-9));
}

#[test]
fn stratum_score_means_sum_to_zero_at_ml() {
    let (full, _) = study1(300, "0.72", 15);
    let beta = fit_full_ml(&full, &SolverOptions::default())
        .unwrap()
        .beta_hat;
    let s = sstar_mi2(&full, &build_donor_index(&full), &beta).unwrap();
    let total = s.iter().fold(DVector::zeros(4), |acc, v| acc + v);
    assert!(total.amax() < 1e-9, "{total}");
}

#[test]
fn csv_round_trip_preserves_designs() {
    let (_, obs) = study1(120, "0.30", 16);
    let file = tempfile::NamedTempFile::new().unwrap();
    write_csv(&obs, std::fs::File::create(file.path()).unwrap(), "NA").unwrap();
    let schema = Schema::new([
        ("y", Role::Outcome),
        ("x1", Role::X1),
        ("x2", Role::X2),
        ("z", Role::Z),
        ("w1", Role::W),
        ("w2", Role::W),
    ]);
    let back = load_csv(file.path(), &schema).unwrap();
    assert_eq!(back.n(), obs.n());
    for i in 0..obs.n() {
        assert_eq!(back.record(i).pattern(), obs.record(i).pattern());
        assert_eq!(back.record(i).y, obs.record(i).y);
        assert_eq!(back.design(i), obs.design(i));
    }
}

#[test]
fn phi_and_psi_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for t in 0..25 {
        let ds = random_tiny_dataset(&mut rng);
        let beta = DVector::from_fn(ds.design_len(), |k, _| 0.3 - 0.2 * k as f64);
        let table = estimate_selection_probs(&ds);
        let index = build_donor_index(&ds);
        let phi = phi_hat(&ds, &index, &beta, &table).unwrap();
        for (a, b) in phi.vectors.iter().zip(oracle_phi(&ds, &beta)) {
            assert!((a - b).amax() < 1e-12);
        }
        let sets = impute(&ds, &index, Method::Mi2, 3, t).unwrap();
        let psi = psi_hat(&ds, &sets, &index, &beta, &table).unwrap();
        for (a, b) in psi.vectors.iter().zip(oracle_psi(&ds, &sets, &beta)) {
            assert!((a - b).amax() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn inv_logit_symmetric(u in -40.0f64..40.0) {
        prop_assert!((inv_logit(u) + inv_logit(-u) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn relative_efficiency_of_self_is_one(v in prop::collection::vec(0.01f64..10.0, 1..6)) {
        let re = relative_efficiency(&v, &v).unwrap();
        prop_assert!(re.iter().all(|r| (*r - 1.0).abs() < 1e-15));
    }

    #[test]
    fn g_matrix_symmetric(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = random_tiny_dataset(&mut rng);
        let index = build_donor_index(&ds);
        let sets = impute(&ds, &index, Method::Mi1, 3, seed).unwrap();
        let beta = DVector::from_element(ds.design_len(), 0.1);
        let g = g_matrix(&sets, &beta).matrix;
        prop_assert!((&g - g.transpose()).amax() < 1e-15);
    }

    #[test]
    fn identical_influence_vectors_collapse(v in prop::collection::vec(-5.0f64..5.0, 1..5), n in 1usize..20) {
        let x = DVector::from_vec(v);
        let set = InfluenceSet { method: Method::Mi1, vectors: vec![x.clone(); n] };
        prop_assert!((set.second_moment() - &x * x.transpose()).amax() < 1e-12);
    }

    #[test]
    fn pool_selection_stays_in_pool(donors in prop::collection::btree_set(0usize..500, 1..30), u in 0.0f64..=1.0) {
        let pool = DonorPool::uniform(donors.iter().copied().collect());
        let d = pool.select(u).unwrap();
        prop_assert!(donors.contains(&d));
    }

    #[test]
    fn selection_probabilities_sum_to_one(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = random_tiny_dataset(&mut rng);
        let table = estimate_selection_probs(&ds);
        let oracle = oracle_selection(&ds);
        for (i, pi) in oracle.iter().enumerate() {
            prop_assert_eq!(table.for_record(i), *pi);
            prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn phi_sum_tracks_mi1_score_at_large_n() {
    let (_, obs) = study1(20_000, "0.48", 18);
    let m = 200;
    let table = estimate_selection_probs(&obs);
    let index = build_donor_index(&obs);
    let sets = impute(&obs, &index, Method::Mi1, m, 19).unwrap();
    let beta = fit_mi(&sets, &SolverOptions::default()).unwrap().beta_hat;
    let phi = phi_hat(&obs, &index, &beta, &table).unwrap();
    let root_n = (obs.n() as f64).sqrt();
    let sum = phi.vectors.iter().fold(DVector::zeros(4), |acc, v| acc + v) / root_n;
    let spread = phi.second_moment();
    for k in 0..4 {
        // At the MI1 root the remainder is imputation noise of order 1/sqrt(M).
        let bound = 4.0 * (spread[(k, k)] / m as f64).sqrt();
        assert!(
            sum[k].abs() <= bound,
            "coefficient {k}: {} > {bound}",
            sum[k]
        );
    }
}
