use std::io::Write;

use lowrank_core::data::{
    kfold_split, load_ratings, read_matrix, read_ratings, sample_mask, synth_lowrank, write_matrix,
    Fold, RatingsFormat, RatingsScale,
};
use lowrank_core::{Error, ObservationSet};
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn parse(text: &str, format: RatingsFormat, scale: RatingsScale) -> lowrank_core::Result<ObservationSet> {
    read_ratings(text.as_bytes(), "inline".as_ref(), format, scale).map(|r| r.observations)
}

#[test]
fn noiseless_instance_has_exact_rank() {
    let inst = synth_lowrank(30, 20, 3, 0.0, 4).unwrap();
    let mut sv: Vec<f64> = to_na(&inst.noisy).singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    assert!(sv[2] > 1e-6 * sv[0]);
    assert!(sv[3] <= 1e-9 * sv[0]);
    assert_eq!(inst.noisy, inst.truth);
}

#[test]
fn instances_are_seeded() {
    let a = synth_lowrank(15, 10, 2, 0.1, 9).unwrap();
    let b = synth_lowrank(15, 10, 2, 0.1, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.noisy, synth_lowrank(15, 10, 2, 0.1, 10).unwrap().noisy);
    assert!(synth_lowrank(4, 3, 4, 0.0, 0).is_err());
}

#[test]
fn noise_ratio_matches_monte_carlo() {
    let (m, n, r, d) = (200, 200, 5, 0.1);
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut total = 0.0;
    let trials = 50;
    for _ in 0..trials {
        let a = Array2::from_shape_fn((m, r), |_| rng.sample::<f64, _>(StandardNormal));
        let b = Array2::from_shape_fn((r, n), |_| rng.sample::<f64, _>(StandardNormal));
        let truth = a.dot(&b);
        let noise: f64 = (0..m * n).map(|_| (d * rng.sample::<f64, _>(StandardNormal)).powi(2)).sum();
        total += (noise / truth.iter().map(|v| v * v).sum::<f64>()).sqrt();
    }
    let expected = total / trials as f64;
    for seed in 0..5 {
        let got = synth_lowrank(m, n, r, d, seed).unwrap().noise_rfne();
        assert!((got - expected).abs() <= 0.1 * expected, "seed {seed}: {got} vs {expected}");
    }
}

#[test]
fn mask_examples() {
    assert_eq!(sample_mask(4, 3, 1.0, 1).unwrap().len(), 12);
    assert!(sample_mask(4, 3, 0.0, 1).unwrap().is_empty());
    assert!(sample_mask(4, 3, 1.5, 1).is_err());
    assert!(sample_mask(4, 3, -0.1, 1).is_err());
    assert_eq!(sample_mask(50, 50, 0.2, 3).unwrap(), sample_mask(50, 50, 0.2, 3).unwrap());
    for seed in 0..20 {
        let k = sample_mask(100, 100, 0.3, seed).unwrap().len() as f64;
        let sd = (10_000.0f64 * 0.3 * 0.7).sqrt();
        assert!((k - 3000.0).abs() <= 4.0 * sd, "seed {seed}: {k}");
    }
}

#[test]
fn ratings_parse_example() {
    let obs = parse("1\t2\t5\n2\t1\t3\n2\t2\t4\n", RatingsFormat::TabSeparated, RatingsScale::MOVIELENS)
        .unwrap();
    assert_eq!((obs.nrows(), obs.ncols()), (2, 2));
    let entries: Vec<_> = obs.iter().collect();
    assert_eq!(entries, vec![(0, 0, 5.0), (1, 0, 4.0), (1, 1, 3.0)]);
}

#[test]
fn ratings_ids_are_remapped_in_first_seen_order() {
    let ratings = read_ratings(
        "7\t30\t5\t881250949\n3\t10\t3\t891717742\n7\t10\t4\t878887116\n".as_bytes(),
        "inline".as_ref(),
        RatingsFormat::TabSeparated,
        RatingsScale::MOVIELENS,
    )
    .unwrap();
    assert_eq!(ratings.users, vec!["7", "3"]);
    assert_eq!(ratings.items, vec!["30", "10"]);
    let entries: Vec<_> = ratings.observations.iter().collect();
    assert_eq!(entries, vec![(0, 0, 5.0), (0, 1, 4.0), (1, 1, 3.0)]);
}

#[test]
fn ratings_comma_separated() {
    let obs = parse("1,1,-9.5\n1,2,10\n", RatingsFormat::CommaSeparated, RatingsScale::JESTER).unwrap();
    assert_eq!(obs.values(), &[-9.5, 10.0]);
}

#[test]
fn ratings_errors() {
    let ml = RatingsScale::MOVIELENS;
    let tsv = RatingsFormat::TabSeparated;
    assert!(parse("", tsv, ml).is_err());
    assert!(parse("1,1,11\n", RatingsFormat::CommaSeparated, RatingsScale::JESTER).is_err());
    match parse("1\t1\t5\n1\t2\n", tsv, ml) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
    match parse("1\t1\t5\n2\t1\tfive\n", tsv, ml) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let dup = parse("1\t1\t5\n2\t2\t1\n1\t1\t4\n", tsv, ml);
    assert!(dup.unwrap_err().to_string().contains(":3:"));
    assert!(RatingsScale::new(5.0, 1.0).is_err());
    assert_eq!("csv".parse::<RatingsFormat>().unwrap(), RatingsFormat::CommaSeparated);
}

#[test]
fn ratings_scale_names() {
    assert_eq!("movielens".parse::<RatingsScale>().unwrap(), RatingsScale::MOVIELENS);
    assert_eq!("Jester".parse::<RatingsScale>().unwrap(), RatingsScale::JESTER);
    assert_eq!("0, 10".parse::<RatingsScale>().unwrap(), RatingsScale::new(0.0, 10.0).unwrap());
    assert!("5,1".parse::<RatingsScale>().is_err());
    assert!("1,2,3".parse::<RatingsScale>().is_err());
    assert!("stars".parse::<RatingsScale>().is_err());
}

#[test]
fn load_ratings_from_file() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "1\t2\t5\t0\n2\t1\t3\t0").unwrap();
    let r = load_ratings(file.path(), RatingsFormat::TabSeparated, RatingsScale::MOVIELENS).unwrap();
    assert_eq!(r.observations.len(), 2);
    let missing = load_ratings("/nonexistent/u.data".as_ref(), RatingsFormat::TabSeparated, RatingsScale::MOVIELENS);
    assert!(matches!(missing, Err(Error::Io { .. })));
}

fn dense_set(m: usize, n: usize) -> ObservationSet {
    let entries: Vec<_> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j, (i * n + j) as f64)))
        .collect();
    ObservationSet::from_triplets(m, n, &entries).unwrap()
}

#[test]
fn kfold_sizes_and_partition() {
    let obs = dense_set(400, 250);
    let folds = kfold_split(&obs, 5, 1).unwrap();
    assert_eq!(folds.len(), 5);
    let mut seen = vec![0usize; obs.len()];
    for Fold { train, test } in &folds {
        assert_eq!(test.len(), 20_000);
        assert_eq!(train.len() + test.len(), obs.len());
        for (i, j, v) in test.iter() {
            assert_eq!(v, (i * 250 + j) as f64);
            seen[i * 250 + j] += 1;
        }
        let mut in_train = vec![false; obs.len()];
        for (i, j, _) in train.iter() {
            in_train[i * 250 + j] = true;
        }
        assert!(test.iter().all(|(i, j, _)| !in_train[i * 250 + j]));
    }
    assert!(seen.iter().all(|&c| c == 1));
}

#[test]
fn kfold_small_and_invalid() {
    let obs = dense_set(1, 3);
    let folds = kfold_split(&obs, 2, 0).unwrap();
    let mut sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
    sizes.sort();
    assert_eq!(sizes, vec![1, 2]);
    assert!(kfold_split(&obs, 1, 0).is_err());
    assert!(kfold_split(&obs, 4, 0).is_err());
    assert_eq!(kfold_split(&obs, 3, 8).unwrap(), kfold_split(&obs, 3, 8).unwrap());
}

#[test]
fn evaluable_test_drops_unseen_rows_and_columns() {
    let train = ObservationSet::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 2.0)]).unwrap();
    let test = ObservationSet::from_triplets(3, 3, &[(0, 1, 3.0), (2, 0, 4.0), (1, 2, 5.0)]).unwrap();
    let fold = Fold { train, test };
    let kept: Vec<_> = fold.evaluable_test().unwrap().iter().collect();
    assert_eq!(kept, vec![(0, 1, 3.0)]);
}

#[test]
fn matrix_text_round_trip() {
    let inst = synth_lowrank(7, 5, 2, 0.3, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    write_matrix(&path, &inst.noisy).unwrap();
    assert_eq!(read_matrix(&path).unwrap(), inst.noisy);
    std::fs::write(&path, "2 2\n1 2\n3\n").unwrap();
    assert!(read_matrix(&path).is_err());
}
