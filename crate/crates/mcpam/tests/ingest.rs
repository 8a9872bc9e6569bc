use mcpam::ingest::*;
use mcpam::{ColumnKind, Error};
use proptest::prelude::*;

#[test]
fn csv_round_trip_keeps_points_and_labels() {
    let d = gen_mixed_clusters_sized(3, 20, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    write_csv(&p, &d).unwrap();
    let header = csv_header(&p).unwrap();
    let mut decl = decl_with_label(&header, "label").unwrap();
    let flag = header.iter().position(|h| h == "flag").unwrap();
    decl[flag] = ColumnRole::Categorical;
    let back = load_csv(&p, Some(&decl)).unwrap();
    assert_eq!(back.len(), d.len());
    assert_eq!(back.schema.kinds.iter().filter(|k| **k == ColumnKind::Categorical).count(), 1);
    assert_eq!(ari(back.labels.as_ref().unwrap(), d.labels.as_ref().unwrap()).unwrap(), 1.0);
}

#[test]
fn csv_errors_carry_row_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "a,b\n1,2\n3,x\n").unwrap();
    match load_csv(&p, None) {
        Err(Error::Csv { row, .. }) => assert_eq!(row, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn schema_decl_parsing() {
    let d = parse_schema_decl("numeric,categorical,label,skip").unwrap();
    assert_eq!(d, vec![ColumnRole::Numeric, ColumnRole::Categorical, ColumnRole::Label, ColumnRole::Skip]);
    assert!(parse_schema_decl("numeric,bogus").is_err());
}

#[test]
fn generator_is_seeded() {
    let a = gen_gaussian_mixture(4, 3, 10, 2.0, 9).unwrap();
    let b = gen_gaussian_mixture(4, 3, 10, 2.0, 9).unwrap();
    let c = gen_gaussian_mixture(4, 3, 10, 2.0, 10).unwrap();
    assert_eq!(a.points, b.points);
    assert_ne!(a.points, c.points);
}

proptest! {
    #[test]
    fn ari_invariant_under_relabeling(labels in prop::collection::vec(0usize..5, 2..80), shift in 1usize..7) {
        let renamed: Vec<usize> = labels.iter().map(|l| (l * 13 + shift) % 97).collect();
        prop_assert!((ari(&labels, &renamed).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ari_at_most_one(a in prop::collection::vec(0usize..4, 2..60), seed in 0usize..100) {
        let b: Vec<usize> = a.iter().enumerate().map(|(i, _)| (i * 7 + seed) % 3).collect();
        prop_assert!(ari(&a, &b).unwrap() <= 1.0 + 1e-12);
    }
}
