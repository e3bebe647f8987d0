use std::collections::BTreeMap;

use aucal::dataset::roundtrip_schema;
use aucal::synth::{generate, SynthConfig};
use aucal::{binarize, read_dataset, write_dataset, AnnotatedRecord, Dataset, Schema, Split};
use proptest::prelude::*;

fn record_strategy(n_aus: usize, dim: usize) -> impl Strategy<Value = AnnotatedRecord> {
    (
        prop::collection::vec(0.0f64..=5.0, n_aus),
        prop::collection::vec(any::<bool>(), n_aus),
        any::<bool>(),
        prop::option::of(any::<bool>()),
        prop::sample::select(vec!["F", "M", "X"]),
        prop::collection::vec(-1e6f64..1e6, dim),
        any::<bool>(),
    )
        .prop_map(move |(intensities, presence, label, fair, gender, features, test)| AnnotatedRecord {
            id: String::new(),
            au_intensities: intensities.iter().enumerate().map(|(i, &v)| (format!("AU{}", i + 1), v)).collect(),
            au_presence: presence
                .iter()
                .enumerate()
                .map(|(i, &b)| (format!("AU{}", i + 1), u8::from(b)))
                .collect(),
            label: u8::from(label),
            fair_label: fair.map(u8::from),
            group: BTreeMap::from([("gender".to_string(), gender.to_string())]),
            features,
            split: if test { Split::Test } else { Split::Train },
        })
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (1usize..4, 0usize..3).prop_flat_map(|(n_aus, dim)| {
        prop::collection::vec(record_strategy(n_aus, dim), 1..40).prop_map(move |mut records| {
            // fair labels are written only when every record has one
            let all_fair = records.iter().all(|r| r.fair_label.is_some());
            for (i, r) in records.iter_mut().enumerate() {
                r.id = format!("r{i:03}");
                if !all_fair {
                    r.fair_label = None;
                }
            }
            let levels = BTreeMap::from([("gender".to_string(), vec!["M".into(), "F".into(), "X".into()])]);
            let aus = (1..=n_aus).map(|i| format!("AU{i}")).collect();
            Dataset::new(records, levels, aus, dim).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_read_is_identity(ds in dataset_strategy()) {
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let (back, report) = read_dataset(buf.as_slice(), &roundtrip_schema(&ds)).unwrap();
        prop_assert_eq!(report.dropped_count, 0);
        prop_assert_eq!(back.records(), ds.records());
        prop_assert_eq!(back.attribute_levels(), ds.attribute_levels());
        prop_assert_eq!(back.feature_dim(), ds.feature_dim());
    }

    #[test]
    fn binarize_matches_strict_comparison(ds in dataset_strategy(), t in 0.0f64..5.0) {
        let thresholds: BTreeMap<String, f64> = ds.au_ids().iter().map(|a| (a.clone(), t)).collect();
        let out = binarize(&ds, &thresholds, None).unwrap();
        for (a, b) in ds.records().iter().zip(out.records()) {
            prop_assert_eq!(a.label, b.label);
            for (au, &v) in &a.au_intensities {
                prop_assert_eq!(b.au_presence[au], u8::from(v > t));
            }
        }
    }
}

#[test]
fn synthetic_dataset_survives_csv() {
    let ds = generate(&SynthConfig::happy(300, 1.0, 5)).unwrap();
    let mut buf = Vec::new();
    write_dataset(&ds, &mut buf).unwrap();
    let (back, _) = read_dataset(buf.as_slice(), &roundtrip_schema(&ds)).unwrap();
    assert_eq!(back.records(), ds.records());
    assert_eq!(back.levels("gender").unwrap(), ["M", "F"]);

    let mut again = Vec::new();
    write_dataset(&back, &mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn categorical_label_with_sorted_levels() {
    let csv = "id,AU6,AU12,label,gender\n\
               a,1.5,2.0,happy,F\n\
               b,0.2,0.1,sad,M\n\
               c,,0.3,happy,M\n";
    let (ds, report) = read_dataset(csv.as_bytes(), &Schema::with_label("happy")).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(report.dropped_ids, ["c"]);
    assert_eq!(ds.levels("gender").unwrap(), ["F", "M"]);
    let labels: Vec<u8> = ds.records().iter().map(|r| r.label).collect();
    assert_eq!(labels, [1, 0]);
}
