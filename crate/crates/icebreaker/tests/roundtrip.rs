use std::collections::{BTreeMap, BTreeSet};

use icebreaker::formats;
use icebreaker_core::dataset::{DatasetSplit, FeatureKind, FeatureSet, RelevanceTable, VideoId};
use icebreaker_core::evaluation::RankingResult;
use proptest::prelude::*;

fn ids(max: usize) -> impl Strategy<Value = Vec<VideoId>> {
    prop::collection::btree_set("[a-zA-Z0-9_.é-]{1,6}", 0..max)
        .prop_map(|set| set.into_iter().map(|s| VideoId::new(s).unwrap()).collect())
}

fn feature_set() -> impl Strategy<Value = FeatureSet> {
    (any::<bool>(), 1usize..5, ids(8)).prop_flat_map(|(frames, dim, ids)| {
        let kind = if frames { FeatureKind::FrameLevel } else { FeatureKind::VideoLevel };
        let rows = if frames { 1usize..4 } else { 1usize..2 };
        let entries = ids
            .into_iter()
            .map(|id| (Just(id), rows.clone().prop_flat_map(move |r| prop::collection::vec(-1e6f32..1e6, r * dim))))
            .collect::<Vec<_>>();
        entries.prop_map(move |entries| {
            let mut fs = FeatureSet::new(kind, dim).unwrap();
            for (id, values) in entries {
                fs.insert(id, values).unwrap();
            }
            fs
        })
    })
}

fn relevance() -> impl Strategy<Value = RelevanceTable> {
    ids(10).prop_flat_map(|ids| {
        let n = ids.len();
        prop::collection::vec(prop::collection::vec(0..n.max(1), 0..n.max(1)), n).prop_map(move |lists| {
            let mut table = RelevanceTable::new();
            for (q, picks) in ids.iter().zip(lists) {
                let list: BTreeSet<&VideoId> = picks.iter().map(|&i| &ids[i]).filter(|c| *c != q).collect();
                table.push(q.clone(), list.into_iter().cloned().collect()).unwrap();
            }
            table
        })
    })
}

fn split() -> impl Strategy<Value = DatasetSplit> {
    (ids(12), prop::collection::vec(0u8..3, 12)).prop_map(|(ids, parts)| {
        let mut sets: [BTreeSet<VideoId>; 3] = Default::default();
        for (id, p) in ids.into_iter().zip(parts) {
            sets[usize::from(p)].insert(id);
        }
        let [a, b, c] = sets;
        DatasetSplit::new(a, b, c).unwrap()
    })
}

fn rankings() -> impl Strategy<Value = Vec<RankingResult>> {
    (ids(6), ids(8), prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 8)).prop_map(
        |(queries, cands, scores)| {
            queries
                .into_iter()
                .map(|q| {
                    let ranked =
                        cands.iter().zip(&scores).filter(|(c, _)| **c != q).map(|(c, s)| (c.clone(), *s)).collect();
                    RankingResult::new(q, ranked).unwrap()
                })
                .filter(|r| !r.is_empty())
                .collect()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn features_decode_encode(fs in feature_set()) {
        let bytes = formats::encode_features(&fs).unwrap();
        let back = formats::decode_features(&bytes).unwrap();
        prop_assert_eq!(&back, &fs);
        prop_assert_eq!(formats::encode_features(&back).unwrap(), bytes);
    }

    #[test]
    fn features_reject_every_truncation(fs in feature_set()) {
        let bytes = formats::encode_features(&fs).unwrap();
        for cut in 0..bytes.len() {
            prop_assert!(formats::decode_features(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn relevance_parse_format(table in relevance()) {
        let text = formats::format_relevance(&table);
        let back = formats::parse_relevance(&text).unwrap();
        prop_assert_eq!(formats::format_relevance(&back), text);
        let rows: BTreeMap<_, _> = table.rows().collect();
        prop_assert_eq!(back.rows().collect::<BTreeMap<_, _>>(), rows);
    }

    #[test]
    fn split_parse_format(split in split()) {
        let text = formats::format_split(&split);
        prop_assert_eq!(formats::parse_split(&text).unwrap(), split);
    }

    #[test]
    fn predictions_parse_format(preds in rankings()) {
        let text = formats::format_predictions(&preds);
        prop_assert_eq!(formats::parse_predictions(&text).unwrap(), preds);
    }
}
