use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FeatureSet, SpatialTag, StoreError};

/// Splits a set into (train, test).
///
/// Left-tagged records always train and Right-tagged records always test.
/// Untagged records are split by whole tracks: the distinct track ids are
/// shuffled with `seed` and the first `ceil(train_fraction * n_tracks)` go to
/// train. Record order inside each output follows the input.
pub fn split_train_test(
    set: &FeatureSet,
    train_fraction: f64,
    seed: u64,
) -> Result<(FeatureSet, FeatureSet), StoreError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(StoreError::BadFraction(train_fraction));
    }
    if set.is_empty() {
        return Err(StoreError::Empty);
    }

    let mut tracks: Vec<u32> = set
        .records
        .iter()
        .filter(|r| r.spatial_tag == SpatialTag::Untagged)
        .map(|r| r.track_id)
        .collect();
    tracks.sort_unstable();
    tracks.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tracks.shuffle(&mut rng);
    // The small slack keeps products such as 0.7 * 10 from rounding up to 8.
    let n_train = ((train_fraction * tracks.len() as f64) - 1e-9).ceil() as usize;
    let mut train_tracks = tracks[..n_train.min(tracks.len())].to_vec();
    train_tracks.sort_unstable();

    let (train, test): (Vec<_>, Vec<_>) = set.records.iter().cloned().partition(|r| match r.spatial_tag {
        SpatialTag::Left => true,
        SpatialTag::Right => false,
        SpatialTag::Untagged => train_tracks.binary_search(&r.track_id).is_ok(),
    });
    Ok((set.with_records(train), set.with_records(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_store::{FeatureRecord, Scale};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn rec(track_id: u32, session_index: u16, spatial_tag: SpatialTag) -> FeatureRecord {
        FeatureRecord {
            track_id,
            session_index,
            time_norm: 0.0,
            variety_id: 0,
            fungicide: false,
            rot: None,
            spatial_tag,
            features: vec![track_id as f32],
        }
    }

    fn set_of(records: Vec<FeatureRecord>) -> FeatureSet {
        let mut set = FeatureSet::new(1, 108.0, vec!["A".into()], Scale::Patch);
        set.records = records;
        set
    }

    #[test]
    fn left_trains_right_tests() {
        let mut records: Vec<_> = (0..10).map(|i| rec(i, 0, SpatialTag::Left)).collect();
        records.extend((10..20).map(|i| rec(i, 0, SpatialTag::Right)));
        let set = set_of(records);
        let (train, test) = split_train_test(&set, 0.7, 1).unwrap();
        assert_eq!(train.records, set.records[..10]);
        assert_eq!(test.records, set.records[10..]);
    }

    #[test]
    fn untagged_tracks_split_seven_three_deterministically() {
        let records: Vec<_> = (0..10)
            .flat_map(|t| (0..4).map(move |s| rec(t, s, SpatialTag::Untagged)))
            .collect();
        let set = set_of(records);
        let (train, test) = split_train_test(&set, 0.7, 42).unwrap();
        let tracks = |s: &FeatureSet| s.records.iter().map(|r| r.track_id).collect::<BTreeSet<_>>();
        assert_eq!(tracks(&train).len(), 7);
        assert_eq!(tracks(&test).len(), 3);
        assert!(tracks(&train).is_disjoint(&tracks(&test)));
        let again = split_train_test(&set, 0.7, 42).unwrap();
        assert_eq!(again, (train, test));
    }

    #[test]
    fn single_track_goes_to_train() {
        let set = set_of((0..5).map(|s| rec(3, s, SpatialTag::Untagged)).collect());
        let (train, test) = split_train_test(&set, 0.7, 0).unwrap();
        assert_eq!(train.len(), 5);
        assert!(test.is_empty());
    }

    #[test]
    fn rejects_bad_inputs() {
        let set = set_of(vec![]);
        assert_eq!(split_train_test(&set, 0.7, 0), Err(StoreError::Empty));
        let set = set_of(vec![rec(0, 0, SpatialTag::Left)]);
        assert_eq!(split_train_test(&set, 1.0, 0), Err(StoreError::BadFraction(1.0)));
        assert_eq!(split_train_test(&set, 0.0, 0), Err(StoreError::BadFraction(0.0)));
    }

    proptest! {
        #[test]
        fn split_is_a_partition(
            tags in proptest::collection::vec((0u32..12, 0u8..3), 1..60),
            fraction in 0.05f64..0.95,
            seed in any::<u64>(),
        ) {
            // Tracks carry one tag each, as the extractor emits them.
            let records: Vec<_> = tags
                .iter()
                .enumerate()
                .map(|(i, &(t, _))| rec(t, i as u16, SpatialTag::from_wire(tags.iter().find(|x| x.0 == t).unwrap().1).unwrap()))
                .collect();
            let set = set_of(records);
            let (train, test) = split_train_test(&set, fraction, seed).unwrap();
            prop_assert_eq!(train.len() + test.len(), set.len());
            let key = |r: &FeatureRecord| (r.track_id, r.session_index);
            let train_keys: BTreeSet<_> = train.records.iter().map(key).collect();
            let test_keys: BTreeSet<_> = test.records.iter().map(key).collect();
            prop_assert!(train_keys.is_disjoint(&test_keys));
            prop_assert!(train.records.iter().all(|r| r.spatial_tag != SpatialTag::Right));
            prop_assert!(test.records.iter().all(|r| r.spatial_tag != SpatialTag::Left));
            prop_assert_eq!(split_train_test(&set, fraction, seed).unwrap(), (train, test));
        }
    }
}
