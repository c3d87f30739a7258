//! Brute-force oracle for the median compositor: random stacks with
//! random nodata and cloud masks, exact equality, permutation invariance.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use forest_core::composite::{filter_scenes, median_composite, CompositeConfig, Scene};
use forest_core::grid::Grid;
use forest_core::raster::{Band, DateInfo, LonLat, RasterImage};

fn random_scene(rng: &mut ChaCha8Rng, id: usize, w: usize, h: usize) -> Scene {
    let n = w * h;
    let values: Vec<f32> = (0..n).map(|_| rng.gen_range(0.0..1.0f32)).collect();
    let cloud: Vec<f32> = (0..n)
        .map(|_| if rng.gen_bool(0.2) { 1.0 } else { 0.0 })
        .collect();
    let nodata: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.15)).collect();
    let mut bands = BTreeMap::new();
    bands.insert(Band::Red, Grid::from_vec(w, h, values));
    bands.insert(Band::QaCloud, Grid::from_vec(w, h, cloud));
    bands.insert(Band::QaCirrus, Grid::from_vec(w, h, vec![0.0; n]));
    let image = RasterImage::new(
        15.0,
        LonLat { lon: 110.0, lat: -2.0 },
        DateInfo::Acquired(
            NaiveDate::from_ymd_opt(2015, 1 + (id % 12) as u32, 1 + (id % 28) as u32).unwrap(),
        ),
        bands,
        Grid::from_vec(w, h, nodata),
    )
    .unwrap();
    Scene::new(format!("s{id}"), image).unwrap()
}

/// Straight per-pixel oracle: collect valid values, sort, take the
/// median (mean of middles for even counts).
fn oracle_median(scenes: &[&Scene], i: usize) -> Option<f32> {
    let mut vals: Vec<f32> = scenes
        .iter()
        .filter(|s| {
            !s.image.nodata().as_slice()[i]
                && s.image.band(Band::QaCloud).unwrap().as_slice()[i] != 1.0
        })
        .map(|s| s.image.band(Band::Red).unwrap().as_slice()[i])
        .collect();
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(f32::total_cmp);
    let n = vals.len();
    Some(if n % 2 == 1 {
        vals[n / 2]
    } else {
        ((vals[n / 2 - 1] as f64 + vals[n / 2] as f64) / 2.0) as f32
    })
}

#[test]
fn median_matches_sort_oracle_on_random_stacks() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0ffee);
    let config = CompositeConfig::default();
    for case in 0..200 {
        let w = rng.gen_range(1..=16);
        let h = rng.gen_range(1..=16);
        let k = rng.gen_range(1..=7);
        let scenes: Vec<Scene> = (0..k)
            .map(|i| random_scene(&mut rng, case * 10 + i, w, h))
            .collect();
        let refs: Vec<&Scene> = scenes.iter().collect();
        let composite = median_composite(&refs, (2015, 2018), &config).unwrap();
        let red = composite.band(Band::Red).unwrap();
        for i in 0..w * h {
            match oracle_median(&refs, i) {
                Some(expected) => {
                    assert_eq!(red.as_slice()[i], expected, "case {case}, pixel {i}");
                    assert!(!composite.nodata().as_slice()[i]);
                }
                None => assert!(
                    composite.nodata().as_slice()[i],
                    "case {case}, pixel {i} should be nodata"
                ),
            }
        }
    }
}

#[test]
fn median_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xbead);
    let config = CompositeConfig::default();
    for case in 0..30 {
        let scenes: Vec<Scene> = (0..5).map(|i| random_scene(&mut rng, case * 10 + i, 8, 8)).collect();
        let refs: Vec<&Scene> = scenes.iter().collect();
        let baseline = median_composite(&refs, (2015, 2018), &config).unwrap();
        let mut shuffled: Vec<&Scene> = scenes.iter().collect();
        shuffled.shuffle(&mut rng);
        let permuted = median_composite(&shuffled, (2015, 2018), &config).unwrap();
        assert_eq!(
            baseline.band(Band::Red).unwrap(),
            permuted.band(Band::Red).unwrap()
        );
        assert_eq!(baseline.nodata(), permuted.nodata());
    }
}

#[test]
fn composite_of_identical_scenes_is_the_scene() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = random_scene(&mut rng, 0, 8, 8);
    let copies: Vec<Scene> = (0..4)
        .map(|i| Scene::new(format!("c{i}"), base.image.clone()).unwrap())
        .collect();
    let refs: Vec<&Scene> = copies.iter().collect();
    let composite = median_composite(&refs, (2015, 2018), &CompositeConfig::default()).unwrap();
    let red = composite.band(Band::Red).unwrap();
    let orig = base.image.band(Band::Red).unwrap();
    for i in 0..red.len() {
        if !composite.nodata().as_slice()[i] {
            assert_eq!(red.as_slice()[i], orig.as_slice()[i]);
        }
    }
}

#[test]
fn odd_count_median_values_occur_in_some_scene() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..20 {
        let scenes: Vec<Scene> = (0..5).map(|i| random_scene(&mut rng, case * 8 + i, 6, 6)).collect();
        let refs: Vec<&Scene> = scenes.iter().collect();
        let composite =
            median_composite(&refs, (2015, 2018), &CompositeConfig::default()).unwrap();
        let red = composite.band(Band::Red).unwrap();
        for i in 0..red.len() {
            if composite.nodata().as_slice()[i] {
                continue;
            }
            let valid_count = refs
                .iter()
                .filter(|s| {
                    !s.image.nodata().as_slice()[i]
                        && s.image.band(Band::QaCloud).unwrap().as_slice()[i] != 1.0
                })
                .count();
            if valid_count % 2 == 1 {
                let v = red.as_slice()[i];
                assert!(refs
                    .iter()
                    .any(|s| s.image.band(Band::Red).unwrap().as_slice()[i] == v));
            }
        }
    }
}

#[test]
fn filtering_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let scenes: Vec<Scene> = (0..8).map(|i| random_scene(&mut rng, i, 10, 10)).collect();
    let once = filter_scenes(&scenes).unwrap();
    let twice = filter_scenes(&once).unwrap();
    assert_eq!(once.len(), twice.len());
    for (a, b) in once.iter().zip(&twice) {
        assert_eq!(a.id, b.id);
    }
}
