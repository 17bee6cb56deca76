mod common;

use std::collections::BTreeSet;

use fiberann::atlas::{build_atlas, load_atlas, save_atlas};
use fiberann::dataset::MetadataRow;
use fiberann::kmeans::kmeans;
use fiberann::{AnchorAtlas, AnchorParams, Dataset, FilterPredicate};
use proptest::prelude::*;

use common::{naive_dot, naive_matches, random_dataset, random_predicate, rng};

fn meta(pairs: &[(&str, &str)]) -> MetadataRow {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn sq(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(x - y).powi(2)).sum()
}

#[test]
fn two_blobs_split_cleanly() {
    let mut r = rng(1);
    let mut v = Vec::new();
    for i in 0..40 {
        let base = if i < 20 { [1.0f32, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        for b in base {
            v.push(b + 0.05 * common::gaussian(&mut r));
        }
    }
    let ds = Dataset::new(3, v, vec![MetadataRow::new(); 40]).unwrap();
    let km = kmeans(ds.vectors(), 3, 2, 50, 7).unwrap();
    let a = km.assignment[0];
    assert!(km.assignment[..20].iter().all(|&c| c == a));
    assert!(km.assignment[20..].iter().all(|&c| c != a));

    // The objective equals the in-blob scatter about each blob mean.
    let mut want = 0.0;
    for blob in [0..20usize, 20..40] {
        let mut mean = [0.0f64; 3];
        for i in blob.clone() {
            for (m, x) in mean.iter_mut().zip(ds.vector(i as u32)) {
                *m += f64::from(*x) / 20.0;
            }
        }
        let mean: Vec<f32> = mean.iter().map(|&m| m as f32).collect();
        want += blob.map(|i| sq(ds.vector(i as u32), &mean)).sum::<f64>();
    }
    assert!((km.objective - want).abs() < 1e-3 * want.max(1e-6), "{} vs {want}", km.objective);
}

fn toy() -> (Dataset, Vec<u32>) {
    // 20 points around three directions; assignment fixed by hand.
    let dirs = [[1.0f32, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let colours = ["red", "blue", "green"];
    let mut v = Vec::new();
    let mut m = Vec::new();
    let mut assign = Vec::new();
    for i in 0..20u32 {
        let c = (i % 3) as usize;
        let mut x = dirs[c];
        x[(c + 1) % 3] = 0.01 * i as f32;
        v.extend(x);
        let colour = if i % 5 == 0 { colours[(c + 1) % 3] } else { colours[c] };
        let mut row = meta(&[("colour", colour)]);
        if i % 2 == 0 {
            row.insert("size".into(), if i % 4 == 0 { "S".into() } else { "M".into() });
        }
        m.push(row);
        assign.push(c as u32);
    }
    (Dataset::new(3, v, m).unwrap(), assign)
}

#[test]
fn candidate_clusters_match_a_scan() {
    let (ds, assign) = toy();
    let centroids = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let atlas = AnchorAtlas::from_parts(&ds, centroids, assign.clone()).unwrap();
    let preds = [
        FilterPredicate::eq("colour", "red"),
        FilterPredicate::eq("colour", "green"),
        FilterPredicate::eq("size", "S"),
        FilterPredicate::eq("colour", "red").and_in("size", ["S"]).unwrap(),
        FilterPredicate::eq("colour", "blue").and_in("size", ["S", "M"]).unwrap(),
        FilterPredicate::eq("colour", "purple"),
        FilterPredicate::eq("shape", "x"),
    ];
    for p in &preds {
        let fiber = ds.fiber(p);
        // Per clause: clusters holding a point with an allowed value.
        let mut want: Option<BTreeSet<u32>> = None;
        for (field, allowed) in p.clauses() {
            let set: BTreeSet<u32> = (0..20u32)
                .filter(|&i| ds.metadata_row(i).get(field).is_some_and(|v| allowed.contains(v)))
                .map(|i| assign[i as usize])
                .collect();
            want = Some(match want {
                None => set,
                Some(w) => w.intersection(&set).copied().collect(),
            });
        }
        let want: Vec<u32> = want.unwrap_or_default().into_iter().collect();
        assert_eq!(atlas.candidate_clusters(&fiber), want, "{p:?}");
        for c in 0..3u32 {
            let members: Vec<u32> = (0..20u32)
                .filter(|&i| assign[i as usize] == c && naive_matches(&ds, p, i))
                .collect();
            assert_eq!(atlas.matching_members(c, &fiber), members);
        }
    }
}

#[test]
fn cluster_budget_takes_the_best_centroids() {
    let mut r = rng(3);
    let ds = random_dataset(&mut r, 300, 4, &[("a", 2, 1.0)]);
    let atlas = build_atlas(&ds, 5, 11, 30).unwrap();
    let p = FilterPredicate::eq("a", "v0");
    let fiber = ds.fiber(&p);
    let q = common::random_unit(&mut r, 4);
    let params = AnchorParams {
        seed_budget: 1000,
        cluster_budget: 2,
        rng_seed: 0,
    };
    let sel = atlas.select_anchors(&fiber, &q, &BTreeSet::new(), &params, 5);
    let mut ranked: Vec<(f64, u32)> = atlas
        .candidate_clusters(&fiber)
        .into_iter()
        .map(|c| (naive_dot(&q, atlas.centroid(c)), c))
        .collect();
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let want: Vec<u32> = ranked.iter().take(2).map(|p| p.1).collect();
    assert_eq!(sel.used_clusters, want);
    let pool: BTreeSet<u32> = want.iter().flat_map(|&c| atlas.matching_members(c, &fiber)).collect();
    assert_eq!(sel.seeds.iter().copied().collect::<BTreeSet<_>>(), pool);
}

#[test]
fn atlas_file_round_trip() {
    let mut r = rng(4);
    let ds = random_dataset(&mut r, 100, 5, &[("a", 3, 0.7), ("b", 2, 1.0)]);
    let atlas = build_atlas(&ds, 7, 2, 20).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.fatl");
    save_atlas(&atlas, &p).unwrap();
    let back = load_atlas(&p, &ds).unwrap();
    assert_eq!(back.assignment(), atlas.assignment());
    for c in 0..7u32 {
        assert_eq!(back.centroid(c), atlas.centroid(c));
    }
    assert_eq!(back.member_entries(), atlas.member_entries());
    assert_eq!(back.index_entries(), atlas.index_entries());
    let small = random_dataset(&mut r, 50, 5, &[("a", 3, 0.7)]);
    assert!(load_atlas(&p, &small).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn anchors_match_and_skip_processed(seed in 0u64..10_000, clusters in 1usize..12, budget in 1usize..15) {
        let fields = [("a", 3, 0.8), ("b", 4, 0.6)];
        let mut r = rng(seed);
        let ds = random_dataset(&mut r, 80, 3, &fields);
        let atlas = build_atlas(&ds, clusters, seed, 20).unwrap();
        let p = random_predicate(&mut r, &fields);
        let fiber = ds.fiber(&p);
        let q = common::random_unit(&mut r, 3);
        let params = AnchorParams { seed_budget: budget, cluster_budget: 3, rng_seed: 0 };
        let mut processed = BTreeSet::new();
        let mut seen = BTreeSet::new();
        loop {
            let sel = atlas.select_anchors(&fiber, &q, &processed, &params, seed);
            if sel.used_clusters.is_empty() {
                break;
            }
            prop_assert!(sel.used_clusters.len() <= 3);
            prop_assert!(sel.seeds.len() <= budget);
            for &c in &sel.used_clusters {
                prop_assert!(!processed.contains(&c));
            }
            for &s in &sel.seeds {
                prop_assert!(naive_matches(&ds, &p, s));
                prop_assert!(processed.iter().all(|&c| atlas.assignment()[s as usize] != c));
                prop_assert!(sel.used_clusters.contains(&atlas.assignment()[s as usize]));
                prop_assert!(seen.insert(s));
            }
            processed.extend(sel.used_clusters);
        }
        // Every candidate cluster is eventually consulted.
        let cand: BTreeSet<u32> = atlas.candidate_clusters(&fiber).into_iter().collect();
        prop_assert_eq!(processed, cand);
    }
}
