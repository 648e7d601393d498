//! Engine results checked against naive reference implementations.

use std::collections::BTreeSet;

use chrono::Utc;
use iva_core::feeds::{build_snapshot, CatalogSnapshot, CveEntry, VulnerableCpe};
use iva_core::matching::{
    levenshtein, levenshtein_within, merge_candidates, parse_version, same_version, search_cves_by_cpe, search_cves_by_summary,
    summary_words, MatchConfig,
};
use iva_core::naming::{unbind_uri, CpeUri, Wfn};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

/// Full-matrix edit distance.
fn dp_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + sub);
        }
    }
    d[a.len()][b.len()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn distance_matches_dp(a in "[a-e_.]{0,30}", b in "[a-e_.]{0,30}") {
        let d = dp_distance(&a, &b);
        prop_assert_eq!(levenshtein(&a, &b), d);
        prop_assert_eq!(levenshtein_within(&a, &b, 2), (d <= 2).then_some(d));
    }

    #[test]
    fn distance_is_a_metric(a in "\\PC{0,12}", b in "\\PC{0,12}", c in "\\PC{0,12}") {
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        prop_assert_eq!(levenshtein(&a, &b) == 0, a == b);
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
    }

    #[test]
    fn exact_version_text_always_matches(v in "[a-z0-9.]{1,10}") {
        let key = parse_version(&v);
        prop_assert!(same_version(&key, &iva_core::naming::AttributeValue::Value(key.raw.clone())));
        prop_assert!(!same_version(&key, &iva_core::naming::AttributeValue::Na));
    }
}

#[test]
fn player_joomla_within_six() {
    let d = dp_distance("player", "joomla");
    assert_eq!(levenshtein("player", "joomla"), d);
    assert!(d <= 6);
    assert_eq!(levenshtein("player", "playe"), 1);
}

const VENDORS: &[&str] = &["mozilla", "mozila", "oracle", "oracel", "wireshark", "adobe", "adobee", "ibm"];
const PRODUCTS: &[&str] = &["firefox", "firefx", "seamonkey", "mysql", "mysq", "wireshark", "air", "reader", "flash_player"];
const VERSIONS: &[&str] = &["-", "", "1.0", "1.2.3", "1.2.*", "2.35", "2.46", "2.0.0", "8", "5.7.15", "2008"];

fn random_uri(rng: &mut StdRng) -> String {
    let v = VERSIONS.choose(rng).unwrap();
    let base = format!("cpe:/a:{}:{}", VENDORS.choose(rng).unwrap(), PRODUCTS.choose(rng).unwrap());
    if v.is_empty() {
        base
    } else {
        format!("{base}:{}", v.replace('*', "%02"))
    }
}

fn random_snapshot(rng: &mut StdRng, n: usize) -> CatalogSnapshot {
    let cves = (0..n)
        .map(|i| {
            let k = rng.gen_range(0..5);
            let mut uris: Vec<String> = (0..k).map(|_| random_uri(rng)).collect();
            uris.sort();
            uris.dedup();
            let words: Vec<&str> = (0..rng.gen_range(3..12))
                .map(|_| *[VENDORS, PRODUCTS, &["in", "allows", "the", "remote", "attackers", "(crash)."]].choose(rng).unwrap().choose(rng).unwrap())
                .collect();
            CveEntry {
                id: format!("CVE-2016-{:05}", i),
                summary: words.join(" "),
                published: None,
                cvss_score: None,
                vuln_software: uris.into_iter().map(|u| VulnerableCpe::parse(CpeUri::new(u).unwrap()).unwrap()).collect(),
            }
        })
        .collect();
    build_snapshot(Vec::new(), cves, Utc::now()).unwrap()
}

fn naive_by_cpe(assigned: &Wfn, cves: &[CveEntry]) -> BTreeSet<(String, Vec<String>)> {
    let (vendor, product) = (assigned.vendor.as_str().unwrap(), assigned.product.as_str().unwrap());
    let sw = parse_version(assigned.version.as_str().unwrap_or(""));
    let mut out = BTreeSet::new();
    for cve in cves {
        let mut matched = Vec::new();
        for cpe in &cve.vuln_software {
            let (Some(v), Some(p)) = (cpe.wfn.vendor.as_str(), cpe.wfn.product.as_str()) else { continue };
            if dp_distance(p, product) < 3 && dp_distance(v, vendor) < 3 && same_version(&sw, &cpe.wfn.version) {
                matched.push(cpe.uri.to_string());
            }
        }
        if !matched.is_empty() {
            out.insert((cve.id.clone(), matched));
        }
    }
    out
}

#[test]
fn cpe_list_search_equals_naive_scan() {
    let mut rng = StdRng::seed_from_u64(7);
    let config = MatchConfig::default();
    for _ in 0..20 {
        let snap = random_snapshot(&mut rng, 50);
        for _ in 0..5 {
            let assigned = unbind_uri(&CpeUri::new(random_uri(&mut rng)).unwrap()).unwrap();
            let got: BTreeSet<(String, Vec<String>)> = search_cves_by_cpe(&assigned, &snap, &config)
                .into_iter()
                .map(|c| (c.cve.id, c.matched_cpes.iter().map(|u| u.to_string()).collect()))
                .collect();
            assert_eq!(got, naive_by_cpe(&assigned, snap.cves()));
        }
    }
}

fn naive_by_summary(assigned: &Wfn, cves: &[CveEntry]) -> BTreeSet<String> {
    let (vendor, product) = (assigned.vendor.as_str().unwrap(), assigned.product.as_str().unwrap());
    let mentions = |words: &[String], name: &str| {
        let n = name.split('_').count();
        (0..words.len()).any(|i| i + n <= words.len() && dp_distance(&words[i..i + n].join("_"), name) < 3)
    };
    cves.iter()
        .filter(|c| c.vuln_software.is_empty())
        .filter(|c| {
            let words = summary_words(&c.summary);
            mentions(&words, product) && mentions(&words, vendor)
        })
        .map(|c| c.id.clone())
        .collect()
}

#[test]
fn summary_search_equals_naive_scan() {
    let mut rng = StdRng::seed_from_u64(11);
    let config = MatchConfig::default();
    for _ in 0..20 {
        let snap = random_snapshot(&mut rng, 50);
        for _ in 0..5 {
            let assigned = unbind_uri(&CpeUri::new(random_uri(&mut rng)).unwrap()).unwrap();
            let got: BTreeSet<String> = search_cves_by_summary(&assigned, &snap, &config).into_iter().map(|c| c.cve.id).collect();
            assert_eq!(got, naive_by_summary(&assigned, snap.cves()));
        }
    }
}

#[test]
fn merged_ids_are_unique_and_bounded() {
    let mut rng = StdRng::seed_from_u64(3);
    let config = MatchConfig::default();
    for _ in 0..10 {
        let snap = random_snapshot(&mut rng, 50);
        let assigned = unbind_uri(&CpeUri::new(random_uri(&mut rng)).unwrap()).unwrap();
        let a = search_cves_by_cpe(&assigned, &snap, &config);
        let b = search_cves_by_summary(&assigned, &snap, &config);
        let (na, nb) = (a.len(), b.len());
        let m = merge_candidates(a, b);
        let ids: BTreeSet<&str> = m.iter().map(|c| c.cve.id.as_str()).collect();
        assert_eq!(ids.len(), m.len());
        assert!(m.len() <= na + nb);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ranking_is_a_deterministic_permutation(
        versions in prop::collection::vec("[0-9]{1,2}(\\.[0-9]{1,2}){0,3}", 1..12),
        product_version in "[0-9]{1,2}(\\.[0-9]{1,2}){0,3}",
        seed in any::<u64>(),
    ) {
        use iva_core::feeds::CpeDictEntry;
        use iva_core::matching::{rank_by_version, CpeCandidate, VersionAffinity};
        let mut rng = StdRng::seed_from_u64(seed);
        let cands: Vec<CpeCandidate> = versions.iter().enumerate().map(|(i, v)| {
            let uri = CpeUri::new(format!("cpe:/a:v:p{}:{v}", i % 3)).unwrap();
            CpeCandidate {
                entry: CpeDictEntry { wfn: unbind_uri(&uri).unwrap(), uri, formatted: None, title: String::new(), deprecated: false, deprecated_by: None, deprecation_reason: None },
                rank: 0,
                vendor_distance: rng.gen_range(0..3),
                product_distance: rng.gen_range(0..3),
                version_affinity: VersionAffinity { exact: false, common_prefix: 0 },
            }
        }).collect();
        let key = parse_version(&product_version);
        let mut shuffled = cands.clone();
        shuffled.shuffle(&mut rng);
        let a = rank_by_version(cands.clone(), &key);
        let b = rank_by_version(shuffled, &key);
        let summary = |v: &[CpeCandidate]| v.iter().map(|c| (c.entry.uri.to_string(), c.vendor_distance, c.product_distance)).collect::<Vec<_>>();
        let mut before = summary(&cands);
        let mut after = summary(&a);
        before.sort();
        after.sort();
        prop_assert_eq!(before, after);
        prop_assert_eq!(a.iter().map(|c| c.rank).collect::<Vec<_>>(), (1..=a.len()).collect::<Vec<_>>());
        // input order does not matter: full ties are indistinguishable
        prop_assert_eq!(summary(&a), summary(&b));
        for w in a.windows(2) {
            let (x, y) = (&w[0].version_affinity, &w[1].version_affinity);
            prop_assert!((x.exact, x.common_prefix) >= (y.exact, y.common_prefix));
        }
    }
}
