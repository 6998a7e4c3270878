use proptest::collection::vec;
use proptest::prelude::*;

use semsmooth::corpus::{join_sentences, preprocess, CountTable, Vocabulary};
use semsmooth::embeddings::{ContextEmbeddings, Norm, ProximityConfig, SupportEstimator, SynonymIndex};
use semsmooth::estimators::{add_beta, kneser_ney, variable_add_constant, BetaTable, BigramModel, SmootherConfig};
use semsmooth::prob::{decompose, entropy, kl_divergence, l1_distance, ConditionalModel, ProbDist, TableModel, TestSequence};
use semsmooth::risk::{build_assouad, kl_ball_sample, BallMode};
use semsmooth::semantic::{build_synonym_set, compute_weights, smooth_context, SemanticConfig, WeightRule};

fn dist(d: usize) -> impl Strategy<Value = ProbDist> {
    vec(0.001f64..1.0, d).prop_map(|w| ProbDist::from_weights(&w).unwrap())
}

fn dist_pair() -> impl Strategy<Value = (ProbDist, ProbDist)> {
    (2usize..12).prop_flat_map(|d| (dist(d), dist(d)))
}

fn sentences(d: u32) -> impl Strategy<Value = Vec<Vec<u32>>> {
    vec(vec(0..d, 2..12), 0..8)
}

proptest! {
    #[test]
    fn kl_is_nonnegative_and_zero_on_identity((p, q) in dist_pair()) {
        prop_assert!(kl_divergence(&p, &q) >= 0.0);
        prop_assert!(kl_divergence(&p, &p).abs() < 1e-15);
    }

    #[test]
    fn pinsker((p, q) in dist_pair()) {
        let l1 = l1_distance(&p, &q);
        prop_assert!(kl_divergence(&p, &q) + 1e-12 >= l1 * l1 / 2.0);
    }

    #[test]
    fn entropy_is_bounded_by_log_alphabet(p in (1usize..20).prop_flat_map(dist)) {
        let h = entropy(&p);
        prop_assert!(h >= -1e-15);
        prop_assert!(h <= (p.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn decomposition_identity(
        (d, rows, tokens) in (2usize..8).prop_flat_map(|d| {
            (Just(d), vec(dist(d), d), vec(0..d as u32, 2..300))
        })
    ) {
        let model = TableModel::new(d, rows.into_iter().map(Some).collect()).unwrap();
        let seq = TestSequence::from_tokens(&tokens, None).unwrap();
        let r = decompose(&model, &seq).unwrap();
        prop_assert!((r.log_ppl - (r.entropy_term + r.kl_term)).abs() <= 1e-10);
        prop_assert!(r.kl_term >= -1e-12);
    }

    #[test]
    fn entropy_term_is_model_independent(
        (d, a, b, tokens) in (2usize..6).prop_flat_map(|d| {
            (Just(d), vec(dist(d), d), vec(dist(d), d), vec(0..d as u32, 2..100))
        })
    ) {
        let seq = TestSequence::from_tokens(&tokens, None).unwrap();
        let ma = TableModel::new(d, a.into_iter().map(Some).collect()).unwrap();
        let mb = TableModel::new(d, b.into_iter().map(Some).collect()).unwrap();
        prop_assert_eq!(
            decompose(&ma, &seq).unwrap().entropy_term,
            decompose(&mb, &seq).unwrap().entropy_term
        );
    }

    #[test]
    fn counts_are_additive(a in sentences(6), b in sentences(6)) {
        let joint: Vec<Vec<u32>> = a.iter().chain(&b).cloned().collect();
        let whole = CountTable::from_sentences(&joint, 6);
        let parts = CountTable::from_sentences(&a, 6).merged(&CountTable::from_sentences(&b, 6));
        prop_assert_eq!(whole, parts);
    }

    #[test]
    fn count_file_round_trip(s in sentences(5)) {
        let mut vocab = Vocabulary::new();
        for i in 0..5 {
            vocab.intern(&format!("t{i}"));
        }
        let d = vocab.len() as u32;
        let shifted: Vec<Vec<u32>> = s.iter().map(|x| x.iter().map(|w| w % d).collect()).collect();
        let table = CountTable::from_sentences(&shifted, vocab.len());
        let mut buf = Vec::new();
        table.save(&vocab, &mut buf).unwrap();
        let mut fresh = Vocabulary::new();
        let loaded = CountTable::load(&buf[..], &mut fresh).unwrap();
        prop_assert_eq!(loaded.total(), table.total());
        for ((c, w), n) in table.entries() {
            let c2 = fresh.id(vocab.token(c).unwrap()).unwrap();
            let w2 = fresh.id(vocab.token(w).unwrap()).unwrap();
            prop_assert_eq!(loaded.count(c2, w2), n);
        }
    }

    #[test]
    fn preprocessing_is_idempotent(text in "[ -~\\n]{0,200}") {
        let once = preprocess(&text);
        let twice = preprocess(&join_sentences(&once));
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn preprocessing_handles_arbitrary_unicode(text in "\\PC{0,100}") {
        for s in preprocess(&text) {
            prop_assert!(s.len() >= 3);
            prop_assert!(s.iter().all(|t| t.is_ascii() && !t.is_empty()));
        }
    }

    #[test]
    fn additive_estimators_are_distributions(counts in vec(0u64..20, 1..15), beta in 0.001f64..5.0) {
        let p = add_beta(&counts, beta).unwrap();
        prop_assert!((p.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.masses().iter().all(|&x| x > 0.0));
        let q = variable_add_constant(&counts, &BetaTable::krichevsky_trofimov()).unwrap();
        prop_assert!((q.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kneser_ney_rows_sum_to_one(s in sentences(7), discount in 0.0f64..=1.0) {
        let table = CountTable::from_sentences(&s, 7);
        for c in table.observed_contexts().collect::<Vec<_>>() {
            let p = kneser_ney(&table, c, discount).unwrap();
            prop_assert!((p.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let model = BigramModel::new(table, SmootherConfig::KneserNey { discount: discount.max(0.01) }).unwrap();
        for c in 0..7 {
            let p = model.conditional(c).unwrap();
            prop_assert!(p.masses().iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn weight_monotonicity(
        own in 0.0f64..5.0,
        proxies in vec(0.0f64..5.0, 1..6),
        pick in 0usize..6,
        shrink in 0.0f64..1.0,
        softmin in any::<bool>(),
        tau in 0.1f64..5.0,
    ) {
        let rule = if softmin { WeightRule::softmin(tau) } else { WeightRule::reciprocal() };
        let k = pick % proxies.len();
        let before = compute_weights(own, &proxies, &rule);
        let mut lowered = proxies.clone();
        lowered[k] *= shrink;
        let after = compute_weights(own, &lowered, &rule);
        prop_assert!((after.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(after[k + 1] >= before[k + 1] - 1e-12);
    }

    #[test]
    fn ball_samples_are_members(p in (2usize..10).prop_flat_map(dist), delta in 0.0f64..0.5, seed in any::<u64>()) {
        let pi = kl_ball_sample(&p, delta, BallMode::Interior, seed).unwrap();
        prop_assert!(kl_divergence(&pi, &p) <= delta);
    }

    #[test]
    fn hypercube_members_and_neighbours(half in 1usize..8, frac in 0.0f64..=1.0, index in any::<u64>(), flip in 0usize..8) {
        let d = 2 * half;
        let tau = frac / (2.0 * d as f64);
        let family = build_assouad(d, tau).unwrap();
        let index = index as u128 % family.size();
        let v = family.signs(index);
        let theta = family.member_of(&v).unwrap();
        prop_assert!(kl_divergence(&theta, &ProbDist::uniform(d)) <= (d * d) as f64 * tau * tau + 1e-15);
        let mut w = v.clone();
        let k = flip % half;
        w[k] = -w[k];
        let other = family.member_of(&w).unwrap();
        prop_assert!((l1_distance(&theta, &other) - 4.0 * tau).abs() <= 1e-15);
        prop_assert!(kl_divergence(&theta, &other) <= 8.0 * tau * tau * d as f64 + 1e-15);
    }
}

fn synonym_fixture(points: &[(f64, f64)], s: &[Vec<u32>]) -> (ContextEmbeddings, CountTable) {
    let d = points.len();
    let emb = ContextEmbeddings::from_rows(2, points.iter().map(|&(x, y)| Some(vec![x, y])));
    (emb, CountTable::from_sentences(s, d))
}

proptest! {
    #[test]
    fn synonym_selection_matches_brute_force(
        points in vec((-3.0f64..3.0, -3.0f64..3.0), 3..25),
        s in sentences(25),
        origin in 0u32..25,
        m in 0usize..10,
    ) {
        let d = points.len() as u32;
        let s: Vec<Vec<u32>> = s.iter().map(|x| x.iter().map(|w| w % d).collect()).collect();
        let origin = origin % d;
        let (emb, counts) = synonym_fixture(&points, &s);
        let cfg = ProximityConfig { lipschitz: 5.0, norm: Norm::L1, epsilon: 0.0 };
        let index = SynonymIndex::new(&emb, &counts, SupportEstimator::Chao1, cfg, 0.005).unwrap();
        let got = index.select(origin, m).unwrap();

        let o = points[origin as usize];
        let mut brute: Vec<(f64, u32)> = (0..d)
            .filter(|&c| c != origin && counts.context_total(c) > 0)
            .map(|c| {
                let p = points[c as usize];
                let delta = 5.0 * ((o.0 - p.0).abs() + (o.1 - p.1).abs());
                let n = counts.context_total(c) as f64;
                (delta + (1.0 + 0.005 * index.support(c) as f64 / n).ln(), c)
            })
            .collect();
        brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        brute.truncate(m);
        prop_assert_eq!(got.len(), brute.len());
        for (g, b) in got.iter().zip(&brute) {
            prop_assert_eq!(g.context, b.1);
            prop_assert!((g.score - b.0).abs() < 1e-12);
        }

        // Asking for more synonyms only extends the list.
        let longer = index.select(origin, m + 3).unwrap();
        prop_assert_eq!(&longer[..got.len()], &got[..]);
    }

    #[test]
    fn smoothed_rows_are_distributions(
        points in vec((-1.0f64..1.0, -1.0f64..1.0), 3..12),
        s in sentences(12),
        m in 0usize..6,
        softmin in any::<bool>(),
    ) {
        let d = points.len() as u32;
        let s: Vec<Vec<u32>> = s.iter().map(|x| x.iter().map(|w| w % d).collect()).collect();
        let (emb, counts) = synonym_fixture(&points, &s);
        let index = SynonymIndex::new(&emb, &counts, SupportEstimator::Chao1, ProximityConfig::default(), 0.005).unwrap();
        let base = BigramModel::new(counts.clone(), SmootherConfig::AddBeta { beta: 0.5 }).unwrap();
        let rule = if softmin { WeightRule::softmin(1.0) } else { WeightRule::reciprocal() };
        let cfg = SemanticConfig { m, rule, ..SemanticConfig::default() };
        for c in 0..d {
            let set = build_synonym_set(&index, c, &cfg);
            prop_assert!((set.total_weight() - 1.0).abs() < 1e-12);
            let p = smooth_context(&base, &set).unwrap();
            prop_assert!((p.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
