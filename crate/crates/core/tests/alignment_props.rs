use atlas_core::{align_multi, align_pair, Scoring};
use proptest::prelude::*;

const ALPHABET: [&str; 5] = ["p", "t", "k", "a", "i"];

fn seq(max_len: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(&ALPHABET[..]), 0..=max_len)
        .prop_map(|v| v.into_iter().map(str::to_string).collect())
}

/// Best score over every global alignment of `a` and `b`, by enumeration.
fn exhaustive_best(a: &[String], b: &[String], s: &Scoring) -> f64 {
    fn go(a: &[String], b: &[String], s: &Scoring) -> f64 {
        match (a.split_first(), b.split_first()) {
            (None, None) => 0.0,
            (Some((_, ra)), None) => s.gap + go(ra, b, s),
            (None, Some((_, rb))) => s.gap + go(a, rb, s),
            (Some((x, ra)), Some((y, rb))) => {
                let diag = s.pair(Some(x), Some(y)) + go(ra, rb, s);
                let up = s.gap + go(ra, b, s);
                let left = s.gap + go(a, rb, s);
                diag.max(up).max(left)
            }
        }
    }
    go(a, b, s)
}

/// Optimal sum-of-pairs score for three sequences by full 3-D dynamic
/// programming.
fn three_way_best(x: &[String], y: &[String], z: &[String], s: &Scoring) -> f64 {
    let (n, m, l) = (x.len(), y.len(), z.len());
    let mut dp = vec![vec![vec![f64::NEG_INFINITY; l + 1]; m + 1]; n + 1];
    dp[0][0][0] = 0.0;
    for i in 0..=n {
        for j in 0..=m {
            for k in 0..=l {
                if i + j + k == 0 {
                    continue;
                }
                let mut best = f64::NEG_INFINITY;
                for mask in 1u8..8 {
                    let (di, dj, dk) = ((mask & 1) as usize, ((mask >> 1) & 1) as usize, ((mask >> 2) & 1) as usize);
                    if di > i || dj > j || dk > k {
                        continue;
                    }
                    let cx = (di == 1).then(|| x[i - 1].as_str());
                    let cy = (dj == 1).then(|| y[j - 1].as_str());
                    let cz = (dk == 1).then(|| z[k - 1].as_str());
                    let col = s.pair(cx, cy) + s.pair(cx, cz) + s.pair(cy, cz);
                    best = best.max(dp[i - di][j - dj][k - dk] + col);
                }
                dp[i][j][k] = best;
            }
        }
    }
    dp[n][m][l]
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pair_alignment_is_optimal(a in seq(6), b in seq(6)) {
        let s = Scoring::default();
        let aln = align_pair(&a, &b, &s);
        prop_assert_eq!(aln.score, exhaustive_best(&a, &b, &s));
        prop_assert_eq!(aln.sum_of_pairs(&s), aln.score);
    }

    #[test]
    fn removing_gaps_restores_inputs(a in seq(8), b in seq(8)) {
        let aln = align_pair(&a, &b, &Scoring::default());
        prop_assert_eq!(aln.rows.len(), 2);
        prop_assert_eq!(aln.rows[0].len(), aln.rows[1].len());
        prop_assert_eq!(aln.ungapped(0), a.iter().map(String::as_str).collect::<Vec<_>>());
        prop_assert_eq!(aln.ungapped(1), b.iter().map(String::as_str).collect::<Vec<_>>());
        prop_assert!(aln.rows[0].iter().zip(&aln.rows[1]).all(|(x, y)| x.is_some() || y.is_some()));
    }

    #[test]
    fn pair_score_is_symmetric(a in seq(6), b in seq(6)) {
        let s = Scoring::default();
        prop_assert_eq!(align_pair(&a, &b, &s).score, align_pair(&b, &a, &s).score);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn multi_alignment_never_beats_the_optimum(x in seq(5), y in seq(5), z in seq(5)) {
        let s = Scoring::default();
        let aln = align_multi(&[x.clone(), y.clone(), z.clone()], &s);
        prop_assert!(aln.score <= three_way_best(&x, &y, &z, &s) + 1e-9);
        prop_assert_eq!(aln.sum_of_pairs(&s), aln.score);
    }

    #[test]
    fn multi_alignment_keeps_every_sequence(seqs in prop::collection::vec(seq(6), 1..6)) {
        let aln = align_multi(&seqs, &Scoring::default());
        prop_assert_eq!(aln.rows.len(), seqs.len());
        let width = aln.n_columns();
        for (i, s) in seqs.iter().enumerate() {
            prop_assert_eq!(aln.rows[i].len(), width);
            prop_assert_eq!(aln.ungapped(i), s.iter().map(String::as_str).collect::<Vec<_>>());
        }
    }
}

#[test]
fn multi_alignment_matches_optimum_on_fixtures() {
    let s = Scoring::default();
    let fixtures = [
        ["k ʂ aː r ə", "k ʂ aː r ə", "k ʂ aː r ə"],
        ["k ʂ aː r ə", "kʰ aː r", "tʃʰ aː r"],
        ["p a t i", "p a t", "p a t i"],
        ["a k ʂ i", "a kʰ i", "a tʃʰ i"],
        ["m a t", "m a t", "m i t"],
    ];
    for f in fixtures {
        let seqs: Vec<Vec<String>> = f.iter().map(|s| toks(s)).collect();
        let aln = align_multi(&seqs, &s);
        let best = three_way_best(&seqs[0], &seqs[1], &seqs[2], &s);
        assert_eq!(aln.score, best, "{f:?}: {:?}", aln.render());
    }
}

#[test]
fn doublet_alignment_renders_with_gap() {
    let aln = align_pair(&toks("k ʂ aː r ə"), &toks("kʰ aː r"), &Scoring::default());
    assert_eq!(aln.render(), vec!["k ʂ aː r ə", "- kʰ aː r -"]);
}
