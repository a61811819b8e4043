use ficle_core::encoding::TokenSpan;
use ficle_models::span_extractor::{select_best_span, SpanField, SpanHeadOutput};
use proptest::prelude::*;

/// Collects every legal pair, then picks the maximum score and breaks ties
/// lexicographically on (start, end).
fn exhaustive(h: &SpanHeadOutput, legal: TokenSpan, max_len: usize) -> (TokenSpan, f32) {
    let n = h.start_scores.len();
    let mut cands: Vec<(usize, usize, f32)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let inside = legal.start <= i && i <= j && j <= legal.end && j < n;
            if inside && j - i < max_len {
                cands.push((i, j, h.start_scores[i] + h.end_scores[j]));
            }
        }
    }
    let top = cands.iter().map(|c| c.2).fold(f32::NEG_INFINITY, f32::max);
    let best = cands
        .iter()
        .filter(|c| c.2 == top)
        .min_by_key(|c| (c.0, c.1))
        .map(|c| (TokenSpan::new(c.0, c.1), c.2));
    let null = h.start_scores[0] + h.end_scores[0];
    match best {
        Some((_, s)) if h.field == SpanField::Target && null > s => (TokenSpan::NULL, null),
        Some(b) => b,
        None if h.field == SpanField::Target => (TokenSpan::NULL, null),
        None => (TokenSpan::NULL, f32::NEG_INFINITY),
    }
}

fn score() -> impl Strategy<Value = f32> {
    // Small integers make ties common; the float range covers the rest.
    prop_oneof![(-3i32..=3).prop_map(|x| x as f32), -10.0f32..10.0]
}

fn case() -> impl Strategy<Value = (SpanHeadOutput, TokenSpan, usize)> {
    (1usize..=12)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(score(), n),
                prop::collection::vec(score(), n),
                0..n,
                0..n,
                1usize..=12,
                prop::sample::select(vec![SpanField::Source, SpanField::Relation, SpanField::Target, SpanField::ContextSpan]),
            )
        })
        .prop_map(|(s, e, a, b, max_len, field)| {
            let legal = TokenSpan::new(a.min(b).max(1).min(s.len() - 1), a.max(b));
            (
                SpanHeadOutput {
                    field,
                    start_scores: s,
                    end_scores: e,
                },
                legal,
                max_len,
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn decode_equals_exhaustive_enumeration((h, legal, max_len) in case()) {
        let got = select_best_span(&h, legal, max_len);
        let want = exhaustive(&h, legal, max_len);
        prop_assert_eq!(got.0, want.0);
        prop_assert_eq!(got.1.to_bits(), want.1.to_bits());
    }
}
