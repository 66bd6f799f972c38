mod common;

use common::{align_oracle, align_oracle_memo, alignment_cost};
use gnt_core::corpus::*;
use proptest::prelude::*;

const VOCAB: [&str; 4] = ["i", "la", "cittadini", "cittadinanza"];

/// All sentences of `len` words over the vocabulary, in odometer order.
fn sentences(len: usize) -> Vec<Vec<&'static str>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                VOCAB.iter().map(move |w| {
                    let mut t = s.clone();
                    t.push(*w);
                    t
                })
            })
            .collect();
    }
    out
}

#[test]
fn alignment_matches_brute_force_on_short_sentences() {
    // Exhaustive over short pairs; the enumeration oracle grows with the
    // Delannoy numbers, so longer pairs are sampled in the proptest below.
    for la in 0..=3 {
        for lb in 0..=3 {
            for a in sentences(la) {
                for b in sentences(lb) {
                    let ops = align_words(&a, &b);
                    let (cost, expected) = align_oracle(&a, &b);
                    assert_eq!(ops, expected, "{a:?} vs {b:?}");
                    assert_eq!(alignment_cost(&a, &b, &ops), cost);
                    assert_eq!(align_oracle_memo(&a, &b), (cost, expected));
                }
            }
        }
    }
}

fn words(max: usize) -> impl Strategy<Value = Vec<&'static str>> {
    prop::collection::vec(prop::sample::select(VOCAB.to_vec()), 0..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn alignment_matches_exact_search_up_to_eight_words(a in words(8), b in words(8)) {
        let ops = align_words(&a, &b);
        let (cost, expected) = align_oracle_memo(&a, &b);
        prop_assert_eq!(alignment_cost(&a, &b, &ops), cost);
        prop_assert_eq!(ops, expected);
    }

    #[test]
    fn alignment_matches_enumeration_on_mid_lengths(a in words(6), b in words(5)) {
        let (cost, expected) = align_oracle(&a, &b);
        prop_assert_eq!(align_words(&a, &b), expected);
        prop_assert_eq!(align_oracle_memo(&a, &b).0, cost);
    }

    #[test]
    fn spans_slice_back_to_their_text(a in words(8), b in words(8)) {
        let ga = a.join(" ");
        let nb = b.join(" ");
        for span in extract_gendered_terms(&ga, &nb) {
            prop_assert_eq!(a[span.gendered_word_range.clone()].join(" "), span.gendered_text.clone());
            prop_assert_eq!(b[span.neutral_word_range.clone()].join(" "), span.neutral_text.clone());
        }
    }

    #[test]
    fn identical_sentences_have_no_spans(a in words(8)) {
        let s = a.join(" ");
        prop_assert!(extract_gendered_terms(&s, &s).is_empty());
    }

    #[test]
    fn corpus_round_trip(rows in prop::collection::vec(("[a-z0-9]{1,6}", "[A-Za-z ,.?]{1,20}", "[a-zà-ù ,.']{1,20}", "[a-zà-ù ,.']{1,20}"), 0..12)) {
        let mut entries: Vec<CorpusEntry> = Vec::new();
        for (i, (id, src, g, n)) in rows.into_iter().enumerate() {
            if [&src, &g, &n].iter().any(|c| c.trim().is_empty()) {
                continue;
            }
            entries.push(CorpusEntry {
                id: format!("{id}-{i}"),
                src_en: src,
                ref_gendered: g,
                ref_neutral: n,
                term_spans: vec![],
            });
        }
        let text = serialize_corpus(&entries);
        let parsed = parse_corpus(&text).unwrap();
        prop_assert_eq!(&parsed, &entries);
        prop_assert_eq!(serialize_corpus(&parsed), text);
    }
}

#[test]
fn worked_span_examples() {
    let spans = extract_gendered_terms("Tutti i cittadini sono uguali", "Tutta la cittadinanza è uguale");
    let texts: Vec<(&str, &str)> = spans
        .iter()
        .map(|s| (s.gendered_text.as_str(), s.neutral_text.as_str()))
        .collect();
    assert_eq!(
        texts,
        vec![("Tutti i cittadini sono uguali", "Tutta la cittadinanza è uguale")]
    );

    let spans = extract_gendered_terms(
        "Secondariamente, fino a che punto aumenta la trasparenza e la responsabilità degli scrittori ?",
        "Secondariamente, fino a che punto aumenta la trasparenza e la responsabilità di chi scrive ?",
    );
    assert_eq!(spans.len(), 1);
    assert_eq!(spans[0].gendered_text, "degli scrittori");
    assert_eq!(spans[0].neutral_text, "di chi scrive");
    assert_eq!(spans[0].gendered_word_range, 11..13);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let text = "id\tsrc_en\tref_gendered\tref_neutral\na\tx\ty\tz\na\tx\ty\tz\n";
    assert_eq!(
        parse_corpus(text).unwrap_err(),
        CorpusError::DuplicateId {
            row: 3,
            first_row: 2,
            id: "a".into()
        }
    );
    let text = "id\tsrc_en\tref_gendered\tref_neutral\nb\tx\t\tz\n";
    assert!(matches!(
        parse_corpus(text),
        Err(CorpusError::EmptyCell {
            row: 2,
            column: "ref_gendered"
        })
    ));
}
