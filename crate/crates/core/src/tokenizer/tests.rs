use proptest::prelude::*;

use super::*;

fn doc(id: &str, text: &str) -> RawDocument {
    RawDocument::new(id, text, "L")
}

fn fixture() -> Vec<RawDocument> {
    vec![
        doc(
            "a",
            "The car and the card were in the cart. Cinema tickets, coma notes.",
        ),
        doc(
            "b",
            "A card in a car; the cinema near the cart. Coma care plan.",
        ),
        doc("c", "Biopsy showed carcinoma of the left breast."),
    ]
}

fn pieces(word: &str, vocab: &Vocabulary) -> Vec<String> {
    segment_word(word, vocab)
        .iter()
        .map(|&id| vocab.token(id).unwrap().to_string())
        .collect()
}

#[test]
fn frequent_words_are_single_tokens() {
    let docs = vec![doc("a", "knee pain knee"), doc("b", "pain knee pain")];
    let vocab = build_vocab(&docs, 10_000, 2).unwrap();
    let t = tokenize(&docs[0], &vocab, 8);
    assert_eq!(t.real_len(), 3);
    assert_eq!(&t.alignment[..3], &[Some(0), Some(1), Some(2)]);
    assert_eq!(vocab.token(t.token_ids[0]), Some("knee"));
}

#[test]
fn rare_word_splits_into_continuation_pieces() {
    let vocab = build_vocab(&fixture(), 10_000, 2).unwrap();
    let p = pieces("carcinoma", &vocab);
    // Regression value recorded from this fixture.
    assert_eq!(p, ["car", "##c", "##in", "##oma"]);
    assert!(!p[0].starts_with(CONTINUATION_PREFIX));
    assert!(p[1..].iter().all(|s| s.starts_with(CONTINUATION_PREFIX)));

    let d = doc("x", "carcinoma car");
    let t = tokenize(&d, &vocab, 16);
    assert_eq!(
        &t.alignment[..5],
        &[Some(0), Some(0), Some(0), Some(0), Some(1)]
    );
    assert_eq!(t.word_tokens(0), 0..4);
}

#[test]
fn vocabulary_is_deterministic() {
    let a = build_vocab(&fixture(), 60, 2).unwrap();
    let b = build_vocab(&fixture(), 60, 2).unwrap();
    assert_eq!(a.tokens(), b.tokens());
    assert_eq!(a.hash(), b.hash());
}

#[test]
fn target_size_caps_merges() {
    let small = build_vocab(&fixture(), 1, 2);
    assert!(small.is_err());
    let base = build_vocab(&fixture(), 3, 2).unwrap();
    let more = build_vocab(&fixture(), 10_000, 2).unwrap();
    assert!(more.len() > base.len());
    assert_eq!(&more.tokens()[..base.len()], base.tokens());
}

#[test]
fn empty_corpus_is_an_error() {
    assert!(build_vocab(&[], 100, 1).is_err());
    assert!(build_vocab(&[doc("a", "   ")], 100, 1).is_err());
}

#[test]
fn padding_contract() {
    let vocab = build_vocab(&fixture(), 10_000, 2).unwrap();
    let t = tokenize(&doc("p", "the car"), &vocab, 6);
    assert_eq!(t.len(), 6);
    assert_eq!(&t.mask, &[true, true, false, false, false, false]);
    assert!(t.token_ids[2..].iter().all(|&id| id == PAD_ID));
    assert!(t.alignment[2..].iter().all(Option::is_none));
}

#[test]
fn truncation_keeps_whole_words() {
    let vocab = build_vocab(&fixture(), 10_000, 2).unwrap();
    // "carcinoma" needs four pieces; only three slots remain after "the".
    let t = tokenize(&doc("t", "the carcinoma car"), &vocab, 4);
    assert_eq!(t.real_len(), 1);
    assert_eq!(t.covered_words(), 1);
    assert_eq!(t.words.len(), 3);
}

#[test]
fn unknown_characters_map_to_unk() {
    let vocab = build_vocab(&fixture(), 10_000, 2).unwrap();
    assert_eq!(segment_word("zebra", &vocab), vec![UNK_ID]);
}

#[test]
fn repadding_preserves_real_tokens() {
    let vocab = build_vocab(&fixture(), 10_000, 2).unwrap();
    let t = tokenize(&doc("r", "the card"), &vocab, 4);
    let longer = t.with_padding(9).unwrap();
    assert_eq!(longer.real_ids(), t.real_ids());
    assert_eq!(longer.len(), 9);
    assert!(t.with_padding(1).is_err());
}

#[test]
fn vocabulary_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vocab.txt");
    let vocab = build_vocab(&fixture(), 80, 2).unwrap();
    vocab.save(&path).unwrap();
    let back = Vocabulary::load(&path).unwrap();
    assert_eq!(back, vocab);
    assert!(std::fs::read_to_string(&path)
        .unwrap()
        .starts_with("attnkw-vocab v1\n[PAD]\n[UNK]\n"));

    std::fs::write(&path, "wrong header\n[PAD]\n").unwrap();
    assert!(Vocabulary::load(&path).is_err());
}

fn arb_corpus() -> impl Strategy<Value = Vec<RawDocument>> {
    prop::collection::vec("([a-eé]{1,9}[ .,]){1,30}", 1..6).prop_map(|texts| {
        texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| doc(&format!("d{i}"), &t))
            .collect()
    })
}

proptest! {
    #[test]
    fn tokenization_invariants(
        docs in arb_corpus(),
        min_freq in 1usize..4,
        target in 3usize..200,
        max_tokens in 1usize..64,
    ) {
        let vocab = build_vocab(&docs, target, min_freq).unwrap();
        for d in &docs {
            let t = tokenize(d, &vocab, max_tokens);
            prop_assert_eq!(t.token_ids.len(), max_tokens);
            prop_assert_eq!(t.alignment.len(), max_tokens);
            prop_assert_eq!(t.mask.len(), max_tokens);
            for i in 0..max_tokens {
                prop_assert_eq!(!t.mask[i], t.token_ids[i] == PAD_ID);
                prop_assert_eq!(t.mask[i], t.alignment[i].is_some());
            }
            // Alignment covers a prefix of the words, nondecreasing and contiguous.
            let aligned: Vec<usize> = t.alignment.iter().flatten().copied().collect();
            let mut expected_word = 0;
            for (i, &w) in aligned.iter().enumerate() {
                if i > 0 && w != aligned[i - 1] {
                    expected_word += 1;
                }
                prop_assert_eq!(w, expected_word);
            }
            // Every character is in the vocabulary, so pieces reproduce the word.
            for wi in 0..t.covered_words() {
                let glued: String = t.word_tokens(wi)
                    .map(|p| vocab.token(t.token_ids[p]).unwrap())
                    .map(|s| s.strip_prefix(CONTINUATION_PREFIX).unwrap_or(s).to_string())
                    .collect();
                prop_assert_eq!(&glued, &t.words[wi].text);
            }
        }
    }
}
