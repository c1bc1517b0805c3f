import math
import random
import unicodedata

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaelkit.records import UsageError
from gaelkit.stats import mann_whitney_u
from gaelkit.texteval import (
    BLEU_EPSILON,
    bleu,
    bleu_tokenize,
    exact_match,
    length_stats,
    normalize_answer,
)

# ---------------------------------------------------------------------------
# Oracle: a second BLEU written from the same pinned rules, different code.


def _oracle_tokenize(text):
    tokens = []
    word = []
    for ch in text.lower():
        if ch.isspace():
            if word:
                tokens.append("".join(word))
                word = []
        elif unicodedata.category(ch)[0] in ("P", "S"):
            if word:
                tokens.append("".join(word))
                word = []
            tokens.append(ch)
        else:
            word.append(ch)
    if word:
        tokens.append("".join(word))
    return tokens


def _oracle_bleu(hyps, refs, max_n=4):
    match_by_n = {}
    total_by_n = {}
    hyp_total = ref_total = 0
    for hyp, ref in zip(hyps, refs):
        h = _oracle_tokenize(hyp)
        r = _oracle_tokenize(ref)
        hyp_total += len(h)
        ref_total += len(r)
        for n in range(1, max_n + 1):
            h_counts = {}
            for i in range(len(h) - n + 1):
                gram = tuple(h[i : i + n])
                h_counts[gram] = h_counts.get(gram, 0) + 1
            r_counts = {}
            for i in range(len(r) - n + 1):
                gram = tuple(r[i : i + n])
                r_counts[gram] = r_counts.get(gram, 0) + 1
            total_by_n[n] = total_by_n.get(n, 0) + max(len(h) - n + 1, 0)
            match_by_n[n] = match_by_n.get(n, 0) + sum(
                min(c, r_counts.get(g, 0)) for g, c in h_counts.items()
            )
    log_sum = 0.0
    orders = 0
    for n in range(1, max_n + 1):
        if total_by_n.get(n, 0) == 0:
            continue
        orders += 1
        p = match_by_n[n] / total_by_n[n]
        log_sum += math.log(p if p > 0 else BLEU_EPSILON)
    if orders == 0 or hyp_total == 0:
        return 0.0
    bp = 1.0 if hyp_total >= ref_total else math.exp(1 - ref_total / hyp_total)
    return bp * math.exp(log_sum / orders)


_WORDS = ["an", "teach", "mór", "bhí", "sé", "go", "maith", "cat", "dog", "rith",
          "lá", "amháin", "uisce", "fear", "bean", "óg", "sean", "the", "house"]
_PUNCT = ["", ",", ".", "!", "?", ";"]


def _random_sentence(rng, min_len=1, max_len=18):
    parts = []
    for _ in range(rng.randint(min_len, max_len)):
        parts.append(rng.choice(_WORDS) + rng.choice(_PUNCT))
    return " ".join(parts)


def test_bleu_self_score_is_one():
    sentences = ["Bhí an lá go maith.", "Rith an cat mór!", "an teach"]
    assert bleu(sentences, sentences).score == pytest.approx(1.0)


def test_bleu_all_empty_hypotheses_near_zero():
    result = bleu(["", ""], ["an teach mór", "cat"])
    assert result.score == pytest.approx(0.0, abs=1e-6)


def test_bleu_length_mismatch():
    with pytest.raises(UsageError):
        bleu(["a"], ["a", "b"])


def test_bleu_single_empty_hypothesis_does_not_abort():
    result = bleu(["", "an teach mór bhí sé go maith"], ["cat", "an teach mór bhí sé go maith"])
    assert 0.0 < result.score < 1.0


def test_bleu_matches_oracle_on_200_random_pairs():
    rng = random.Random(42)
    hyps, refs = [], []
    for _ in range(200):
        ref = _random_sentence(rng)
        if rng.random() < 0.3:
            hyp = ref  # some perfect pairs
        else:
            hyp = _random_sentence(rng)
        hyps.append(hyp)
        refs.append(ref)
    ours = bleu(hyps, refs).score
    oracle = _oracle_bleu(hyps, refs)
    assert ours == pytest.approx(oracle, abs=1e-6)


def test_bleu_invariant_under_joint_permutation():
    rng = random.Random(5)
    hyps = [_random_sentence(rng) for _ in range(30)]
    refs = [_random_sentence(rng) for _ in range(30)]
    base = bleu(hyps, refs).score
    order = list(range(30))
    rng.shuffle(order)
    shuffled = bleu([hyps[i] for i in order], [refs[i] for i in order]).score
    assert shuffled == pytest.approx(base, abs=1e-12)


def test_bleu_tokenizer_detaches_punctuation():
    assert bleu_tokenize("Dublin, Ireland!") == ["dublin", ",", "ireland", "!"]


def test_bleu_degrades_when_matched_ngram_removed():
    ref = ["an teach mór bhí sé go maith inniu"]
    intact = bleu(["an teach mór bhí sé go maith inniu"], ref)
    broken = bleu(["an teach mór bhí sé go maith"], ref)
    for n in range(4):
        assert broken.precisions[n] <= intact.precisions[n] + 1e-12
    assert broken.score < intact.score


@given(st.lists(st.sampled_from(_WORDS), min_size=1, max_size=12))
@settings(max_examples=100)
def test_bleu_identity_property(words):
    sentence = " ".join(words)
    assert bleu([sentence], [sentence]).score == pytest.approx(1.0)


def test_exact_match_identity():
    assert exact_match(["a", "b"], ["a", "b"]) == 1.0


def test_exact_match_normalizes():
    assert exact_match(["Dublin."], ["dublin"]) == 1.0
    assert exact_match(["  Baile   Átha Cliath "], ["baile átha cliath"]) == 1.0


def test_exact_match_half():
    preds = ["dublin", "cork", "galway", "derry", "sligo",
             "wrong1", "wrong2", "wrong3", "wrong4", "wrong5"]
    golds = ["Dublin", "Cork!", "GALWAY", "derry.", " sligo ",
             "right1", "right2", "right3", "right4", "right5"]
    assert exact_match(preds, golds) == 0.5


@given(st.lists(st.text(max_size=30), min_size=1, max_size=10))
@settings(max_examples=100)
def test_exact_match_invariant_under_normalizer(texts):
    normalized = [normalize_answer(t) for t in texts]
    assert exact_match(texts, texts) == 1.0
    assert exact_match(normalized, texts) == 1.0


def test_length_stats_basic():
    stats = length_stats(["a b c"])
    assert stats.counts == [3]
    assert stats.mean == 3
    assert stats.count == 1
    assert stats.histogram == {0: 1}


def test_length_stats_empty_input():
    stats = length_stats([])
    assert stats.count == 0
    assert stats.mean is None
    assert stats.histogram == {}


def test_length_stats_histogram_bins():
    responses = ["w " * 5, "w " * 15, "w " * 17, "w " * 25]
    stats = length_stats([r.strip() for r in responses], bin_width=10)
    assert stats.histogram == {0: 1, 10: 2, 20: 1}
    assert stats.mean == pytest.approx((5 + 15 + 17 + 25) / 4)


def test_length_stats_feed_mwu_shifted_corpora():
    # long-generation pathology: verbose base model vs terse tuned model
    rng = random.Random(3)
    base = [" ".join("w" for _ in range(rng.randint(90, 170))) for _ in range(300)]
    tuned = [" ".join("w" for _ in range(rng.randint(20, 70))) for _ in range(300)]
    base_stats = length_stats(base)
    tuned_stats = length_stats(tuned)
    result = mann_whitney_u(base_stats.counts, tuned_stats.counts)
    assert base_stats.mean > tuned_stats.mean
    assert result.p_one_sided < 1e-6
