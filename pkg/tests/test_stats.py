import math
import random
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaelkit.records import UsageError
from gaelkit.stats import (
    DegenerateStatError,
    WinMatrix,
    bt_fit,
    bt_log_likelihood,
    format_p,
    kappa,
    mann_whitney_u,
    mode_aggregate,
    rank,
    rank_strengths,
)

# ---------------------------------------------------------------------------
# Win matrix


def test_win_matrix_validates_shape_and_diagonal():
    with pytest.raises(UsageError):
        WinMatrix(models=["a", "b"], wins=[[0, 1]])
    with pytest.raises(UsageError):
        WinMatrix(models=["a", "b"], wins=[[1, 0], [0, 0]])
    with pytest.raises(UsageError):
        WinMatrix(models=["a", "b"], wins=[[0, -1], [0, 0]])


def test_win_matrix_total_and_save_load(tmp_path):
    m = WinMatrix.zeros(["a", "b", "c"])
    m.add_win("a", "b", 3)
    m.add_win("c", "a")
    assert m.total() == 4
    path = tmp_path / "wm.json"
    m.save(path)
    assert WinMatrix.load(path).wins == m.wins


# ---------------------------------------------------------------------------
# Bradley-Terry


def _grid_oracle_ll(matrix, alpha=0.0, anchor_log_range=4.0):
    """Brute-force likelihood maximization over log-strength grids.

    The last model is anchored at strength 1; the rest sweep a coarse log
    grid that is refined twice around the best cell. Independent of the MM
    code path entirely (only the shared likelihood definition is reused).
    """
    k = len(matrix.models)
    free = k - 1
    best = None
    centers = [0.0] * free
    width = anchor_log_range
    for _ in range(3):  # coarse-to-fine refinement
        steps = 21
        axis = [
            [c + width * (i / (steps - 1) - 0.5) for i in range(steps)] for c in centers
        ]

        def sweep(idx, logs):
            nonlocal best, centers
            if idx == free:
                strengths = [math.exp(v) for v in logs] + [1.0]
                ll = bt_log_likelihood(matrix, strengths, alpha)
                if best is None or ll > best[0]:
                    best = (ll, list(logs))
                return
            for v in axis[idx]:
                sweep(idx + 1, logs + [v])

        sweep(0, [])
        centers = best[1]
        width /= 8.0
    return best[0], [math.exp(v) for v in best[1]] + [1.0]


def test_bt_equal_wins_equal_strengths():
    m = WinMatrix(models=["b", "a"], wins=[[0, 5], [5, 0]])
    result = bt_fit(m, alpha=0.0)
    assert result.strengths["a"] == pytest.approx(1.0, abs=1e-9)
    assert result.strengths["b"] == pytest.approx(1.0, abs=1e-9)
    assert result.ranking == ["a", "b"]  # tie broken by canonical name


def test_bt_three_model_chain_ordering_matches_grid_oracle():
    # A>B 3-1, B>C 3-1, A>C 3-1
    m = WinMatrix(models=["A", "B", "C"], wins=[[0, 3, 3], [1, 0, 3], [1, 1, 0]])
    result = bt_fit(m, alpha=0.0)
    assert result.ranking == ["A", "B", "C"]
    s = result.strengths
    assert s["A"] > s["B"] > s["C"]
    oracle_ll, _ = _grid_oracle_ll(m)
    assert result.log_likelihood == pytest.approx(oracle_ll, abs=1e-3)
    assert result.log_likelihood >= oracle_ll - 1e-6  # MM found the true optimum


def test_bt_unbeaten_model_needs_smoothing():
    m = WinMatrix(models=["won", "lost"], wins=[[0, 4], [0, 0]])
    with pytest.raises(DegenerateStatError) as err:
        bt_fit(m, alpha=0.0)
    assert "won" in str(err.value) and "lost" in str(err.value)
    result = bt_fit(m, alpha=0.01)
    assert result.ranking[0] == "won"
    assert all(v > 0 for v in result.strengths.values())
    assert math.isfinite(result.log_likelihood)


def test_bt_ll_trace_monotone_nondecreasing():
    m = WinMatrix(models=["A", "B", "C"], wins=[[0, 7, 2], [3, 0, 5], [4, 1, 0]])
    result = bt_fit(m, alpha=0.01)
    trace = result.ll_trace
    assert len(trace) >= 2
    for earlier, later in zip(trace, trace[1:]):
        assert later >= earlier - 1e-9 * (1 + abs(earlier))


def test_bt_strengths_geometric_mean_one():
    m = WinMatrix(models=["A", "B", "C"], wins=[[0, 9, 5], [3, 0, 8], [2, 1, 0]])
    result = bt_fit(m)
    logs = [math.log(v) for v in result.strengths.values()]
    assert sum(logs) == pytest.approx(0.0, abs=1e-9)


def test_bt_needs_two_models():
    with pytest.raises(UsageError):
        bt_fit(WinMatrix(models=["solo"], wins=[[0]]))


def test_rank_scale_invariant():
    assert rank_strengths({"a": 2.0, "b": 1.0, "c": 0.5}) == rank_strengths(
        {"a": 4.0, "b": 2.0, "c": 1.0}
    )


def test_rank_exact_tie_lexicographic():
    assert rank_strengths({"zeta": 1.0, "alpha": 1.0, "mid": 2.0}) == ["mid", "alpha", "zeta"]


def _expected_win_matrix(strengths: dict, per_pair: int) -> WinMatrix:
    models = list(strengths)
    m = WinMatrix.zeros(models)
    for a, b in combinations(models, 2):
        p = strengths[a] / (strengths[a] + strengths[b])
        wins_a = round(per_pair * p)
        m.add_win(a, b, wins_a)
        m.add_win(b, a, per_pair - wins_a)
    return m


def test_bt_recovers_planted_six_model_order():
    planted = {"m1": 8.0, "m2": 5.0, "m3": 3.0, "m4": 2.0, "m5": 1.2, "m6": 0.7}
    matrix = _expected_win_matrix(planted, per_pair=400)
    result = bt_fit(matrix, alpha=0.0)
    assert rank(result) == sorted(planted, key=planted.get, reverse=True)


def test_bt_invariant_under_model_relabeling():
    m = WinMatrix(models=["A", "B", "C"], wins=[[0, 6, 4], [2, 0, 5], [4, 3, 0]])
    permuted = WinMatrix(
        models=["C", "A", "B"],
        wins=[[0, 4, 3], [4, 0, 6], [5, 2, 0]],
    )
    r1 = bt_fit(m, alpha=0.01)
    r2 = bt_fit(permuted, alpha=0.01)
    assert r1.ranking == r2.ranking
    for model in m.models:
        assert r1.strengths[model] == pytest.approx(r2.strengths[model], rel=1e-6)


# ---------------------------------------------------------------------------
# Mode aggregation


def test_mode_majority():
    assert mode_aggregate([["A", "B"], ["A", "B"], ["B", "B"]]) == ["A", "B"]


def test_mode_unanimous():
    assert mode_aggregate([["B"], ["B"], ["B"]]) == ["B"]


def test_mode_rejects_even_judges():
    with pytest.raises(UsageError):
        mode_aggregate([["A"], ["B"]])


def test_mode_rejects_ragged_lists():
    with pytest.raises(UsageError):
        mode_aggregate([["A"], ["A", "B"], ["B"]])


# ---------------------------------------------------------------------------
# Cohen's kappa


def test_kappa_perfect_agreement():
    result = kappa(["A", "B", "A", "B"], ["A", "B", "A", "B"])
    assert result.kappa == 1.0


def test_kappa_hand_case_exact():
    # both-A=20, A/B=5, B/A=10, both-B=15 -> p_o=0.7, p_e=0.5, kappa=0.4
    a = ["A"] * 20 + ["A"] * 5 + ["B"] * 10 + ["B"] * 15
    b = ["A"] * 20 + ["B"] * 5 + ["A"] * 10 + ["B"] * 15
    result = kappa(a, b)
    assert result.p_observed == pytest.approx(0.7)
    assert result.p_expected == pytest.approx(0.5)
    assert result.kappa == 0.4


def test_kappa_91_items_90_agreements_balanced():
    # 45 both-A, 45 both-B, one disagreement: p_e ~ 0.5, kappa ~ 0.978
    a = ["A"] * 45 + ["B"] * 45 + ["A"]
    b = ["A"] * 45 + ["B"] * 45 + ["B"]
    result = kappa(a, b)
    assert result.p_expected == pytest.approx(0.5, abs=1e-4)
    assert result.kappa == pytest.approx(0.978, abs=5e-4)


def test_kappa_symmetric():
    a = ["A", "B", "A", "B", "A", "A"]
    b = ["B", "B", "A", "A", "A", "B"]
    assert kappa(a, b).kappa == kappa(b, a).kappa


def test_kappa_degenerate_constant_raters():
    with pytest.raises(DegenerateStatError):
        kappa(["A", "A", "A"], ["A", "A", "A"])


def test_kappa_length_mismatch():
    with pytest.raises(UsageError):
        kappa(["A"], ["A", "B"])


@given(
    st.lists(st.sampled_from(["A", "B"]), min_size=2, max_size=60).filter(
        lambda l: len(set(l)) > 1
    )
)
@settings(max_examples=100)
def test_kappa_one_iff_identical(choices):
    assert kappa(choices, choices).kappa == 1.0
    flipped = ["B" if c == "A" else "A" for c in choices]
    assert kappa(choices, flipped).kappa < 1.0


# ---------------------------------------------------------------------------
# Mann-Whitney U


def _oracle_u(xs, ys):
    """Pairwise-counted U, independent of the rank-based implementation."""
    return sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in xs for b in ys)


def _oracle_exact_p(xs, ys):
    """Enumerate every labeling of the pooled values; P(U >= observed)."""
    pooled = list(xs) + list(ys)
    n1 = len(xs)
    observed = _oracle_u(xs, ys)
    hits = 0
    total = 0
    for labels in combinations(range(len(pooled)), n1):
        chosen = set(labels)
        lab_x = [pooled[i] for i in labels]
        lab_y = [pooled[i] for i in range(len(pooled)) if i not in chosen]
        total += 1
        if _oracle_u(lab_x, lab_y) >= observed:
            hits += 1
    return observed, hits / total


def test_mwu_total_separation():
    result = mann_whitney_u([5, 7], [1, 2, 3])
    assert result.u1 == 6 == result.n1 * result.n2
    assert result.method == "exact"
    assert result.p_one_sided == pytest.approx(0.1)  # 1 / C(5,2)


def test_mwu_small_case_two_thirds():
    result = mann_whitney_u([3, 1], [2])
    assert result.u1 == 1
    assert result.p_one_sided == pytest.approx(2 / 3)


def test_mwu_identical_multisets_symmetric():
    result = mann_whitney_u([1, 2, 3], [1, 2, 3])
    assert result.u1 == result.n1 * result.n2 / 2
    assert result.p_one_sided == pytest.approx(0.5, abs=0.2)


def test_mwu_degenerate_all_identical():
    with pytest.raises(DegenerateStatError):
        mann_whitney_u([4, 4], [4, 4, 4])


def test_mwu_exact_matches_oracle_small_samples():
    rng = random.Random(1234)
    for _ in range(60):
        n1 = rng.randint(1, 5)
        n2 = rng.randint(1, 10 - n1) if n1 < 9 else 1
        xs = [rng.randint(0, 4) for _ in range(n1)]
        ys = [rng.randint(0, 4) for _ in range(n2)]
        if len(set(xs + ys)) == 1:
            continue
        result = mann_whitney_u(xs, ys)
        oracle_u, oracle_p = _oracle_exact_p(xs, ys)
        assert result.u1 == oracle_u
        assert result.method == "exact"
        assert result.p_one_sided == pytest.approx(oracle_p, abs=1e-12)


@given(
    st.lists(st.integers(min_value=0, max_value=6), min_size=1, max_size=25),
    st.lists(st.integers(min_value=0, max_value=6), min_size=1, max_size=25),
)
@settings(max_examples=150)
def test_mwu_u1_plus_u2_is_n1n2(xs, ys):
    if len(set(xs + ys)) == 1:
        return
    forward = mann_whitney_u(xs, ys)
    backward = mann_whitney_u(ys, xs)
    assert forward.u1 + backward.u1 == pytest.approx(len(xs) * len(ys))
    assert forward.u1 + forward.u2 == pytest.approx(len(xs) * len(ys))


def test_mwu_normal_and_exact_same_order_of_magnitude():
    rng = random.Random(99)
    for _ in range(20):
        xs = [rng.randint(0, 10) for _ in range(rng.randint(3, 8))]
        ys = [rng.randint(0, 10) for _ in range(rng.randint(3, 8))]
        if len(set(xs + ys)) == 1 or len(xs) + len(ys) > 16:
            continue
        result = mann_whitney_u(xs, ys)
        assert result.method == "exact"
        approx = 0.5 * math.erfc(result.z / math.sqrt(2))
        if 0.001 < result.p_one_sided < 0.999:
            ratio = approx / result.p_one_sided
            assert 0.1 < ratio < 10.0


def test_mwu_large_shifted_samples_tiny_p():
    rng = random.Random(7)
    long_sample = [rng.gauss(120, 30) for _ in range(400)]
    short_sample = [rng.gauss(50, 15) for _ in range(400)]
    result = mann_whitney_u(long_sample, short_sample)
    assert result.method == "normal"
    assert result.p_one_sided < 1e-6


def test_mwu_tie_groups_reported():
    result = mann_whitney_u([1, 2, 2], [2, 3])
    assert result.tie_groups == [3]


def test_format_p_subnormal_bound():
    assert format_p(0.0) == "< 1e-308"
    assert format_p(5e-310) == "< 1e-308"
    assert format_p(0.05) == "0.05"
