import numpy as np
import pytest
from hypothesis import given, strategies as st

from eoqa import evaluation
from eoqa.errors import ParameterError
from eoqa.evaluation import (MetricConvention, QualityVector, ScoreConvention,
                             aggregate_score, macro_auc, med_r, metric_score,
                             prf_at_k, recall_at_k)

# six dataset-level quality vectors with known aggregate scores
REFERENCE_ROWS = [
    ((1.000, 30.00, 0.515, 1.000, 0.300), 0.904),
    ((1.021, 30.00, 0.488, 1.000, 0.300), 0.887),
    ((1.000, 30.00, 0.505, 1.281, 0.300), 0.892),
    ((1.000, 30.00, 0.507, 1.000, 0.300), 0.899),
    ((1.000, 30.00, 0.503, 1.000, 0.300), 0.898),
    ((1.000, 30.00, 0.499, 3.250, 0.300), 0.846),
]


def _vec(blur, snr, rer, sharpness, gsd):
    return QualityVector(blur=blur, snr=snr, rer=rer,
                         sharpness=sharpness, gsd=gsd)


def test_default_convention_constants():
    conv = ScoreConvention()
    expected = {
        "blur": (2.5, 0.0), "snr": (15.0, 30.0), "rer": (0.40, 0.55),
        "sharpness": (9.0, 1.0), "gsd": (0.30, 0.30),
    }
    for name, (rng_, obj) in expected.items():
        entry = conv.entries[name]
        assert (entry.range, entry.objective) == (rng_, obj)
        assert entry.weight == pytest.approx(0.2)


def test_metric_score_clamps_to_unit_interval():
    conv = MetricConvention(range=2.5, objective=0.0, weight=0.2)
    assert metric_score(conv, 0.0) == 1.0
    assert metric_score(conv, 1.25) == pytest.approx(0.5)
    assert metric_score(conv, 99.0) == 0.0   # clamped, never negative


def test_aggregate_score_reference_rows():
    for vec, want in REFERENCE_ROWS:
        assert aggregate_score(_vec(*vec)) == pytest.approx(want, abs=0.01)


def test_aggregate_score_hand_value():
    # blur 1.0 -> 0.6; snr 30 -> 1; rer .515 -> 1 - .035/.40; F 1 -> 1;
    # gsd .30 -> 1; mean of the five
    got = aggregate_score(_vec(1.0, 30.0, 0.515, 1.0, 0.30))
    want = (0.6 + 1.0 + (1 - 0.035 / 0.40) + 1.0 + 1.0) / 5.0
    assert got == pytest.approx(want, abs=1e-12)


def test_aggregate_score_accepts_dict_and_custom_weights():
    d = {"blur": 1.0, "snr": 30.0, "rer": 0.55, "sharpness": 1.0, "gsd": 0.30}
    base = aggregate_score(d)
    conv = ScoreConvention()
    conv.entries["blur"] = MetricConvention(2.5, 0.0, 1.0)
    for n in ("snr", "rer", "sharpness", "gsd"):
        conv.entries[n] = MetricConvention(conv.entries[n].range,
                                           conv.entries[n].objective, 0.0)
    assert aggregate_score(d, conv) == pytest.approx(0.6)
    assert base == pytest.approx((0.6 + 4.0) / 5.0)


def test_aggregate_score_rejects_missing_fields():
    with pytest.raises(ParameterError):
        aggregate_score({"blur": 1.0})


@given(st.tuples(st.floats(0, 5), st.floats(0, 40), st.floats(0, 1),
                 st.floats(0, 12), st.floats(0, 1)))
def test_aggregate_score_stays_in_unit_interval(vals):
    assert 0.0 <= aggregate_score(_vec(*vals)) <= 1.0


def test_interval_distance_worked_example():
    # 10-interval grid over [0.30, 0.60] m/px: a 0.333 target falls in
    # interval 1.  A 0.366 prediction (interval 2) is distance 1; a 0.60
    # prediction (interval 9) is distance |9 - 1| = 8.
    from eoqa.modifiers import DEFAULT_GRIDS, ModifierKind
    grid = DEFAULT_GRIDS[ModifierKind.GSD]
    target = grid.value_to_class(1.0 / 3.0)
    assert target == 1
    near = grid.value_to_class(0.36666667)
    far = grid.value_to_class(0.60)
    assert med_r([(target, near, None)]) == 1.0
    assert med_r([(target, far, None)]) == 8.0
    assert recall_at_k([(target, near, None)], 1) == 0.0
    assert recall_at_k([(target, near, None)], 2) == 100.0


def test_med_r_hand_values():
    pairs = [(0, 0, None), (1, 3, None), (5, 1, None)]
    assert med_r(pairs) == 2.0           # distances 0, 2, 4
    assert med_r(pairs[:2]) == 1.0       # median of 0, 2
    with pytest.raises(ParameterError):
        med_r([])


def test_recall_at_k_hand_values():
    pairs = [(0, 0, None), (1, 3, None), (5, 1, None), (2, 2, None)]
    assert recall_at_k(pairs, 1) == 50.0    # exact matches only
    assert recall_at_k(pairs, 3) == 75.0    # distance < 3
    assert recall_at_k(pairs, 5) == 100.0
    with pytest.raises(ParameterError):
        recall_at_k(pairs, 0)


def test_prf_at_k_hand_case():
    # k=1 window is just the target class; probabilities decide positives
    pairs = [
        (0, 0, np.array([0.8, 0.1, 0.1])),    # target predicted -> TP
        (1, 2, np.array([0.1, 0.2, 0.7])),    # target misses 0.3 -> FN
        (2, 2, np.array([0.05, 0.15, 0.8])),  # target predicted -> TP
    ]
    out = prf_at_k(pairs, 1)
    assert out["precision"] == pytest.approx(1.0)
    assert out["recall"] == pytest.approx(2.0 / 3.0)
    assert out["accuracy"] == pytest.approx(2.0 / 3.0)
    assert out["f1"] == pytest.approx(0.8)


def test_prf_at_k_argmax_fallback_without_probs():
    out = prf_at_k([(0, 0, None), (1, 0, None)], 1)
    # pair 1: target 0 predicted -> TP; pair 2: target 1 not predicted -> FN,
    # and no other classes inside the k=1 window
    assert out["precision"] == 1.0
    assert out["recall"] == 0.5


def test_macro_auc_perfect_and_chance():
    perfect = [(c, c, np.eye(3)[c]) for c in (0, 1, 2) for _ in range(4)]
    assert macro_auc(perfect) == pytest.approx(1.0)
    uniform = [(c, 0, np.full(3, 1 / 3)) for c in (0, 1, 2) for _ in range(4)]
    assert macro_auc(uniform) == pytest.approx(0.5)   # all ties -> chance


def test_macro_auc_requires_probabilities():
    with pytest.raises(ParameterError):
        macro_auc([(0, 0, None)])


def _brute_force_auc(pairs):
    """Pairwise comparisons: P(score_pos > score_neg) + 0.5 P(tie), macro."""
    targets = np.array([t for t, _, _ in pairs])
    scores = np.array([p for _, _, p in pairs])
    aucs = []
    for c in np.unique(targets):
        pos = scores[targets == c, c]
        neg = scores[targets != c, c]
        if len(neg) == 0:
            continue
        wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
        aucs.append(wins / (len(pos) * len(neg)))
    return float(np.mean(aucs))


def _random_pairs(rng, n, n_classes):
    pairs = []
    for _ in range(n):
        t = int(rng.integers(n_classes))
        probs = rng.random(n_classes)
        # bias some mass toward the target so ranks are nontrivial
        probs[t] += rng.random() * 2
        probs /= probs.sum()
        # quantize to force plenty of exact rank ties
        probs = np.round(probs, 2)
        pairs.append((t, int(np.argmax(probs)), probs))
    return pairs


def test_rank_metrics_match_brute_force_on_random_fixtures():
    rng = np.random.default_rng(77)
    for trial in range(10):
        n_classes = int(rng.integers(3, 12))
        pairs = _random_pairs(rng, int(rng.integers(5, 60)), n_classes)
        dists = sorted(abs(t - p) for t, p, _ in pairs)
        mid = len(dists) // 2
        want_medr = (dists[mid] if len(dists) % 2
                     else (dists[mid - 1] + dists[mid]) / 2.0)
        assert med_r(pairs) == want_medr
        for k in (1, 2, 5):
            want = 100.0 * sum(d < k for d in dists) / len(dists)
            assert recall_at_k(pairs, k) == pytest.approx(want, abs=1e-12)
        assert macro_auc(pairs) == pytest.approx(_brute_force_auc(pairs),
                                                 abs=1e-12)


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)),
                min_size=1, max_size=30))
def test_med_r_is_order_invariant_and_bounded(raw):
    pairs = [(t, p, None) for t, p in raw]
    value = med_r(pairs)
    assert 0.0 <= value <= 9.0
    assert med_r(list(reversed(pairs))) == value


def test_quality_vector_as_dict():
    v = _vec(1.0, 2.0, 3.0, 4.0, 5.0)
    assert v.as_dict() == {"blur": 1.0, "snr": 2.0, "rer": 3.0,
                           "sharpness": 4.0, "gsd": 5.0}


def test_convention_as_dict_roundtrip():
    doc = ScoreConvention().as_dict()
    assert sorted(doc) == sorted(evaluation.PARAM_NAMES)
    assert doc["blur"] == {"range": 2.5, "objective": 0.0, "weight": 0.2}
