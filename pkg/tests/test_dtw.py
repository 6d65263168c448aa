import numpy as np
import pytest

from spanalign.corpus import FeatureSequence
from spanalign.dtw import (
    WarpResult,
    candidate_span_costs,
    dba_centroid,
    dtw_distance,
    frame_distances,
    span_costs_from_start,
)

from oracles import exhaustive_dtw, is_valid_warp_path, path_cost


def fs(arr) -> FeatureSequence:
    return FeatureSequence(np.asarray(arr, dtype=np.float64))


def col(*vals) -> FeatureSequence:
    return fs(np.asarray(vals, dtype=np.float64).reshape(-1, 1))


def test_documented_pair():
    # x = [0, 2], y = [0, 1, 2] in one dimension: the middle frame costs
    # 1 wherever it lands, so raw cost 1 and normalized 1/(2+3) = 0.2.
    res = dtw_distance(col(0, 2), col(0, 1, 2))
    assert res.normalized_cost == pytest.approx(0.2, abs=1e-15)
    assert res.path == ((1, 1), (1, 2), (2, 3))


def test_documented_pair_symmetry():
    x, y = col(0, 2), col(0, 1, 2)
    assert dtw_distance(x, y).normalized_cost == dtw_distance(y, x).normalized_cost


def test_identical_sequences_zero_cost():
    x = fs(np.random.default_rng(0).normal(size=(7, 3)))
    res = dtw_distance(x, x)
    assert res.normalized_cost == 0.0
    assert res.path == tuple((i, i) for i in range(1, 8))


def test_single_frame_pair():
    res = dtw_distance(col(1.0), col(4.0))
    assert res.normalized_cost == pytest.approx(3.0 / 2.0)
    assert res.path == ((1, 1),)


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        dtw_distance(fs(np.zeros((2, 2))), fs(np.zeros((2, 3))))


def test_cost_matches_returned_path():
    rng = np.random.default_rng(7)
    for _ in range(25):
        x = rng.normal(size=(int(rng.integers(1, 7)), 2))
        y = rng.normal(size=(int(rng.integers(1, 7)), 2))
        res = dtw_distance(fs(x), fs(y))
        assert is_valid_warp_path(res.path, x.shape[0], y.shape[0])
        assert res.normalized_cost == pytest.approx(path_cost(x, y, res.path), abs=1e-12)


def test_matches_exhaustive_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(40):
        x = rng.normal(size=(int(rng.integers(1, 6)), 2))
        y = rng.normal(size=(int(rng.integers(1, 6)), 2))
        assert dtw_distance(fs(x), fs(y)).normalized_cost == pytest.approx(
            exhaustive_dtw(x, y), abs=1e-12
        )


def test_tie_break_prefers_diagonal():
    # All-zero sequences make every step free; the backtrace must then
    # walk the diagonal first rather than an L-shaped path.
    res = dtw_distance(fs(np.zeros((3, 1))), fs(np.zeros((3, 1))))
    assert res.path == ((1, 1), (2, 2), (3, 3))


def test_frame_distances_euclidean():
    x = np.asarray([[0.0, 0.0], [3.0, 4.0]])
    y = np.asarray([[0.0, 0.0]])
    d = frame_distances(x, y)
    assert d.shape == (2, 1)
    assert d[0, 0] == pytest.approx(0.0)
    assert d[1, 0] == pytest.approx(5.0)


def test_span_costs_from_start_matches_per_span_dp():
    rng = np.random.default_rng(11)
    proto = rng.normal(size=(4, 3))
    frames = rng.normal(size=(12, 3))
    costs = span_costs_from_start(proto, frames, 3, 10)
    for off, b in enumerate(range(3, 11)):
        direct = dtw_distance(fs(proto), fs(frames[2:b])).normalized_cost
        # bitwise: the batched DP must be the same arithmetic
        assert costs[off] == direct


def test_candidate_span_costs_matches_loop():
    rng = np.random.default_rng(13)
    proto = rng.normal(size=(5, 2))
    frames = rng.normal(size=(20, 2))
    spans = ((1, 4), (1, 9), (3, 7), (3, 12), (8, 20), (20, 20))
    batched = candidate_span_costs(proto, frames, spans)
    for k, (a, b) in enumerate(spans):
        assert batched[k] == dtw_distance(fs(proto), fs(frames[a - 1 : b])).normalized_cost


def test_dba_singleton_is_member():
    member = fs(np.random.default_rng(5).normal(size=(6, 2)))
    centroid = dba_centroid([member])
    np.testing.assert_array_equal(centroid.frames, member.frames)


def test_dba_two_constant_sequences():
    # Members [0, 0] and [2, 2]: the average sits at [1, 1].
    centroid = dba_centroid([col(0.0, 0.0), col(2.0, 2.0)])
    np.testing.assert_allclose(centroid.frames, [[1.0], [1.0]])


def test_dba_skeleton_upper_median_length():
    rng = np.random.default_rng(9)
    members = [fs(rng.normal(size=(n, 2))) for n in (3, 9, 5)]
    centroid = dba_centroid(members, iterations=1)
    # lengths sorted (3, 5, 9) -> index 3 // 2 picks 5
    assert centroid.m == 5


def test_dba_objective_non_increasing():
    rng = np.random.default_rng(21)
    members = [fs(rng.normal(size=(int(rng.integers(3, 9)), 3))) for _ in range(6)]
    _, history = dba_centroid(members, iterations=5, return_history=True)
    for prev, cur in zip(history, history[1:]):
        assert cur <= prev + 1e-9


def test_dba_empty_members_rejected():
    with pytest.raises(ValueError):
        dba_centroid([])


def test_result_type():
    res = dtw_distance(col(0.0), col(0.0))
    assert isinstance(res, WarpResult)
