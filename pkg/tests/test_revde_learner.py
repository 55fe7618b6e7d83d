import math

import numpy as np
import pytest

from bodybrain.revde_learner import (
    Archive,
    LearnerParams,
    knn_predict,
    learn,
    revde_matrix,
    revde_triplet,
    trace_csv,
    uniform_crossover,
)


def brute_knn(points, fits, candidate, k):
    dists = [math.sqrt(math.fsum((a - b) ** 2 for a, b in zip(p, candidate))) for p in points]
    order = sorted(range(len(points)), key=lambda i: (dists[i], i))[:k]
    return sum(fits[i] for i in order) / len(order)


def archive_of(points, fits):
    a = Archive()
    for p, f in zip(points, fits):
        a.add(p, f)
    return a


def test_triplet_worked_example():
    y1, y2, y3 = revde_triplet([1, 0], [0, 1], [0, 0], 0.5)
    assert y1.tolist() == [1.0, 0.5]
    assert y2.tolist() == [-0.5, 0.75]
    assert y3.tolist() == [0.75, -0.125]


def test_identical_triplet_is_fixed_point():
    x = np.array([0.3, -0.2, 0.9])
    for y in revde_triplet(x, x, x, 0.7):
        assert np.array_equal(y, x)


def test_length_mismatch():
    with pytest.raises(ValueError):
        revde_triplet([1, 2], [1, 2, 3], [1, 2], 0.5)


def test_matrix_at_half():
    expected = [[1, 0.5, -0.5], [-0.5, 0.75, 0.75], [0.75, -0.125, 0.375]]
    assert np.array_equal(revde_matrix(0.5), expected)


@pytest.mark.parametrize("f", [0.25, 0.5, 1.0])
def test_matrix_form_matches_and_inverts(f, rng):
    r = revde_matrix(f)
    assert abs(np.linalg.det(r)) > 1e-6
    assert np.allclose(np.linalg.inv(r) @ r, np.eye(3), atol=1e-10, rtol=0)
    for _ in range(50):
        x = rng.uniform(-1, 1, size=(3, rng.integers(1, 33)))
        ys = np.array(revde_triplet(*x, f))
        assert np.allclose(r @ x, ys, atol=1e-12, rtol=0)
        assert np.allclose(np.linalg.solve(r, ys), x, atol=1e-12, rtol=0)


def test_uniform_crossover_extremes(rng):
    y = np.array([2.0, -0.5, 0.1])
    x = np.array([0.0, 0.2, -0.3])
    assert uniform_crossover(y, x, 1.0, rng).tolist() == [1.0, -0.5, 0.1]
    assert uniform_crossover(y, x, 0.0, rng).tolist() == x.tolist()
    mixed = uniform_crossover(np.ones(1000), -np.ones(1000), 0.9, rng)
    assert 0.85 < np.mean(mixed == 1.0) < 0.95


def test_knn_examples():
    a = archive_of([[0.1], [0.2], [0.9]], [1, 2, 3])
    assert knn_predict(a, [0.0], 3) == 2.0
    assert knn_predict(a, [0.2], 1) == 2.0
    small = archive_of([[0.0], [1.0]], [4.0, 6.0])
    assert knn_predict(small, [0.3], 3) == 5.0
    with pytest.raises(ValueError):
        knn_predict(Archive(), [0.0], 1)


def test_knn_ties_prefer_earlier_entries():
    a = archive_of([[1.0], [-1.0], [1.0]], [10.0, 20.0, 30.0])
    assert knn_predict(a, [0.0], 1) == 10.0
    assert knn_predict(a, [0.0], 2) == 15.0


def test_knn_matches_brute_force(rng):
    for _ in range(60):
        n = int(rng.integers(1, 300))
        dim = int(rng.integers(1, 8))
        pts = rng.uniform(-1, 1, size=(n, dim))
        if n > 4:  # plant exact duplicates to exercise tie-breaking
            pts[rng.integers(n, size=n // 4)] = pts[0]
        fits = rng.normal(size=n).tolist()
        a = archive_of(pts, fits)
        for k in (1, 3, 5):
            c = pts[0] if rng.random() < 0.3 else rng.uniform(-1, 1, size=dim)
            assert knn_predict(a, c, k) == brute_knn(pts.tolist(), fits, c.tolist(), k)


def test_budget():
    assert LearnerParams().budget == 110
    assert LearnerParams(population=5, iterations=3).budget == 20


def test_params_validation():
    with pytest.raises(ValueError):
        LearnerParams(population=3)
    with pytest.raises(ValueError):
        LearnerParams(crossover=1.5)


def sphere(w):
    return -float(np.sum((np.asarray(w) - 0.3) ** 2))


def test_evaluator_called_exactly_budget_times():
    calls = []
    res = learn(np.zeros(6), lambda w: calls.append(1) or sphere(w), LearnerParams(), 0)
    assert len(calls) == res.evaluations == 110 == len(res.archive)


def test_flat_landscape_gives_zero_delta():
    res = learn(np.full(4, 0.2), lambda w: 1.5, LearnerParams(), 1)
    assert res.delta == 0.0
    assert np.array_equal(res.best, np.full(4, 0.2))


def test_empty_weights_skip_learning():
    res = learn(np.zeros(0), lambda w: 1 / 0, LearnerParams(), 0)
    assert (res.delta, res.evaluations) == (0.0, 0)


@pytest.mark.parametrize("seed", range(8))
def test_delta_nonnegative_and_trace_monotone(seed):
    rng = np.random.default_rng(seed)
    start = rng.uniform(-1, 1, size=5)
    res = learn(start, sphere, LearnerParams(), seed)
    assert res.delta >= 0.0
    assert res.inherited_fitness == sphere(start)
    best = [row.best_fitness for row in res.trace]
    assert all(b >= a for a, b in zip(best, best[1:]))
    assert res.trace[-1].evaluations == 110
    assert np.all(np.abs(res.best) <= 1.0)


def test_learning_improves_a_smooth_landscape():
    res = learn(np.full(3, -0.9), sphere, LearnerParams(), 4)
    assert res.best_fitness > res.inherited_fitness + 1.0


def test_reproducible():
    a = learn(np.full(5, 0.1), sphere, LearnerParams(), 11)
    b = learn(np.full(5, 0.1), sphere, LearnerParams(), 11)
    assert np.array_equal(a.best, b.best)
    assert trace_csv(a.trace) == trace_csv(b.trace)


def test_trace_csv_header():
    res = learn(np.zeros(2), sphere, LearnerParams(population=4, iterations=2), 0)
    lines = trace_csv(res.trace).splitlines()
    assert lines[0].startswith("# schema:")
    assert lines[1] == "iteration,best_fitness,mean_abs_prediction_error,evaluations"
    assert len(lines) == 2 + 3
