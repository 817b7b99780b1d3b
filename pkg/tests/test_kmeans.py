import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tidyfit.cli import simulation_centers
from tidyfit.errors import ArgumentError, SchemaError
from tidyfit.frame import Frame, apply_combine, inflate
from tidyfit.kmeans import (
    augment_kmeans,
    cluster_purity,
    cluster_study,
    fit_kmeans,
    gaussian_mixture,
    glance_kmeans,
    kmeans,
    tidy_kmeans,
)

TRUE_CENTERS = np.array([[5.0, -1.0], [0.0, 1.0], [-3.0, -2.0]])


def _points(seed, sd=1.0):
    centers = simulation_centers().with_column("sd", [sd] * 3)
    return gaussian_mixture(centers, seed=seed)


def _X(frame):
    return np.column_stack([frame["x1"], frame["x2"]])


# -- trivial cases -----------------------------------------------------------------


def test_k_equals_n():
    X = np.array([[0.0, 0.0], [1.0, 5.0], [-2.0, 3.0], [4.0, 4.0]])
    fit = fit_kmeans(X, 4, nstart=3)
    assert fit.tot_withinss == 0.0
    assert sorted(map(tuple, fit.centers)) == sorted(map(tuple, X))
    assert fit.cluster_sizes.tolist() == [1, 1, 1, 1]


def test_k_one():
    X = np.array([[1.0, 2.0], [3.0, 4.0], [2.0, 3.0], [2.0, 3.0]])
    fit = fit_kmeans(X, 1)
    assert fit.centers[0] == pytest.approx([2.0, 3.0])
    assert fit.tot_withinss == pytest.approx(fit.totss, rel=1e-12)
    assert fit.betweenss == pytest.approx(0.0, abs=1e-12)
    t = tidy_kmeans(fit, ["x1", "x2"])
    assert t.n_rows == 1 and t["x1"][0] == pytest.approx(2.0) and t["x2"][0] == pytest.approx(3.0)
    g = glance_kmeans(fit)
    assert g["tot.withinss"][0] == pytest.approx(g["totss"][0], rel=1e-12)


def test_simulation_k_one_labels_all_one():
    data = _points(2014)
    fit = kmeans(data, ["x1", "x2"], 1)
    a = augment_kmeans(fit, data)
    assert set(a[".cluster"].tolist()) == {"1"}


# -- recovery on the three-cluster generator ---------------------------------------


def _matched_errors(centers):
    # smallest total error over labelings of the estimated centers
    best = None
    for perm in itertools.permutations(range(3)):
        err = np.abs(centers[list(perm)] - TRUE_CENTERS)
        if best is None or err.sum() < best.sum():
            best = err
    return best


def test_centers_recovered_within_tolerance():
    errs = []
    for s in range(20):
        fit = kmeans(_points(1000 + s), ["x1", "x2"], 3, nstart=5, seed=s)
        errs.append(_matched_errors(fit.centers))
    med = np.median(np.array(errs), axis=0)
    assert np.all(med <= 0.3), med


def test_elbow_at_three():
    gaps = []
    for s in range(20):
        data = _points(500 + s)
        w = {k: kmeans(data, ["x1", "x2"], k, nstart=5, seed=s).tot_withinss for k in (2, 3, 4)}
        gaps.append((w[2] - w[3], w[3] - w[4]))
    gaps = np.array(gaps)
    assert gaps[:, 0].mean() > 5 * gaps[:, 1].mean()


# -- tidiers -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def fit3():
    data = _points(2014)
    return data, kmeans(data, ["x1", "x2"], 3, nstart=5)


def test_tidy_schema(fit3):
    data, fit = fit3
    t = tidy_kmeans(fit)
    assert t.names == ["x1", "x2", "size", "withinss", "cluster"]
    assert t.kinds["size"] == "int" and t.kinds["cluster"] == "text"
    assert t["cluster"].tolist() == ["1", "2", "3"]
    assert int(t["size"].sum()) == data.n_rows == 300
    with pytest.raises(ArgumentError):
        tidy_kmeans(fit, ["only_one"])


def test_augment_matches_assignments(fit3):
    data, fit = fit3
    a = augment_kmeans(fit, data)
    assert a.names == data.names + [".cluster"]
    assert a[".cluster"].tolist() == [str(i) for i in fit.assignments]
    with pytest.raises(ArgumentError):
        augment_kmeans(fit, data.head(10))


def test_glance_identity(fit3):
    _, fit = fit3
    g = glance_kmeans(fit)
    assert g.names == ["totss", "tot.withinss", "betweenss", "iter"]
    assert g["totss"][0] == pytest.approx(g["tot.withinss"][0] + g["betweenss"][0], rel=1e-12)
    assert g["iter"][0] == fit.iterations


def test_augment_recombines_over_k():
    data = _points(7)
    grouped = inflate(data, {"k": [1, 2, 3]})

    def per_k(part):
        k = int(part["k"][0])
        body = part.drop(["k"])
        return augment_kmeans(kmeans(body, ["x1", "x2"], k, nstart=2), body)

    out = apply_combine(grouped, per_k)
    assert out.names[:1] == ["k"] and out.names[-1] == ".cluster"
    assert {"oracle", "x1", "x2"} <= set(out.names)
    assert out.n_rows == 3 * data.n_rows


# -- purity ------------------------------------------------------------------------


def _assign_frame(oracle, cluster):
    n = len(oracle)
    return Frame({"replication": [1] * n, "sd": [1.0] * n, "oracle": oracle, ".cluster": cluster})


def test_purity_perfect():
    oracle = [1] * 5 + [2] * 3 + [3] * 4
    p = cluster_purity(_assign_frame(oracle, [str(o) for o in oracle]))
    assert p["purity"].tolist() == [1.0]


def test_purity_single_cluster():
    oracle = [1] * 100 + [2] * 150 + [3] * 50
    p = cluster_purity(_assign_frame(oracle, ["1"] * 300))
    assert p["purity"][0] == 0.5


def test_purity_per_group_and_schema():
    f = Frame({
        "replication": [1, 1, 1, 2, 2, 2],
        "sd": [0.5] * 6,
        "oracle": [1, 1, 2, 1, 2, 2],
        ".cluster": ["1", "1", "1", "1", "2", "2"],
    })
    p = cluster_purity(f)
    assert p.names == ["replication", "sd", "purity"]
    assert p["purity"].tolist() == pytest.approx([2 / 3, 1.0])
    with pytest.raises(SchemaError):
        cluster_purity(f.drop(["oracle"]))


def test_cluster_study_shapes():
    glances, centers, assignments = cluster_study(
        simulation_centers(), {"sd": [0.5, 2.0], "replication": [1, 2]}, [1, 2, 3], nstart=2, assignment_ks=[3])
    assert glances.names[:3] == ["sd", "replication", "k"]
    assert glances.n_rows == 2 * 2 * 3
    assert centers.n_rows == 2 * 2 * (1 + 2 + 3)
    assert assignments.n_rows == 2 * 2 * 300 and set(assignments["k"].tolist()) == {3}
    purity = cluster_purity(assignments)
    assert purity.n_rows == 4 and np.all((purity["purity"] > 0) & (purity["purity"] <= 1))
    again = cluster_study(
        simulation_centers(), {"sd": [0.5, 2.0], "replication": [1, 2]}, [1, 2, 3], nstart=2, assignment_ks=[3])
    assert glances.equals(again[0]) and assignments.equals(again[2])


# -- mixture generator -------------------------------------------------------------


def test_gaussian_mixture_layout():
    data = _points(1)
    assert data.names == ["oracle", "sd", "x1", "x2"]
    assert data.n_rows == 300
    assert np.bincount(data["oracle"]).tolist() == [0, 100, 150, 50]
    assert data.equals(_points(1))
    assert not data.equals(_points(2))
    flat = _points(1, sd=0.0)
    assert np.all(flat["x1"][:100] == 5.0) and np.all(flat["x2"][250:] == -2.0)


def test_gaussian_mixture_errors():
    c = simulation_centers()
    with pytest.raises(SchemaError):
        gaussian_mixture(c.drop(["size"]))
    with pytest.raises(ArgumentError):
        gaussian_mixture(c.with_column("sd", [1.0, -1.0, 1.0]))


# -- errors ------------------------------------------------------------------------


@pytest.mark.parametrize("k", [0, -1, 5])
def test_bad_k(k):
    with pytest.raises(ArgumentError):
        fit_kmeans(np.zeros((4, 2)), k)


def test_bad_arguments():
    X = np.arange(8.0).reshape(4, 2)
    with pytest.raises(ArgumentError):
        fit_kmeans(X, 2, nstart=0)
    with pytest.raises(ArgumentError):
        fit_kmeans(X, 2, max_iter=0)
    with pytest.raises(ArgumentError):
        fit_kmeans(np.array([[0.0, np.nan], [1.0, 1.0]]), 1)
    with pytest.raises(ArgumentError):
        fit_kmeans(X, 2, dim_names=["a"])


# -- invariants --------------------------------------------------------------------


@st.composite
def datasets(draw):
    n = draw(st.integers(2, 40))
    d = draw(st.integers(1, 3))
    k = draw(st.integers(1, min(n, 6)))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    if draw(st.booleans()):
        # coarse integer grid: many duplicate points and tied distances
        X = rng.integers(0, 3, size=(n, d)).astype(float)
    else:
        X = rng.normal(size=(n, d)) * draw(st.sampled_from([1e-3, 1.0, 1e3]))
    return X, k, draw(st.integers(1, 4)), seed


@settings(max_examples=200, deadline=None)
@given(datasets())
def test_fit_invariants(case):
    X, k, nstart, seed = case
    fit = fit_kmeans(X, k, nstart=nstart, seed=seed)
    scale = max(fit.totss, 1e-300)
    assert int(fit.cluster_sizes.sum()) == fit.n
    assert fit.withinss.sum() == pytest.approx(fit.tot_withinss, rel=1e-8, abs=1e-12 * scale)
    assert fit.betweenss >= -1e-8 * scale
    assert abs(fit.totss - fit.tot_withinss - fit.betweenss) <= 1e-8 * scale
    assert fit.tot_withinss == min(fit.run_withinss)
    assert len(fit.run_withinss) == nstart
    assert set(fit.assignments.tolist()) <= set(range(1, k + 1))


@settings(max_examples=200, deadline=None)
@given(datasets())
def test_lloyd_descent(case):
    X, k, nstart, seed = case
    fit = fit_kmeans(X, k, nstart=nstart, seed=seed)
    h = np.array(fit.history)
    slack = 1e-12 * max(fit.totss, 1e-300)
    assert np.all(np.diff(h) <= slack)
    assert h[-1] == pytest.approx(fit.tot_withinss, rel=1e-12, abs=slack)


@settings(max_examples=200, deadline=None)
@given(datasets())
def test_assignment_optimality(case):
    X, k, nstart, seed = case
    fit = fit_kmeans(X, k, nstart=nstart, seed=seed)
    if not fit.converged:
        return
    d2 = ((X[:, None, :] - fit.centers[None, :, :]) ** 2).sum(axis=2)
    own = d2[np.arange(fit.n), fit.assignments - 1]
    assert np.all(own <= d2.min(axis=1) * (1 + 1e-12) + 1e-300)
    # centers are the means of their clusters
    for j in range(k):
        members = X[fit.assignments == j + 1]
        if len(members):
            assert fit.centers[j] == pytest.approx(members.mean(axis=0), rel=1e-12, abs=1e-12 * np.abs(X).max())


@settings(max_examples=100, deadline=None)
@given(datasets())
def test_runs_are_independent_streams(case):
    X, k, nstart, seed = case
    alone = fit_kmeans(X, k, nstart=1, seed=seed)
    multi = fit_kmeans(X, k, nstart=nstart, seed=seed)
    assert multi.run_withinss[0] == alone.tot_withinss
    assert multi.tot_withinss <= alone.tot_withinss
