"""Lloyd's k-means with random restarts, its tidiers, and a Gaussian mixture simulator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, SchemaError
from .frame import Column, Frame, group_by
from .rng import Xoshiro256, derive_seed


@dataclass(frozen=True, eq=False)
class KmeansFit:
    centers: np.ndarray          # k x d
    cluster_sizes: np.ndarray
    withinss: np.ndarray
    tot_withinss: float
    totss: float
    betweenss: float
    assignments: np.ndarray      # 1-based cluster index per row
    iterations: int
    converged: bool
    k: int
    d: int
    n: int
    history: tuple = ()          # tot_withinss after each Lloyd round of the chosen run
    run_withinss: tuple = ()     # final tot_withinss of every start
    dim_names: tuple | None = None


def _sqdist(X, C):
    # n x k squared distances
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _within(X, labels, C, k):
    diff = X - C[labels]
    per_row = np.einsum("ij,ij->i", diff, diff)
    return np.bincount(labels, weights=per_row, minlength=k)


def _means(X, labels, C, k):
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros_like(C)
    np.add.at(sums, labels, X)
    new = C.copy()
    filled = counts > 0
    new[filled] = sums[filled] / counts[filled, None]
    return new, counts


def _lloyd(X, C, max_iter):
    """One Lloyd run from initial centers ``C``; returns (labels, centers, rounds, converged, history)."""
    k = C.shape[0]
    labels = np.argmin(_sqdist(X, C), axis=1)
    history = []
    for it in range(1, max_iter + 1):
        C, counts = _means(X, labels, C, k)
        empty = np.flatnonzero(counts == 0)
        for j in empty:
            # move an empty cluster's center onto the worst-served point
            dist = np.einsum("ij,ij->i", X - C[labels], X - C[labels])
            far = int(np.argmax(dist))
            C[j] = X[far]
            labels[far] = j
        history.append(float(_within(X, labels, C, k).sum()))
        new = np.argmin(_sqdist(X, C), axis=1)
        # a reseed leaves the donor cluster's mean stale, so it cannot end the run
        if empty.size == 0 and np.array_equal(new, labels):
            return labels, C, it, True, history
        labels = new
    C, _ = _means(X, labels, C, k)
    return labels, C, max_iter, False, history


def fit_kmeans(X, k: int, nstart: int = 1, max_iter: int = 100, seed: int = 2014, dim_names=None) -> KmeansFit:
    """Cluster the rows of ``X`` into ``k`` groups, keeping the best of ``nstart`` runs.

    Run ``r`` draws its starting centers (``k`` distinct rows) from its own
    stream ``derive_seed(seed, r)``, so runs are independent of each other
    and of the order they are executed in. Equal objectives keep the
    earlier run.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ArgumentError(f"X must be a matrix, got shape {X.shape}")
    n, d = X.shape
    k = int(k)
    if k <= 0:
        raise ArgumentError(f"k must be positive, got {k}")
    if k > n:
        raise ArgumentError(f"k = {k} exceeds the {n} rows")
    if nstart < 1:
        raise ArgumentError(f"nstart must be at least 1, got {nstart}")
    if max_iter < 1:
        raise ArgumentError(f"max_iter must be at least 1, got {max_iter}")
    if not np.all(np.isfinite(X)):
        raise ArgumentError("X has non-finite values")
    if dim_names is not None and len(dim_names) != d:
        raise ArgumentError(f"{len(dim_names)} dimension names for {d} columns")

    best = None
    finals = []
    for r in range(nstart):
        rng = Xoshiro256(derive_seed(seed, r))
        C0 = X[rng.sample(n, k)].copy()
        labels, C, rounds, ok, hist = _lloyd(X, C0, max_iter)
        w = _within(X, labels, C, k)
        total = float(w.sum())
        finals.append(total)
        if best is None or total < best[0]:
            best = (total, labels, C, w, rounds, ok, hist)
    total, labels, C, w, rounds, ok, hist = best
    centered = X - X.mean(axis=0)
    totss = float(np.einsum("ij,ij->", centered, centered))
    return KmeansFit(
        centers=C,
        cluster_sizes=np.bincount(labels, minlength=k).astype(np.int64),
        withinss=w,
        tot_withinss=total,
        totss=totss,
        betweenss=totss - total,
        assignments=labels.astype(np.int64) + 1,
        iterations=rounds,
        converged=ok,
        k=k,
        d=d,
        n=n,
        history=tuple(hist),
        run_withinss=tuple(finals),
        dim_names=tuple(dim_names) if dim_names is not None else None,
    )


def kmeans(data: Frame, columns, k: int, nstart: int = 1, max_iter: int = 100, seed: int = 2014) -> KmeansFit:
    """k-means on the named numeric columns of a frame."""
    columns = list(columns)
    X = np.column_stack([data.numeric(c) for c in columns]) if columns else np.empty((data.n_rows, 0))
    return fit_kmeans(X, k, nstart=nstart, max_iter=max_iter, seed=seed, dim_names=columns)


def _labels(k):
    return [str(j) for j in range(1, k + 1)]


def tidy_kmeans(fit: KmeansFit, dim_names=None) -> Frame:
    names = list(dim_names) if dim_names is not None else list(fit.dim_names or [f"x{j + 1}" for j in range(fit.d)])
    if len(names) != fit.d:
        raise ArgumentError(f"{len(names)} dimension names for {fit.d} center coordinates")
    cols = [Column.build(nm, fit.centers[:, j].copy()) for j, nm in enumerate(names)]
    cols += [
        Column.build("size", fit.cluster_sizes.copy()),
        Column.build("withinss", np.asarray(fit.withinss, dtype=float)),
        Column.build("cluster", _labels(fit.k), "text"),
    ]
    return Frame(cols, n_rows=fit.k)


def augment_kmeans(fit: KmeansFit, data: Frame) -> Frame:
    if data.n_rows != fit.n:
        raise ArgumentError(f"data has {data.n_rows} rows; the clustering used {fit.n}")
    return data.with_column(".cluster", [str(a) for a in fit.assignments.tolist()], "text")


def glance_kmeans(fit: KmeansFit) -> Frame:
    return Frame({
        "totss": [fit.totss],
        "tot.withinss": [fit.tot_withinss],
        "betweenss": [fit.betweenss],
        "iter": [fit.iterations],
    })


def cluster_purity(assignments: Frame) -> Frame:
    """Purity per (replication, sd).

    Within each cluster the correct count is the size of its most common
    oracle label; purity is the summed correct counts over the row count.
    """
    need = ["replication", "sd", "oracle", ".cluster"]
    missing = [c for c in need if c not in assignments]
    if missing:
        raise SchemaError(f"cluster_purity needs columns {missing}")
    outer = group_by(assignments, ["replication", "sd"])
    oracle = assignments["oracle"]
    cluster = assignments[".cluster"]
    purity = []
    for _, idx in outer.groups:
        counts = {}
        for c, o in zip(cluster[idx].tolist(), oracle[idx].tolist()):
            counts.setdefault(c, {}).setdefault(o, 0)
            counts[c][o] += 1
        correct = sum(max(by.values()) for by in counts.values())
        purity.append(correct / len(idx))
    rep = assignments.column("replication")
    sd = assignments.column("sd")
    return Frame([
        Column.build("replication", [g[0][0] for g in outer.groups], rep.kind),
        Column.build("sd", [g[0][1] for g in outer.groups], sd.kind),
        Column.build("purity", np.array(purity, dtype=float)),
    ], n_rows=len(outer.groups))


def gaussian_mixture(centers: Frame, seed: int = 2014, dims=("x1", "x2"), size="size", sd="sd") -> Frame:
    """Simulate points around each row of ``centers``.

    Row ``i`` contributes ``size[i]`` points whose ``dims`` coordinates are
    the row's values plus independent normal noise with standard deviation
    ``sd[i]`` (or 1 when there is no such column). Draws come from one stream,
    row by row and within a row one coordinate at a time. The output keeps
    every other column of ``centers`` and drops ``size``.
    """
    for c in list(dims) + [size]:
        if c not in centers:
            raise SchemaError(f"centers frame has no column {c!r}")
    sizes = centers[size]
    if centers.column(size).kind != "int" or np.any(sizes < 0):
        raise ArgumentError(f"{size!r} must hold non-negative integer counts")
    sds = centers.numeric(sd) if sd in centers else np.ones(centers.n_rows)
    if np.any(~np.isfinite(sds)) or np.any(sds < 0):
        raise ArgumentError("standard deviations must be finite and non-negative")
    rng = Xoshiro256(seed)
    idx = np.repeat(np.arange(centers.n_rows), sizes)
    keep = [c for c in centers.names if c != size and c not in dims]
    out = centers.select(keep).without_row_labels().take(idx)
    noise = {c: [] for c in dims}
    for i in range(centers.n_rows):
        m = int(sizes[i])
        for c in dims:
            mu = float(centers.numeric(c)[i])
            noise[c].append(mu + sds[i] * np.array(rng.normals(m)))
    for c in dims:
        vals = np.concatenate(noise[c]) if noise[c] else np.empty(0)
        out = out.with_column(c, vals)
    return out


def cluster_study(centers: Frame, grid, ks, nstart: int = 5, seed: int = 2014, dims=("x1", "x2"),
                  assignment_ks=None):
    """Simulate one dataset per grid combination and cluster it for every ``k``.

    ``centers`` is inflated by ``grid`` (typically sd and replication); each
    combination gets its own mixture stream and each (combination, k) its own
    k-means seed, all derived from ``seed``. Returns ``(glances, centers,
    assignments)`` frames with the grid columns and ``k`` leading;
    assignments are kept only for ``k`` in ``assignment_ks`` (default: all).
    """
    from .frame import inflate

    grouped = inflate(centers, grid)
    keys = grouped.keys
    ks = [int(k) for k in ks]
    keep = set(ks if assignment_ks is None else assignment_ks)
    glances, tidies, augments = [], [], []
    for g, (key, idx) in enumerate(grouped.groups):
        data = gaussian_mixture(grouped.base.take(idx), seed=derive_seed(seed, g), dims=dims)
        body = data.drop(keys)
        for k in ks:
            fit = kmeans(body, dims, k, nstart=nstart, seed=derive_seed(seed, g, k))
            lead = [Column.build(name, [v], grouped.base.column(name).kind) for name, v in zip(keys, key)]
            lead.append(Column.build("k", [k], "int"))
            glances.append(_lead(lead, glance_kmeans(fit)))
            tidies.append(_lead(lead, tidy_kmeans(fit)))
            if k in keep:
                augments.append(_lead(lead, augment_kmeans(fit, body)))
    return Frame.concat(glances), Frame.concat(tidies), (Frame.concat(augments) if augments else Frame())


def _lead(cols, out: Frame) -> Frame:
    n = out.n_rows
    rep = [Column.build(c.name, np.repeat(c.values, n), c.kind) for c in cols]
    return Frame(rep + out.without_row_labels().columns, n_rows=n)
