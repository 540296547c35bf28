"""Chebyshev collocation grids, barycentric weights, and differentiation matrices."""

from dataclasses import dataclass

import numpy as np

# Switch to node-coincidence branch when |t - node| <= this, relative to interval width.
NODE_COINCIDENCE_RTOL = 1e-14

# Above this node count the weight products are rescaled to avoid under/overflow.
_RESCALE_THRESHOLD = 64


class DegenerateGridError(ValueError):
    """Raised when collocation nodes are not pairwise distinct."""


@dataclass(frozen=True)
class CollocationGrid:
    """A set of collocation nodes with the operators defined on them.

    ``nodes_time`` are the nodes mapped onto ``[t0, t_end]`` in strictly
    increasing order; ``bary_weights`` and ``diff_matrix`` are computed
    directly on those time-domain nodes, so no chain-rule scaling is needed
    downstream.
    """

    n: int
    nodes_ref: np.ndarray
    nodes_time: np.ndarray
    bary_weights: np.ndarray
    diff_matrix: np.ndarray
    t0: float
    t_end: float


def chebyshev_nodes(n):
    """Chebyshev nodes of the second kind, cos(i*pi/(n-1)) for i = 0..n-1.

    Returned in the natural descending order (+1 down to -1); grid
    construction reverses them to ascending time order.
    """
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got {n}")
    i = np.arange(n)
    return np.cos(i * np.pi / (n - 1))


def barycentric_weights(nodes):
    """Barycentric weights w_i = 1 / prod_{k != i} (x_i - x_k).

    Only the ratios w_j / w_i matter downstream, so for large grids each
    difference is divided by the interval half-width before taking the
    product; that uniform rescaling leaves the differentiation matrix and
    the barycentric evaluation unchanged.
    """
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size
    diff = nodes[:, None] - nodes[None, :]
    off = ~np.eye(n, dtype=bool)
    if np.any(diff[off] == 0.0):
        raise DegenerateGridError("duplicate collocation nodes")
    if n > _RESCALE_THRESHOLD:
        half_width = (nodes.max() - nodes.min()) / 2.0
        diff = diff / half_width
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def differentiation_matrix(nodes, weights):
    """Barycentric differentiation matrix on arbitrary distinct nodes.

    Off-diagonal entries are (w_j / w_i) / (x_i - x_j); each diagonal entry
    is the negative sum of its row's off-diagonal entries, which makes the
    matrix annihilate constants exactly.
    """
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n = nodes.size
    diff = nodes[:, None] - nodes[None, :]
    off = ~np.eye(n, dtype=bool)
    if np.any(diff[off] == 0.0):
        raise DegenerateGridError("duplicate collocation nodes")
    np.fill_diagonal(diff, 1.0)
    d = (weights[None, :] / weights[:, None]) / diff
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


def build_grid(n, t0, t_end):
    """Build a Chebyshev collocation grid mapped onto [t0, t_end]."""
    if t_end <= t0:
        raise ValueError(f"invalid interval: t_end={t_end} <= t0={t0}")
    ref = chebyshev_nodes(n)[::-1].copy()  # ascending in time
    nodes_time = t0 + (t_end - t0) * (ref + 1.0) / 2.0
    nodes_time[0] = t0
    nodes_time[-1] = t_end
    weights = barycentric_weights(nodes_time)
    d = differentiation_matrix(nodes_time, weights)
    for arr in (ref, nodes_time, weights, d):
        arr.setflags(write=False)
    return CollocationGrid(
        n=n,
        nodes_ref=ref,
        nodes_time=nodes_time,
        bary_weights=weights,
        diff_matrix=d,
        t0=float(t0),
        t_end=float(t_end),
    )


def interp_eval(grid, coeffs, t):
    """Evaluate the barycentric interpolant of node values ``coeffs`` at ``t``.

    Returns ``(value, extrapolated)``. When ``t`` coincides with a node
    (within a tight relative tolerance) the node's coefficient row is
    returned bit-for-bit, since the second barycentric form is singular
    there. Points outside [t0, t_end] are evaluated as well but flagged.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim == 1:
        coeffs = coeffs[:, None]
    extrapolated = bool(t < grid.t0 or t > grid.t_end)
    delta = t - grid.nodes_time
    scale = grid.t_end - grid.t0
    hits = np.abs(delta) <= NODE_COINCIDENCE_RTOL * scale
    if np.any(hits):
        k = int(np.argmin(np.abs(delta)))
        return coeffs[k].copy(), extrapolated
    ratios = grid.bary_weights / delta
    value = ratios @ coeffs / ratios.sum()
    return value, extrapolated
