"""Data preprocessing: noise injection, grid resampling, and LOESS state initialization."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import fileio

LOESS_DEFAULT_SPAN = 0.1


@dataclass(frozen=True)
class Dataset:
    """Observations y_obs at strictly increasing times, with provenance metadata."""

    times: np.ndarray
    y_obs: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        y = np.asarray(self.y_obs, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if times.ndim != 1 or y.shape[0] != times.size:
            raise ValueError("times and y_obs row counts differ")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "y_obs", y)

    @property
    def n(self):
        return self.times.size

    @property
    def dim(self):
        return self.y_obs.shape[1]


def _with_history(meta, step):
    out = dict(meta)
    out["history"] = list(meta.get("history", [])) + [step]
    return out


def add_noise(data, sigma, seed):
    """Add i.i.d. zero-mean Gaussian noise elementwise; deterministic per seed."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    noisy = data.y_obs + rng.normal(0.0, sigma, size=data.y_obs.shape)
    meta = _with_history(data.meta, f"add_noise(sigma={sigma}, seed={seed})")
    meta["sigma"] = float(sigma)
    meta["noise_seed"] = int(seed)
    return Dataset(data.times, noisy, meta)


def resample_to_grid(data, grid):
    """Piecewise-linear interpolation of each state column onto the grid nodes."""
    tol = 1e-9 * (data.times[-1] - data.times[0])
    if grid.t0 < data.times[0] - tol or grid.t_end > data.times[-1] + tol:
        raise ValueError(
            f"grid [{grid.t0}, {grid.t_end}] extends beyond the data range "
            f"[{data.times[0]}, {data.times[-1]}]"
        )
    resampled = np.column_stack(
        [np.interp(grid.nodes_time, data.times, col) for col in data.y_obs.T]
    )
    meta = _with_history(data.meta, f"resample_to_grid(n={grid.n})")
    return Dataset(grid.nodes_time.copy(), resampled, meta)


def loess_smooth(data, span=LOESS_DEFAULT_SPAN):
    """Locally weighted degree-1 regression with tricube weights, per state column.

    The window at each point covers the ceil(span*N) nearest neighbors in time;
    the fit is evaluated at the data times themselves.
    """
    if not 0 < span <= 1:
        raise ValueError("span must be in (0, 1]")
    t = data.times
    n = t.size
    k = int(math.ceil(span * n))
    if k < 3:
        raise ValueError(f"span*N = {span * n:.2f} gives {k} points per window, need >= 3")

    dist = np.abs(t[:, None] - t[None, :])
    # Bandwidth at each point: distance to its k-th nearest neighbor (self included).
    h = np.sort(dist, axis=1)[:, k - 1]
    h = np.maximum(h, 1e-300)
    u = np.clip(dist / h[:, None], 0.0, 1.0)
    w = (1.0 - u**3) ** 3

    smoothed = np.empty_like(data.y_obs)
    for i in range(n):
        wi = w[i]
        sw = wi.sum()
        st = wi @ t
        stt = wi @ (t * t)
        det = sw * stt - st * st
        for j in range(data.dim):
            y = data.y_obs[:, j]
            sy = wi @ y
            sty = wi @ (t * y)
            if det > 1e-12 * max(sw * stt, 1e-300):
                beta0 = (stt * sy - st * sty) / det
                beta1 = (sw * sty - st * sy) / det
                smoothed[i, j] = beta0 + beta1 * t[i]
            else:
                smoothed[i, j] = sy / sw
    meta = _with_history(data.meta, f"loess_smooth(span={span})")
    return Dataset(t, smoothed, meta)


def init_states(data, grid, span=LOESS_DEFAULT_SPAN):
    """LOESS-smooth the observations, then resample onto the grid.

    Returns the N x d matrix used to initialize the trainer's state variables.
    """
    return resample_to_grid(loess_smooth(data, span=span), grid).y_obs


def save_dataset(data, path):
    """Write the observation CSV plus a JSON metadata sidecar."""
    fileio.write_trajectory(path, data.times, data.y_obs)
    fileio.write_json(str(path) + ".meta.json", data.meta)


def load_dataset(path):
    times, y = fileio.read_trajectory(path)
    try:
        meta = fileio.read_json(str(path) + ".meta.json")
    except FileNotFoundError:
        meta = {}
    return Dataset(times, y, meta)
