"""Equality-constrained, box-bounded nonlinear programming.

An augmented-Lagrangian outer loop drives the constraint violation down while
a bound-projected limited-memory BFGS inner loop minimizes each penalty
subproblem. Problems are duck-typed: anything exposing ``lower``, ``upper``,
``objective(z)``, ``objective_gradient(z)``, ``constraints(z)``,
``constraint_jacobian(z)`` and ``constraint_vjp(z, w)`` can be solved.
"""

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

RHO_CAP = 1e8
SNAPSHOT_BUFFER = 10000

# Loose-to-tight schedule for the inner optimality target.
_INNER_TOL0 = 1e-2
_INNER_TOL_SHRINK = 0.2

# Below this violation the inner preconditioner uses the full Gauss-Newton
# matrix instead of its diagonal.
_FULL_PRECOND_VIOL = 1e-3


class JacobianCheckError(RuntimeError):
    """Startup finite-difference spot check found an inconsistent Jacobian."""


@dataclass
class SolverConfig:
    max_outer_iters: int = 50
    max_inner_iters: int = 200
    constraint_tol: float = 1e-6
    opt_tol: float = 1e-6
    rho0: float = 10.0
    rho_growth: float = 10.0
    time_limit: float = None
    lbfgs_memory: int = 10
    armijo_c1: float = 1e-4
    max_line_trials: int = 40
    seed: int = 0
    check_jacobian: bool = True
    precondition: bool = True  # Gauss-Newton diagonal seed for the inner L-BFGS
    store_iterates: bool = False  # keep z at every outer iteration in the report

    def __post_init__(self):
        if min(self.constraint_tol, self.opt_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.rho_growth <= 1:
            raise ValueError("rho_growth must exceed 1")


@dataclass
class TraceRow:
    outer_iter: int
    elapsed_s: float
    objective: float
    max_violation: float
    penalty: float


@dataclass
class SolveReport:
    z_final: np.ndarray
    objective_final: float
    max_constraint_violation: float
    outer_iters: int
    inner_iters_total: int
    status: str
    trace: list = field(default_factory=list)
    pg_norm: float = np.inf
    multipliers: np.ndarray = None
    elapsed_s: float = 0.0
    outer_iterates: list = field(default_factory=list)


def trace_to_csv(report, path):
    """Export the per-outer-iteration trace as CSV."""
    from . import fileio

    rows = [
        [r.outer_iter, r.elapsed_s, r.objective, r.max_violation, r.penalty]
        for r in report.trace
    ]
    fileio.write_table(
        path, ["outer_iter", "elapsed_s", "objective", "max_violation", "penalty"], rows
    )


def _max_abs(c):
    return float(np.abs(c).max(initial=0.0))


def _projected_gradient(z, g, lower, upper):
    pg = g.copy()
    pg[(z <= lower) & (g > 0)] = 0.0
    pg[(z >= upper) & (g < 0)] = 0.0
    return pg


def _lbfgs_direction(g, pairs, h0=None):
    """Two-loop recursion; returns the quasi-Newton step -H g.

    ``h0`` applies an initial inverse Hessian (the preconditioner); without
    it the usual scaled-identity seed is used.
    """
    q = g.copy()
    alphas = []
    for s, y, r in reversed(pairs):
        a = r * np.dot(s, q)
        q -= a * y
        alphas.append(a)
    if h0 is not None:
        q = h0(q)
    elif pairs:
        s, y, _ = pairs[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, r), a in zip(pairs, reversed(alphas)):
        b = r * np.dot(y, q)
        q += (a - b) * s
    return -q


def _preconditioner(prob, z, rho, full):
    """Inverse Gauss-Newton model of the augmented Lagrangian, as an operator.

    The differentiation matrix gives the constraint Jacobian columns wildly
    different scales (state columns grow like the node count squared), which
    makes an unseeded L-BFGS crawl. Far from feasibility only the diagonal is
    used: the full model steps too hard toward the constraint manifold before
    the parameters have adapted to the data. Near feasibility the full
    matrix (cheap to form and invert once per outer iteration at these sizes)
    takes over for the tangential polish.
    """
    jac = prob.constraint_jacobian(z)
    hess_diag = getattr(prob, "objective_hessian_diag", None)
    diag = hess_diag(z) if hess_diag is not None else np.zeros(z.size)
    if full:
        gn = rho * (jac.T @ jac)
        idx = np.arange(z.size)
        gn[idx, idx] += diag + 1e-8 * max(np.trace(gn) / z.size, 1.0)
        inv = np.linalg.inv(gn)
        return lambda q: inv @ q
    gn_diag = diag + rho * np.einsum("ij,ij->j", jac, jac)
    floor = 1e-10 * gn_diag.max(initial=0.0) + 1e-12
    inv_diag = 1.0 / np.maximum(gn_diag, floor)
    return lambda q: inv_diag * q


def check_jacobian(prob, z, seed=0, n_directions=3, rtol=1e-3):
    """Finite-difference spot check of the constraint Jacobian at z.

    Raises :class:`JacobianCheckError` on mismatch; used as a startup guard
    against inconsistent problem callbacks.
    """
    z = np.asarray(z, dtype=float)
    jac = prob.constraint_jacobian(z)
    rng = np.random.default_rng(seed)
    h = 1e-6 * (1.0 + _max_abs(z))
    for _ in range(n_directions):
        v = rng.standard_normal(z.size)
        v /= np.linalg.norm(v)
        fd = (prob.constraints(z + h * v) - prob.constraints(z - h * v)) / (2.0 * h)
        err = _max_abs(jac @ v - fd)
        if not np.isfinite(err) or err > rtol * max(1.0, _max_abs(fd)):
            raise JacobianCheckError(
                f"constraint Jacobian mismatch: |J v - fd| = {err:.3e} "
                f"(tolerance {rtol:g} relative)"
            )


def _inner_minimize(prob, z, la_value, la_grad, tol, config, deadline, on_accept, h0=None):
    """Projected L-BFGS on the current augmented Lagrangian.

    Returns (z, c, f, g, pg_norm, iters). ``la_value`` maps (z, c) to the
    penalty value; ``la_grad`` maps (z, c) to its gradient.
    """
    lower, upper = prob.lower, prob.upper
    c = prob.constraints(z)
    f = la_value(z, c)
    g = la_grad(z, c)
    pairs = deque(maxlen=config.lbfgs_memory)
    iters = 0
    pg_norm = _max_abs(_projected_gradient(z, g, lower, upper))
    while iters < config.max_inner_iters:
        if pg_norm <= tol or time.perf_counter() >= deadline:
            break
        direction = _lbfgs_direction(g, pairs, h0)
        if np.dot(g, direction) > -1e-12 * np.linalg.norm(g) * np.linalg.norm(direction):
            pairs.clear()
            direction = _lbfgs_direction(g, pairs, h0) if h0 is not None else -g
        if pairs or h0 is not None:
            alpha = 1.0
        else:
            alpha = min(1.0, 1.0 / max(_max_abs(g), 1e-12))

        accepted = False
        for _ in range(config.max_line_trials):
            z_new = np.clip(z + alpha * direction, lower, upper)
            step = z_new - z
            if not np.any(step):
                break
            c_new = prob.constraints(z_new)
            f_new = la_value(z_new, c_new)
            decrease_target = f + config.armijo_c1 * min(np.dot(g, step), 0.0)
            if np.isfinite(f_new) and f_new <= decrease_target:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if pairs:
                pairs.clear()  # retry from a steepest-descent model
                continue
            break

        g_new = la_grad(z_new, c_new)
        s = z_new - z
        y = g_new - g
        sy = np.dot(s, y)
        if np.isfinite(sy) and sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        z, c, f, g = z_new, c_new, f_new, g_new
        iters += 1
        pg_norm = _max_abs(_projected_gradient(z, g, lower, upper))
        on_accept(z)
    return z, c, f, g, pg_norm, iters


def _solve(prob, z0, config, checkpoint_seconds):
    t_start = time.perf_counter()
    deadline = t_start + config.time_limit if config.time_limit else np.inf
    elapsed = lambda: time.perf_counter() - t_start

    z = np.clip(np.asarray(z0, dtype=float), prob.lower, prob.upper)
    m = prob.constraints(z).size
    if m and config.check_jacobian:
        check_jacobian(prob, z, seed=config.seed)

    snapshots = deque(maxlen=SNAPSHOT_BUFFER)
    next_snapshot = [checkpoint_seconds] if checkpoint_seconds else [np.inf]

    def on_accept(z_now):
        now = elapsed()
        if now >= next_snapshot[0]:
            snapshots.append((now, z_now.copy()))
            while next_snapshot[0] <= now:
                next_snapshot[0] += checkpoint_seconds

    mu = np.zeros(m)
    rho = config.rho0 if m else 0.0

    def la_value(zv, c):
        val = prob.objective(zv)
        if m:
            val = val + mu @ c + 0.5 * rho * (c @ c)
        return val

    def la_grad(zv, c):
        g = prob.objective_gradient(zv)
        if m:
            g = g + prob.constraint_vjp(zv, mu + rho * c)
        return g

    c = prob.constraints(z)
    f0 = prob.objective(z)
    viol = _max_abs(c)
    trace = [TraceRow(0, elapsed(), f0, viol, rho)]
    iterates = [z.copy()] if config.store_iterates else []
    if not (np.isfinite(f0) and np.all(np.isfinite(c))):
        return snapshots, SolveReport(
            z, f0, viol, 0, 0, "numerical-failure", trace, np.inf, mu, elapsed(),
            iterates,
        )

    status = None
    inner_total = 0
    pg_norm = np.inf
    inner_tol = _INNER_TOL0 if m else config.opt_tol
    outer = 0
    for outer in range(1, config.max_outer_iters + 1):
        h0 = None
        if m and config.precondition:
            h0 = _preconditioner(prob, z, rho, full=viol <= _FULL_PRECOND_VIOL)
        tol_now = max(inner_tol, config.opt_tol)
        z, c, _, _, pg_norm, iters = _inner_minimize(
            prob, z, la_value, la_grad, tol_now, config, deadline, on_accept, h0,
        )
        inner_total += iters
        prev_viol = viol
        viol = _max_abs(c)
        mu = mu + rho * c
        trace.append(TraceRow(outer, elapsed(), prob.objective(z), viol, rho))
        if config.store_iterates:
            iterates.append(z.copy())
        if viol <= config.constraint_tol and pg_norm <= config.opt_tol:
            status = "converged"
            break
        if time.perf_counter() >= deadline:
            status = "time-limit"
            break
        # Grow the penalty only when a *converged* inner solve still failed to
        # improve feasibility 4x; a truncated inner solve just needs more room.
        inner_converged = pg_norm <= tol_now or iters < config.max_inner_iters
        if (
            m
            and inner_converged
            and viol > prev_viol / 4.0
            and viol > config.constraint_tol
        ):
            rho *= config.rho_growth
            if rho > RHO_CAP:
                status = "numerical-failure"
                break
        inner_tol = max(inner_tol * _INNER_TOL_SHRINK, config.opt_tol)

    if status is None:
        status = (
            "feasible-but-suboptimal" if viol <= config.constraint_tol else "iteration-limit"
        )

    snapshots.append((elapsed(), z.copy()))
    report = SolveReport(
        z_final=z,
        objective_final=prob.objective(z),
        max_constraint_violation=viol,
        outer_iters=outer,
        inner_iters_total=inner_total,
        status=status,
        trace=trace,
        pg_norm=pg_norm,
        multipliers=mu,
        elapsed_s=elapsed(),
        outer_iterates=iterates,
    )
    return snapshots, report


def solve(prob, z0, config=None):
    """Minimize the problem's objective subject to its equality constraints
    and box bounds, starting from z0 (projected into the box if outside)."""
    config = config or SolverConfig()
    _, report = _solve(prob, z0, config, checkpoint_seconds=None)
    return report


def solve_with_checkpoints(prob, z0, config, checkpoint_seconds):
    """As :func:`solve`, additionally recording (elapsed_s, z) snapshots at the
    requested cadence plus one terminal snapshot."""
    if checkpoint_seconds <= 0:
        raise ValueError("checkpoint_seconds must be positive")
    snapshots, report = _solve(prob, z0, config, checkpoint_seconds)
    return list(snapshots), report
