"""Consensus training across data batches: ADMM over collocation subproblems.

Each batch keeps private state variables and its own parameter vector; only
the parameters are driven to consensus. Subproblems warm-start from their
previous iterate, which keeps later outer iterations cheap.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import nlp, prep
from .problem import LAMBDA_DEFAULT, NlpProblem


@dataclass
class AdmmState:
    thetas: list
    consensus: np.ndarray
    duals: list
    rho: float
    primal_residuals: list
    elapsed: list
    status: str = "iteration-limit"
    message: str = ""
    theta_history: list = field(default_factory=list)
    dual_history: list = field(default_factory=list)
    consensus_history: list = field(default_factory=list)


def default_tolerance(n_theta):
    """Residual tolerance scaled with the parameter dimension."""
    return 1e-3 * np.sqrt(n_theta)


def admm_train(
    batches,
    grids,
    net0,
    rho=1.0,
    max_iters=20,
    tol=None,
    lambda_reg=LAMBDA_DEFAULT,
    solver_config=None,
    loess_span=prep.LOESS_DEFAULT_SPAN,
):
    """Train one consensus model from B >= 2 data batches.

    Parameters
    ----------
    batches : list of Dataset
        The data batches; each is fit on its own collocation grid.
    grids : list of CollocationGrid
        One grid per batch, spanning that batch's time range.
    net0 : Mlp
        Architecture and shared initial parameters for every submodel.
    rho : float
        Consensus penalty strength.
    tol : float, optional
        Stop when the primal residual sum_i ||theta_i - consensus|| drops
        below this; defaults to :func:`default_tolerance`.

    Returns (consensus network, AdmmState). A subproblem solver failure
    aborts the iteration and returns the prior consensus with status
    "aborted".
    """
    if len(batches) < 2:
        raise ValueError("need at least 2 batches")
    if len(grids) != len(batches):
        raise ValueError("need one grid per batch")
    if rho <= 0:
        raise ValueError("rho must be positive")
    if tol is None:
        tol = default_tolerance(net0.n_theta)
    solver_config = solver_config or nlp.SolverConfig()

    t_start = time.perf_counter()
    n_batches = len(batches)
    y_grid = [prep.resample_to_grid(b, g).y_obs for b, g in zip(batches, grids)]
    zs = []
    for batch, grid in zip(batches, grids):
        y_init = prep.init_states(batch, grid, span=loess_span)
        zs.append(np.concatenate([y_init.ravel(), net0.theta]))

    thetas = [net0.theta.copy() for _ in range(n_batches)]
    duals = [np.zeros(net0.n_theta) for _ in range(n_batches)]
    consensus = net0.theta.copy()
    state = AdmmState(
        thetas=thetas,
        consensus=consensus,
        duals=duals,
        rho=rho,
        primal_residuals=[],
        elapsed=[],
        dual_history=[[u.copy() for u in duals]],
    )

    for it in range(1, max_iters + 1):
        # The Jacobian spot check only pays for itself once per batch.
        sub_config = replace(solver_config, check_jacobian=(it == 1))
        for i in range(n_batches):
            prob = NlpProblem(
                grid=grids[i],
                net=net0,
                y_obs=y_grid[i],
                lambda_reg=lambda_reg,
                prox_center=consensus - duals[i] / rho,
                prox_rho=rho,
            )
            report = nlp.solve(prob, zs[i], sub_config)
            if report.status == "numerical-failure":
                state.status = "aborted"
                state.message = (
                    f"batch {i} subproblem failed at iteration {it} "
                    f"(status {report.status}); returning prior consensus"
                )
                state.consensus = consensus
                return net0.with_theta(consensus), state
            zs[i] = report.z_final
            thetas[i] = prob.unpack(report.z_final)[1].copy()

        consensus = sum(thetas) / n_batches
        for i in range(n_batches):
            duals[i] = duals[i] + rho * (thetas[i] - consensus)
        residual = float(sum(np.linalg.norm(t - consensus) for t in thetas))

        state.consensus = consensus
        state.primal_residuals.append(residual)
        state.elapsed.append(time.perf_counter() - t_start)
        state.theta_history.append([t.copy() for t in thetas])
        state.dual_history.append([u.copy() for u in duals])
        state.consensus_history.append(consensus.copy())
        if residual <= tol:
            state.status = "converged"
            break

    return net0.with_theta(consensus), state
