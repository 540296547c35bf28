"""Sequential training baseline: backpropagation through an unrolled fixed-step integrator.

The trainer is deliberately conservative: Adam proposals that raise the loss
(or produce non-finite values) are rejected and the step size is halved, so
the recorded loss trace is non-increasing; accepted steps let the step size
recover toward its configured value.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import neuralnet, odesim

LR_FLOOR = 1e-12
MAX_NONFINITE_REJECTS = 30


@dataclass
class SeqTrainConfig:
    integrator: str = "rk4"  # "rk4" or "euler"
    substeps: int = 1
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 500
    seed: int = 0
    time_limit: float = None

    def __post_init__(self):
        if self.integrator not in ("rk4", "euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.lr <= 0 or self.epochs < 0 or self.substeps < 1:
            raise ValueError("lr must be positive, epochs >= 0, substeps >= 1")


@dataclass
class SeqTrainResult:
    net: object
    trace: list  # (elapsed_s, train_mse) per epoch, epoch 0 = initial loss
    status: str  # completed | time-limit | diverged

    @property
    def final_mse(self):
        return self.trace[-1][1]


def _forward_unroll(net, y0, times, substeps, integrator):
    """Integrate and keep the stage inputs needed for the backward sweep.

    Returns (y_hat, stages) or (None, None) when the state goes non-finite.
    """
    f = lambda y, t: neuralnet.forward(net, y, t)
    y = np.array(y0, dtype=float)
    y_hat = np.empty((times.size, y.size))
    y_hat[0] = y
    stages = []
    for i in range(times.size - 1):
        h = (times[i + 1] - times[i]) / substeps
        t = times[i]
        for _ in range(substeps):
            if integrator == "rk4":
                k1 = f(y, t)
                u2 = y + 0.5 * h * k1
                k2 = f(u2, t + 0.5 * h)
                u3 = y + 0.5 * h * k2
                k3 = f(u3, t + 0.5 * h)
                u4 = y + h * k3
                k4 = f(u4, t + h)
                stages.append((y, u2, u3, u4, t, h))
                y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            else:
                stages.append((y, t, h))
                y = y + h * f(y, t)
            t += h
        if not np.all(np.isfinite(y)):
            return None, None
        y_hat[i + 1] = y
    return y_hat, stages


def _vjp_point(net, y, t, wbar):
    gy, gtheta = neuralnet.batch_vjp(net, y[None, :], np.array([t]), wbar[None, :])
    return gy[0], gtheta


def _backward_unroll(net, stages, resid_adj, substeps, integrator):
    """Reverse sweep through the stored stages; returns the parameter gradient."""
    n = resid_adj.shape[0]
    gtheta = np.zeros(net.n_theta)
    adj = resid_adj[-1].copy()
    idx = len(stages) - 1
    for i in range(n - 2, -1, -1):
        for _ in range(substeps):
            if integrator == "rk4":
                y, u2, u3, u4, t, h = stages[idx]
                kb1 = (h / 6.0) * adj
                kb2 = (h / 3.0) * adj
                kb3 = (h / 3.0) * adj
                kb4 = (h / 6.0) * adj
                gy4, gt4 = _vjp_point(net, u4, t + h, kb4)
                adj = adj + gy4
                kb3 = kb3 + h * gy4
                gy3, gt3 = _vjp_point(net, u3, t + 0.5 * h, kb3)
                adj = adj + gy3
                kb2 = kb2 + 0.5 * h * gy3
                gy2, gt2 = _vjp_point(net, u2, t + 0.5 * h, kb2)
                adj = adj + gy2
                kb1 = kb1 + 0.5 * h * gy2
                gy1, gt1 = _vjp_point(net, y, t, kb1)
                adj = adj + gy1
                gtheta += gt1 + gt2 + gt3 + gt4
            else:
                y, t, h = stages[idx]
                gy, gt = _vjp_point(net, y, t, h * adj)
                adj = adj + gy
                gtheta += gt
            idx -= 1
        if i > 0:
            adj = adj + resid_adj[i]
    return gtheta


def unrolled_loss(net, data, substeps=1, integrator="rk4", with_grad=False):
    """MSE of the unrolled rollout from the first observation, optionally with
    its analytic gradient with respect to the parameters."""
    times = data.times
    y_hat, stages = _forward_unroll(net, data.y_obs[0], times, substeps, integrator)
    if y_hat is None:
        return (np.inf, None) if with_grad else np.inf
    resid = y_hat - data.y_obs
    loss = float(np.sum(resid**2) / data.n)
    if not with_grad:
        return loss
    resid_adj = (2.0 / data.n) * resid
    gtheta = _backward_unroll(net, stages, resid_adj, substeps, integrator)
    return loss, gtheta


def sequential_train(net0, data, config):
    """Minimize the rollout MSE over theta with Adam and a monotone step guard.

    Returns a :class:`SeqTrainResult` whose trace holds one
    ``(elapsed_s, train_mse)`` row per epoch, starting with the initial loss.
    """
    t_start = time.perf_counter()
    deadline = t_start + config.time_limit if config.time_limit else np.inf
    theta = net0.theta.copy()
    if config.epochs == 0:
        return SeqTrainResult(net0, [(0.0, _loss_at(net0, data, config))], "completed")

    loss, grad = unrolled_loss(
        net0, data, config.substeps, config.integrator, with_grad=True
    )
    trace = [(time.perf_counter() - t_start, loss)]
    if not np.isfinite(loss):
        return SeqTrainResult(net0, trace, "diverged")

    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    tstep = 0
    lr = config.lr
    status = "completed"
    nonfinite_rejects = 0
    for _ in range(config.epochs):
        if time.perf_counter() >= deadline:
            status = "time-limit"
            break
        m_new = config.beta1 * m + (1.0 - config.beta1) * grad
        v_new = config.beta2 * v + (1.0 - config.beta2) * grad**2
        t_new = tstep + 1
        m_hat = m_new / (1.0 - config.beta1**t_new)
        v_hat = v_new / (1.0 - config.beta2**t_new)
        theta_try = theta - lr * m_hat / (np.sqrt(v_hat) + config.eps)

        net_try = net0.with_theta(theta_try)
        result = unrolled_loss(
            net_try, data, config.substeps, config.integrator, with_grad=True
        )
        loss_try, grad_try = result
        if np.isfinite(loss_try) and loss_try <= loss:
            theta, loss, grad = theta_try, loss_try, grad_try
            m, v, tstep = m_new, v_new, t_new
            lr = min(lr * 1.25, config.lr)
            nonfinite_rejects = 0
        else:
            lr *= 0.5
            if not np.isfinite(loss_try):
                nonfinite_rejects += 1
                if nonfinite_rejects >= MAX_NONFINITE_REJECTS:
                    status = "diverged"
                    trace.append((time.perf_counter() - t_start, loss))
                    break
            if lr < LR_FLOOR:
                trace.append((time.perf_counter() - t_start, loss))
                break
        trace.append((time.perf_counter() - t_start, loss))
    return SeqTrainResult(net0.with_theta(theta), trace, status)


def _loss_at(net, data, config):
    return unrolled_loss(net, data, config.substeps, config.integrator)


def hybrid_pretrain_handoff(checkpoint, data, config):
    """Warm-start sequential training from a collocation-trained checkpoint.

    The first trace row is the checkpoint's own training MSE (epoch 0).
    """
    if checkpoint.dim != data.dim:
        raise ValueError(
            f"checkpoint is {checkpoint.dim}-dimensional, data is {data.dim}-dimensional"
        )
    return sequential_train(checkpoint, data, config)


def evaluate_mse(net, data, y0=None):
    """Rollout MSE: integrate the network from y0 across the data times.

    A diverged rollout is reported as +inf (it ranks worst) rather than
    raising.
    """
    if y0 is None:
        y0 = data.y_obs[0]
    try:
        traj = odesim.predict(net, y0, data.times)
    except odesim.IntegrationDivergedError:
        return np.inf
    return float(np.sum((traj.states - data.y_obs) ** 2) / data.n)
