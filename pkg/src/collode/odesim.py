"""Fixed-step ODE integration, the forced Van der Pol system, and rollout prediction."""

from dataclasses import dataclass

import numpy as np

from . import neuralnet

# Default ceiling on the internal RK4 step used for inference rollouts.
PREDICT_MAX_STEP = 0.01


class IntegrationDivergedError(RuntimeError):
    """Raised when an integration produces non-finite state.

    Carries the finite prefix of the trajectory in ``partial``.
    """

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class OdeSystem:
    """A d-dimensional first-order system y' = rhs(y, t)."""

    dim: int
    rhs: object  # callable (y, t) -> d-vector


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    @property
    def dim(self):
        return self.states.shape[1]


def _integrate(system, y0, times, substeps, step_fn):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise ValueError("times must be a nonempty 1-D array")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    y = np.array(y0, dtype=float)
    if y.shape != (system.dim,):
        raise ValueError(f"y0 has shape {y.shape}, expected ({system.dim},)")
    states = np.empty((times.size, system.dim))
    states[0] = y
    for i in range(times.size - 1):
        h = (times[i + 1] - times[i]) / substeps
        t = times[i]
        for _ in range(substeps):
            y = step_fn(system.rhs, y, t, h)
            t += h
        if not np.all(np.isfinite(y)):
            partial = Trajectory(times[: i + 1].copy(), states[: i + 1].copy())
            raise IntegrationDivergedError(
                f"non-finite state at t={times[i + 1]:g}", partial
            )
        states[i + 1] = y
    return Trajectory(times.copy(), states)


def _rk4_step(rhs, y, t, h):
    k1 = rhs(y, t)
    k2 = rhs(y + 0.5 * h * k1, t + 0.5 * h)
    k3 = rhs(y + 0.5 * h * k2, t + 0.5 * h)
    k4 = rhs(y + h * k3, t + h)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _euler_step(rhs, y, t, h):
    return y + h * rhs(y, t)


def rk4_integrate(system, y0, times, substeps=1):
    """Classical 4th-order Runge-Kutta over the given output times.

    ``substeps`` internal steps are taken between consecutive output times.
    """
    return _integrate(system, y0, times, substeps, _rk4_step)


def euler_integrate(system, y0, times, substeps=1):
    """Forward Euler over the given output times."""
    return _integrate(system, y0, times, substeps, _euler_step)


def vdp_system(mu, amplitude, omega):
    """Forced Van der Pol oscillator: u' = v, v' = mu(1-u^2)v - u + A*cos(omega*t)."""

    def rhs(y, t):
        u, v = y
        return np.array([v, mu * (1.0 - u * u) * v - u + amplitude * np.cos(omega * t)])

    return OdeSystem(dim=2, rhs=rhs)


def mlp_system(net):
    """Wrap a trained network as an ODE right-hand side."""
    return OdeSystem(dim=net.dim, rhs=lambda y, t: neuralnet.forward(net, y, t))


def predict(net, y0, times, max_step=PREDICT_MAX_STEP):
    """Roll a trained network forward with RK4 from y0 across the given times.

    Substeps are chosen so the internal step never exceeds ``max_step``.
    """
    times = np.asarray(times, dtype=float)
    dt = float(np.max(np.diff(times))) if times.size > 1 else 0.0
    substeps = max(1, int(np.ceil(dt / max_step)))
    return rk4_integrate(mlp_system(net), y0, times, substeps=substeps)
