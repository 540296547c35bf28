"""Assembly of the simultaneous training NLP.

Decision vector layout (a public contract shared with the solver and the
consensus trainer): the N x d state matrix flattened row-major, followed by
the flat network parameter vector.
"""

from dataclasses import dataclass

import numpy as np

from . import neuralnet

LAMBDA_DEFAULT = 1e-4
STATE_BOUND_MARGIN = 3.0
THETA_BOUND = 100.0


def default_bounds(y_obs, n_theta, margin=STATE_BOUND_MARGIN, theta_bound=THETA_BOUND):
    """Wide boxes: observed range +- margin*range per state dimension
    (+-1 around constant columns), fixed +-theta_bound on the parameters."""
    y_obs = np.asarray(y_obs, dtype=float)
    n, d = y_obs.shape
    lo = y_obs.min(axis=0)
    hi = y_obs.max(axis=0)
    span = hi - lo
    state_lo = np.where(span > 0, lo - margin * span, lo - 1.0)
    state_hi = np.where(span > 0, hi + margin * span, hi + 1.0)
    lower = np.concatenate([np.tile(state_lo, n), np.full(n_theta, -theta_bound)])
    upper = np.concatenate([np.tile(state_hi, n), np.full(n_theta, theta_bound)])
    return lower, upper


@dataclass(frozen=True)
class NlpProblem:
    """Joint state/parameter program: regularized MSE objective, collocation
    equality constraints, box bounds.

    ``net`` supplies the architecture only; its parameters live in the
    decision vector. The optional proximal term (prox_rho/2)*||theta -
    prox_center||^2 is what consensus subproblems add to the objective.
    """

    grid: object
    net: object
    y_obs: np.ndarray
    lambda_reg: float = LAMBDA_DEFAULT
    lower: np.ndarray = None
    upper: np.ndarray = None
    prox_center: np.ndarray = None
    prox_rho: float = 0.0

    def __post_init__(self):
        y = np.asarray(self.y_obs, dtype=float)
        if y.shape != (self.grid.n, self.net.dim):
            raise ValueError(
                f"y_obs has shape {y.shape}, expected ({self.grid.n}, {self.net.dim})"
            )
        if self.lambda_reg < 0:
            raise ValueError("lambda_reg must be >= 0")
        object.__setattr__(self, "y_obs", y)
        lower, upper = self.lower, self.upper
        if lower is None or upper is None:
            lower, upper = default_bounds(y, self.net.n_theta)
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if lower.shape != (self.n_z,) or upper.shape != (self.n_z,):
            raise ValueError("bounds must match the decision vector length")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n(self):
        return self.grid.n

    @property
    def dim(self):
        return self.net.dim

    @property
    def n_theta(self):
        return self.net.n_theta

    @property
    def n_z(self):
        return self.n * self.dim + self.n_theta

    @property
    def n_constraints(self):
        return self.n * self.dim

    def pack(self, states, theta):
        states = np.asarray(states, dtype=float)
        theta = np.asarray(theta, dtype=float)
        return np.concatenate([states.ravel(), theta])

    def unpack(self, z):
        split = self.n * self.dim
        return z[:split].reshape(self.n, self.dim), z[split:]

    def data_mse(self, z):
        """The data term alone: (1/N) ||Y - Y_obs||_F^2."""
        states, _ = self.unpack(z)
        return float(np.sum((states - self.y_obs) ** 2) / self.n)

    def objective(self, z):
        """(1/N) ||Y - Y_obs||_F^2 + lambda ||theta||^2, plus any proximal term."""
        _, theta = self.unpack(z)
        value = self.data_mse(z) + self.lambda_reg * np.dot(theta, theta)
        if self.prox_rho:
            diff = theta - self.prox_center
            value += 0.5 * self.prox_rho * np.dot(diff, diff)
        return value

    def objective_gradient(self, z):
        states, theta = self.unpack(z)
        g_states = (2.0 / self.n) * (states - self.y_obs)
        g_theta = 2.0 * self.lambda_reg * theta
        if self.prox_rho:
            g_theta = g_theta + self.prox_rho * (theta - self.prox_center)
        return np.concatenate([g_states.ravel(), g_theta])

    def objective_hessian_diag(self, z):
        """Exact (constant) diagonal of the objective Hessian."""
        diag_states = np.full(self.n * self.dim, 2.0 / self.n)
        diag_theta = np.full(self.n_theta, 2.0 * self.lambda_reg + self.prox_rho)
        return np.concatenate([diag_states, diag_theta])

    def constraints(self, z):
        """Collocation residuals vec(D Y - F(Y, t)) in node-major order."""
        states, theta = self.unpack(z)
        net = self.net.with_theta(theta)
        f = neuralnet.batch_forward(net, states, self.grid.nodes_time)
        return (self.grid.diff_matrix @ states - f).ravel()

    def constraint_jacobian(self, z):
        """Dense (N*d) x n_z Jacobian of the collocation residuals."""
        states, theta = self.unpack(z)
        net = self.net.with_theta(theta)
        jy, jtheta = neuralnet.batch_jacobians(net, states, self.grid.nodes_time)
        n, d = self.n, self.dim
        jac = np.zeros((n * d, self.n_z))
        jac[:, : n * d] = np.kron(self.grid.diff_matrix, np.eye(d))
        for i in range(n):
            rows = slice(i * d, (i + 1) * d)
            jac[rows, i * d : (i + 1) * d] -= jy[i]
            jac[rows, n * d :] = -jtheta[i]
        return jac

    def constraint_vjp(self, z, w):
        """J(z)^T w without forming the Jacobian (the solver's hot path)."""
        states, theta = self.unpack(z)
        net = self.net.with_theta(theta)
        wmat = np.asarray(w, dtype=float).reshape(self.n, self.dim)
        gy, gtheta = neuralnet.batch_vjp(net, states, self.grid.nodes_time, wmat)
        g_states = self.grid.diff_matrix.T @ wmat - gy
        return np.concatenate([g_states.ravel(), -gtheta])
