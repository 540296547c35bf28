"""Feed-forward networks with analytic value, input-Jacobian, and parameter-Jacobian evaluation.

The flat parameter vector concatenates, layer by layer, each weight matrix in
row-major order followed by its bias vector. That layout is a public contract:
the constrained trainer and the consensus trainer index into it, and
checkpoints store it verbatim.
"""

import json
from dataclasses import dataclass

import numpy as np


def _identity(z):
    return z


def _identity_deriv(z):
    return np.ones_like(z)


def _tanh_deriv(z):
    return 1.0 - np.tanh(z) ** 2


ACTIVATIONS = {
    "tanh": (np.tanh, _tanh_deriv),
    "identity": (_identity, _identity_deriv),
}


@dataclass(frozen=True)
class Mlp:
    """Fully connected network: smooth activation at hidden layers, identity output.

    ``layer_sizes`` lists realized widths including input and output; when
    ``time_input`` is set the input width is the state dimension plus one and
    ``t`` is appended to the state as the last input feature.
    """

    layer_sizes: tuple
    theta: np.ndarray
    activation: str = "tanh"
    time_input: bool = True

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ValueError("need at least one hidden layer")
        if min(sizes) < 1:
            raise ValueError("all layer widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (n_params(sizes),):
            raise ValueError(
                f"theta has length {theta.size}, expected {n_params(sizes)} "
                f"for layer sizes {sizes}"
            )
        object.__setattr__(self, "theta", theta)

    @property
    def dim(self):
        """State dimension d (output width)."""
        return self.layer_sizes[-1]

    @property
    def n_theta(self):
        return self.theta.size

    def with_theta(self, theta):
        """Copy with new parameters; hot path, so validation is length-only."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != self.theta.shape:
            raise ValueError(
                f"theta has length {theta.size}, expected {self.theta.size}"
            )
        new = object.__new__(Mlp)
        object.__setattr__(new, "layer_sizes", self.layer_sizes)
        object.__setattr__(new, "theta", theta)
        object.__setattr__(new, "activation", self.activation)
        object.__setattr__(new, "time_input", self.time_input)
        return new


def n_params(layer_sizes):
    """Total parameter count: sum of fan_in*fan_out + fan_out over layers."""
    return sum(
        fi * fo + fo for fi, fo in zip(layer_sizes[:-1], layer_sizes[1:])
    )


def xavier_init(layer_sizes, seed):
    """Xavier-uniform weights on +-sqrt(6/(fan_in+fan_out)), zero biases."""
    rng = np.random.default_rng(seed)
    parts = []
    for fi, fo in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fi + fo))
        parts.append(rng.uniform(-bound, bound, size=fo * fi))
        parts.append(np.zeros(fo))
    return np.concatenate(parts)


def split_theta(layer_sizes, theta):
    """Unflatten theta into a list of (W, b) pairs, W of shape (fan_out, fan_in)."""
    layers = []
    pos = 0
    for fi, fo in zip(layer_sizes[:-1], layer_sizes[1:]):
        w = theta[pos : pos + fo * fi].reshape(fo, fi)
        pos += fo * fi
        b = theta[pos : pos + fo]
        pos += fo
        layers.append((w, b))
    return layers


def _stack_input(net, y, t):
    y = np.asarray(y, dtype=float)
    if y.shape != (net.dim,):
        raise ValueError(f"state has shape {y.shape}, expected ({net.dim},)")
    if net.time_input:
        return np.append(y, t)
    return y


def forward(net, y, t):
    """Evaluate f(y, t) for a single state vector."""
    x = _stack_input(net, y, t)
    act, _ = ACTIVATIONS[net.activation]
    layers = split_theta(net.layer_sizes, net.theta)
    a = x
    for w, b in layers[:-1]:
        a = act(w @ a + b)
    w, b = layers[-1]
    return w @ a + b


def batch_forward(net, ys, ts):
    """Evaluate f row-wise: row i of the result is forward(net, ys[i], ts[i])."""
    ys = np.asarray(ys, dtype=float)
    ts = np.asarray(ts, dtype=float)
    if ys.ndim != 2 or ys.shape[1] != net.dim or ts.shape != (ys.shape[0],):
        raise ValueError(
            f"expected ({len(ts)}, {net.dim}) states and matching times, "
            f"got {ys.shape} and {ts.shape}"
        )
    x = np.hstack([ys, ts[:, None]]) if net.time_input else ys
    act, _ = ACTIVATIONS[net.activation]
    layers = split_theta(net.layer_sizes, net.theta)
    a = x
    for w, b in layers[:-1]:
        a = act(a @ w.T + b)
    w, b = layers[-1]
    return a @ w.T + b


def _batch_trace(net, ys, ts):
    """Forward pass keeping per-layer pre-activations and activations."""
    x = np.hstack([ys, ts[:, None]]) if net.time_input else np.array(ys, dtype=float)
    act, dact = ACTIVATIONS[net.activation]
    layers = split_theta(net.layer_sizes, net.theta)
    activations = [x]  # a_0 .. a_{L-1}
    derivs = []  # act'(z_l) for hidden layers
    a = x
    for w, b in layers[:-1]:
        z = a @ w.T + b
        derivs.append(dact(z))
        a = act(z)
        activations.append(a)
    w, b = layers[-1]
    out = a @ w.T + b
    return layers, activations, derivs, out


def jacobian_input(net, y, t):
    """d x d Jacobian of f with respect to the state (time column excluded)."""
    jy, _ = batch_jacobians(
        net, np.asarray(y, dtype=float)[None, :], np.array([t], dtype=float)
    )
    return jy[0]


def jacobian_params(net, y, t):
    """d x n_theta Jacobian of f with respect to the flat parameter vector."""
    _, jt = batch_jacobians(
        net, np.asarray(y, dtype=float)[None, :], np.array([t], dtype=float)
    )
    return jt[0]


def batch_jacobians(net, ys, ts):
    """Per-row Jacobians: (N, d, d) with respect to states and (N, d, n_theta).

    Uses the layer-wise chain rule; the state Jacobian drops the time column
    when the network takes t as an input feature.
    """
    ys = np.asarray(ys, dtype=float)
    ts = np.asarray(ts, dtype=float)
    layers, activations, derivs, _ = _batch_trace(net, ys, ts)
    n = ys.shape[0]
    d = net.dim

    # m[l] = d out / d z_{l+1}, built backwards from the output layer.
    ms = [None] * len(layers)
    ms[-1] = np.broadcast_to(np.eye(d), (n, d, d))
    for l in range(len(layers) - 2, -1, -1):
        back = np.einsum("nkj,ji->nki", ms[l + 1], layers[l + 1][0])
        ms[l] = back * derivs[l][:, None, :]

    jac_in = np.einsum("nki,ij->nkj", ms[0], layers[0][0])
    if net.time_input:
        jac_in = jac_in[:, :, :d]

    blocks = []
    for l, (w, b) in enumerate(layers):
        gw = np.einsum("nki,nj->nkij", ms[l], activations[l])
        blocks.append(gw.reshape(n, d, w.size))
        blocks.append(ms[l])
    return np.ascontiguousarray(jac_in), np.concatenate(blocks, axis=2)


def batch_vjp(net, ys, ts, wbar):
    """Vector-Jacobian products for a batch of rows without forming Jacobians.

    Given adjoints ``wbar`` (N x d) of the outputs, returns the per-row state
    adjoints (N x d) and the accumulated parameter adjoint (n_theta,):
    row i of the first is J_y(y_i, t_i)^T wbar_i, and the second is
    sum_i J_theta(y_i, t_i)^T wbar_i.
    """
    ys = np.asarray(ys, dtype=float)
    ts = np.asarray(ts, dtype=float)
    wbar = np.asarray(wbar, dtype=float)
    layers, activations, derivs, _ = _batch_trace(net, ys, ts)
    d = net.dim

    grads = [None] * len(layers)
    delta = wbar
    for l in range(len(layers) - 1, -1, -1):
        gw = delta.T @ activations[l]
        gb = delta.sum(axis=0)
        grads[l] = (gw, gb)
        delta = delta @ layers[l][0]
        if l > 0:
            delta = delta * derivs[l - 1]

    gtheta = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])
    gy = delta[:, :d] if net.time_input else delta
    return gy, gtheta


def save_checkpoint(net, path):
    """Write the network to a JSON checkpoint (theta round-trips exactly)."""
    record = {
        "layer_sizes": list(net.layer_sizes),
        "time_input": net.time_input,
        "activation": net.activation,
        "theta": net.theta.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(record, fh)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        record = json.load(fh)
    return Mlp(
        layer_sizes=tuple(record["layer_sizes"]),
        theta=np.array(record["theta"], dtype=float),
        activation=record["activation"],
        time_input=record["time_input"],
    )
