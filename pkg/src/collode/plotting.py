"""Matplotlib rendering for the report path. Figures are written to files;
nothing here opens a window."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

STATE_LABELS = ("u (displacement)", "v (velocity)")


def plot_convergence(series, path, ylabel="training MSE", title=None):
    """MSE-versus-time curves, one per labeled run.

    ``series`` maps label -> (elapsed_s array, mse array).
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, (elapsed, mse) in series.items():
        ax.plot(elapsed, mse, marker=".", label=label)
    ax.set_xlabel("wall time (s)")
    ax.set_ylabel(ylabel)
    ax.set_yscale("log")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_predictions(train_data, test_data, train_traj, test_traj, path):
    """Observed points and model rollouts over the training and test ranges."""
    dim = train_data.y_obs.shape[1]
    fig, axes = plt.subplots(dim, 1, figsize=(7.5, 2.6 * dim), sharex=True)
    if dim == 1:
        axes = [axes]
    split = train_data.times[-1]
    for k, ax in enumerate(axes):
        ax.plot(train_data.times, train_data.y_obs[:, k], ".", ms=3, alpha=0.5,
                color="tab:gray", label="train data")
        if test_data is not None:
            ax.plot(test_data.times, test_data.y_obs[:, k], ".", ms=3, alpha=0.5,
                    color="tab:olive", label="test data")
        if train_traj is not None:
            ax.plot(train_traj.times, train_traj.states[:, k], color="tab:blue",
                    label="model (train range)")
        if test_traj is not None:
            ax.plot(test_traj.times, test_traj.states[:, k], color="tab:red",
                    label="model (test range)")
        ax.axvline(split, color="k", lw=0.8, ls="--")
        label = STATE_LABELS[k] if k < len(STATE_LABELS) else f"y{k}"
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    axes[0].legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_residuals(residuals, path, title="consensus primal residual"):
    """Primal-residual history of a consensus training run."""
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    ax.semilogy(range(1, len(residuals) + 1), residuals, marker="o")
    ax.set_xlabel("iteration")
    ax.set_ylabel("primal residual")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
