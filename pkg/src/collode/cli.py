"""Experiment harness: dataset generation, the training modes, evaluation, and reports.

Configuration is a flat ``key = value`` file with dotted section names; every
key can also be set on the command line with ``-o key=value`` (command line
wins). Each run directory receives the fully resolved configuration so the
run can be reproduced from it alone.
"""

import argparse
import os
import sys

import numpy as np

from . import admm as admm_mod
from . import colloc, fileio, neuralnet, nlp, odesim, plotting, prep, seqtrain
from .problem import NlpProblem

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_IO = 4

# Internal RK4 step used when generating ground-truth trajectories.
GENERATE_MAX_STEP = 1e-3

DEFAULTS = {
    "system.mu": 1.0,
    "system.amplitude": 1.0,
    "system.omega": 1.0,
    "system.u0": 0.0,
    "system.v0": 1.0,
    "data.t0": 0.0,
    "data.t_end": 20.0,
    "data.n_train": 200,
    "data.n_test": 200,
    "data.sigma": 0.1,
    "data.seed": 0,
    "net.hidden": "32",
    "net.time_input": True,
    "net.seed": 0,
    "train.mode": "collocation",
    "train.lambda_reg": 1e-4,
    "train.n_nodes": 0,  # 0 -> one node per training point
    "train.loess_span": 0.1,
    "train.checkpoint": "",  # optional warm start for hybrid mode
    "solver.max_outer_iters": 50,
    "solver.max_inner_iters": 200,
    "solver.constraint_tol": 1e-6,
    "solver.opt_tol": 1e-6,
    "solver.rho0": 10.0,
    "solver.rho_growth": 10.0,
    "solver.time_limit": 0.0,  # 0 -> unlimited
    "solver.seed": 0,
    "seq.integrator": "rk4",
    "seq.substeps": 1,
    "seq.lr": 0.01,
    "seq.epochs": 500,
    "seq.time_limit": 0.0,
    "admm.batches": 2,
    "admm.rho": 1.0,
    "admm.max_iters": 20,
    "admm.tol": 0.0,  # 0 -> dimension-scaled default
}

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _convert(key, text):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        low = text.strip().lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"{key}: expected a boolean, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text.strip()


def resolve_config(config_path=None, overrides=()):
    """Defaults, then the config file, then command-line overrides."""
    cfg = dict(DEFAULTS)
    if config_path:
        for key, value in fileio.read_kv(config_path).items():
            if key not in DEFAULTS:
                raise ValueError(f"unknown config key {key!r} in {config_path}")
            cfg[key] = _convert(key, value)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise ValueError(f"unknown config key {key!r}")
        cfg[key] = _convert(key, value)
    return cfg


def write_config(cfg, path):
    fileio.write_kv(path, {k: cfg[k] for k in DEFAULTS})


def hidden_widths(cfg):
    try:
        widths = [int(w) for w in str(cfg["net.hidden"]).split(",") if w.strip()]
    except ValueError:
        raise ValueError(f"net.hidden must be comma-separated widths, got {cfg['net.hidden']!r}")
    if not widths or min(widths) < 1:
        raise ValueError("net.hidden must list positive widths")
    return widths


def realized_layer_sizes(cfg, dim):
    """Input width is the state dimension plus one when t is an input feature."""
    first = dim + 1 if cfg["net.time_input"] else dim
    return [first] + hidden_widths(cfg) + [dim]


def build_net(cfg, dim):
    sizes = realized_layer_sizes(cfg, dim)
    theta = neuralnet.xavier_init(sizes, cfg["net.seed"])
    return neuralnet.Mlp(tuple(sizes), theta, "tanh", cfg["net.time_input"])


def solver_config(cfg, store_iterates=False):
    return nlp.SolverConfig(
        max_outer_iters=cfg["solver.max_outer_iters"],
        max_inner_iters=cfg["solver.max_inner_iters"],
        constraint_tol=cfg["solver.constraint_tol"],
        opt_tol=cfg["solver.opt_tol"],
        rho0=cfg["solver.rho0"],
        rho_growth=cfg["solver.rho_growth"],
        time_limit=cfg["solver.time_limit"] or None,
        seed=cfg["solver.seed"],
        store_iterates=store_iterates,
    )


def seq_config(cfg):
    return seqtrain.SeqTrainConfig(
        integrator=cfg["seq.integrator"],
        substeps=cfg["seq.substeps"],
        lr=cfg["seq.lr"],
        epochs=cfg["seq.epochs"],
        time_limit=cfg["seq.time_limit"] or None,
    )


# ---------------------------------------------------------------- generate


def cmd_generate(args):
    cfg = resolve_config(args.config, args.opt)
    out = args.out
    os.makedirs(out, exist_ok=True)
    system = odesim.vdp_system(
        cfg["system.mu"], cfg["system.amplitude"], cfg["system.omega"]
    )
    y0 = np.array([cfg["system.u0"], cfg["system.v0"]])
    t0, t_end = cfg["data.t0"], cfg["data.t_end"]
    if t_end <= t0:
        raise ValueError("data.t_end must exceed data.t0")
    test_end = 2.0 * t_end - t0
    train_times = np.linspace(t0, t_end, cfg["data.n_train"])
    test_times = np.linspace(t_end, test_end, cfg["data.n_test"])
    union = np.concatenate([train_times, test_times[1:]])
    substeps = max(1, int(np.ceil(np.max(np.diff(union)) / GENERATE_MAX_STEP)))
    traj = odesim.rk4_integrate(system, y0, union, substeps=substeps)

    meta = {k: cfg[k] for k in DEFAULTS if k.startswith(("system.", "data."))}
    meta["test_interval"] = [t_end, test_end]
    n_train = cfg["data.n_train"]
    train_clean = prep.Dataset(train_times, traj.states[:n_train], dict(meta, split="train"))
    test_clean = prep.Dataset(
        test_times,
        traj.states[n_train - 1 : n_train - 1 + cfg["data.n_test"]],
        dict(meta, split="test"),
    )
    rng = np.random.default_rng(cfg["data.seed"])
    seed_train, seed_test = (int(s) for s in rng.integers(0, 2**31 - 1, size=2))
    train_noisy = prep.add_noise(train_clean, cfg["data.sigma"], seed_train)
    test_noisy = prep.add_noise(test_clean, cfg["data.sigma"], seed_test)

    prep.save_dataset(train_clean, os.path.join(out, "train_clean.csv"))
    prep.save_dataset(train_noisy, os.path.join(out, "train_noisy.csv"))
    prep.save_dataset(test_clean, os.path.join(out, "test_clean.csv"))
    prep.save_dataset(test_noisy, os.path.join(out, "test_noisy.csv"))
    write_config(cfg, os.path.join(out, "config.txt"))
    print(
        f"wrote {n_train}+{cfg['data.n_test']} points on "
        f"[{t0:g}, {t_end:g}] / [{t_end:g}, {test_end:g}] to {out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------- train


def _collocation_phase(cfg, net0, train_data):
    n_nodes = cfg["train.n_nodes"] or train_data.n
    grid = colloc.build_grid(n_nodes, train_data.times[0], train_data.times[-1])
    y_grid = prep.resample_to_grid(train_data, grid).y_obs
    y_init = prep.init_states(train_data, grid, span=cfg["train.loess_span"])
    prob = NlpProblem(grid, net0, y_grid, lambda_reg=cfg["train.lambda_reg"])
    z0 = prob.pack(y_init, net0.theta)
    report = nlp.solve(prob, z0, solver_config(cfg, store_iterates=True))
    net = net0.with_theta(prob.unpack(report.z_final)[1].copy())
    return net, report, prob


def _collocation_series(report, prob, net0, train_data):
    rows = []
    for row, z in zip(report.trace, report.outer_iterates):
        net = net0.with_theta(prob.unpack(z)[1])
        rows.append(
            (row.elapsed_s, seqtrain.evaluate_mse(net, train_data), prob.data_mse(z))
        )
    return rows


def _write_series(path, rows, header=("elapsed_s", "train_mse")):
    fileio.write_table(path, list(header), rows)


def cmd_train(args):
    cfg = resolve_config(args.config, args.opt)
    if args.mode:
        cfg["train.mode"] = args.mode
    mode = cfg["train.mode"]
    if mode not in ("collocation", "sequential", "hybrid", "admm"):
        raise ValueError(f"unknown train.mode {mode!r}")
    out = args.out
    os.makedirs(out, exist_ok=True)
    train_noisy = prep.load_dataset(os.path.join(args.data, "train_noisy.csv"))
    test_noisy = prep.load_dataset(os.path.join(args.data, "test_noisy.csv"))
    net0 = build_net(cfg, train_noisy.dim)

    summary = {
        "mode": mode,
        "data_dir": os.path.abspath(args.data),
        "layer_sizes": ",".join(str(s) for s in net0.layer_sizes),
        "n_theta": net0.n_theta,
    }
    failed = False

    if mode == "collocation":
        net, report, prob = _collocation_phase(cfg, net0, train_noisy)
        nlp.trace_to_csv(report, os.path.join(out, "trace.csv"))
        _write_series(
            os.path.join(out, "series.csv"),
            _collocation_series(report, prob, net0, train_noisy),
            ("elapsed_s", "train_mse", "state_mse"),
        )
        summary.update(
            status=report.status,
            wall_time_s=report.elapsed_s,
            max_violation=report.max_constraint_violation,
            outer_iters=report.outer_iters,
            inner_iters=report.inner_iters_total,
            objective=report.objective_final,
            n_nodes=prob.n,
        )
        failed = report.status == "numerical-failure"

    elif mode == "sequential":
        result = seqtrain.sequential_train(net0, train_noisy, seq_config(cfg))
        net = result.net
        rows = [(i, e, v) for i, (e, v) in enumerate(result.trace)]
        fileio.write_table(
            os.path.join(out, "trace.csv"), ["iter", "elapsed_s", "value"], rows
        )
        _write_series(
            os.path.join(out, "series.csv"), [(e, v) for e, v in result.trace]
        )
        summary.update(
            status=result.status,
            wall_time_s=result.trace[-1][0],
            epochs=len(result.trace) - 1,
        )
        failed = result.status == "diverged"

    elif mode == "hybrid":
        if cfg["train.checkpoint"]:
            warm = neuralnet.load_checkpoint(cfg["train.checkpoint"])
            colloc_elapsed = 0.0
            series = []
        else:
            warm, report, prob = _collocation_phase(cfg, net0, train_noisy)
            nlp.trace_to_csv(report, os.path.join(out, "trace.csv"))
            colloc_elapsed = report.elapsed_s
            series = [
                (e, m)
                for e, m, _ in _collocation_series(report, prob, net0, train_noisy)
            ]
            summary["colloc_status"] = report.status
            summary["colloc_wall_time_s"] = report.elapsed_s
            failed = report.status == "numerical-failure"
        summary["colloc_train_mse"] = seqtrain.evaluate_mse(warm, train_noisy)
        result = seqtrain.hybrid_pretrain_handoff(warm, train_noisy, seq_config(cfg))
        net = result.net
        series += [(colloc_elapsed + e, v) for e, v in result.trace]
        _write_series(os.path.join(out, "series.csv"), series)
        summary.update(
            status=result.status,
            wall_time_s=colloc_elapsed + result.trace[-1][0],
            epochs=len(result.trace) - 1,
        )
        failed = failed or result.status == "diverged"

    else:  # admm
        n_batches = cfg["admm.batches"]
        if n_batches < 2:
            raise ValueError("admm.batches must be >= 2")
        chunks = np.array_split(np.arange(train_noisy.n), n_batches)
        batches, grids = [], []
        for idx in chunks:
            sub = prep.Dataset(
                train_noisy.times[idx], train_noisy.y_obs[idx], dict(train_noisy.meta)
            )
            batches.append(sub)
            n_nodes = cfg["train.n_nodes"] or sub.n
            grids.append(colloc.build_grid(n_nodes, sub.times[0], sub.times[-1]))
        net, state = admm_mod.admm_train(
            batches,
            grids,
            net0,
            rho=cfg["admm.rho"],
            max_iters=cfg["admm.max_iters"],
            tol=cfg["admm.tol"] or None,
            lambda_reg=cfg["train.lambda_reg"],
            solver_config=solver_config(cfg),
            loess_span=cfg["train.loess_span"],
        )
        rows = [
            (i + 1, e, r)
            for i, (e, r) in enumerate(zip(state.elapsed, state.primal_residuals))
        ]
        fileio.write_table(
            os.path.join(out, "residuals.csv"), ["iter", "elapsed_s", "value"], rows
        )
        _write_series(
            os.path.join(out, "series.csv"),
            [
                (e, seqtrain.evaluate_mse(net0.with_theta(th), train_noisy))
                for e, th in zip(state.elapsed, state.consensus_history)
            ],
        )
        summary.update(
            status=state.status,
            wall_time_s=state.elapsed[-1] if state.elapsed else 0.0,
            admm_iters=len(state.primal_residuals),
            final_residual=state.primal_residuals[-1] if state.primal_residuals else np.nan,
        )
        failed = state.status == "aborted"

    neuralnet.save_checkpoint(net, os.path.join(out, "checkpoint.json"))
    summary["train_mse"] = seqtrain.evaluate_mse(net, train_noisy)
    summary["test_mse"] = seqtrain.evaluate_mse(net, test_noisy)
    fileio.write_kv(os.path.join(out, "summary.txt"), summary)
    write_config(cfg, os.path.join(out, "config.txt"))
    print(
        f"[{mode}] status={summary['status']} "
        f"train_mse={summary['train_mse']:.6g} test_mse={summary['test_mse']:.6g} "
        f"wall={summary['wall_time_s']:.2f}s -> {out}"
    )
    return EXIT_SOLVER if failed else EXIT_OK


# ---------------------------------------------------------------- evaluate


def cmd_evaluate(args):
    net = neuralnet.load_checkpoint(args.checkpoint)
    data = prep.load_dataset(args.dataset)
    if net.dim != data.dim:
        raise ValueError(
            f"checkpoint is {net.dim}-dimensional, dataset is {data.dim}-dimensional"
        )
    mse = seqtrain.evaluate_mse(net, data)
    record = {
        "checkpoint": os.path.abspath(args.checkpoint),
        "dataset": os.path.abspath(args.dataset),
        "n_points": data.n,
        "mse": mse,
    }
    if args.out:
        fileio.write_kv(args.out, record)
    print(f"mse = {fileio.format_float(mse)}")
    return EXIT_OK


# ---------------------------------------------------------------- report


def _read_series(path):
    header, data = fileio.read_table(path)
    cols = {name: data[:, i] for i, name in enumerate(header)}
    return cols["elapsed_s"], cols["train_mse"]


def cmd_report(args):
    os.makedirs(args.out, exist_ok=True)
    rows = []
    series = {}
    residuals = {}
    for run_dir in args.runs:
        name = os.path.basename(os.path.normpath(run_dir))
        summary_path = os.path.join(run_dir, "summary.txt")
        if not os.path.exists(summary_path):
            print(f"warning: skipping {run_dir}: no summary.txt", file=sys.stderr)
            continue
        summary = fileio.read_kv(summary_path)
        rows.append(
            [
                name,
                summary.get("mode", "?"),
                summary.get("train_mse", "nan"),
                summary.get("test_mse", "nan"),
                summary.get("wall_time_s", "nan"),
                summary.get("status", "?"),
            ]
        )
        series_path = os.path.join(run_dir, "series.csv")
        if os.path.exists(series_path):
            series[name] = _read_series(series_path)
        residual_path = os.path.join(run_dir, "residuals.csv")
        if os.path.exists(residual_path):
            _, data = fileio.read_table(residual_path)
            residuals[name] = data[:, 2]
        _render_predictions(run_dir, name, summary, args.out)

    with open(os.path.join(args.out, "comparison.csv"), "w") as fh:
        fh.write("run,mode,train_mse,test_mse,wall_time_s,status\n")
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")
    if series:
        plotting.plot_convergence(series, os.path.join(args.out, "convergence.png"))
    for name, values in residuals.items():
        plotting.plot_residuals(
            values, os.path.join(args.out, f"residuals_{name}.png")
        )
    print(f"report for {len(rows)} run(s) -> {args.out}")
    return EXIT_OK


def _render_predictions(run_dir, name, summary, out):
    checkpoint = os.path.join(run_dir, "checkpoint.json")
    data_dir = summary.get("data_dir", "")
    train_path = os.path.join(data_dir, "train_noisy.csv")
    test_path = os.path.join(data_dir, "test_noisy.csv")
    if not (os.path.exists(checkpoint) and os.path.exists(train_path)):
        return
    net = neuralnet.load_checkpoint(checkpoint)
    train_data = prep.load_dataset(train_path)
    test_data = prep.load_dataset(test_path) if os.path.exists(test_path) else None
    try:
        train_traj = odesim.predict(net, train_data.y_obs[0], train_data.times)
        test_traj = (
            odesim.predict(net, test_data.y_obs[0], test_data.times)
            if test_data is not None
            else None
        )
    except odesim.IntegrationDivergedError:
        print(f"warning: rollout diverged for {name}; skipping figure", file=sys.stderr)
        return
    plotting.plot_predictions(
        train_data, test_data, train_traj, test_traj,
        os.path.join(out, f"predictions_{name}.png"),
    )


# ---------------------------------------------------------------- entry point


def build_parser():
    parser = argparse.ArgumentParser(
        prog="collode",
        description="Train neural ODEs by collocation-based simultaneous optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument(
            "-o", "--opt", action="append", default=[], metavar="KEY=VALUE",
            help="override a configuration key (repeatable)",
        )

    p = sub.add_parser("generate", help="simulate the system and write datasets")
    common(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory from 'generate'")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument(
        "--mode", choices=["collocation", "sequential", "hybrid", "admm"],
        help="shorthand for -o train.mode=...",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="rollout MSE of a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True, help="dataset CSV file")
    p.add_argument("--out", help="optional summary output file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="comparison table and figures across runs")
    p.add_argument("runs", nargs="+", help="run directories from 'train'")
    p.add_argument("--out", required=True, help="report output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, nlp.JacobianCheckError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
