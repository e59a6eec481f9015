"""Configuration-driven command line interface.

Subcommands
-----------
synthesize : write the feedback-law tables and admissibility constants
simulate   : write closed-loop sample paths
cost       : write a Monte Carlo cost estimate (optimal or zero control)
verify     : write optimality residual reports; exit 0 iff all pass
sweep      : repeat synthesis over a range of fractional orders

Configuration is one JSON document with flat model keys (``x0 b c sigma
gamma alpha delta lambda``, plus optional ``mu``) and nested ``grid`` /
``run`` blocks; unknown keys are rejected.  Every CSV starts with a
'#'-prefixed preamble embedding the resolved config and the criterion
constants, then a header line, then rows with floats at 17 significant
digits.  Identical config and seed give byte-identical files once the one
timestamp line is suppressed with --no-timestamp.  Figures are rendered
next to each CSV unless --no-plots is given.

Exit status: 0 success, 1 invariant failure, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .fredholm import ContractionError
from .kernels import QuadratureError
from .model import LqModel, admissibility_constants
from .simulate import DivergenceError, sample_brownian
from .synthesis import _optimal_batch, cost_estimate, make_grid, synthesize
from .verify import adjoint_identity, oc1_residual, sfie_residual

__all__ = ["RunConfig", "ConfigError", "run", "main"]

_MODEL_KEYS = ("x0", "b", "c", "sigma", "gamma", "alpha", "delta", "lambda")
_GRID_KEYS = ("horizon", "n")
_RUN_KEYS = (
    "n_paths",
    "base_seed",
    "outputs",
    "enforce_criterion",
    "resolvent_method",
    "quad_tol",
    "control",
    "verify_tol",
    "alphas",
)


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration for one CLI run; round-trips through JSON."""

    model: LqModel
    mu: float | None = None
    horizon: float | None = None
    n: int = 512
    n_paths: int = 1000
    base_seed: int = 0
    outputs: str = "out"
    enforce_criterion: bool = True
    resolvent_method: str = "direct"
    quad_tol: float = 1e-10
    control: str = "optimal"
    verify_tol: float = 0.05
    alphas: tuple = (0.6, 0.75, 0.9, 1.0)

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(data) - set(_MODEL_KEYS) - {"mu", "grid", "run"}
        if unknown:
            raise ConfigError("unknown config key(s): " + ", ".join(sorted(unknown)))
        missing = [k for k in _MODEL_KEYS if k not in data]
        if missing:
            raise ConfigError("missing model key(s): " + ", ".join(missing))
        model = LqModel(
            x0=float(data["x0"]),
            b=float(data["b"]),
            c=float(data["c"]),
            sigma=float(data["sigma"]),
            gamma=float(data["gamma"]),
            alpha=float(data["alpha"]),
            delta=float(data["delta"]),
            lam=float(data["lambda"]),
        )
        kwargs: dict = {"model": model}
        if data.get("mu") is not None:
            kwargs["mu"] = float(data["mu"])
        grid = data.get("grid", {})
        if not isinstance(grid, dict):
            raise ConfigError("'grid' must be an object")
        bad = set(grid) - set(_GRID_KEYS)
        if bad:
            raise ConfigError(
                "unknown key(s) in 'grid' block: " + ", ".join(sorted(bad))
            )
        if grid.get("horizon") is not None:
            kwargs["horizon"] = float(grid["horizon"])
        if "n" in grid:
            kwargs["n"] = int(grid["n"])
        runblk = data.get("run", {})
        if not isinstance(runblk, dict):
            raise ConfigError("'run' must be an object")
        bad = set(runblk) - set(_RUN_KEYS)
        if bad:
            raise ConfigError(
                "unknown key(s) in 'run' block: " + ", ".join(sorted(bad))
            )
        for key in ("n_paths", "base_seed"):
            if key in runblk:
                kwargs[key] = int(runblk[key])
        for key in ("outputs", "resolvent_method", "control"):
            if key in runblk:
                kwargs[key] = str(runblk[key])
        for key in ("quad_tol", "verify_tol"):
            if key in runblk:
                kwargs[key] = float(runblk[key])
        if "enforce_criterion" in runblk:
            if not isinstance(runblk["enforce_criterion"], bool):
                raise ConfigError("'enforce_criterion' must be true or false")
            kwargs["enforce_criterion"] = runblk["enforce_criterion"]
        if "alphas" in runblk:
            kwargs["alphas"] = tuple(float(a) for a in runblk["alphas"])
        return RunConfig(**kwargs)

    @staticmethod
    def from_json(path: str) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        try:
            return RunConfig.from_dict(data)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def to_dict(self) -> dict:
        m = self.model
        return {
            "x0": m.x0,
            "b": m.b,
            "c": m.c,
            "sigma": m.sigma,
            "gamma": m.gamma,
            "alpha": m.alpha,
            "delta": m.delta,
            "lambda": m.lam,
            "mu": self.mu,
            "grid": {"horizon": self.horizon, "n": self.n},
            "run": {
                "n_paths": self.n_paths,
                "base_seed": self.base_seed,
                "outputs": self.outputs,
                "enforce_criterion": self.enforce_criterion,
                "resolvent_method": self.resolvent_method,
                "quad_tol": self.quad_tol,
                "control": self.control,
                "verify_tol": self.verify_tol,
                "alphas": list(self.alphas),
            },
        }


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def _preamble(config: RunConfig, constants=None, timestamp: bool = True) -> list:
    lines = ["# fraclqr " + __version__]
    lines.append(
        "# config "
        + json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    )
    if constants is not None:
        lines.append("# rho_alpha " + _fmt(constants.rho_alpha))
        lines.append("# rho_tilde_alpha " + _fmt(constants.rho_tilde_alpha))
        lines.append("# mu " + _fmt(constants.mu))
        lines.append("# k_const " + _fmt(constants.k_const))
    if timestamp:
        lines.append("# generated " + datetime.now(timezone.utc).isoformat())
    return lines


def _write_csv(path: str, preamble: list, header: list, rows) -> None:
    lines = list(preamble)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _outdir(config: RunConfig) -> str:
    os.makedirs(config.outputs, exist_ok=True)
    return config.outputs


def _build_law(config: RunConfig):
    return synthesize(
        config.model,
        n=config.n,
        horizon=config.horizon,
        mu=config.mu,
        enforce_criterion=config.enforce_criterion,
        resolvent_method=config.resolvent_method,
        quad_tol=config.quad_tol,
    )


def _cmd_synthesize(config: RunConfig, args) -> int:
    law = _build_law(config)
    out = _outdir(config)
    pre = _preamble(config, law.constants, timestamp=not args.no_timestamp)
    _write_csv(
        os.path.join(out, "constants.csv"),
        pre,
        [
            "rho_alpha",
            "rho_tilde_alpha",
            "mu",
            "k_const",
            "gain",
            "norm_bound",
            "norm_estimate",
            "resolvent_residual",
            "grid_n",
            "horizon",
        ],
        [
            [
                law.constants.rho_alpha,
                law.constants.rho_tilde_alpha,
                law.constants.mu,
                law.constants.k_const,
                law.gain,
                law.norm_bound,
                law.kernel.norm_estimate,
                law.resolvent.residual,
                law.grid.n,
                law.grid.horizon,
            ]
        ],
    )
    _write_csv(
        os.path.join(out, "law.csv"),
        pre,
        ["t", "phi_hat", "psi_hat"],
        zip(law.grid.nodes, law.phi, law.psi),
    )
    if not args.no_plots:
        from . import plots

        plots.law_figure(law.grid.nodes, law.phi, law.psi, os.path.join(out, "law.png"))
    print(
        f"synthesize: n={law.grid.n} horizon={law.grid.horizon:g} "
        f"k_const={law.constants.k_const:.12g} mu={law.constants.mu:.12g}"
    )
    return 0


def _cmd_simulate(config: RunConfig, args) -> int:
    law = _build_law(config)
    out = _outdir(config)
    dw = np.stack(
        [
            sample_brownian(law.grid, config.base_seed + i).increments
            for i in range(config.n_paths)
        ]
    )
    states, controls, _ = _optimal_batch(law, dw)
    pre = _preamble(config, law.constants, timestamp=not args.no_timestamp)
    header = ["t"] + [f"path_{i}" for i in range(config.n_paths)]
    _write_csv(
        os.path.join(out, "paths_state.csv"),
        pre,
        header,
        np.column_stack([law.grid.nodes, states.T]),
    )
    _write_csv(
        os.path.join(out, "paths_control.csv"),
        pre,
        header,
        np.column_stack([law.grid.nodes, controls.T]),
    )
    if not args.no_plots:
        from . import plots

        shown = min(config.n_paths, 20)
        plots.paths_figure(
            law.grid.nodes,
            states[:shown],
            controls[:shown],
            os.path.join(out, "paths.png"),
        )
    print(f"simulate: {config.n_paths} path(s) on n={law.grid.n} written to {out}")
    return 0


def _cmd_cost(config: RunConfig, args) -> int:
    out = _outdir(config)
    if config.control == "optimal":
        law = _build_law(config)
        constants = law.constants
        est = cost_estimate(
            config.model, law, n_paths=config.n_paths, base_seed=config.base_seed
        )
    elif config.control == "zero":
        constants = admissibility_constants(
            config.model, mu=config.mu, enforce_criterion=config.enforce_criterion
        )
        grid = make_grid(config.model, constants.mu, config.n, config.horizon)
        est = cost_estimate(
            config.model,
            None,
            grid=grid,
            n_paths=config.n_paths,
            base_seed=config.base_seed,
        )
    else:
        raise ConfigError(
            f"unknown control {config.control!r}; expected 'optimal' or 'zero'"
        )
    pre = _preamble(config, constants, timestamp=not args.no_timestamp)
    _write_csv(
        os.path.join(out, "cost.csv"),
        pre,
        ["control", "mean", "std_error", "n_paths", "horizon", "truncation_bound"],
        [
            [
                config.control,
                est.mean,
                est.std_error,
                est.n_paths,
                est.horizon,
                est.truncation_bound,
            ]
        ],
    )
    _write_csv(
        os.path.join(out, "path_costs.csv"),
        pre,
        ["path", "cost"],
        enumerate(est.path_costs),
    )
    if not args.no_plots:
        from . import plots

        plots.cost_figure(est.path_costs, os.path.join(out, "cost.png"))
    print(
        f"cost ({config.control}): {est.mean:.8g} +- {est.std_error:.3g} "
        f"(n_paths={est.n_paths}, truncation <= {est.truncation_bound:.3g})"
    )
    return 0


def _cmd_verify(config: RunConfig, args) -> int:
    law = _build_law(config)
    out = _outdir(config)
    w = sample_brownian(law.grid, config.base_seed)
    reports = [sfie_residual(law, w), oc1_residual(law, w), adjoint_identity(law, w)]
    tol = config.verify_tol
    rows = []
    all_ok = True
    for rep in reports:
        ok = rep.sup_residual <= tol
        all_ok = all_ok and ok
        rows.append(
            [
                rep.name,
                rep.sup_residual,
                rep.l2_residual,
                rep.grid_n,
                rep.n_paths,
                rep.tail_bound,
                tol,
                "pass" if ok else "fail",
            ]
        )
        print(
            f"verify {rep.name}: sup={rep.sup_residual:.3e} "
            f"tol={tol:.3e} {'pass' if ok else 'FAIL'}"
        )
    pre = _preamble(config, law.constants, timestamp=not args.no_timestamp)
    _write_csv(
        os.path.join(out, "residuals.csv"),
        pre,
        [
            "name",
            "sup_residual",
            "l2_residual",
            "grid_n",
            "n_paths",
            "tail_bound",
            "tolerance",
            "status",
        ],
        rows,
    )
    if not args.no_plots:
        from . import plots

        plots.residual_figure(reports, os.path.join(out, "residuals.png"))
    return 0 if all_ok else 1


def _cmd_sweep(config: RunConfig, args) -> int:
    out = _outdir(config)
    rows = []
    curves: dict = {"k_const": [], "cost_mean": [], "sfie_sup": []}
    ok_alphas = []
    all_ok = True
    nan = float("nan")
    for alpha in config.alphas:
        model = replace(config.model, alpha=alpha)
        sub = replace(config, model=model)
        try:
            law = _build_law(sub)
            w = sample_brownian(law.grid, config.base_seed)
            rep = sfie_residual(law, w)
            est = cost_estimate(
                model, law, n_paths=config.n_paths, base_seed=config.base_seed
            )
        except (ValueError, ContractionError, QuadratureError, DivergenceError) as exc:
            all_ok = False
            rows.append([alpha, type(exc).__name__] + [nan] * 9)
            print(f"sweep alpha={alpha:g}: {type(exc).__name__}: {exc}")
            continue
        rows.append(
            [
                alpha,
                "ok",
                law.constants.rho_alpha,
                law.constants.rho_tilde_alpha,
                law.constants.mu,
                law.constants.k_const,
                law.gain,
                law.kernel.norm_estimate,
                est.mean,
                est.std_error,
                rep.sup_residual,
            ]
        )
        ok_alphas.append(alpha)
        curves["k_const"].append(law.constants.k_const)
        curves["cost_mean"].append(est.mean)
        curves["sfie_sup"].append(rep.sup_residual)
        print(
            f"sweep alpha={alpha:g}: cost={est.mean:.6g} "
            f"sfie_sup={rep.sup_residual:.3e}"
        )
    pre = _preamble(config, timestamp=not args.no_timestamp)
    _write_csv(
        os.path.join(out, "sweep.csv"),
        pre,
        [
            "alpha",
            "status",
            "rho_alpha",
            "rho_tilde_alpha",
            "mu",
            "k_const",
            "gain",
            "norm_estimate",
            "cost_mean",
            "cost_se",
            "sfie_sup",
        ],
        rows,
    )
    if not args.no_plots and ok_alphas:
        from . import plots

        plots.sweep_figure(ok_alphas, curves, os.path.join(out, "sweep.png"))
    return 0 if all_ok else 1


_COMMANDS = {
    "synthesize": _cmd_synthesize,
    "simulate": _cmd_simulate,
    "cost": _cmd_cost,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fraclqr",
        description="Optimal control synthesis for fractional stochastic delay systems.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--out", default=None, help="override output directory")
    common.add_argument("--seed", type=int, default=None, help="override base seed")
    common.add_argument("--paths", type=int, default=None, help="override path count")
    common.add_argument(
        "--grid-n", dest="grid_n", type=int, default=None, help="override grid size"
    )
    common.add_argument(
        "--horizon", type=float, default=None, help="override truncation horizon"
    )
    common.add_argument(
        "--no-timestamp",
        action="store_true",
        help="omit the timestamp line for byte-identical outputs",
    )
    common.add_argument(
        "--no-plots", action="store_true", help="skip figure rendering"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synthesize", parents=[common], help="write law tables and constants")
    sub.add_parser("simulate", parents=[common], help="write closed-loop sample paths")
    cost_p = sub.add_parser("cost", parents=[common], help="write a cost estimate")
    cost_p.add_argument(
        "--control",
        choices=("optimal", "zero"),
        default=None,
        help="override the control in the config",
    )
    sub.add_parser("verify", parents=[common], help="write residual reports")
    sub.add_parser("sweep", parents=[common], help="summarize over fractional orders")
    return parser


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    rep = {}
    if args.out is not None:
        rep["outputs"] = args.out
    if args.seed is not None:
        rep["base_seed"] = args.seed
    if args.paths is not None:
        rep["n_paths"] = args.paths
    if args.grid_n is not None:
        rep["n"] = args.grid_n
    if args.horizon is not None:
        rep["horizon"] = args.horizon
    if getattr(args, "control", None) is not None:
        rep["control"] = args.control
    return replace(config, **rep) if rep else config


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        config = RunConfig.from_json(args.config)
        config = _apply_overrides(config, args)
        return _COMMANDS[args.command](config, args)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ContractionError, DivergenceError, QuadratureError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
