"""Command-line front end.

Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass

import numpy as np

from .bench import format_table, run_bench
from .errors import ConfigError, InputError, NumericalError
from .kernels import Gaussian, KernelSpec, kernel_to_dict, parse_kernel
from .koopman import KoopmanModel, Trajectory, fit_koopman, forecast_state, koopman_modes
from .oracles import (
    LinearSystem,
    RegressionTask,
    chain_from_dict,
    generate_regression,
    simulate_chain,
    simulate_linear_system,
    stationary_distribution,
)
from .persistence import load_model, read_csv, save_model, write_csv
from .ridge import fit_krr, fit_nystrom
from .vvridge import fit_vvkrr

log = logging.getLogger("rkhskit")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

GENERATORS = ("regression", "linear-system", "markov-chain")


@dataclass
class RunConfig:
    command: str
    data: str | None = None
    model: str | None = None
    out: str | None = None
    kernel: KernelSpec | None = None
    lam: float | None = None
    m: int | None = None
    seed: int = 0
    steps: int | None = None
    r: int | None = None
    targets: int = 1
    output_operator: np.ndarray | None = None

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        kernel = parse_kernel(ns.kernel) if getattr(ns, "kernel", None) else None
        cfg = cls(
            command=ns.command,
            data=getattr(ns, "data", None),
            model=getattr(ns, "model", None),
            out=ns.out,
            kernel=kernel,
            lam=ns.lam,
            m=getattr(ns, "m", None),
            seed=ns.seed,
            steps=getattr(ns, "steps", None),
            r=getattr(ns, "r", None),
            targets=getattr(ns, "targets", 1),
        )
        if getattr(ns, "output_operator", None):
            cfg.output_operator = _parse_matrix(ns.output_operator, "--output-operator")
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.lam is not None and not (np.isfinite(self.lam) and self.lam > 0):
            raise ConfigError(f"--lambda must be > 0, got {self.lam}")
        if self.m is not None and self.m < 1:
            raise ConfigError(f"--m must be >= 1, got {self.m}")
        if self.steps is not None and self.steps < 1:
            raise ConfigError(f"--steps must be >= 1, got {self.steps}")
        if self.r is not None and self.r < 1:
            raise ConfigError(f"--r must be >= 1, got {self.r}")
        if self.targets < 1:
            raise ConfigError(f"--targets must be >= 1, got {self.targets}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("--seed must lie in [0, 2**64)")
        if self.command.startswith("fit-"):
            if self.kernel is None:
                raise ConfigError("--kernel is required")
            if self.lam is None:
                raise ConfigError("--lambda is required")
            if not self.out:
                raise ConfigError("--out is required")


def _kernel_label(kernel: KernelSpec) -> str:
    return json.dumps(kernel_to_dict(kernel), separators=(",", ":"))


def _split_targets(arr: np.ndarray, k: int, path: str):
    if arr.shape[0] == 0:
        raise InputError(f"{path}: no data rows")
    if arr.shape[1] <= k:
        raise InputError(f"{path}: need at least {k + 1} columns (inputs plus {k} target(s)), got {arr.shape[1]}")
    return arr[:, :-k], arr[:, -k:]


def _summary(fmt, n, cfg, residual, extra=""):
    print(f"{fmt}: n={n} kernel={_kernel_label(cfg.kernel)} lambda={cfg.lam!r} "
          f"residual={residual:.3e}{extra} -> {cfg.out}")


def cmd_fit(cfg: RunConfig) -> int:
    if cfg.command == "fit-koopman":
        states, _ = read_csv(cfg.data)
        model = fit_koopman(Trajectory(states), cfg.kernel, cfg.lam)
        save_model(model, cfg.out)
        ones = np.ones(model.n_pairs)
        res = model.gram_factor.residual(model.gram_factor.solve(ones), ones)
        extra = "".join(f" [{w}]" for w in model.warnings)
        _summary("koopman-v1", model.n_pairs, cfg, res, extra)
        return EXIT_OK
    arr, _ = read_csv(cfg.data)
    k = cfg.targets
    if cfg.command in ("fit-krr", "fit-nystrom") and k != 1:
        raise ConfigError(f"{cfg.command} takes exactly one target column")
    X, Y = _split_targets(arr, k, cfg.data)
    if cfg.command == "fit-krr":
        model = fit_krr(X, Y[:, 0], cfg.kernel, cfg.lam)
        save_model(model, cfg.out)
        _summary("krr-v1", X.shape[0], cfg, model.report.residual)
    elif cfg.command == "fit-nystrom":
        if cfg.m is None:
            raise ConfigError("--m is required")
        if cfg.m > X.shape[0]:
            raise InputError(f"M exceeds sample size ({cfg.m} > {X.shape[0]})")
        model = fit_nystrom(X, Y[:, 0], cfg.kernel, cfg.lam, cfg.m, cfg.seed)
        save_model(model, cfg.out)
        _summary("nystrom-v1", X.shape[0], cfg, model.report.residual, f" M={cfg.m}")
    else:
        model = fit_vvkrr(X, Y, cfg.kernel, cfg.output_operator, cfg.lam)
        save_model(model, cfg.out)
        pred = model.predict(X)
        res = float(np.linalg.norm(pred - Y) / max(np.linalg.norm(Y), np.finfo(float).tiny))
        _summary("vvkrr-v1", X.shape[0], cfg, res, f" T={k} (residual = relative training error)")
    return EXIT_OK


def cmd_predict(cfg: RunConfig) -> int:
    model = load_model(cfg.model)
    arr, _ = read_csv(cfg.data)
    if arr.shape[0] == 0:
        write_csv(cfg.out, np.empty((0, 1)))
        return EXIT_OK
    write_csv(cfg.out, model.predict(arr))
    return EXIT_OK


def _koopman(path) -> KoopmanModel:
    model = load_model(path)
    if not isinstance(model, KoopmanModel):
        raise InputError(f"{path}: expected a koopman-v1 model")
    return model


def cmd_koopman_forecast(cfg: RunConfig, x0: str | None, init: str | None) -> int:
    model = _koopman(cfg.model)
    if (x0 is None) == (init is None):
        raise ConfigError("give exactly one of --x0 or --init")
    if x0 is not None:
        try:
            x = np.array([float(v) for v in x0.split(",")])
        except ValueError as exc:
            raise InputError(f"cannot parse --x0 {x0!r}") from exc
    else:
        arr, _ = read_csv(init)
        if arr.shape[0] == 0:
            raise InputError(f"{init}: no initial state")
        x = arr[0]
    write_csv(cfg.out, forecast_state(model, x, cfg.steps))
    return EXIT_OK


def cmd_modes(cfg: RunConfig) -> int:
    model = _koopman(cfg.model)
    r = cfg.r if cfg.r is not None else model.n_pairs
    modes = koopman_modes(model, r)
    doc = {
        "count": int(modes.r),
        "dropped": int(modes.dropped),
        "eigenvalues": [
            {"re": float(v.real), "im": float(v.imag), "modulus": float(abs(v))} for v in modes.eigenvalues
        ],
        "residuals": [float(x) for x in modes.residuals],
        "eigvec_coeffs": {
            "re": modes.eigvec_coeffs.real.T.tolist(),
            "im": modes.eigvec_coeffs.imag.T.tolist(),
        },
    }
    text = json.dumps(doc, indent=1) + "\n"
    if cfg.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    return EXIT_OK


def _parse_matrix(text: str, what: str) -> np.ndarray:
    try:
        m = np.asarray(json.loads(text), dtype=np.float64)
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise InputError(f"cannot parse {what} as a JSON matrix: {exc}") from exc
    if m.ndim != 2:
        raise InputError(f"{what} must be a 2-d matrix")
    return m


def _load_json_arg(text: str):
    if text.lstrip().startswith(("{", "[")):
        src = text
    else:
        try:
            with open(text) as fh:
                src = fh.read()
        except OSError as exc:
            raise InputError(f"cannot read {text}: {exc.strerror}") from exc
    try:
        return json.loads(src)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON: {exc}") from exc


def cmd_generate(cfg: RunConfig, ns: argparse.Namespace) -> int:
    if not cfg.out:
        raise ConfigError("--out is required")
    gen = ns.generator
    params = {"generator": gen, "seed": cfg.seed}
    if gen == "regression":
        task = RegressionTask(ns.target, ns.noise, ns.sampler, cfg.seed, ns.d)
        X, y = generate_regression(task, ns.n)
        data = np.column_stack([X, y])
        header = [f"x{i}" for i in range(ns.d)] + ["y"]
        params.update(target=ns.target, noise_std=ns.noise, sampler=ns.sampler, d=ns.d, n=ns.n)
    elif gen == "linear-system":
        if ns.A is None or ns.x0 is None:
            raise ConfigError("linear-system needs --A and --x0")
        A = _parse_matrix(ns.A, "--A")
        x0 = np.array([float(v) for v in ns.x0.split(",")])
        traj = simulate_linear_system(LinearSystem(A, ns.noise, cfg.seed), x0, ns.steps)
        data = traj.states
        header = [f"x{i}" for i in range(data.shape[1])]
        params.update(A=A.tolist(), x0=x0.tolist(), noise_std=ns.noise, steps=ns.steps)
    elif gen == "markov-chain":
        if ns.chain is None:
            raise ConfigError("markov-chain needs --chain")
        chain = chain_from_dict(_load_json_arg(ns.chain))
        if ns.initial is None:
            stationary_distribution(chain)  # rejects reducible chains
        traj = simulate_chain(chain, ns.steps, cfg.seed, ns.burn_in, ns.initial)
        data = traj.states
        header = [f"x{i}" for i in range(data.shape[1])]
        params.update(P=chain.P.tolist(), embedding=chain.embedding.tolist(), steps=ns.steps,
                      burn_in=ns.burn_in, initial=ns.initial)
    else:
        raise ConfigError(f"unknown generator {gen!r}")
    write_csv(cfg.out, data, header)
    with open(f"{cfg.out}.json", "w") as fh:
        json.dump(params, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"{gen}: wrote {data.shape[0]} rows -> {cfg.out}")
    return EXIT_OK


def _int_list(text: str):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("grid values must be positive integers")
    return vals


def cmd_bench(cfg: RunConfig, ns: argparse.Namespace) -> int:
    kernel = cfg.kernel if cfg.kernel is not None else Gaussian(10.0)
    if not isinstance(kernel, Gaussian):
        raise ConfigError("bench uses a Gaussian kernel")
    report = run_bench(ns.n_grid, ns.m_grid, ns.fixed_n, kernel.gamma,
                       cfg.lam if cfg.lam is not None else 1e-3, ns.noise, cfg.seed, ns.reps, ns.max_exact_n)
    print(format_table(report))
    if cfg.out:
        with open(cfg.out, "w") as fh:
            json.dump(report.to_dict(), fh, indent=1)
            fh.write("\n")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--kernel", help='JSON object or shorthand: linear, gaussian:GAMMA, rf:GAMMA:M[:SEED]')
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--out", help="output path ('-' for stdout where supported)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="rkhskit", description="Kernel ridge regression and kernel Koopman estimation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic dataset or trajectory")
    g.add_argument("generator", choices=GENERATORS)
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--d", type=int, default=1)
    g.add_argument("--target", default="sin")
    g.add_argument("--sampler", default="uniform")
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--A", help="system matrix as JSON, e.g. [[0.9,0],[0,0.5]]")
    g.add_argument("--x0", help="initial state, comma separated")
    g.add_argument("--chain", help="chain spec JSON (inline or file path)")
    g.add_argument("--steps", type=int, default=100)
    g.add_argument("--burn-in", type=int, default=0)
    g.add_argument("--initial", type=int)

    for name in ("fit-krr", "fit-nystrom", "fit-vvkrr"):
        f = sub.add_parser(name, parents=[common], help=f"{name[4:]} fit from a CSV")
        f.add_argument("--data", required=True)
        f.add_argument("--targets", type=int, default=1, help="number of trailing target columns")
        if name == "fit-nystrom":
            f.add_argument("--m", type=int, required=True, help="number of Nystrom centers")
        if name == "fit-vvkrr":
            f.add_argument("--output-operator", help="T x T PSD matrix as JSON (default identity)")
    f = sub.add_parser("fit-koopman", parents=[common], help="Koopman estimator from a trajectory CSV")
    f.add_argument("--data", required=True)

    p = sub.add_parser("predict", parents=[common], help="predict with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)

    kf = sub.add_parser("koopman-forecast", parents=[common], help="iterated state forecast")
    kf.add_argument("--model", required=True)
    kf.add_argument("--x0")
    kf.add_argument("--init", help="CSV whose first row is the initial state")
    kf.add_argument("--steps", type=int, default=1)

    md = sub.add_parser("modes", parents=[common], help="leading Koopman eigenvalues")
    md.add_argument("--model", required=True)
    md.add_argument("--r", type=int)

    b = sub.add_parser("bench", parents=[common], help="exact vs Nystrom timing sweep")
    b.add_argument("--n-grid", type=_int_list, default=[500, 1000, 2000])
    b.add_argument("--m-grid", type=_int_list, default=[50, 200, 800])
    b.add_argument("--fixed-n", type=int, default=4000)
    b.add_argument("--max-exact-n", type=int, default=20000)
    b.add_argument("--reps", type=int, default=3)
    b.add_argument("--noise", type=float, default=0.1)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.from_args(ns)
        if ns.command.startswith("fit-"):
            return cmd_fit(cfg)
        if ns.command == "predict":
            return cmd_predict(cfg)
        if ns.command == "koopman-forecast":
            return cmd_koopman_forecast(cfg, ns.x0, ns.init)
        if ns.command == "modes":
            return cmd_modes(cfg)
        if ns.command == "generate":
            return cmd_generate(cfg, ns)
        return cmd_bench(cfg, ns)
    except (InputError, ConfigError) as exc:
        print(f"rkhskit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"rkhskit: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
