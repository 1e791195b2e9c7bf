"""Command-line front end.

    zidrm fit --input0 a.csv --input1 b.csv --ci I1,I4,I4L
    zidrm fit --input both.csv --functional mean_and_m2 --map variance_diff --test-null 0
    zidrm simulate --model model1 --n0 100 --n1 100 --reps 1000 --seed 7

CSV input is either one file per sample with a ``value`` column, or one
file with ``group`` (0 or 1) and ``value`` columns. Exit status is 0 on
success, 1 for usage or I/O problems and 2 for numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np

from .asymptotics import gamma_hat
from .core import ZidrmError, load_two_sample, make_basis
from .functionals import G_NAMES, U_NAMES, builtin_g, builtin_u, estimate
from .inference import (METHODS, bootstrap_wald, drm_estimates, nonparam_estimates,
                        nonparam_log_ratio_interval, wald_interval, wald_region_test)
from .simulation import MixtureScenario, get_scenario, run_study
from .solver import NonConvergence, SolverOptions, fit

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
BASES = ("log", "identity", "log+identity")
ECHO_SKIP = ("workers", "out")


class UsageError(Exception):
    pass


@dataclass
class AnalysisConfig:
    command: str = "fit"
    input: str | None = None
    input0: str | None = None
    input1: str | None = None
    model: str | None = None
    scenario_file: str | None = None
    n0: int | None = None
    n1: int | None = None
    reps: int = 1000
    basis: str = "log"
    functional: str = "mean_pair"
    moment_k: int = 1
    map: str = "ratio"
    ci: tuple = ("I4", "I4L")
    gamma: float = 0.05
    test_null: tuple | None = None
    bootstrap_b: int = 999
    bootstrap_method: str = "symmetric"
    seed: int = 0
    workers: int = 1
    out: str | None = None
    format: str = "json"
    grad_tol: float = 1e-10
    max_iter: int = 200
    zero_tol: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci"] = list(self.ci)
        d["test_null"] = None if self.test_null is None else list(self.test_null)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise UsageError(f"unknown config keys {sorted(extra)}")
        d = dict(d)
        if "ci" in d:
            d["ci"] = tuple(d["ci"])
        if d.get("test_null") is not None:
            d["test_null"] = tuple(float(v) for v in d["test_null"])
        return cls(**d)

    def echo(self) -> dict:
        """to_dict without the settings that cannot change the results
        (worker count, output path), so reports compare byte for byte."""
        d = self.to_dict()
        for k in ECHO_SKIP:
            d.pop(k)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "AnalysisConfig":
        return cls.from_dict(json.loads(s))


# -- CSV input --------------------------------------------------------------

def _read_rows(path):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise UsageError(f"{path}: empty file")
            cols = [c.strip() for c in reader.fieldnames]
            rows = [{k.strip(): v for k, v in r.items() if k is not None}
                    for r in reader]
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    if "value" not in cols:
        raise UsageError(f"{path}: header must contain a 'value' column")
    return cols, rows


def _floats(rows, path, key="value"):
    out = []
    for i, r in enumerate(rows, start=2):
        try:
            out.append(float(r[key]))
        except (TypeError, ValueError):
            raise UsageError(f"{path}, line {i}: bad {key} {r.get(key)!r}") from None
    return np.array(out)


def read_samples(cfg: AnalysisConfig):
    """Raw (sample0, sample1) arrays from the configured CSV files."""
    if cfg.input:
        if cfg.input0 or cfg.input1:
            raise UsageError("use either --input or --input0/--input1")
        cols, rows = _read_rows(cfg.input)
        if "group" not in cols:
            raise UsageError(f"{cfg.input}: single-file input needs a 'group' column")
        groups = _floats(rows, cfg.input, "group")
        vals = _floats(rows, cfg.input)
        if not np.all(np.isin(groups, (0, 1))):
            raise UsageError(f"{cfg.input}: group must be 0 or 1")
        return vals[groups == 0], vals[groups == 1]
    if not (cfg.input0 and cfg.input1):
        raise UsageError("fit needs --input, or both --input0 and --input1")
    return tuple(_floats(_read_rows(p)[1], p) for p in (cfg.input0, cfg.input1))


# -- fit --------------------------------------------------------------------

def _functional(cfg):
    if cfg.functional not in U_NAMES:
        raise UsageError(f"unknown functional {cfg.functional!r}; choose from {U_NAMES}")
    if cfg.map not in G_NAMES and cfg.map != "identity":
        raise UsageError(f"unknown map {cfg.map!r}; choose from {G_NAMES + ('identity',)}")
    return builtin_u(cfg.functional, cfg.moment_k)


def _target_map(cfg, u):
    """The scalar map the intervals are built for.

    For ``mean_pair`` both ``ratio`` and ``log_ratio`` target the mean
    ratio itself: I4 is built on the ratio scale and I4L on the log scale.
    """
    if cfg.functional == "mean_pair" and cfg.map in ("ratio", "log_ratio"):
        return builtin_g("ratio"), True
    if cfg.map == "identity":
        return None, False
    g = builtin_g(cfg.map)
    if g.p != u.p:
        raise UsageError(f"map {cfg.map!r} needs p={g.p}, functional "
                         f"{cfg.functional!r} gives p={u.p}")
    return g, False


def _arr(x):
    return np.asarray(x, float).tolist()


def run_fit(cfg: AnalysisConfig) -> tuple[dict, int]:
    """Build the fit report; the status is EXIT_NUMERIC when part of it
    could not be computed."""
    bad = set(cfg.ci) - set(METHODS)
    if bad:
        raise UsageError(f"unknown interval methods {sorted(bad)}")
    if cfg.basis not in BASES:
        raise UsageError(f"unknown basis {cfg.basis!r}")
    u = _functional(cfg)
    g_target, mean_ratio = _target_map(cfg, u)
    if not mean_ratio and {"I1", "I1B"} & set(cfg.ci):
        raise UsageError("I1 and I1B are defined for the mean ratio only "
                         "(--functional mean_pair --map ratio)")
    if g_target is None and {"I4", "I4L"} & set(cfg.ci):
        raise UsageError("intervals need a scalar map")
    raw0, raw1 = read_samples(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            data = load_two_sample(raw0, raw1, cfg.zero_tol)
        except ZidrmError as e:
            raise UsageError(str(e)) from None
        opts = SolverOptions(grad_tol=cfg.grad_tol, max_iter=cfg.max_iter)
        diagnostics = {"n": [data.n0, data.n1], "zeros": [data.n00, data.n10],
                       "notes": list(data.notes), "errors": []}
        try:
            f = fit(data, make_basis(cfg.basis), opts)
        except NonConvergence as e:
            diagnostics["errors"].append(f"fit: {e}")
            if e.best is not None:
                diagnostics["fit"] = e.best.diagnostics.to_dict()
            return dict(estimates={}, intervals=[], tests=[], diagnostics=diagnostics,
                        config_echo=cfg.echo()), EXIT_NUMERIC
        status = EXIT_OK
        diagnostics["fit"] = f.diagnostics.to_dict()
        diagnostics["constraint_residuals"] = list(f.constraint_residuals())
        psi, val = estimate(f, u, None if cfg.map == "identity" else builtin_g(cfg.map))
        drm = drm_estimates(f)
        npe = nonparam_estimates(data)
        estimates = dict(
            zero_proportion=_arr(f.nu), rho=f.rho, theta=_arr(f.theta),
            psi=_arr(psi), g=_arr(val), map=cfg.map, functional=u.label,
            mean=[drm.mu0, drm.mu1], delta=drm.delta, variance=[drm.var0, drm.var1],
            baseline=dict(mean=[npe.psi0, npe.psi1], delta=npe.delta,
                          variance=[npe.var0, npe.var1]))
        intervals, tests = [], []
        G = None
        for m in cfg.ci:
            try:
                if m in ("I4", "I4L"):
                    G = gamma_hat(f, u) if G is None else G
                    iv = wald_interval(f, u, g_target, cfg.gamma, m == "I4L", cov=G)
                elif m == "I1":
                    iv = nonparam_log_ratio_interval(data, cfg.gamma)
                else:
                    iv = bootstrap_wald(data, gamma=cfg.gamma, B=cfg.bootstrap_b,
                                        seed=np.random.SeedSequence([cfg.seed, 0, 1]),
                                        method=cfg.bootstrap_method)
            except (ZidrmError, np.linalg.LinAlgError) as e:
                diagnostics["errors"].append(f"{m}: {e}")
                status = EXIT_NUMERIC
                continue
            d = iv.to_dict()
            d["target"] = "mean_ratio" if mean_ratio else g_target.label
            intervals.append(d)
        if cfg.test_null is not None:
            g_test = builtin_g(cfg.map) if cfg.map != "identity" else None
            try:
                if g_test is None:
                    raise UsageError("--test-null needs a map other than identity")
                t = wald_region_test(f, u, g_test, cfg.test_null, cfg.gamma, cov=G)
                d = t.to_dict()
                d["map"] = cfg.map
                tests.append(d)
            except (ZidrmError, np.linalg.LinAlgError) as e:
                diagnostics["errors"].append(f"test: {e}")
                status = EXIT_NUMERIC
    diagnostics["warnings"] = sorted({str(w.message) for w in caught})
    return dict(estimates=estimates, intervals=intervals, tests=tests,
                diagnostics=diagnostics, config_echo=cfg.echo()), status


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4f}"
    if isinstance(v, list):
        return "(" + ", ".join(_fmt(x) for x in v) + ")"
    return str(v)


def fit_table(report: dict) -> str:
    lines = []
    est = report["estimates"]
    if est:
        flat = {k: v for k, v in est.items() if k != "baseline"}
        flat.update({f"baseline {k}": v for k, v in est["baseline"].items()})
        w = max(map(len, flat))
        lines.append("estimates")
        lines += [f"  {k:<{w}}  {_fmt(v)}" for k, v in flat.items()]
    if report["intervals"]:
        lines += ["", "intervals",
                  f"  {'method':<6} {'estimate':>10} {'lower':>10} {'upper':>10} "
                  f"{'se':>10} {'level':>6}"]
        for iv in report["intervals"]:
            lines.append(f"  {iv['method']:<6} {iv['estimate']:>10.4f} "
                         f"{iv['lower']:>10.4f} {iv['upper']:>10.4f} "
                         f"{iv['se']:>10.4f} {iv['level']:>6.2f}")
    if report["tests"]:
        lines += ["", "tests", f"  {'map':<14} {'statistic':>10} {'df':>3} {'p-value':>10}"]
        for t in report["tests"]:
            lines.append(f"  {t['map']:<14} {t['statistic']:>10.4f} {t['df']:>3d} "
                         f"{t['p_value']:>10.4f}")
    diag = report["diagnostics"]
    if diag.get("errors"):
        lines += ["", "errors"] + [f"  {e}" for e in diag["errors"]]
    return "\n".join(lines)


# -- simulate ---------------------------------------------------------------

def _scenario(cfg):
    if cfg.scenario_file:
        try:
            with open(cfg.scenario_file) as fh:
                s = MixtureScenario.from_dict(json.load(fh))
        except OSError as e:
            raise UsageError(f"cannot read {cfg.scenario_file}: {e.strerror}") from None
        except (TypeError, ValueError) as e:
            raise UsageError(f"bad scenario file: {e}") from None
        return s.with_sizes(cfg.n0 or s.n0, cfg.n1 or s.n1)
    if not cfg.model:
        raise UsageError("simulate needs --model or --scenario-file")
    try:
        return get_scenario(cfg.model, cfg.n0, cfg.n1)
    except ValueError as e:
        raise UsageError(str(e)) from None


def run_simulate(cfg: AnalysisConfig):
    s = _scenario(cfg)
    if cfg.reps < 1:
        raise UsageError("--reps must be >= 1")
    bad = set(cfg.ci) - set(METHODS)
    if bad:
        raise UsageError(f"unknown interval methods {sorted(bad)}")
    rep = run_study(s, cfg.reps, cfg.ci, cfg.seed, cfg.workers, cfg.bootstrap_b,
                    cfg.gamma, cfg.basis, cfg.grad_tol, cfg.max_iter,
                    cfg.bootstrap_method)
    truth = dict(mean=list(s.mu), variance=list(s.var), delta=s.delta)
    report = dict(estimates=rep.estimators, intervals=rep.intervals, tests=[],
                  diagnostics=dict(reps=rep.reps, used=rep.n_ok, failures=rep.failures,
                                   scenario=s.to_dict(), truth=truth),
                  config_echo=cfg.echo())
    status = EXIT_OK if rep.n_ok else EXIT_NUMERIC
    return report, rep, status


# -- entry points -----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(s):
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _float_list(s):
    try:
        return tuple(float(x) for x in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="zidrm", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--basis", default="log", choices=BASES)
    common.add_argument("--ci", type=_csv_list, default=("I4", "I4L"),
                        help="comma-separated subset of I1,I1B,I4,I4L")
    common.add_argument("--gamma", type=float, default=0.05,
                        help="1 - confidence level")
    common.add_argument("--bootstrap-b", type=int, default=999)
    common.add_argument("--bootstrap-method", default="symmetric",
                        choices=("symmetric", "t", "percentile"))
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--format", choices=("json", "table"), default="json")
    common.add_argument("--grad-tol", type=float, default=1e-10)
    common.add_argument("--max-iter", type=int, default=200)

    f = sub.add_parser("fit", parents=[common], help="analyse two samples from CSV")
    f.add_argument("--input", help="CSV with group and value columns")
    f.add_argument("--input0", help="CSV with a value column for sample 0")
    f.add_argument("--input1", help="CSV with a value column for sample 1")
    f.add_argument("--functional", default="mean_pair", choices=U_NAMES)
    f.add_argument("--moment-k", type=int, default=1)
    f.add_argument("--map", default="ratio", choices=G_NAMES + ("identity",))
    f.add_argument("--test-null", type=_float_list,
                   help="comma-separated null value of the map for a Wald test")
    f.add_argument("--zero-tol", type=float, default=0.0)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo study")
    s.add_argument("--model", help="preset name, model1 ... model10")
    s.add_argument("--scenario-file", help="JSON with v0, v1, a0, a1, b0, b1, n0, n1")
    s.add_argument("--n0", type=int)
    s.add_argument("--n1", type=int)
    s.add_argument("--reps", type=int, default=1000)
    s.add_argument("--workers", type=int, default=1)
    return p


def config_from_args(ns: argparse.Namespace) -> AnalysisConfig:
    known = {fl.name for fl in fields(AnalysisConfig)}
    return AnalysisConfig(**{k: v for k, v in vars(ns).items() if k in known})


def _emit(text, cfg):
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _dump(report):
    return json.dumps(report, indent=2, sort_keys=True)


def cmd_fit(cfg: AnalysisConfig) -> int:
    report, status = run_fit(cfg)
    _emit(_dump(report) if cfg.format == "json" else fit_table(report), cfg)
    return status


def cmd_simulate(cfg: AnalysisConfig) -> int:
    report, rep, status = run_simulate(cfg)
    _emit(_dump(report) if cfg.format == "json" else rep.table(), cfg)
    return status


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    cfg = config_from_args(ns)
    try:
        return cmd_fit(cfg) if cfg.command == "fit" else cmd_simulate(cfg)
    except UsageError as e:
        print(f"zidrm: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"zidrm: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ZidrmError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"zidrm: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
