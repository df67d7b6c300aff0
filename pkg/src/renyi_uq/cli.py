"""Command-line front end.

Every subcommand prints a JSON summary (sorted keys) to stdout or ``--out`` and
some also write a CSV table to ``--csv``. Options can come from a JSON file
given with ``--config``; its keys are the long flag names with dashes replaced
by underscores, and flags on the command line take precedence.

Exit codes: 0 success, 2 configuration error, 1 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any

import numpy as np

from . import __version__
from ._numerics import QuadratureError
from .ambiguity import (classical_lambda, lambda_from_mu, make_profile, point_mass_mu,
                        solve_r0_for_kl, two_sided_tail_lambda)
from .apps import (OptionSpec, battery_workflow, girsanov_member_check, option_ambiguity_radius,
                   option_optimal_level, rate_demo)
from .bounds import (gibbs_bound, rare_event_bounds, tightness_check, uq_lower_renyi,
                     uq_upper_lambda, uq_upper_renyi)
from .construct import construct_saturating, verify_saturation
from .dist import (ConvergenceError, Exponential, FiniteDiscrete, Gamma, Normal, Pareto, QoI,
                   ShiftedWeibull, read_samples_csv)
from .renyi import renyi_divergence


class ConfigError(ValueError):
    """Invalid command-line or config-file input."""


# ---------------------------------------------------------------------------
# spec-string parsing
# ---------------------------------------------------------------------------

def _floats(text: str, n: int | None = None, what: str = "value") -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse numbers in {what} {text!r}") from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"{what} expects {n} numbers, got {text!r}")
    return vals


def _split(spec: str) -> tuple[str, str]:
    name, _, rest = str(spec).partition(":")
    return name.strip().lower(), rest.strip()


def _kv(text: str, what: str) -> dict[str, float]:
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        k, eq, v = item.partition("=")
        if not eq:
            raise ConfigError(f"{what} parameters must be key=value, got {item!r}")
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise ConfigError(f"{what} parameter {k!r} is not a number") from None
    return out


def parse_distribution(spec: str):
    """``gamma:a,b``, ``normal:mu,sigma``, ``exp:rate``, ``pareto:alpha,xm``,
    ``weibull:k,lam[,shift]`` or ``discrete:x1,x2,...|p1,p2,...``."""
    name, rest = _split(spec)
    try:
        if name == "gamma":
            return Gamma(*_floats(rest, 2, "gamma"))
        if name == "normal":
            return Normal(*_floats(rest, 2, "normal"))
        if name in ("exp", "exponential"):
            return Exponential(*_floats(rest, 1, "exponential"))
        if name == "pareto":
            return Pareto(*_floats(rest, 2, "pareto"))
        if name == "weibull":
            v = _floats(rest, None, "weibull")
            if len(v) not in (2, 3):
                raise ConfigError("weibull expects k,lam[,shift]")
            return ShiftedWeibull(*v)
        if name == "discrete":
            pts, bar, probs = rest.partition("|")
            if not bar:
                raise ConfigError("discrete expects points|probabilities")
            return FiniteDiscrete(np.array(_floats(pts)), np.array(_floats(probs)))
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid distribution {spec!r}: {e}") from None
    raise ConfigError(f"unknown distribution {name!r}")


def parse_qoi(spec: str) -> QoI:
    """``inv`` (1/x), ``one``, ``power:k``, ``indicator:lo[,hi]`` or ``exp:v``."""
    name, rest = _split(spec)
    if name == "inv":
        return QoI.power(-1.0)
    if name == "one":
        return QoI.one()
    if name == "power":
        return QoI.power(*_floats(rest, 1, "power"))
    if name == "indicator":
        v = _floats(rest, None, "indicator")
        if len(v) not in (1, 2):
            raise ConfigError("indicator expects lo[,hi]")
        return QoI.indicator(*v)
    if name == "exp":
        return QoI.exp_linear(*_floats(rest, 1, "exp"))
    raise ConfigError(f"unknown QoI {name!r}")


TAIL_FAMILIES = ("power-law", "sub-exp", "gaussian")


def parse_profile(spec: str):
    """Tail profile: ``power-law:r0=0.7``, ``gaussian:kl=0.074``, ``sub-exp:r0=0.6,kappa=2``
    or ``delta``."""
    name, rest = _split(spec)
    if name == "delta":
        return point_mass_mu()
    if name not in TAIL_FAMILIES:
        raise ConfigError(f"unknown tail family {name!r}")
    kv = _kv(rest, name)
    kappa = kv.pop("kappa", 1.0)
    try:
        if "r0" in kv and "kl" in kv:
            raise ConfigError("give either r0 or kl, not both")
        if "kl" in kv:
            r0 = solve_r0_for_kl(name, kv.pop("kl"), kappa=kappa)
        elif "r0" in kv:
            r0 = kv.pop("r0")
        else:
            raise ConfigError(f"{name} needs r0=... or kl=...")
        if kv:
            raise ConfigError(f"unexpected {name} parameters {sorted(kv)}")
        return make_profile(name, r0, kappa=kappa)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from None


def parse_ambiguity(spec: str):
    """A tail profile (see :func:`parse_profile`) or a classical CGF bound such as
    ``bennett:b=1,eta=0.5,sigma=0.3`` or ``sub-exponential-tail:C=1,beta=1,KL=0.1``."""
    name, rest = _split(spec)
    if name in TAIL_FAMILIES or name == "delta":
        return lambda_from_mu(parse_profile(spec))
    kv = _kv(rest, name)
    try:
        if name.replace("-", "_") in ("sub_exponential_tail", "sub_gaussian_tail"):
            return two_sided_tail_lambda(name, **kv)
        return classical_lambda(name, **kv)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _grid(text) -> np.ndarray:
    """``lo:hi:n`` (linear), ``log:lo:hi:n`` (log-spaced) or a comma list."""
    if isinstance(text, (list, tuple)):
        return np.asarray(text, dtype=float)
    text = str(text)
    parts = text.split(":")
    try:
        if parts[0] == "log" and len(parts) == 4:
            return np.logspace(math.log10(float(parts[1])), math.log10(float(parts[2])),
                               int(parts[3]))
        if len(parts) == 3:
            return np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}") from None
    return np.array(_floats(text, None, "grid"))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _jsonable(v: Any):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        if math.isfinite(f):
            return f
        return "nan" if math.isnan(f) else ("inf" if f > 0 else "-inf")
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def csv_text(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _fmt(v) -> str:
    v = _jsonable(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(path: str | None, text: str, stream) -> None:
    if path is None or path == "-":
        stream.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise ConfigError(f"missing required option --{k.replace('_', '-')}")


def cmd_renyi(cfg):
    _need(cfg, "p", "q", "alpha")
    P, Q = parse_distribution(cfg["p"]), parse_distribution(cfg["q"])
    alpha = float(cfg["alpha"])
    return {"alpha": alpha, "divergence": renyi_divergence(Q, P, alpha)}, None


def cmd_lambda(cfg):
    _need(cfg, "ambiguity")
    lb = parse_ambiguity(cfg["ambiguity"])
    lams = _grid(cfg.get("lambdas") or "0:1:11")
    rows = [{"lambda": float(l), "Lambda": float(lb(float(l)))} for l in lams]
    out = {"label": lb.label, "params": lb.params, "lambda_max": lb.lambda_max,
           "kl_cap": lb.kl_cap, "values": [r["Lambda"] for r in rows],
           "lambdas": [r["lambda"] for r in rows]}
    return out, (rows, ["lambda", "Lambda"])


def cmd_construct(cfg):
    _need(cfg, "baseline", "ambiguity")
    P = parse_distribution(cfg["baseline"])
    mu = parse_profile(cfg["ambiguity"])
    model = construct_saturating(P, mu)
    rep = verify_saturation(model)
    out = {"baseline": cfg["baseline"], "family": mu.family, "r0": mu.r0,
           "kl_cap": mu.kl_cap, "report": rep.as_dict(), "passed": rep.passed,
           "alternative": type(model.distribution).__name__}
    rows = None
    if cfg.get("x_grid") is not None:
        xs = _grid(cfg["x_grid"])
        rows = [{"x": float(x), "p": float(P.pdf(x)) if not P.discrete else float(P.pmf(x)),
                 "q": float(model.density(x)), "ratio": float(model.ratio(x))} for x in xs]
        rows = (rows, ["x", "p", "q", "ratio"])
    return out, rows


def cmd_bound(cfg):
    _need(cfg, "baseline", "qoi")
    P = parse_distribution(cfg["baseline"])
    tau = parse_qoi(cfg["qoi"])
    kind = cfg.get("kind") or "upper-lambda"
    if kind == "upper-lambda":
        _need(cfg, "ambiguity")
        res = uq_upper_lambda(P, tau, parse_ambiguity(cfg["ambiguity"]))
    elif kind in ("upper-renyi", "lower-renyi"):
        _need(cfg, "q")
        Q = parse_distribution(cfg["q"])
        res = (uq_upper_renyi if kind == "upper-renyi" else uq_lower_renyi)(P, Q, tau)
    elif kind in ("gibbs-upper", "gibbs-lower"):
        if cfg.get("eta") is not None:
            eta = float(cfg["eta"])
        else:
            _need(cfg, "ambiguity")
            eta = parse_ambiguity(cfg["ambiguity"]).kl_cap
        res = gibbs_bound(P, tau, eta, +1 if kind == "gibbs-upper" else -1)
    else:
        raise ConfigError(f"unknown bound kind {kind!r}")
    out = {"value": res.value, "exp_value": res.exp_value, "c_star": res.c_star,
           "kind": res.kind, "multimodal": res.multimodal, "diagnostic": res.diagnostic}
    rows = [{"c": c, "objective": v} for c, v in res.trace]
    return out, (rows, ["c", "objective"])


def cmd_rare_event(cfg):
    _need(cfg, "ambiguity")
    lb = parse_ambiguity(cfg["ambiguity"])
    ps = _grid(cfg.get("p_grid") or "log:1e-8:1:50")
    rows = [rare_event_bounds(float(p), lb).as_dict() for p in ps]
    p_star = math.nan
    for r in sorted(rows, key=lambda r: r["p0"]):
        if not r["crossover"]:
            break
        p_star = r["p0"]
    out = {"ambiguity": cfg["ambiguity"], "eta": lb.eta, "crossover_p": p_star,
           "n_points": len(rows)}
    cols = ["p0", "risk_sensitive", "gibbs", "crossover", "c_risk", "c_gibbs"]
    return out, (rows, cols)


def cmd_tightness(cfg):
    _need(cfg, "baseline", "qoi", "gamma")
    P = parse_distribution(cfg["baseline"])
    rep = tightness_check(P, parse_qoi(cfg["qoi"]), float(cfg["gamma"]))
    return rep.as_dict(), None


def cmd_battery(cfg):
    samples = read_samples_csv(cfg["samples"]) if cfg.get("samples") else None
    fams = cfg.get("families") or "power-law"
    fams = [f.strip() for f in fams.split(",")] if isinstance(fams, str) else list(fams)
    for f in fams:
        if f not in TAIL_FAMILIES:
            raise ConfigError(f"unknown tail family {f!r}")
    grid = _grid(cfg["r0_grid"]) if cfg.get("r0_grid") is not None else None
    a = cfg.get("a")
    b = cfg.get("b")
    if samples is None and (a is None or b is None):
        raise ConfigError("battery needs --samples or both --a and --b")
    rep = battery_workflow(samples, a=None if a is None else float(a),
                           b=None if b is None else float(b),
                           eta=None if cfg.get("eta") is None else float(cfg["eta"]),
                           r0=None if cfg.get("r0") is None else float(cfg["r0"]),
                           families=fams, kappa=float(cfg.get("kappa") or 1.0),
                           r0_grid=grid, seed=int(cfg.get("seed") or 0))
    rows = rep.sweep if grid is not None else rep.families
    return rep.as_dict(), (rows, ["family", "r0", "eta", "bound", "c_star"])


def cmd_rate_fn(cfg):
    b = float(cfg.get("b") or 2.0)
    etas = _grid(cfg.get("eta_list") or "0.05,0.2,0.4")
    s2 = _grid(cfg["sigma2_list"]) if cfg.get("sigma2_list") else 2.0 * etas
    xs = _grid(cfg.get("x_grid") or "0:10:101")
    dim = int(cfg.get("dim") or 2)
    Sigma = np.eye(dim)
    if cfg.get("sigma_diag"):
        Sigma = np.diag(_grid(cfg["sigma_diag"]))
    rows = rate_demo(Sigma, b, etas, s2, xs)
    out = {"b": b, "eta_list": etas, "sigma2_list": s2, "n_rows": len(rows)}
    return out, (rows, ["eta", "sigma2", "radius", "I_P", "naive", "lower", "c_star"])


def cmd_option(cfg):
    _need(cfg, "r", "sigma", "K", "X0", "gamma")
    spec = OptionSpec(float(cfg["r"]), float(cfg["sigma"]), float(cfg["K"]), float(cfg["X0"]),
                      float(cfg["gamma"]))
    try:
        L, value, d = option_optimal_level(spec)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    out = {"L_star": L, "value": value, "d_gamma": d, "mu": spec.mu,
           "radius": option_ambiguity_radius(spec, L),
           "L_star_risk_neutral": 2 * spec.r * spec.K / (2 * spec.r + spec.sigma ** 2)}
    if cfg.get("delta_r") is not None:
        T = float(cfg.get("T") or 1.0)
        out["girsanov"] = girsanov_member_check(spec, L, float(cfg["delta_r"]), T)
    return out, None


COMMANDS = {
    "renyi": (cmd_renyi, "Renyi divergence R_alpha(Q||P)"),
    "lambda": (cmd_lambda, "evaluate an ambiguity CGF bound on a lambda grid"),
    "construct": (cmd_construct, "build and verify the saturating alternative model"),
    "bound": (cmd_bound, "risk-sensitive or relative-entropy bound on a QoI"),
    "rare-event": (cmd_rare_event, "rare-event bounds swept over P(A)"),
    "tightness": (cmd_tightness, "tightness check at the power-tilted model"),
    "battery": (cmd_battery, "failure-rate stress test of a gamma lifetime model"),
    "rate-fn": (cmd_rate_fn, "rate-function lower bounds for a bounded perturbation"),
    "option": (cmd_option, "risk-averse stopping level for a perpetual put"),
}

# long options per subcommand (dest names); all take a string value
OPTIONS = {
    "renyi": ["p", "q", "alpha"],
    "lambda": ["ambiguity", "lambdas"],
    "construct": ["baseline", "ambiguity", "x_grid"],
    "bound": ["baseline", "qoi", "ambiguity", "kind", "q", "eta"],
    "rare-event": ["ambiguity", "p_grid"],
    "tightness": ["baseline", "qoi", "gamma"],
    "battery": ["samples", "a", "b", "eta", "r0", "families", "kappa", "r0_grid"],
    "rate-fn": ["b", "eta_list", "sigma2_list", "x_grid", "dim", "sigma_diag"],
    "option": ["r", "sigma", "K", "X0", "gamma", "delta_r", "T"],
}
COMMON = ["config", "out", "csv", "seed"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="renyi-uq", description="Renyi-divergence robustness bounds.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_, description=help_)
        for opt in COMMON + OPTIONS[name]:
            sp.add_argument("--" + opt.replace("_", "-"), dest=opt, default=None)
    return parser


def _load_config(path: str, subcommand: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path!r}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    sc = data.pop("subcommand", subcommand)
    if sc != subcommand:
        raise ConfigError(f"config is for subcommand {sc!r}, not {subcommand!r}")
    allowed = set(OPTIONS[subcommand]) | {"out", "csv", "seed"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    return data


def run(argv=None, stdout=None, stderr=None) -> int:
    """Parse ``argv``, run the subcommand and return the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.subcommand is None:
            raise ConfigError("a subcommand is required: " + ", ".join(COMMANDS))
        cfg = {}
        if args.config:
            cfg.update(_load_config(args.config, args.subcommand))
        cfg.update({k: v for k, v in vars(args).items()
                    if v is not None and k not in ("subcommand", "config")})
        fn = COMMANDS[args.subcommand][0]
        summary, table = fn(cfg)
        _write(cfg.get("out"), dumps(summary), stdout)
        if table is not None and cfg.get("csv"):
            rows, cols = table
            _write(cfg["csv"], csv_text(rows, cols), stdout)
        return 0
    except ConfigError as e:
        stderr.write(f"error: {e}\n")
        return 2
    except (QuadratureError, ConvergenceError, ArithmeticError, RuntimeError) as e:
        stderr.write(f"numerical failure: {e}\n")
        return 1
    except ValueError as e:
        stderr.write(f"error: {e}\n")
        return 2
    except OSError as e:
        stderr.write(f"error: {e}\n")
        return 2


def main() -> None:
    sys.exit(run())
