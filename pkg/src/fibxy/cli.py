"""Command-line front end.

    fibxy <subcommand> [--config run.json] [--key.path value ...]

Configuration is one JSON document; every key can be overridden by a flag
named after its dotted path (``--potential.lambda 8``).  Values are parsed as
JSON when possible, else taken as strings.  Each subcommand writes into
``<output_dir>/<subcommand>/`` together with a ``manifest.json``.

Exit codes: 0 success, 2 configuration or domain error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dimerlab, manybody, oracle, tracemap, transport
from ._parallel import ordered_map
from .errors import DomainError, FibxyError, NumericFailure, ResourceError
from .io import OutputDir, config_hash
from .onebody import build_hamiltonian, eigensolve, propagator_row
from .potential import PotentialSpec, generate

SUBCOMMANDS = ("potential", "evolve", "transport", "tracemap", "alphaprime", "cone",
               "oracle-check", "dimer", "report")
OUTPUT_ENV = "FIBXY_OUTPUT_ROOT"
DEFAULT_OUTPUT = "fibxy-out"

DEFAULTS = {
    "potential": {"kind": "free", "lambda": 0.0, "omega": 0.0, "seed": 0, "period_values": []},
    "n": 1400,
    "t_grid": {"start": 0.0, "stop": 300.0, "count": 601, "spacing": "linear"},
    "p_grid": [2.0],
    "n_grid": [],
    "epsilons": [1e-4, 1e-6, 1e-8],
    "window": [10.0, 300.0],
    "output_dir": None,
    "seed": 0,
    "jobs": 1,
    "evolve": {"site": 1, "sample_times": []},
    "tracemap": {"k": 10},
    "alphaprime": {"k_min": 4, "k_max": 12},
    "cone": {"quantity": "fermi", "thresholds": [0.1, 1e-6], "window": None},
    "oracle": {"n": [2, 3, 4, 5, 6, 7, 8], "lambda": [0.0, 1.0, 8.0], "omega": [0.0, 0.3],
               "t": [0.0, 0.5, 1.7, 4.0]},
    "dimer": {"lambda": 0.5, "ensemble_size": 16, "p_grid": [0.5, 1.0, 2.0, 4.0, 10.0], "n": 800,
              "t_stop": 150.0, "t_count": 151, "window": [10.0, 150.0]},
    "report": {"inputs": None},
}

# keys whose values are free-form (no nested schema)
LEAF_DICTS = {"oracle"}


class ConfigError(DomainError):
    pass


def _merge(base: dict, update: dict, prefix: str = "") -> None:
    for key, value in update.items():
        path = prefix + key
        if key not in base:
            raise ConfigError(f"unknown config key: {path}")
        if isinstance(base[key], dict) and path not in LEAF_DICTS:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path} must be an object")
            _merge(base[key], value, path + ".")
        elif path in LEAF_DICTS:
            if not isinstance(value, dict) or set(value) - set(base[key]):
                raise ConfigError(f"config key {path} must be an object with keys {sorted(base[key])}")
            base[key].update(value)
        else:
            base[key] = value


def _set_dotted(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = cfg
    for i, part in enumerate(parts[:-1]):
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown config key: {'.'.join(parts[:i + 1])}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key: {dotted}")
    node[parts[-1]] = value


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(extra: list[str]) -> list[tuple[str, object]]:
    out, i = [], 0
    while i < len(extra):
        arg = extra[i]
        if not arg.startswith("--"):
            raise ConfigError(f"unexpected argument: {arg}")
        key = arg[2:]
        if "=" in key:
            key, raw = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for --{key}")
            raw = extra[i + 1]
            i += 2
        out.append((key, _parse_value(raw)))
    return out


def expand_t_grid(spec: dict) -> np.ndarray:
    count = spec["count"]
    if not isinstance(count, int) or count < 2:
        raise ConfigError("t_grid.count must be an integer >= 2")
    start, stop = float(spec["start"]), float(spec["stop"])
    if spec["spacing"] == "linear":
        t = np.linspace(start, stop, count)
    elif spec["spacing"] == "log":
        if start <= 0:
            raise ConfigError("t_grid.start must be > 0 for log spacing")
        t = np.geomspace(start, stop, count)
    else:
        raise ConfigError("t_grid.spacing must be 'linear' or 'log'")
    if start < 0 or np.any(np.diff(t) <= 0):
        raise ConfigError("t_grid must be nonnegative and strictly increasing")
    return t


def validate(cfg: dict) -> dict:
    """Check field domains; raises ConfigError naming the offending key."""
    try:
        PotentialSpec.from_dict({k: v for k, v in cfg["potential"].items()
                                 if not (k == "period_values" and not v)})
    except DomainError as exc:
        raise ConfigError(f"potential: {exc}") from exc
    if not isinstance(cfg["n"], int) or cfg["n"] < 1:
        raise ConfigError("n must be a positive integer")
    expand_t_grid(cfg["t_grid"])
    if not isinstance(cfg["jobs"], int) or cfg["jobs"] < 1:
        raise ConfigError("jobs must be a positive integer")
    if any(float(p) <= 0 for p in cfg["p_grid"]):
        raise ConfigError("p_grid entries must be > 0")
    if any(not 0 < float(e) < 1 for e in cfg["epsilons"]):
        raise ConfigError("epsilons must lie in (0, 1)")
    if len(cfg["window"]) != 2 or not float(cfg["window"][0]) < float(cfg["window"][1]):
        raise ConfigError("window must be [lo, hi] with lo < hi")
    if cfg["cone"]["quantity"] not in manybody.QUANTITIES:
        raise ConfigError(f"cone.quantity must be one of {manybody.QUANTITIES}")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")
    return cfg


def parse_config(path: str | None = None, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        text = p.read_text()
        if text.strip():
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed config {path}: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigError("config must be a JSON object")
            _merge(cfg, data)
    for key, value in overrides:
        _set_dotted(cfg, key, value)
    return validate(cfg)


def potential_spec(cfg) -> PotentialSpec:
    return PotentialSpec.from_dict({k: v for k, v in cfg["potential"].items()
                                    if not (k == "period_values" and not v)})


def output_root(cfg) -> Path:
    return Path(cfg["output_dir"] or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def _lam(spec: PotentialSpec) -> float:
    return 0.0 if spec.kind == "free" else spec.lam


def _fibonacci_lambda(spec: PotentialSpec) -> float:
    if spec.kind != "fibonacci":
        raise ConfigError("this subcommand needs potential.kind = 'fibonacci'")
    return spec.lam


# subcommands ---------------------------------------------------------------

def cmd_potential(cfg, out: OutputDir):
    seq = generate(potential_spec(cfg), cfg["n"])
    out.write_csv("potential.csv", ["j", "V"], zip(range(1, cfg["n"] + 1), seq.values))


def cmd_evolve(cfg, out: OutputDir):
    spec = potential_spec(cfg)
    S = eigensolve(build_hamiltonian(spec, cfg["n"]))
    site = int(cfg["evolve"]["site"])
    times = expand_t_grid(cfg["t_grid"])
    rows = ordered_map(lambda t: propagator_row(S, site, t), times, cfg["jobs"])
    k = np.arange(1, S.n + 1, dtype=float)
    summary = [(r.t, r.norm_defect(), r.tail_weight(), float(np.sum(k**2 * np.abs(r.amplitudes) ** 2)))
               for r in rows]
    out.write_csv("evolve_summary.csv", ["t", "norm_defect", "tail_weight", "moment2"], summary)
    samples = cfg["evolve"]["sample_times"] or [float(times[-1])]
    amp_rows = []
    for t in samples:
        r = propagator_row(S, site, float(t))
        amp_rows += [(r.t, kk, a.real, a.imag, abs(a) ** 2) for kk, a in enumerate(r.amplitudes, 1)]
    out.write_csv("evolve_rows.csv", ["t", "k", "re", "im", "prob"], amp_rows)
    worst = max(s[1] for s in summary)
    if worst > 1e-10:
        raise NumericFailure(f"propagator rows lost normalization: defect {worst:.3e}")


def cmd_transport(cfg, out: OutputDir):
    spec = potential_spec(cfg)
    S = eigensolve(build_hamiltonian(spec, cfg["n"]))
    times = expand_t_grid(cfg["t_grid"])
    ser = transport.build_series(S, times, cfg["p_grid"], cfg["n_grid"], cfg["jobs"])
    window = tuple(cfg["window"])
    moms = [ser.moments(p) for p in ser.p_grid]
    out.write_csv("moments.csv", ["t"] + [f"X^{p:g}" for p in ser.p_grid],
                  (tuple([t] + [m[i] for m in moms]) for i, t in enumerate(times)))
    if ser.n_grid:
        P = ser.outside_on_grid()
        out.write_csv("outside.csv", ["t"] + [f"P({N})" for N in ser.n_grid],
                      (tuple([t, *P[i]]) for i, t in enumerate(times)))
    fronts = []
    for eps in cfg["epsilons"]:
        fronts += [(t, eps, int(r)) for t, r in transport.front_radius(ser, eps)]
    out.write_csv("fronts.csv", ["t", "eps", "front"], fronts)
    result = {"lambda": _lam(spec), "potential": spec.to_dict(), "n": cfg["n"],
              "alpha_u": transport.alpha_u_estimator(ser, cfg["epsilons"], window).to_dict(),
              "beta": {str(p): transport.beta_estimator(ser, p, window).to_dict() for p in ser.p_grid}}
    if times[0] == 0.0:
        try:
            result["beta_averaged"] = {str(p): transport.beta_estimator(ser, p, window, averaged=True).to_dict()
                                       for p in ser.p_grid}
        except DomainError as exc:
            result["beta_averaged"] = {"skipped": str(exc)}
    out.write_json("transport.json", result, "transport")


def cmd_tracemap(cfg, out: OutputDir):
    lam = _fibonacci_lambda(potential_spec(cfg))
    k = int(cfg["tracemap"]["k"])
    br = tracemap.band_roots(lam, k)
    bound = tracemap.root_residual_bound(br)
    out.write_csv("band_roots.csv", ["root", "abs_derivative", "residual", "residual_bound"],
                  zip(br.roots, br.derivative_magnitudes, br.residuals, bound))
    expected = tracemap.fibonacci_number(k + 1)
    out.write_json("tracemap.json", {"lambda": lam, "k": k, "count": br.count, "expected_count": expected,
                                     "max_residual": float(np.max(br.residuals)),
                                     "within_bound": bool(np.all(br.residuals <= bound))}, "tracemap")
    if br.count != expected:
        raise NumericFailure(f"root count {br.count} != {expected}", found=br.count, expected=expected)


def cmd_alphaprime(cfg, out: OutputDir):
    lam = _fibonacci_lambda(potential_spec(cfg))
    est = tracemap.alpha_prime(lam, int(cfg["alphaprime"]["k_min"]), int(cfg["alphaprime"]["k_max"]))
    out.write_csv("alphaprime.csv", ["k", "y_k"], zip(est.ks, est.y))
    out.write_json("alphaprime.json", est.to_dict(), "alphaprime")


def cmd_cone(cfg, out: OutputDir):
    spec = potential_spec(cfg)
    c = cfg["cone"]
    times = expand_t_grid(cfg["t_grid"])
    table = manybody.cone_scan(spec, cfg["n"], times, c["thresholds"], c["quantity"], cfg["jobs"])
    out.write_csv("cone_fronts.csv", ["t", "eps", "front"], table.rows())
    window = tuple(c["window"] or cfg["window"])
    fits = [manybody.cone_fit(table, eps, window) for eps in table.thresholds]
    out.write_json("cone.json", {"lambda": _lam(spec), "fits": [f.to_dict() for f in fits]}, "cone")
    data, script = manybody.gnuplot_files(table, fits[0], "cone")
    out.write_text("cone.dat", data, "gnuplot-data:t,front,fit")
    out.write_text("cone.gp", script, "gnuplot-script")


def cmd_oracle(cfg, out: OutputDir):
    report = oracle.oracle_grid(cfg["oracle"], cfg["jobs"])
    out.write_json("oracle.json", report, "oracle-report")
    if not report["pass"]:
        raise NumericFailure("oracle checks failed; see oracle.json")


def cmd_dimer(cfg, out: OutputDir):
    d = cfg["dimer"]
    times = np.linspace(0.0, float(d["t_stop"]), int(d["t_count"]))
    rep = dimerlab.ensemble_transport(int(d["n"]), times, d["p_grid"], int(d["ensemble_size"]),
                                      float(d["lambda"]), cfg["seed"], tuple(d["window"]), cfg["jobs"])
    out.write_json("dimer.json", rep.to_dict(), "dimer-report")
    out.write_csv("dimer.csv", ["p", "formula", "degradation", "estimate", "stderr"], rep.table())


def _read_json(path: Path):
    if not path.is_file():
        raise ConfigError(f"report input missing: {path}")
    return json.loads(path.read_text())


class _Tagged:
    def __init__(self, lam, **fields):
        self.lam = lam
        self.__dict__.update(fields)


def cmd_report(cfg, out: OutputDir):
    root = Path(cfg["report"]["inputs"] or output_root(cfg))
    spec = potential_spec(cfg)
    cone = _read_json(root / "cone" / "cone.json")
    tr = _read_json(root / "transport" / "transport.json")
    lam = float(cone["lambda"])
    fits = [manybody.ConeFit(f["alpha"], f["v"], f["mu"] if isinstance(f["mu"], float) else float("nan"),
                             f["offset"], f["alpha_stderr"], f["relative_residual"], f["threshold"],
                             f["quantity"], f["lambda"], f["localized"], tuple(f["window"]))
            for f in cone["fits"]]
    if spec.kind == "free":
        ap = 1.0  # ballistic: no trace map
    else:
        apj = _read_json(root / "alphaprime" / "alphaprime.json")
        ap = _Tagged(apj["lambda"], alpha_prime=apj["alpha_prime"])
    au = _Tagged(tr["lambda"], exponent=tr["alpha_u"]["exponent"])
    # compare the smallest-threshold fit: the cone edge, not the bulk
    fits.sort(key=lambda f: f.threshold)
    rep = manybody.consistency_report(lam, fits, ap, au)
    out.write_json("consistency.json", rep.to_dict(), "consistency-report")


COMMANDS = {"potential": cmd_potential, "evolve": cmd_evolve, "transport": cmd_transport,
            "tracemap": cmd_tracemap, "alphaprime": cmd_alphaprime, "cone": cmd_cone,
            "oracle-check": cmd_oracle, "dimer": cmd_dimer, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fibxy", description="Light cones of the Fibonacci XY chain.",
                                 epilog="Any config key can be overridden with --dotted.path VALUE.")
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="JSON run configuration")
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        cfg = parse_config(args.config, _overrides(extra))
        out = OutputDir(output_root(cfg) / args.command, config_hash(cfg))
    except (DomainError, ResourceError, PermissionError, OSError) as exc:
        print(f"fibxy: config error: {exc}", file=sys.stderr)
        return 2
    code = 0
    try:
        COMMANDS[args.command](cfg, out)
    except NumericFailure as exc:
        print(f"fibxy: numeric failure: {exc}", file=sys.stderr)
        code = 3
    except (DomainError, ResourceError) as exc:
        print(f"fibxy: error: {exc}", file=sys.stderr)
        code = 2
    except FibxyError as exc:
        print(f"fibxy: error: {exc}", file=sys.stderr)
        code = 3
    out.write_manifest()
    return code


if __name__ == "__main__":
    sys.exit(main())
