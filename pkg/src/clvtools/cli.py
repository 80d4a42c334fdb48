"""Command-line front end: ``clvtools {run,converge,lemma-check,ulam}``.

Every option has a dotted config key (``ginelli.n1``) and a flag (``--n1``).
Values come from built-in defaults, then the JSON file given by ``--config``,
then flags.  The merged configuration is validated before any computation.

Exit codes: 0 success, 1 a check failed, 2 configuration error,
3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .cocycle import (
    ConjugatedDiagonalSpec,
    UlamTransferSpec,
    embed_step_function,
    load_orbit,
    make_conjugated_diagonal,
    make_ulam_transfer,
    save_orbit,
)
from .diagnostics import convergence_experiment, lemma_sweep, lyapunov_from_r
from .errors import BadSpec, ClvError, ConfigError
from .ginelli import GinelliConfig, run
from .grassmann import grassmann_distance, span
from .oracle import OracleSplitting

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4


# ---------------------------------------------------------------------------
# value parsers


def parse_real(text) -> float:
    """``"0.5"``, ``"ln4"``, ``"-ln2"``, ``"-inf"``."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    s = str(text).strip().lower()
    sign = 1.0
    if s.startswith("-"):
        sign, s = -1.0, s[1:]
    elif s.startswith("+"):
        s = s[1:]
    if s.startswith("ln"):
        arg = float(s[2:])
        if not arg > 0:
            raise ValueError(f"logarithm of non-positive number in {text!r}")
        return sign * math.log(arg)
    return sign * float(s)


def parse_rates(text) -> tuple:
    items = text if isinstance(text, list) else str(text).split(",")
    return tuple(parse_real(x) for x in items)


def parse_int_list(text) -> list:
    """Comma list of integers or ranges ``lo..hi`` / ``lo..hi:step`` (inclusive)."""
    if isinstance(text, list):
        return [_as_int(x) for x in text]
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if ".." in part:
            lo, rest = part.split("..", 1)
            hi, _, step = rest.partition(":")
            step = int(step) if step else 1
            if step < 1:
                raise ValueError(f"range step must be positive in {part!r}")
            out.extend(range(int(lo), int(hi) + 1, step))
        else:
            out.append(int(part))
    return out


def _as_int(x) -> int:
    if isinstance(x, bool):
        raise ValueError(f"expected an integer, got {x!r}")
    if isinstance(x, float):
        if not x.is_integer():
            raise ValueError(f"expected an integer, got {x!r}")
        return int(x)
    return int(x)


def _as_str(x) -> str:
    return str(x)


@dataclass(frozen=True)
class Option:
    key: str
    flag: str
    parse: object
    default: object = None
    required: bool = False
    help: str = ""
    choices: tuple = ()


SPEC_OPTIONS = [
    Option("spec.rates", "--rates", parse_rates, help="exponents, e.g. ln4,ln2,0,-inf"),
    Option("spec.conditioning", "--conditioning", parse_real, 1.0, help="conjugator condition bound"),
    Option("spec.seed", "--spec-seed", _as_int, help="orbit seed"),
]

COMMANDS = {
    "run": [
        Option("spec.kind", "--spec", _as_str, choices=("conjdiag",), help="generated orbit family"),
        *SPEC_OPTIONS,
        Option("orbit.dir", "--orbit-dir", _as_str, help="directory of CLVMAT1 generators"),
        Option("ginelli.k", "--k", _as_int, help="number of vectors (default: all)"),
        Option("ginelli.n1", "--n1", _as_int, required=True, help="forward transient length"),
        Option("ginelli.n2", "--n2", _as_int, required=True, help="backward transient length"),
        Option("ginelli.qr_stride", "--qr-stride", _as_int, 1),
        Option("ginelli.multiplicities", "--multiplicities", parse_int_list,
               help="block sizes (default: spec groups, else all ones)"),
        Option("seed", "--seed", _as_int, 0, help="root seed"),
        Option("output.json", "--out", _as_str, help="report path (default stdout)"),
    ],
    "converge": [
        *SPEC_OPTIONS[:2],
        Option("spec.seed", "--spec-seed", _as_int, 0, help="orbit seed"),
        Option("experiment.grid", "--grid", parse_int_list, [10, 20, 30, 40, 50, 60],
               help="N values, e.g. 10..60:10"),
        Option("experiment.seeds", "--seeds", parse_int_list, [0, 1, 2, 3, 4]),
        Option("experiment.slack", "--slack", parse_real, 0.15, help="allowed fraction of the gap"),
        Option("experiment.mode", "--mode", _as_str, "clv", choices=("clv", "forward")),
        Option("experiment.blocks", "--blocks", _as_int, help="number of leading blocks"),
        Option("ginelli.qr_stride", "--qr-stride", _as_int, 1),
        Option("output.json", "--out", _as_str, help="report path (default stdout)"),
        Option("output.csv", "--csv", _as_str, help="distance table path"),
    ],
    "lemma-check": [
        Option("lemma.name", "--lemma", _as_str, "all", choices=("forward", "corollary", "backward", "all")),
        Option("lemma.instances", "--instances", _as_int, 1000),
        Option("lemma.resample", "--resample", _as_int, 10, help="attempts per instance"),
        Option("lemma.samples", "--samples", _as_int, 10_000, help="Monte-Carlo samples per instance"),
        Option("seed", "--seed", _as_int, 0),
        Option("output.csv", "--csv", _as_str, help="record table path"),
        Option("output.json", "--out", _as_str, help="summary path (default stdout)"),
    ],
    "ulam": [
        Option("ulam.m", "--m", _as_int, 2, help="expansion factor"),
        Option("ulam.eps", "--eps", parse_real, 0.0, help="forcing amplitude"),
        Option("ulam.bins", "--bins", parse_int_list, [64, 128, 256]),
        Option("ulam.samples_per_bin", "--samples-per-bin", _as_int, 256),
        Option("ulam.k_max", "--k-max", _as_int, 1),
        Option("ginelli.n1", "--n1", _as_int, 60),
        Option("ginelli.n2", "--n2", _as_int, 60),
        Option("seed", "--seed", _as_int, 0, help="root seed"),
        Option("output.dir", "--out-dir", _as_str, required=True),
        Option("output.orbit_dir", "--export-orbit", _as_str,
               help="also write the coarsest orbit as CLVMAT1 files"),
    ],
}


def subseed(root: int, name: str) -> int:
    """Deterministic child seed of ``root`` for the named subsystem."""
    ss = np.random.SeedSequence(root, spawn_key=(zlib.crc32(name.encode()),))
    return int(ss.generate_state(1)[0])


# ---------------------------------------------------------------------------
# configuration


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clvtools", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"clvtools {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, options in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with dotted keys")
        for opt in options:
            extra = f" [{opt.key}]"
            if opt.default is not None:
                extra += f" (default {opt.default})"
            p.add_argument(opt.flag, dest=opt.key, default=argparse.SUPPRESS, help=opt.help + extra)
    return parser


def resolve_config(command: str, flags: dict, config_path=None) -> dict:
    """Merge defaults, config file and flags; parse and validate every value."""
    options = {o.key: o for o in COMMANDS[command]}
    raw = {k: o.default for k, o in options.items() if o.default is not None}
    if config_path:
        try:
            data = json.loads(Path(config_path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{config_path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{config_path}: top level must be an object")
        unknown = sorted(set(data) - set(options))
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
        raw.update(data)
    raw.update(flags)
    cfg = {}
    for key, value in raw.items():
        opt = options[key]
        try:
            parsed = opt.parse(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key} ({opt.flag}): cannot parse {value!r}: {exc}") from None
        if opt.choices and parsed not in opt.choices:
            raise ConfigError(f"{key} ({opt.flag}) must be one of {', '.join(opt.choices)}")
        cfg[key] = parsed
    missing = [options[k].flag for k, o in options.items() if o.required and k not in cfg]
    if missing:
        raise ConfigError(f"missing required option(s): {', '.join(missing)}")
    _VALIDATORS[command](cfg)
    return cfg


def _need(cond, message):
    if not cond:
        raise ConfigError(message)


def _validate_grid(values, name, minimum):
    _need(len(values) > 0, f"{name} is empty")
    _need(all(v >= minimum for v in values), f"{name} entries must be >= {minimum}")


def _validate_run(cfg):
    has_spec, has_dir = "spec.rates" in cfg, "orbit.dir" in cfg
    _need(has_spec != has_dir, "give exactly one of --rates (with --spec conjdiag) or --orbit-dir")
    _need(cfg["ginelli.n1"] >= 1 and cfg["ginelli.n2"] >= 0, "need n1 >= 1 and n2 >= 0")
    _need(cfg["ginelli.qr_stride"] >= 1, "qr_stride must be >= 1")
    if has_dir:
        _need("ginelli.k" in cfg, "--k is required with --orbit-dir")
    if "ginelli.k" in cfg:
        _need(cfg["ginelli.k"] >= 1, "k must be >= 1")


def _validate_converge(cfg):
    _need("spec.rates" in cfg, "missing required option(s): --rates")
    grid = cfg["experiment.grid"]
    _validate_grid(grid, "grid", 1)
    _need(all(b > a for a, b in zip(grid, grid[1:])), "grid must be strictly increasing")
    _validate_grid(cfg["experiment.seeds"], "seeds", 0)
    _need(0 <= cfg["experiment.slack"] < 1, "slack must lie in [0, 1)")
    _need(cfg["ginelli.qr_stride"] >= 1, "qr_stride must be >= 1")


def _validate_lemma(cfg):
    _need(cfg["lemma.instances"] >= 1, "instances must be >= 1")
    _need(cfg["lemma.resample"] >= 1, "resample must be >= 1")
    _need(cfg["lemma.samples"] >= 0, "samples must be >= 0")


def _validate_ulam(cfg):
    _validate_grid(cfg["ulam.bins"], "bins", 1)
    _need(cfg["ulam.k_max"] >= 1, "k_max must be >= 1")
    _need(cfg["ginelli.n1"] >= 1 and cfg["ginelli.n2"] >= 0, "need n1 >= 1 and n2 >= 0")


_VALIDATORS = {"run": _validate_run, "converge": _validate_converge,
               "lemma-check": _validate_lemma, "ulam": _validate_ulam}


def _spec_from(cfg, seed) -> ConjugatedDiagonalSpec:
    spec = ConjugatedDiagonalSpec(cfg["spec.rates"], cfg["spec.conditioning"], seed)
    spec.validate()
    return spec


def _threads() -> int:
    raw = os.environ.get("CLV_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"CLV_THREADS must be an integer, got {raw!r}") from None
    _need(n >= 0, "CLV_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# output


def dumps(doc) -> str:
    """Canonical JSON: sorted keys, no NaN."""
    try:
        return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    except ValueError as exc:
        raise ClvError(f"refusing to write a non-finite value: {exc}") from None


def _emit(text: str, path):
    if path is None:
        sys.stdout.write(text)
    else:
        path = Path(path)
        if path.parent != Path():
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _config_doc(cfg) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(cfg.items())
            if not k.startswith("output.")}


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


# ---------------------------------------------------------------------------
# commands


def cmd_run(cfg) -> int:
    root = cfg["seed"]
    oracle = None
    if "orbit.dir" in cfg:
        orbit = load_orbit(cfg["orbit.dir"])
        k = cfg["ginelli.k"]
        mult = cfg.get("ginelli.multiplicities", [1] * k)
    else:
        spec = _spec_from(cfg, cfg.get("spec.seed", subseed(root, "spec")))
        orbit, oracle = make_conjugated_diagonal(spec, -cfg["ginelli.n1"], cfg["ginelli.n2"])
        k = cfg.get("ginelli.k", spec.ambient_dim)
        default_mult = [m for m in oracle.multiplicities]
        while sum(default_mult) > k:
            default_mult.pop()
        if sum(default_mult) != k:
            default_mult = [1] * k
        mult = cfg.get("ginelli.multiplicities", default_mult)
    _need(1 <= k <= orbit.ambient_dim, f"k must lie in [1, {orbit.ambient_dim}]")
    _need(sum(mult) == k and min(mult) >= 1, f"multiplicities {mult} must be positive and sum to k={k}")
    gcfg = GinelliConfig(k, cfg["ginelli.n1"], cfg["ginelli.n2"], qr_stride=cfg["ginelli.qr_stride"],
                         seed=subseed(root, "ginelli"))
    result, runrec = run(orbit, gcfg, multiplicities=mult)
    exps = lyapunov_from_r(runrec)
    blocks = []
    targets = oracle.spaces_at(0) if oracle is not None else None
    for j, (idx, sub) in enumerate(zip(result.blocks, result.block_spans)):
        entry = {"block": j + 1, "columns": list(idx),
                 "vectors": result.vectors[:, list(idx)].T.tolist()}
        if targets is not None and j < len(targets) and targets[j].dim == sub.dim:
            entry["oracle_distance"] = grassmann_distance(sub, targets[j])
        blocks.append(entry)
    doc = {"command": "run", "config": _config_doc(cfg), "ambient_dim": orbit.ambient_dim, "k": k,
           "window": [gcfg.start, gcfg.stop], "multiplicities": list(mult), "blocks": blocks,
           "lyapunov_estimates": [float(x) for x in exps], "tool_version": __version__}
    _emit(dumps(doc), cfg.get("output.json"))
    return EXIT_OK


def cmd_converge(cfg) -> int:
    spec = _spec_from(cfg, cfg["spec.seed"])
    report = convergence_experiment(spec, cfg["experiment.grid"], cfg["experiment.seeds"],
                                    n_blocks=cfg.get("experiment.blocks"), slack=cfg["experiment.slack"],
                                    mode=cfg["experiment.mode"], qr_stride=cfg["ginelli.qr_stride"],
                                    workers=_threads())
    _emit(dumps(report.to_dict()), cfg.get("output.json"))
    if "output.csv" in cfg:
        _emit(report.to_csv(), cfg["output.csv"])
    for b in report.blocks:
        rate = "n/a" if b.fitted_rate is None else f"{b.fitted_rate:.4f}"
        print(f"block {b.block}: fitted rate {rate}, gap {b.theoretical_gap:.4f}, "
              f"{'pass' if b.passed else 'FAIL'}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_lemma_check(cfg) -> int:
    name = cfg["lemma.name"]
    names = ["forward", "corollary", "backward"] if name == "all" else [name]
    sweeps = [lemma_sweep(n, cfg["lemma.instances"], seed=cfg["seed"], resample=cfg["lemma.resample"],
                          samples=cfg["lemma.samples"]) for n in names]
    doc = {"command": "lemma-check", "config": _config_doc(cfg), "sweeps": [s.summary() for s in sweeps],
           "tool_version": __version__}
    _emit(dumps(doc), cfg.get("output.json"))
    if "output.csv" in cfg:
        base = Path(cfg["output.csv"])
        for s in sweeps:
            path = base if len(sweeps) == 1 else base.with_name(f"{base.stem}_{s.lemma}{base.suffix}")
            _emit(s.to_csv(), path)
    bad = sum(s.violations for s in sweeps)
    for s in sweeps:
        print(f"{s.lemma}: {s.precondition_met}/{s.instances} instances meet the precondition, "
              f"{s.violations} violations", file=sys.stderr)
    return EXIT_OK if bad == 0 else EXIT_FAIL


def leading_density(vector) -> np.ndarray:
    """Bin values of a sign-fixed probability density proportional to ``vector``."""
    v = np.asarray(vector, dtype=float)
    v = v / v.sum()
    return v * v.size


def cmd_ulam(cfg) -> int:
    out = Path(cfg["output.dir"])
    n1, n2, kmax = cfg["ginelli.n1"], cfg["ginelli.n2"], cfg["ulam.k_max"]
    bins = sorted(set(cfg["ulam.bins"]))
    spec_seed = subseed(cfg["seed"], "ulam-phase")
    specs = {}
    for nb in bins:
        s = UlamTransferSpec(nb, cfg["ulam.m"], cfg["ulam.eps"], spec_seed, cfg["ulam.samples_per_bin"])
        s.validate()
        _need(kmax <= nb, f"k_max={kmax} exceeds {nb} bins")
        specs[nb] = s
    fine = math.lcm(*bins)
    density_rows, leading, summary = [], {}, []
    for nb in bins:
        orbit = make_ulam_transfer(specs[nb], -n1, n2)
        if nb == bins[0] and "output.orbit_dir" in cfg:
            save_orbit(orbit, cfg["output.orbit_dir"])
        for k in range(1, kmax + 1):
            gcfg = GinelliConfig(k, n1, n2, seed=subseed(cfg["seed"], f"ginelli-{nb}-{k}"))
            x0 = np.ones((nb, k))
            x0[:, 1:] = np.random.default_rng(gcfg.seed).standard_normal((nb, k - 1))
            result, runrec = run(orbit, gcfg, init_vectors=x0)
            exps = lyapunov_from_r(runrec)
            rho = leading_density(result.vectors[:, 0])
            l1 = float(np.abs(rho - 1.0).sum() / nb)
            leading[(nb, k)] = embed_step_function(result.vectors[:, :1], fine)
            for i, val in enumerate(rho):
                density_rows.append([nb, k, i, repr((i + 0.5) / nb), repr(float(val))])
            summary.append({"bins": nb, "k": k, "exponents": [float(x) for x in exps],
                            "l1_to_uniform": l1})
    pairs = []
    for k in range(1, kmax + 1):
        for i, a in enumerate(bins):
            for b in bins[i + 1:]:
                dist = grassmann_distance(span(leading[(a, k)]), span(leading[(b, k)]))
                pairs.append({"bins_a": a, "bins_b": b, "k": k, "distance": dist})
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "leading_density.csv", ["bins", "k", "bin", "x", "density"], density_rows)
    _write_csv(out / "truncation_stability.csv", ["bins_a", "bins_b", "k", "distance"],
               [[p["bins_a"], p["bins_b"], p["k"], repr(p["distance"])] for p in pairs])
    doc = {"command": "ulam", "config": _config_doc(cfg), "runs": summary, "truncation": pairs,
           "tool_version": __version__}
    (out / "ulam.json").write_text(dumps(doc))
    return EXIT_OK


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


_COMMANDS = {"run": cmd_run, "converge": cmd_converge, "lemma-check": cmd_lemma_check, "ulam": cmd_ulam}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = vars(parser.parse_args(argv))
        command = args.pop("command")
        config_path = args.pop("config", None)
        cfg = resolve_config(command, args, config_path)
        return _COMMANDS[command](cfg)
    except (ConfigError, BadSpec) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ClvError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
