"""Command-line front end: load a problem file, run checks, solves and oracles, write reports.

Problem files are line-oriented ``key = value`` text split into sections::

    [dims]
    m = 2
    k = 1
    T = 1
    [levy]
    0.5 1.0            # e1 .. el weight
    [coeffs]
    b1 = 0
    sigma11 = 1
    beta1 = e1
    gamma1 = 1
    [drivers]
    f1 = q
    [costs]
    g_default = 1
    g12 = 0.5
    [terminal]
    h1 = x1^2
    [box]
    x1 = -4 4

``#`` starts a comment. ``[dims]``, ``[costs]`` and ``[terminal]`` are
required; everything else has zero defaults.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mc_oracle
from .expr import ExprSyntaxError, UndeclaredVariableError, parse, variable_names
from .measure import FiniteLevyMeasure
from .operators import Grid, GridOperators, interpolate
from .picard import CONVERGED, WeightSpec, picard_solve
from .problem import SwitchingProblem, validate

OUT_ENV = "IPDESWITCH_OUT"
COMMANDS = ("validate", "solve", "oracle", "compare", "report")
SECTIONS = ("dims", "levy", "coeffs", "drivers", "costs", "terminal", "box")
REQUIRED = ("dims", "costs", "terminal")


class ProblemFileError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        where = f"{path}:" if path is not None else ""
        where += f"{line}: " if line is not None else (" " if where else "")
        super().__init__(f"{where}{message}")


# ---------------------------------------------------------------- problem files


def _split_sections(text: str, path):
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"\[\s*([A-Za-z_]+)\s*\]", line)
        if m:
            current = m.group(1).lower()
            if current not in SECTIONS:
                raise ProblemFileError(f"unknown section [{current}]", lineno, path)
            if current in sections:
                raise ProblemFileError(f"section [{current}] appears twice", lineno, path)
            sections[current] = []
            continue
        if current is None:
            raise ProblemFileError("content before the first section", lineno, path)
        sections[current].append((lineno, line))
    for name in REQUIRED:
        if name not in sections:
            raise ProblemFileError(f"missing required section [{name}]", None, path)
    return sections


def _key_values(entries, section, path):
    out = {}
    for lineno, line in entries:
        if "=" not in line:
            raise ProblemFileError(f"expected 'key = value' in [{section}]", lineno, path)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ProblemFileError(f"empty key or value in [{section}]", lineno, path)
        if key in out:
            raise ProblemFileError(f"duplicate key '{key}'", lineno, path)
        out[key] = (lineno, value)
    return out


def _indices(key: str, prefix: str, count: int):
    """Parse ``prefix`` followed by ``count`` 1-based indices: ``g12``, ``g1_2`` or ``g10_11``."""
    rest = key[len(prefix):]
    if not key.startswith(prefix) or not rest:
        return None
    if "_" in rest:
        parts = rest.split("_")
    elif count == 1:
        parts = [rest]
    elif len(rest) == count:
        parts = list(rest)
    else:
        return None
    if len(parts) != count or not all(p.isdigit() for p in parts):
        return None
    return tuple(int(p) for p in parts)


def parse_problem(text: str, path=None) -> SwitchingProblem:
    sections = _split_sections(text, path)
    dims_kv = _key_values(sections["dims"], "dims", path)
    dims = {"m": None, "k": None, "d": None, "l": None, "T": None, "p": "1"}
    for key, (lineno, value) in dims_kv.items():
        if key not in dims:
            raise ProblemFileError(f"unknown key '{key}' in [dims]", lineno, path)
        dims[key] = value
    for key in ("m", "k", "T"):
        if dims[key] is None:
            raise ProblemFileError(f"[dims] needs '{key}'", None, path)
    try:
        m, k = int(dims["m"]), int(dims["k"])
        d = int(dims["d"]) if dims["d"] is not None else k
        l = int(dims["l"]) if dims["l"] is not None else k
        T, p = float(dims["T"]), int(dims["p"])
    except ValueError as exc:
        raise ProblemFileError(f"bad number in [dims]: {exc}", None, path) from None
    if min(m, k, d, l, p) < 1 or not T > 0:
        raise ProblemFileError("dimensions, p and T must be positive", None, path)

    atoms = []
    for lineno, line in sections.get("levy", []):
        try:
            nums = [float(s) for s in line.split()]
        except ValueError:
            raise ProblemFileError("levy rows must be numbers 'e1 .. el weight'", lineno, path) from None
        if len(nums) != l + 1:
            raise ProblemFileError(f"levy row needs {l} mark entries and a weight", lineno, path)
        atoms.append((tuple(nums[:l]), nums[l]))
    try:
        levy = FiniteLevyMeasure.from_atoms(atoms, l) if atoms else FiniteLevyMeasure.empty(l)
    except ValueError as exc:
        raise ProblemFileError(str(exc), None, path) from None

    drift = ["0"] * k
    sigma = [["0"] * d for _ in range(k)]
    beta = ["0"] * k
    gamma = ["0"] * m
    tx = variable_names(t=True, k=k)
    xe = variable_names(k=k, l=l)
    scope = {"b": tx, "sigma": tx, "g": tx, "beta": xe, "gamma": xe,
             "f": variable_names(t=True, k=k, m=m, d=d, q=True), "h": variable_names(k=k)}

    def check(kind, key, lineno, value):
        try:
            parse(value, scope[kind])
        except (ExprSyntaxError, UndeclaredVariableError) as exc:
            raise ProblemFileError(f"in '{key}': {exc}", lineno, path) from None

    def put(target, idx, n, key, lineno, value):
        if idx is None or not all(1 <= i <= n for i in idx):
            raise ProblemFileError(f"index out of range in '{key}'", lineno, path)
        check(re.match(r"[a-z]+", key).group(0), key, lineno, value)
        target(idx, value)

    for key, (lineno, value) in _key_values(sections.get("coeffs", []), "coeffs", path).items():
        if key.startswith("sigma"):
            idx = _indices(key, "sigma", 2)
            if idx is None or not (1 <= idx[0] <= k and 1 <= idx[1] <= d):
                raise ProblemFileError(f"bad key '{key}' (sigma needs indices 1..{k}, 1..{d})", lineno, path)
            check("sigma", key, lineno, value)
            sigma[idx[0] - 1][idx[1] - 1] = value
        elif key.startswith("beta"):
            put(lambda ix, v: beta.__setitem__(ix[0] - 1, v), _indices(key, "beta", 1), k, key, lineno, value)
        elif key.startswith("gamma"):
            put(lambda ix, v: gamma.__setitem__(ix[0] - 1, v), _indices(key, "gamma", 1), m, key, lineno, value)
        elif key.startswith("b"):
            put(lambda ix, v: drift.__setitem__(ix[0] - 1, v), _indices(key, "b", 1), k, key, lineno, value)
        else:
            raise ProblemFileError(f"unknown key '{key}' in [coeffs]", lineno, path)

    drivers = ["0"] * m
    for key, (lineno, value) in _key_values(sections.get("drivers", []), "drivers", path).items():
        idx = _indices(key, "f", 1)
        if idx is None:
            raise ProblemFileError(f"unknown key '{key}' in [drivers]", lineno, path)
        put(lambda ix, v: drivers.__setitem__(ix[0] - 1, v), idx, m, key, lineno, value)

    costs = {}
    g_default = None
    for key, (lineno, value) in _key_values(sections["costs"], "costs", path).items():
        if key == "g_default":
            try:
                g_default = float(value)
            except ValueError:
                raise ProblemFileError("g_default must be a numeric constant", lineno, path) from None
            continue
        idx = _indices(key, "g", 2)
        if idx is None or not all(1 <= i <= m for i in idx):
            raise ProblemFileError(f"unknown key '{key}' in [costs]", lineno, path)
        if idx[0] == idx[1]:
            try:
                zero = float(value) == 0.0
            except ValueError:
                zero = False
            if not zero:
                raise ProblemFileError(f"diagonal cost '{key}' must be absent or 0", lineno, path)
            continue
        check("g", key, lineno, value)
        costs[idx] = value

    terminal: list = [None] * m
    for key, (lineno, value) in _key_values(sections["terminal"], "terminal", path).items():
        idx = _indices(key, "h", 1)
        if idx is None:
            raise ProblemFileError(f"unknown key '{key}' in [terminal]", lineno, path)
        put(lambda ix, v: terminal.__setitem__(ix[0] - 1, v), idx, m, key, lineno, value)
    missing = [f"h{i + 1}" for i, h in enumerate(terminal) if h is None]
    if missing:
        raise ProblemFileError(f"[terminal] is missing {', '.join(missing)}", None, path)

    box = None
    if "box" in sections:
        box = [None] * k
        for key, (lineno, value) in _key_values(sections["box"], "box", path).items():
            idx = _indices(key, "x", 1)
            if idx is None or not 1 <= idx[0] <= k:
                raise ProblemFileError(f"unknown key '{key}' in [box]", lineno, path)
            try:
                lo, hi = (float(s) for s in value.split())
            except ValueError:
                raise ProblemFileError("box entries are 'xj = lower upper'", lineno, path) from None
            box[idx[0] - 1] = (lo, hi)
        if any(b is None for b in box):
            raise ProblemFileError(f"[box] needs bounds for x1..x{k}", None, path)

    try:
        return SwitchingProblem.build(m=m, k=k, d=d, l=l, T=T, drift=drift, sigma=sigma, beta=beta,
                                      gamma=gamma, drivers=drivers, costs=costs, g_default=g_default,
                                      terminal=terminal, levy=levy, p=p, box=box)
    except (ExprSyntaxError, UndeclaredVariableError) as exc:
        raise ProblemFileError(f"expression error: {exc}", None, path) from None
    except ValueError as exc:
        raise ProblemFileError(str(exc), None, path) from None


def load_problem(path) -> SwitchingProblem:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemFileError(f"cannot read problem file: {exc.strerror}", None, path) from None
    return parse_problem(text, path)


# ---------------------------------------------------------------- runs


@dataclass
class RunConfig:
    command: str
    problem_path: str
    out_dir: str = "out"
    grid_nx: int = 81
    n_t: int = 100
    p: int | None = None
    tol: float = 1e-8
    max_iter: int = 50
    n_paths: int = 20000
    n_steps: int = 50
    seed: int = 0
    basis_degree: int = 2
    probes: list = field(default_factory=list)
    compare_tol: float = 0.05

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command '{self.command}'")
        for name in ("grid_nx", "n_t", "max_iter", "n_paths", "n_steps", "basis_degree"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.tol > 0 or not self.compare_tol > 0:
            raise ValueError("tolerances must be positive")
        if self.p is not None and self.p < 1:
            raise ValueError("p must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        if not value:
            return "none"
        return " ".join(_fmt(v) for v in value)
    if isinstance(value, dict):
        return " ".join(f"{k}={_fmt(v)}" for k, v in value.items())
    return str(value)


def _report_lines(config: RunConfig, items: dict) -> str:
    out = io.StringIO()
    for key, value in dataclasses.asdict(config).items():
        out.write(f"config.{key}: {_fmt(value)}\n")
    for key, value in items.items():
        out.write(f"{key}: {_fmt(value)}\n")
    return out.getvalue()


def _write_csv(path: Path, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in rows:
            writer.writerow(row)


def _value_rows(fld, mode: int):
    grid = fld.grid
    k = grid.k
    yield ["t"] + [f"x{j + 1}" for j in range(k)] + ["u"]
    pts = grid.points.reshape(-1, k)
    for n in range(grid.n_t + 1):
        t = repr(float(grid.time(n)))
        vals = fld.values[mode, n].reshape(-1)
        for x, u in zip(pts, vals):
            yield [t] + [repr(float(c)) for c in x] + [repr(float(u))]


def _reflection_rows(refl, grid):
    k = grid.k
    yield ["mode", "t"] + [f"x{j + 1}" for j in range(k)] + ["increment", "target"]
    pts = grid.points.reshape(-1, k)
    m = refl.increments.shape[0]
    for i in range(m):
        for n in range(grid.n_t + 1):
            t = repr(float(grid.time(n)))
            inc = refl.increments[i, n].reshape(-1)
            tgt = refl.switch_target[i, n].reshape(-1)
            for x, a, b in zip(pts, inc, tgt):
                yield [i + 1, t] + [repr(float(c)) for c in x] + [repr(float(a)), int(b) + 1 if b >= 0 else 0]


def _default_probes(problem, config):
    if config.probes:
        return config.probes
    return [(0.0,) + (0.0,) * problem.k]


def _grid_for(problem, config):
    return Grid.for_problem(problem, config.grid_nx, config.n_t)


def _solve(problem, config):
    grid = _grid_for(problem, config)
    ops = GridOperators(problem, grid)
    w = WeightSpec(config.p if config.p is not None else problem.p)
    fld, refl, rep = picard_solve(problem, grid, w, config.tol, config.max_iter, ops, seed=config.seed)
    return grid, fld, refl, rep


def _grid_value(fld, probe):
    grid = fld.grid
    t, x = probe[0], np.asarray(probe[1:], dtype=float)
    n = int(round((t - grid.times[0]) / grid.dt))
    if not 0 <= n <= grid.n_t or abs(grid.time(n) - t) > 1e-9 * (1 + abs(t)):
        raise ValueError(f"probe time {t} is not a grid level")
    return np.array([interpolate(grid, fld.values[i, n], x[None, :])[0] for i in range(fld.m)])


def _oracle(problem, config, probes):
    rows = []
    for probe in probes:
        t, x = probe[0], np.asarray(probe[1:], dtype=float)
        vals, err = mc_oracle.oracle_values(problem, t, x, config.n_steps, config.n_paths, config.seed,
                                            config.basis_degree)
        rows.append((probe, vals, err))
    return rows


def run(config: RunConfig, stdout=None) -> int:
    """Execute one command; returns the process exit status."""
    stdout = stdout if stdout is not None else sys.stdout
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = load_problem(config.problem_path)
    status = 0
    items: dict = {"command": config.command}

    if config.command in ("validate", "report"):
        report = validate(problem, seed=config.seed)
        (out / "validation.txt").write_text(report.to_text(), encoding="utf-8")
        items["validation"] = "pass" if report.passed else "fail"
        items["validation_failures"] = [c.name for c in report.failures] or "none"
        if not report.passed:
            status = 1

    if config.command in ("solve", "compare", "report"):
        grid, fld, refl, rep = _solve(problem, config)
        if config.command != "compare":
            for i in range(problem.m):
                _write_csv(out / f"value_mode{i + 1}.csv", _value_rows(fld, i))
            _write_csv(out / "reflection.csv", _reflection_rows(refl, grid))
        items["grid"] = grid.describe()
        for key, value in rep.as_dict().items():
            items[key] = value if value is not None else "none"
        if rep.status != CONVERGED:
            status = max(status, 2)

    if config.command in ("oracle", "compare"):
        probes = _default_probes(problem, config)
        rows = _oracle(problem, config, probes)
        if config.command == "oracle":
            header = ["t"] + [f"x{j + 1}" for j in range(problem.k)] + ["mode", "value", "stderr"]
            body = [header]
            for probe, vals, err in rows:
                for i in range(problem.m):
                    body.append([repr(float(c)) for c in probe] + [i + 1, repr(float(vals[i])), repr(float(err[i]))])
            _write_csv(out / "oracle.csv", body)
            items["oracle_probes"] = len(rows)
        else:
            header = ["t"] + [f"x{j + 1}" for j in range(problem.k)] + \
                ["mode", "grid", "oracle", "stderr", "abs_diff", "allowed", "pass"]
            body = [header]
            worst, ok = 0.0, True
            for probe, vals, err in rows:
                gv = _grid_value(fld, probe)
                for i in range(problem.m):
                    diff = abs(gv[i] - vals[i])
                    allowed = config.compare_tol + 3.0 * err[i]
                    good = bool(diff <= allowed)
                    ok &= good
                    worst = max(worst, diff)
                    body.append([repr(float(c)) for c in probe] +
                                [i + 1, repr(float(gv[i])), repr(float(vals[i])), repr(float(err[i])),
                                 repr(float(diff)), repr(float(allowed)), "pass" if good else "fail"])
            _write_csv(out / "compare.csv", body)
            items["compare_max_abs_diff"] = worst
            items["compare"] = "pass" if ok else "fail"
            if not ok:
                status = max(status, 1)

    items["exit_status"] = status
    (out / "run_report.txt").write_text(_report_lines(config, items), encoding="utf-8")
    print(f"{config.command}: exit {status}; outputs in {out}", file=stdout)
    return status


def _probe(text: str):
    try:
        return tuple(float(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("probe must be 't,x1,...,xk'") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ipdeswitch", description="Optimal switching obstacle-system solver")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("problem", help="problem specification file")
    ap.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./out)")
    ap.add_argument("--grid-nx", type=int, default=81, help="nodes per space dimension")
    ap.add_argument("--nt", type=int, default=100, help="time steps of the grid solver")
    ap.add_argument("--p", type=int, default=None, help="weight exponent (default from the problem)")
    ap.add_argument("--tol", type=float, default=1e-8)
    ap.add_argument("--max-iter", type=int, default=50)
    ap.add_argument("--paths", type=int, default=20000)
    ap.add_argument("--steps", type=int, default=50, help="time steps of the oracle")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--degree", type=int, default=2, help="regression basis degree")
    ap.add_argument("--probe", type=_probe, action="append", default=[], help="t,x1,...,xk (repeatable)")
    ap.add_argument("--compare-tol", type=float, default=0.05)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out or os.environ.get(OUT_ENV) or "out"
    try:
        config = RunConfig(args.command, args.problem, out, args.grid_nx, args.nt, args.p, args.tol,
                           args.max_iter, args.paths, args.steps, args.seed, args.degree, list(args.probe),
                           args.compare_tol)
        return run(config)
    except (ProblemFileError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 64


if __name__ == "__main__":
    sys.exit(main())
