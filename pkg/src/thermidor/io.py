"""Run configuration files, legacy VTK field output and EOC tables as CSV.

A configuration is an INI file. Every key is optional except ``[mesh] nx``
and ``[time] t_end``::

    [mesh]
    nx = 32            ; cells per side; ny defaults to nx
    ny = 32
    x0 = 0.0           ; domain [x0, x1] x [y0, y1], unit square by default
    x1 = 1.0
    y0 = 0.0
    y1 = 1.0

    [params]
    n_species = 2
    K = 1.0
    D = 1.0            ; one value for all species or a comma list
    S = 0.0
    F = 0.0
    A = 0.0
    B = 0.0
    beta = 1.0         ; scalar, or matrix rows separated by ';'
    delta = 0.1

    [time]
    tau = 0.01
    t_end = 0.1

    [initial]
    preset = decoupled ; decoupled | mms | constant
    theta = 1.0        ; constant preset only
    u = 0.0
    v = 0.0

    [study]
    nx0 = 8
    levels = 4
    tau_factor = 0.25
    nx_fine = 64
    tau0 = 0.1
    samples = 100      ; random points for mms-check

    [solver]
    tol = 1e-10
    seed = 0

    [output]
    dir = out
"""

import configparser
import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidArgumentError, ThermidorError
from .fem import make_space
from .mesh import Rectangle
from .physics import InitialData, ModelParams
from .verification import EocRow, EocTable, StudyProtocol, field_names

PRESETS = ("decoupled", "mms", "constant")

# section -> key -> default (None marks a required key)
SCHEMA = {
    "mesh": {"nx": None, "ny": "", "x0": "0.0", "x1": "1.0", "y0": "0.0", "y1": "1.0"},
    "params": {"n_species": "2", "K": "1.0", "D": "1.0", "S": "0.0", "F": "0.0",
               "A": "0.0", "B": "0.0", "beta": "1.0", "delta": "0.1"},
    "time": {"tau": "0.01", "t_end": None},
    "initial": {"preset": "decoupled", "theta": "1.0", "u": "0.0", "v": "0.0"},
    "study": {"nx0": "8", "levels": "4", "tau_factor": "0.25", "nx_fine": "64",
              "tau0": "0.1", "samples": "100"},
    "solver": {"tol": "1e-10", "seed": "0"},
    "output": {"dir": "out"},
}


@dataclass
class InitialSpec:
    preset: str = "decoupled"
    theta: float = 1.0
    u: float = 0.0
    v: float = 0.0


@dataclass
class RunConfig:
    nx: int
    ny: int
    domain: Rectangle
    params: ModelParams
    tau: float
    t_end: float
    initial: InitialSpec = field(default_factory=InitialSpec)
    study: StudyProtocol = field(default_factory=StudyProtocol)
    samples: int = 100
    out_dir: str = "out"
    tol: float = 1e-10
    seed: int = 0

    def initial_data(self):
        """Pointwise initial fields for the selected preset."""
        from .verification import coupled_mms_case

        N = self.params.n_species
        choice = self.initial
        if choice.preset == "decoupled":
            pi = np.pi
            return InitialData(
                theta0=lambda x, y: np.cos(pi * x) * np.cos(pi * y),
                u0=[lambda x, y: np.sin(pi * x) * np.sin(pi * y)] * N,
                v0=[lambda x, y: np.zeros(np.broadcast(x, y).shape)] * N)
        if choice.preset == "mms":
            return coupled_mms_case(self.params).initial_data()

        def const(c):
            return lambda x, y: np.full(np.broadcast(x, y).shape, c)
        return InitialData(theta0=const(choice.theta), u0=[const(choice.u)] * N,
                           v0=[const(choice.v)] * N)


def _key_lines(text):
    """Map (section, key) to the 1-based line where the key appears."""
    where = {}
    section = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"([^=:;#\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), no)
    return where


def _number(section, key, raw, kind, line):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(
            f"[{section}] {key} = {raw!r} (line {line}): not a valid "
            f"{'integer' if kind is int else 'number'}") from None


def _list(section, key, raw, line):
    return [_number(section, key, r.strip(), float, line) for r in raw.split(",")]


def _matrix(raw, line):
    rows = [r for r in raw.split(";") if r.strip()]
    vals = [_list("params", "beta", r, line) for r in rows]
    if len(vals) == 1 and len(vals[0]) == 1:
        return vals[0][0]
    if len({len(r) for r in vals}) != 1:
        raise ConfigError(f"[params] beta (line {line}): rows have unequal length")
    return np.array(vals)


def parse_config_text(text, source="<string>"):
    """Parse configuration text; see the module docstring for the format."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"),
                                   interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.ParsingError as exc:
        line, raw = exc.errors[0]
        raise ConfigError(f"{source}, line {line}: cannot parse {raw.strip()!r}") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{source}, line {exc.lineno}: duplicate section "
                          f"[{exc.section}]") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{source}, line {exc.lineno}: duplicate key "
                          f"{exc.option!r} in [{exc.section}]") from None
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    lines = _key_lines(text)
    schema_lower = {s: {k.lower(): k for k in keys} for s, keys in SCHEMA.items()}

    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in cp.items(section):
            canon = schema_lower[section].get(key.lower())
            if canon is None:
                line = lines.get((section, key.lower()), "?")
                raise ConfigError(f"{source}, line {line}: unknown key {key!r} in [{section}]")
            values[(section, canon)] = (raw.strip(), lines.get((section, key.lower()), "?"))

    def get(section, key):
        if (section, key) in values:
            return values[(section, key)]
        default = SCHEMA[section][key]
        if default is None:
            raise ConfigError(f"{source}: missing required key [{section}] {key}")
        return default, "default"

    def num(section, key, kind=float):
        raw, line = get(section, key)
        return _number(section, key, raw, kind, line)

    nx = num("mesh", "nx", int)
    ny_raw, ny_line = get("mesh", "ny")
    ny = nx if ny_raw == "" else _number("mesh", "ny", ny_raw, int, ny_line)
    if nx < 1 or ny < 1:
        raise ConfigError(f"[mesh] nx, ny must be positive, got {nx}, {ny}")
    try:
        domain = Rectangle(num("mesh", "x0"), num("mesh", "x1"),
                           num("mesh", "y0"), num("mesh", "y1"))
    except InvalidArgumentError as exc:
        raise ConfigError(f"[mesh] {exc}") from None

    kwargs = {"n_species": num("params", "n_species", int),
              "K": num("params", "K"), "delta": num("params", "delta")}
    for key in ("D", "S", "F", "A", "B"):
        raw, line = get("params", key)
        vals = _list("params", key, raw, line)
        if len(vals) not in (1, kwargs["n_species"]):
            raise ConfigError(
                f"[params] {key} (line {line}): expected 1 or {kwargs['n_species']} "
                f"values, got {len(vals)}")
        kwargs[key] = vals[0] if len(vals) == 1 else vals
    raw, line = get("params", "beta")
    kwargs["beta_kernel"] = _matrix(raw, line)
    try:
        params = ModelParams(**kwargs)
    except (InvalidArgumentError, ValueError) as exc:
        raise ConfigError(f"[params] {exc}") from None

    tau, t_end = num("time", "tau"), num("time", "t_end")
    if not tau > 0:
        raise ConfigError(f"[time] tau must be positive, got {tau}")
    if not t_end >= 0:
        raise ConfigError(f"[time] t_end must be nonnegative, got {t_end}")

    preset, line = get("initial", "preset")
    if preset not in PRESETS:
        raise ConfigError(f"[initial] preset = {preset!r} (line {line}): expected one of "
                          f"{', '.join(PRESETS)}")
    initial = InitialSpec(preset, num("initial", "theta"), num("initial", "u"),
                          num("initial", "v"))
    if min(initial.theta, initial.u, initial.v) < 0:
        raise ConfigError("[initial] constant initial values must be nonnegative")

    tol = num("solver", "tol")
    if not 0 < tol < 1:
        raise ConfigError(f"[solver] tol must lie in (0, 1), got {tol}")
    study = StudyProtocol(t_end=t_end, nx0=num("study", "nx0", int),
                          levels=num("study", "levels", int),
                          tau_factor=num("study", "tau_factor"),
                          nx_fine=num("study", "nx_fine", int),
                          tau0=num("study", "tau0"), tol=tol)
    if study.levels < 2 or study.nx0 < 1 or study.nx_fine < 1:
        raise ConfigError("[study] needs levels >= 2 and positive mesh sizes")
    if not (study.tau_factor > 0 and study.tau0 > 0):
        raise ConfigError("[study] tau_factor and tau0 must be positive")
    samples = num("study", "samples", int)
    if samples < 1:
        raise ConfigError(f"[study] samples must be positive, got {samples}")

    return RunConfig(nx=nx, ny=ny, domain=domain, params=params, tau=tau, t_end=t_end,
                     initial=initial, study=study, samples=samples,
                     out_dir=get("output", "dir")[0], tol=tol,
                     seed=num("solver", "seed", int))


def parse_config(path):
    """Read and validate a configuration file.

    Raises
    ------
    ConfigError
        Missing file, syntax error (with line number), unknown key or a
        parameter outside its admissible range.
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(p)!r}: {exc.strerror}") from None
    return parse_config_text(text, source=str(p))


def _fmt_list(arr):
    a = np.asarray(arr, dtype=float)
    return ", ".join(repr(float(x)) for x in a)


def format_config(cfg):
    """Emit ``cfg`` as configuration text that parses back to the same values."""
    p = cfg.params
    d = cfg.domain
    s = cfg.study
    beta = "; ".join(_fmt_list(row) for row in p.beta_kernel)
    return "\n".join([
        "[mesh]",
        f"nx = {cfg.nx}", f"ny = {cfg.ny}",
        f"x0 = {d.x0!r}", f"x1 = {d.x1!r}", f"y0 = {d.y0!r}", f"y1 = {d.y1!r}",
        "", "[params]",
        f"n_species = {p.n_species}", f"K = {p.K!r}",
        f"D = {_fmt_list(p.D)}", f"S = {_fmt_list(p.S)}", f"F = {_fmt_list(p.F)}",
        f"A = {_fmt_list(p.A)}", f"B = {_fmt_list(p.B)}",
        f"beta = {beta}", f"delta = {p.delta!r}",
        "", "[time]",
        f"tau = {float(cfg.tau)!r}", f"t_end = {float(cfg.t_end)!r}",
        "", "[initial]",
        f"preset = {cfg.initial.preset}", f"theta = {float(cfg.initial.theta)!r}",
        f"u = {float(cfg.initial.u)!r}", f"v = {float(cfg.initial.v)!r}",
        "", "[study]",
        f"nx0 = {s.nx0}", f"levels = {s.levels}", f"tau_factor = {float(s.tau_factor)!r}",
        f"nx_fine = {s.nx_fine}", f"tau0 = {float(s.tau0)!r}", f"samples = {cfg.samples}",
        "", "[solver]",
        f"tol = {float(cfg.tol)!r}", f"seed = {cfg.seed}",
        "", "[output]",
        f"dir = {cfg.out_dir}",
        ""])


def _io_error(path, exc):
    return ThermidorError(f"cannot write {str(path)!r}: {exc.strerror or exc}")


def write_fields_vtk(mesh, state, path, title="thermidor fields"):
    """Legacy ASCII VTK unstructured grid with one scalar per field.

    Vertex data ``theta``, ``u_1..u_N`` and ``v_1..v_N``; boundary vertices
    of the Dirichlet fields are written as 0.
    """
    theta_space = make_space(mesh, "neumann")
    u_space = make_space(mesh, "dirichlet0")
    N = len(state.alpha)
    arrays = [("theta", theta_space.to_vertices(state.beta))]
    arrays += [(f"u_{i + 1}", u_space.to_vertices(state.alpha[i])) for i in range(N)]
    arrays += [(f"v_{i + 1}", u_space.to_vertices(state.gamma[i])) for i in range(N)]
    nv, nt = mesh.n_vertices, mesh.n_triangles
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    lines.append(f"POINT_DATA {nv}")
    for name, vals in arrays:
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{v:.17g}" for v in vals]
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
    except OSError as exc:
        raise _io_error(path, exc) from None


def eoc_header(fields):
    return (["h", "tau"] + [f"l2_{f}" for f in fields] + [f"h1_{f}" for f in fields]
            + [f"eoc_{f}" for f in fields])


def write_eoc_csv(table, path):
    """One row per refinement level; EOC cells of the first row are empty."""
    if not table.rows:
        raise InvalidArgumentError("cannot write an empty EOC table")
    fmt = "{:.17e}".format
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(eoc_header(table.fields))
            for k, r in enumerate(table.rows):
                row = [fmt(r.h), fmt(r.tau)]
                row += [fmt(r.l2[f]) for f in table.fields]
                row += [fmt(r.h1[f]) for f in table.fields]
                row += ["" if k == 0 else fmt(table.eoc(k, f)) for f in table.fields]
                w.writerow(row)
    except OSError as exc:
        raise _io_error(path, exc) from None


def read_eoc_csv(path):
    """Inverse of :func:`write_eoc_csv`; EOC columns are recomputed."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidArgumentError(f"{path}: empty file")
    header = rows[0]
    n = (len(header) - 2) // 3
    fields = [c[3:] for c in header[2:2 + n]]
    if header != eoc_header(fields):
        raise InvalidArgumentError(f"{path}: unexpected header")
    table = EocTable(fields=fields)
    for r in rows[1:]:
        vals = [float(x) for x in r[:2 + 2 * n]]
        table.rows.append(EocRow(vals[0], vals[1],
                                 dict(zip(fields, vals[2:2 + n])),
                                 dict(zip(fields, vals[2 + n:2 + 2 * n]))))
    return table


__all__ = ["RunConfig", "InitialSpec", "parse_config", "parse_config_text",
           "format_config", "write_fields_vtk", "write_eoc_csv", "read_eoc_csv",
           "field_names"]
