"""Run configurations: flat ``key = value`` sections parsed with configparser and validated into dataclasses."""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _points(text: str) -> list[tuple[float, float, float]]:
    pts = []
    for chunk in text.split(";"):
        if chunk.strip():
            vals = [float(t) for t in chunk.split(",")]
            if len(vals) != 3:
                raise ConfigError(f"point {chunk.strip()!r} needs 3 coordinates")
            pts.append(tuple(vals))
    return pts


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass
class FamilyConfig:
    electrons: int = 2
    b: list[float] = field(default_factory=lambda: [1.0, 1.0])
    c: list[float] = field(default_factory=lambda: [1.0])
    comparability_samples: int = 0
    comparability_box: float = 3.0


@dataclass
class SolverConfig:
    k: int = 1
    tol: float = 1e-8
    max_iter: int = 500
    mode: str = "lobpcg"
    shift: float | None = None
    preconditioner: str = "amg"
    inner: str = "direct"


@dataclass
class SolveConfig:
    kind: str = "radial"
    box: float = 40.0
    n: int = 2000
    grading: float = 2.0
    charge: float = -1.0
    ell: int = 0
    background: int = 32
    cluster_depth: int = 12
    cluster_radius: float | None = None
    positions: list[tuple[float, float, float]] = field(default_factory=lambda: [(0.0, 0.0, 0.0)])
    charges: list[float] = field(default_factory=lambda: [-1.0])
    cap: float = 0.5
    magnetic_k: list[float] = field(default_factory=list)
    coupling: str = "magnetic"
    decay_window: list[float] = field(default_factory=lambda: [10.0, 25.0])
    dump_nodal: bool = False
    solver: SolverConfig = field(default_factory=SolverConfig)


@dataclass
class RegularityConfig:
    box: float = 40.0
    grading: float = 2.0
    charge: float = -1.0
    levels: list[int] = field(default_factory=lambda: [500, 2000, 8000])
    m: int = 2
    a_grid: list[float] = field(default_factory=lambda: [0.0, 0.5, 1.0, 1.3, 1.5, 1.7])
    exclusion_radius: float = 1.0
    bounded_ratio: float = 1.1
    diverging_ratio: float = 1.5
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(tol=1e-10, mode="shift_invert", shift=-0.3))


@dataclass
class HardyConfig:
    dimension: int = 3
    box: float = 1.0
    grading: float = 6.0
    levels: list[int] = field(default_factory=lambda: [200, 400, 800, 1600])
    a_grid: list[float] = field(default_factory=lambda: [0.0, 0.25, 0.4, 0.49])
    mu: float = 1.0
    probe_box: float = 10.0
    probe_grading: float = 6.0
    probe_n: int = 800
    trials: int = 4


# command -> section -> key -> value parser (None: the shared solver keys)
_SCHEMAS = {
    "family": {
        "family": {"electrons": int, "b": _floats, "c": _floats,
                   "comparability_samples": int, "comparability_box": float},
    },
    "solve": {
        "solve": {"kind": str, "dump_nodal": _bool},
        "mesh": {"box": float, "n": int, "grading": float, "background": int, "cluster_depth": int,
                 "cluster_radius": float},
        "potential": {"charge": float, "ell": int, "positions": _points, "charges": _floats, "cap": float},
        "magnetic": {"k": _floats, "coupling": str},
        "decay": {"r1": float, "r2": float},
        "solver": None,
    },
    "regularity": {
        "regularity": {"m": int, "a_grid": _floats, "levels": _ints, "exclusion_radius": float,
                       "bounded_ratio": float, "diverging_ratio": float},
        "mesh": {"box": float, "grading": float},
        "potential": {"charge": float},
        "solver": None,
    },
    "hardy": {
        "hardy": {"dimension": int, "box": float, "grading": float, "levels": _ints},
        "isomorphism": {"a_grid": _floats, "mu": float, "box": float, "grading": float, "n": int,
                        "trials": int},
    },
}

_SOLVER_KEYS = {"k": int, "tol": float, "max_iter": int, "mode": str, "shift": float,
                "preconditioner": str, "inner": str}


def _read(text: str, command: str) -> dict[str, dict]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    schema = _SCHEMAS[command]
    out: dict[str, dict] = {}
    if parser.defaults():
        raise ConfigError("keys outside a section are not allowed")
    for section in parser.sections():
        if section not in schema:
            raise ConfigError(f"unknown section [{section}] for command {command!r}")
        keys = _SOLVER_KEYS if schema[section] is None else schema[section]
        values = {}
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                values[key] = keys[key](raw)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})") from None
        out[section] = values
    return out


def _solver(values: dict, base: SolverConfig) -> SolverConfig:
    cfg = SolverConfig(**{**asdict(base), **values})
    if cfg.k < 1 or cfg.tol <= 0 or cfg.max_iter < 1:
        raise ConfigError("solver needs k >= 1, tol > 0, max_iter >= 1")
    if cfg.mode not in ("lobpcg", "shift_invert"):
        raise ConfigError("solver.mode must be lobpcg or shift_invert")
    if cfg.mode == "shift_invert" and cfg.shift is None:
        raise ConfigError("shift_invert mode needs solver.shift")
    if cfg.preconditioner not in ("none", "jacobi", "ilu", "amg"):
        raise ConfigError("solver.preconditioner must be none, jacobi, ilu or amg")
    if cfg.inner not in ("cg", "direct"):
        raise ConfigError("solver.inner must be cg or direct")
    return cfg


def parse_family(text: str) -> FamilyConfig:
    sec = _read(text, "family").get("family", {})
    cfg = FamilyConfig(**sec)
    n = cfg.electrons
    if n < 1:
        raise ConfigError("family.electrons must be >= 1")
    if "c" not in sec and n != 2:
        cfg.c = [1.0] * (n * (n - 1) // 2)
    if "b" not in sec and n != 2:
        cfg.b = [1.0] * n
    if len(cfg.b) != n or len(cfg.c) != n * (n - 1) // 2:
        raise ConfigError(f"family needs {n} b values and {n * (n - 1) // 2} c values")
    if not any(cfg.b + cfg.c):
        raise ConfigError("all coefficients are zero")
    if cfg.comparability_samples < 0 or cfg.comparability_box <= 0:
        raise ConfigError("comparability settings out of range")
    return cfg


def parse_solve(text: str) -> SolveConfig:
    secs = _read(text, "solve")
    cfg = SolveConfig()
    for key, val in secs.get("solve", {}).items():
        setattr(cfg, key, val)
    for key, val in secs.get("mesh", {}).items():
        setattr(cfg, key, val)
    for key, val in secs.get("potential", {}).items():
        setattr(cfg, key, val)
    mag = secs.get("magnetic", {})
    if "k" in mag:
        cfg.magnetic_k = mag["k"]
    if "coupling" in mag:
        cfg.coupling = mag["coupling"]
    dec = secs.get("decay", {})
    cfg.decay_window = [dec.get("r1", cfg.decay_window[0]), dec.get("r2", cfg.decay_window[1])]
    base = SolverConfig() if cfg.kind == "radial" else SolverConfig(tol=1e-6)
    cfg.solver = _solver(secs.get("solver", {}), base)
    if cfg.kind not in ("radial", "tensor"):
        raise ConfigError("solve.kind must be radial or tensor")
    if cfg.box <= 0 or cfg.grading < 1:
        raise ConfigError("mesh needs box > 0 and grading >= 1")
    if cfg.kind == "radial":
        if cfg.n < 4 or cfg.ell < 0:
            raise ConfigError("radial mesh needs n >= 4 and ell >= 0")
        if cfg.magnetic_k:
            raise ConfigError("magnetic fields need kind = tensor")
    else:
        if cfg.background < 2 or cfg.cluster_depth < 0:
            raise ConfigError("tensor mesh needs background >= 2 and cluster_depth >= 0")
        if len(cfg.positions) != len(cfg.charges) or not cfg.positions:
            raise ConfigError("one charge per nucleus position")
        if cfg.magnetic_k and len(cfg.magnetic_k) != 3:
            raise ConfigError("magnetic.k needs three components")
        if cfg.coupling not in ("magnetic", "real"):
            raise ConfigError("magnetic.coupling must be magnetic or real")
    if not cfg.decay_window[0] < cfg.decay_window[1]:
        raise ConfigError("decay window needs r1 < r2")
    return cfg


def parse_regularity(text: str) -> RegularityConfig:
    secs = _read(text, "regularity")
    cfg = RegularityConfig()
    for sec in ("regularity", "mesh"):
        for key, val in secs.get(sec, {}).items():
            setattr(cfg, key, val)
    if "charge" in secs.get("potential", {}):
        cfg.charge = secs["potential"]["charge"]
    cfg.solver = _solver(secs.get("solver", {}), cfg.solver)
    if not cfg.a_grid:
        raise ConfigError("regularity.a_grid is empty")
    if len(cfg.levels) < 3 or any(n < 4 for n in cfg.levels):
        raise ConfigError("regularity needs at least 3 levels, each n >= 4")
    if cfg.m < 0 or cfg.exclusion_radius < 0:
        raise ConfigError("regularity needs m >= 0 and exclusion_radius >= 0")
    if cfg.charge >= 0:
        raise ConfigError("the regularity study needs an attractive charge")
    return cfg


def parse_hardy(text: str) -> HardyConfig:
    secs = _read(text, "hardy")
    cfg = HardyConfig()
    for key, val in secs.get("hardy", {}).items():
        setattr(cfg, key, val)
    iso = secs.get("isomorphism", {})
    for key, attr in (("a_grid", "a_grid"), ("mu", "mu"), ("box", "probe_box"), ("grading", "probe_grading"),
                      ("n", "probe_n"), ("trials", "trials")):
        if key in iso:
            setattr(cfg, attr, iso[key])
    if cfg.dimension <= 2:
        raise ConfigError("hardy.dimension must be >= 3")
    if not cfg.levels or any(n < 4 for n in cfg.levels):
        raise ConfigError("hardy.levels needs entries >= 4")
    if cfg.mu <= 0 or cfg.trials < 0 or cfg.probe_n < 4:
        raise ConfigError("isomorphism settings out of range")
    return cfg


PARSERS = {"family": parse_family, "solve": parse_solve, "regularity": parse_regularity, "hardy": parse_hardy}


def echo(cfg) -> dict:
    """Plain dict of a resolved config for report provenance."""
    d = asdict(cfg)

    def clean(v):
        if isinstance(v, tuple):
            return [clean(x) for x in v]
        if isinstance(v, list):
            return [clean(x) for x in v]
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        return v

    return clean(d)
