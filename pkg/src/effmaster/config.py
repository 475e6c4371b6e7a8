"""Flat ``key = value`` run configuration and initial-state construction.

Keys are dotted (``model.g``, ``time.dt`` ...).  Lines starting with ``#``
are comments.  ``canonical(text)`` parses and re-serializes with every key
present, sorted, and numbers printed at 17 significant digits, so equal
configurations always serialize to the same bytes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError
from .hilbert import CompositeSpace, ModeSpace, SpinSpace
from .lindblad import SUPPORT_TOL, DensityState, top_level_population

MODEL_PARAMS = {
    "coupled_oscillators": {"omega_a": 1.0, "omega_b": 2.0, "g": 0.05, "gamma": 0.01, "cutoff_a": 8, "cutoff_b": 8},
    "second_harmonic": {"omega_a": 1.0, "omega_b": 3.0, "g": 0.05, "gamma": 0.01, "cutoff_a": 8, "cutoff_b": 8},
    "dicke": {"omega_f": 1.0, "omega_0": 2.0, "g": 0.05, "gamma": 0.01, "atoms": 2, "cutoff": 8},
}
INT_PARAMS = {"cutoff_a", "cutoff_b", "cutoff", "atoms", "max_degree"}
FRAMES = ("delta_x3", "heff")


def fmt(x) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in {"1", "true", "yes", "on"}:
        return True
    if v in {"0", "false", "no", "off"}:
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _float(s: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"not a number: {s!r}") from None


def _int(s: str) -> int:
    v = _float(s)
    if v != int(v):
        raise ConfigError(f"not an integer: {s!r}")
    return int(v)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(_float(t) for t in s.replace(";", ",").split(",") if t.strip())


def _names(s: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in s.split(",") if t.strip())


@dataclass(frozen=True)
class RunConfig:
    model: str = "coupled_oscillators"
    params: dict = field(default_factory=dict)
    sweep_g: tuple[float, ...] = ()
    initial: dict = field(default_factory=dict)
    t_final: float = 10.0
    dt: float = 0.01
    samples: int = 11
    out: str = "out"
    apply_rwa: bool = False
    vacuum_reduction: str = "none"
    order: int = 2
    frame: str = "delta_x3"
    keep_tol: float = 0.1
    observables: tuple[str, ...] = ()
    workers: int = 1
    support_tol: float = SUPPORT_TOL
    flip_x3: bool = False

    def __post_init__(self):
        if self.model not in MODEL_PARAMS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {sorted(MODEL_PARAMS)}")
        params = dict(MODEL_PARAMS[self.model])
        for k, v in self.params.items():
            if k not in params and k != "max_degree":
                raise ConfigError(f"model {self.model} has no parameter {k!r}")
            params[k] = int(v) if k in INT_PARAMS else float(v)
        object.__setattr__(self, "params", params)
        if self.order not in (1, 2):
            raise ConfigError("flags.truncation_order must be 1 or 2")
        if self.frame not in FRAMES:
            raise ConfigError(f"flags.frame must be one of {FRAMES}")
        if not (self.dt > 0 and self.t_final >= 0):
            raise ConfigError("need time.dt > 0 and time.t_final >= 0")
        if self.samples < 2:
            raise ConfigError("time.samples must be >= 2")
        if self.workers < 1:
            raise ConfigError("sweep.workers must be >= 1")

    @property
    def Delta(self) -> float:
        p = self.params
        if self.model == "coupled_oscillators":
            return p["omega_b"] - p["omega_a"]
        if self.model == "second_harmonic":
            return p["omega_b"] - 2 * p["omega_a"]
        return p["omega_0"] - p["omega_f"]

    @property
    def vacuum(self) -> str | None:
        return None if self.vacuum_reduction in ("", "none") else self.vacuum_reduction

    def with_updates(self, **kw) -> "RunConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return RunConfig(**d)

    def to_pairs(self) -> list[tuple[str, str]]:
        pairs = [("model.name", self.model)]
        pairs += [(f"model.{k}", fmt(v)) for k, v in self.params.items()]
        pairs += [(f"initial.{k}", v) for k, v in self.initial.items()]
        pairs += [
            ("sweep.g", ", ".join(fmt(float(g)) for g in self.sweep_g)),
            ("sweep.workers", fmt(self.workers)),
            ("time.t_final", fmt(float(self.t_final))),
            ("time.dt", fmt(float(self.dt))),
            ("time.samples", fmt(self.samples)),
            ("output.dir", self.out),
            ("flags.apply_rwa", fmt(self.apply_rwa)),
            ("flags.vacuum_reduction", self.vacuum_reduction),
            ("flags.truncation_order", fmt(self.order)),
            ("flags.frame", self.frame),
            ("flags.keep_tol", fmt(float(self.keep_tol))),
            ("guard.support_tol", fmt(float(self.support_tol))),
            ("evolve.observables", ", ".join(self.observables)),
            ("verify.flip_x3", fmt(self.flip_x3)),
        ]
        return sorted(pairs)

    def serialize(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_pairs())

    def header_lines(self) -> list[str]:
        return [f"{k} = {v}" for k, v in self.to_pairs()]


def parse_pairs(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        k, v = line.split("=", 1)
        k = k.strip()
        if not k:
            raise ConfigError(f"line {lineno}: empty key")
        out[k] = v.strip()
    return out


def parse(text: str) -> RunConfig:
    kv = parse_pairs(text)
    model = kv.pop("model.name", "coupled_oscillators")
    params, initial = {}, {}
    kw: dict = {"model": model}
    scalar = {
        "time.t_final": ("t_final", _float), "time.dt": ("dt", _float), "time.samples": ("samples", _int),
        "output.dir": ("out", str), "flags.apply_rwa": ("apply_rwa", _bool),
        "flags.vacuum_reduction": ("vacuum_reduction", str), "flags.truncation_order": ("order", _int),
        "flags.frame": ("frame", str), "flags.keep_tol": ("keep_tol", _float),
        "sweep.g": ("sweep_g", _floats), "sweep.workers": ("workers", _int),
        "guard.support_tol": ("support_tol", _float), "evolve.observables": ("observables", _names),
        "verify.flip_x3": ("flip_x3", _bool),
    }
    for k, v in kv.items():
        if k.startswith("model."):
            name = k[len("model."):]
            params[name] = _int(v) if name in INT_PARAMS else _float(v)
        elif k.startswith("initial."):
            initial[k[len("initial."):]] = " ".join(v.split())
        elif k in scalar:
            attr, conv = scalar[k]
            kw[attr] = conv(v)
        else:
            raise ConfigError(f"unknown config key {k!r}")
    kw["params"] = params
    kw["initial"] = dict(sorted(initial.items()))
    return RunConfig(**kw)


def canonical(text: str) -> str:
    return parse(text).serialize()


def load(path) -> RunConfig:
    with open(path) as fh:
        return parse(fh.read())


# -- initial states -----------------------------------------------------------------

def fock_vector(cutoff: int, n: int) -> np.ndarray:
    if not 0 <= n < cutoff:
        raise ConfigError(f"Fock state |{n}> outside cutoff {cutoff}")
    v = np.zeros(cutoff, dtype=complex)
    v[n] = 1
    return v


def coherent_vector(cutoff: int, alpha: complex) -> np.ndarray:
    """Truncated coherent amplitudes, renormalized."""
    n = np.arange(cutoff)
    logfact = np.array([math.lgamma(k + 1) for k in n])
    with np.errstate(divide="ignore"):
        mag = np.exp(-abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) - logfact / 2) if alpha != 0 else (n == 0) * 1.0
    v = mag * np.exp(1j * np.angle(alpha) * n)
    return v / np.linalg.norm(v)


def spin_vector(atoms: int, m: float) -> np.ndarray:
    j = atoms / 2
    k = m + j
    if abs(k - round(k)) > 1e-12 or not 0 <= round(k) <= atoms:
        raise ConfigError(f"m = {m} is not a valid projection for j = {j}")
    v = np.zeros(atoms + 1, dtype=complex)
    v[int(round(k))] = 1
    return v


def spin_coherent_vector(atoms: int, theta: float, phi: float) -> np.ndarray:
    """|theta, phi>, with theta = 0 the lowest state m = -j."""
    k = np.arange(atoms + 1)
    binom = np.array([math.comb(atoms, int(i)) for i in k], dtype=float)
    v = np.sqrt(binom) * np.cos(theta / 2) ** (atoms - k) * (np.sin(theta / 2) * np.exp(1j * phi)) ** k
    return v / np.linalg.norm(v)


def factor_vector(factor, spec: str) -> np.ndarray:
    tok = spec.split()
    if not tok:
        raise ConfigError("empty initial-state spec")
    kind, args = tok[0].lower(), tok[1:]
    try:
        if isinstance(factor, ModeSpace):
            if kind == "fock":
                return fock_vector(factor.cutoff, _int(args[0]))
            if kind == "coherent":
                re = _float(args[0])
                im = _float(args[1]) if len(args) > 1 else 0.0
                return coherent_vector(factor.cutoff, complex(re, im))
        elif isinstance(factor, SpinSpace):
            if kind == "spin":
                return spin_vector(factor.atoms, _float(args[0]))
            if kind == "spin_coherent":
                return spin_coherent_vector(factor.atoms, _float(args[0]), _float(args[1]) if len(args) > 1 else 0.0)
    except IndexError:
        raise ConfigError(f"missing arguments in initial-state spec {spec!r}") from None
    raise ConfigError(f"initial-state spec {spec!r} does not apply to {type(factor).__name__}")


def initial_state(space: CompositeSpace, specs: dict[str, str], support_tol: float = SUPPORT_TOL) -> DensityState:
    """Product state from per-factor specs; unspecified modes start in vacuum, spins in m = -j.

    Refuses states whose truncated support violates the guard.
    """
    for name in specs:
        space.factor_index(name)
    vec = np.ones(1, dtype=complex)
    for name, f in zip(space.names, space.factors):
        spec = specs.get(name, "fock 0" if isinstance(f, ModeSpace) else f"spin {-f.j}")
        vec = np.kron(vec, factor_vector(f, spec))
    rho = np.outer(vec, vec.conj())
    pop = top_level_population(rho, space)
    if pop > support_tol:
        raise ConfigError(f"initial state puts {pop:.3e} in the top two Fock levels (guard {support_tol:.1e}); "
                          f"raise the cutoff")
    return DensityState(space, rho, 0.0)
