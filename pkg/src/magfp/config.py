"""Experiment configuration: flat ``section.key = value`` text with optional ``[section]`` headers.

Example::

    [grid]
    d_x = 1
    d_v = 2
    n_x = 17
    n_v = 24

    field.kind = constant
    field.value = 1.0
    initial.kind = random
    initial.seed = 7

Comments start with ``#``. Lists are comma separated. Unknown keys are
rejected with the offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evolution import IntegratorConfig, Scheme
from .field import (BandError, FieldState, Frame, GridConfig, MagneticField, Weight, random_state,
                    shifted_maxwellian, single_mode, convert_frame)

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "DEFAULT_TOLERANCES"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the line or key."""


DEFAULT_TOLERANCES = {
    "algebraic": 1e-12,
    "conservation": 1e-10,
    "integration": 1e-6,
    "quadrature": 1e-8,
    "c_max": 10.0,
}


def _bool(s: str) -> bool:
    s = s.lower()
    if s in ("true", "yes", "1", "on"):
        return True
    if s in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> list:
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s: str) -> list:
    return [int(x) for x in s.split(",") if x.strip()]


def _strs(s: str) -> list:
    return [x.strip() for x in s.split(",") if x.strip()]


def _choice(*options):
    def conv(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return conv


SCHEMA = {
    "grid.d_x": int,
    "grid.d_v": int,
    "grid.n_x": int,
    "grid.n_v": int,
    "grid.quad_order": int,
    "field.kind": _choice("zero", "constant", "fourier"),
    "field.value": _floats,
    "field.offset": _floats,
    "field.modes": str,
    "weight.kind": _choice("polynomial", "exponential"),
    "weight.k": float,
    "weight.theta": float,
    "run.p": float,
    "run.a": float,
    "run.suites": _strs,
    "run.label": str,
    "run.n_trials": int,
    "initial.kind": _choice("random", "single_mode", "shifted_maxwellian"),
    "initial.seed": int,
    "initial.xi": _ints,
    "initial.alpha": _ints,
    "initial.amplitude": float,
    "initial.offset": _floats,
    "initial.decay": float,
    "initial.mean_zero": _bool,
    "initial.spatial": float,
    "integrator.scheme": _choice("exact_small", "strang_imex"),
    "integrator.dt": float,
    "integrator.t_end": float,
    "integrator.record_every": int,
    "split.M": float,
    "split.R": float,
    "split.a": float,
    "outputs.dir": str,
    "outputs.formats": _strs,
}
for _k in DEFAULT_TOLERANCES:
    SCHEMA[f"tol.{_k}"] = float


_SECTIONS = {k.split(".", 1)[0] for k in SCHEMA}


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse configuration text into a flat ``{dotted key: typed value}`` mapping."""
    out, lines = {}, {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section or " " in section:
                raise ConfigError(f"{source}:{lineno}: malformed section header {raw.strip()!r}")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        # inside a section, bare keys are prefixed; keys naming a known section stand alone
        if section and key.split(".", 1)[0] not in _SECTIONS:
            key = f"{section}.{key}"
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first set on line {lines[key]})")
        try:
            out[key] = SCHEMA[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        lines[key] = lineno
    return out


def _parse_modes(spec: str, d_x: int) -> list:
    """``comp:xi1,xi2:cos:sin; ...`` into mode tuples."""
    modes = []
    for item in spec.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 4:
            raise ConfigError(f"field.modes: expected comp:xi:cos:sin, got {item!r}")
        try:
            comp = int(parts[0])
            xi = _ints(parts[1])
            a, b = float(parts[2]), float(parts[3])
        except ValueError as exc:
            raise ConfigError(f"field.modes: {exc}") from None
        if len(xi) != d_x:
            raise ConfigError(f"field.modes: frequency {xi} must have {d_x} components")
        modes.append((comp, tuple(xi), a, b))
    return modes


@dataclass
class ExperimentConfig:
    """Validated experiment description."""

    grid: GridConfig
    field: MagneticField
    weight: Weight
    p: float
    initial: dict
    integrator: IntegratorConfig
    outputs_dir: str | None
    formats: list
    suites: list
    tolerances: dict
    split: dict
    a: float | None
    n_trials: int
    label: str
    raw: dict = field(default_factory=dict)

    @property
    def seed(self) -> int | None:
        return self.initial.get("seed")

    def rng(self, offset: int = 0) -> np.random.Generator:
        seed = self.seed if self.seed is not None else 0
        return np.random.default_rng([seed, offset])

    def initial_state(self) -> FieldState:
        """Initial data in the Perturbation frame."""
        kind = self.initial["kind"]
        g = self.grid
        if kind == "random":
            s = random_state(g, self.rng(), decay=self.initial.get("decay", 0.2))
            return s
        if kind == "single_mode":
            xi = self.initial.get("xi") or [1] + [0] * (g.d_x - 1)
            alpha = self.initial.get("alpha") or [1] + [0] * (g.d_v - 1)
            try:
                return single_mode(g, xi, alpha, self.initial.get("amplitude", 1.0))
            except (KeyError, BandError) as exc:
                raise ConfigError(f"initial: mode outside the grid: {exc}") from None
        offset = self.initial.get("offset") or [0.5] + [0.0] * (g.d_v - 1)
        if len(offset) != g.d_v:
            raise ConfigError("initial.offset must have d_v components")
        F = shifted_maxwellian(g, offset, Frame.ORIGINAL)
        amp = self.initial.get("spatial", 0.0)
        if amp:
            # modulate in x: F(x, v) = (1 + amp cos x_1)(mu(v - u) - mu) + mu
            b = np.array(F.blocks)
            z = g.zero_mode
            dev = b[z].copy()
            dev[0] -= 1.0
            for sgn in (1, -1):
                xi = [sgn] + [0] * (g.d_x - 1)
                b[g.fourier_index(xi)] += 0.5 * amp * dev
            F = FieldState(g, Frame.ORIGINAL, b)
        return convert_frame(F, Frame.PERTURBATION)

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "field": self.field.to_dict(), "weight": self.weight.to_dict(),
                "p": self.p, "initial": self.initial, "integrator": self.integrator.to_dict(),
                "outputs_dir": self.outputs_dir, "formats": self.formats, "suites": self.suites,
                "tolerances": self.tolerances, "split": self.split, "a": self.a, "n_trials": self.n_trials,
                "label": self.label, "raw": self.raw}


def build_config(flat: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a flat mapping (after overrides) into an :class:`ExperimentConfig`."""
    flat = dict(flat)
    for k, v in (overrides or {}).items():
        if k not in SCHEMA:
            raise ConfigError(f"unknown override key {k!r}")
        flat[k] = SCHEMA[k](v) if isinstance(v, str) else v
    for req in ("grid.d_x", "grid.d_v", "grid.n_x", "grid.n_v"):
        if req not in flat:
            raise ConfigError(f"missing required key {req!r}")
    try:
        grid = GridConfig(flat["grid.d_x"], flat["grid.d_v"], flat["grid.n_x"], flat["grid.n_v"],
                          flat.get("grid.quad_order", 0))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None

    kind = flat.get("field.kind", "zero")
    try:
        if kind == "zero":
            B = MagneticField.zero(grid)
        elif kind == "constant":
            val = flat.get("field.value")
            if val is None:
                raise ConfigError("field.value is required for a constant field")
            B = MagneticField.constant(grid, val)
        else:
            if "field.modes" not in flat:
                raise ConfigError("field.modes is required for a fourier field")
            off = flat.get("field.offset")
            B = MagneticField.from_modes(grid, _parse_modes(flat["field.modes"], grid.d_x), off)
    except (ValueError, BandError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"field: {exc}") from None

    wkind = flat.get("weight.kind", "polynomial")
    try:
        weight = (Weight.polynomial(flat.get("weight.k", 8.0)) if wkind == "polynomial"
                  else Weight.exponential(flat.get("weight.theta", 0.5)))
    except ValueError as exc:
        raise ConfigError(f"weight: {exc}") from None
    need = grid.n_v + int(np.ceil(weight.k + 1)) + 2
    if grid.quad_order < need:
        raise ConfigError(f"grid.quad_order={grid.quad_order} is below n_v + k + 3 = {need} for the weight")

    p = flat.get("run.p", 2.0)
    if not 1 <= p <= 2:
        raise ConfigError("run.p must lie in [1, 2]")

    ikind = flat.get("initial.kind", "random")
    if ikind == "random" and "initial.seed" not in flat:
        raise ConfigError("initial.seed is mandatory for random initial data")
    initial = {"kind": ikind}
    for k in ("seed", "xi", "alpha", "amplitude", "offset", "decay", "mean_zero", "spatial"):
        if f"initial.{k}" in flat:
            initial[k] = flat[f"initial.{k}"]

    try:
        integ = IntegratorConfig(Scheme(flat.get("integrator.scheme", "exact_small")),
                                 flat.get("integrator.dt", 0.05), flat.get("integrator.t_end", 10.0),
                                 flat.get("integrator.record_every", 1))
    except ValueError as exc:
        raise ConfigError(f"integrator: {exc}") from None

    tol = dict(DEFAULT_TOLERANCES)
    for k in DEFAULT_TOLERANCES:
        if f"tol.{k}" in flat:
            tol[k] = flat[f"tol.{k}"]
    suites = flat.get("run.suites", ["l2", "h1", "lpm"])
    bad = [s for s in suites if s not in ("l2", "h1", "lpm", "w1p")]
    if bad:
        raise ConfigError(f"run.suites: unknown suite(s) {bad}")
    formats = flat.get("outputs.formats", ["csv", "json"])
    split = {k.split(".")[1]: flat[k] for k in ("split.M", "split.R", "split.a") if k in flat}
    return ExperimentConfig(grid, B, weight, p, initial, integ, flat.get("outputs.dir"), formats, suites,
                            tol, split, flat.get("run.a"), flat.get("run.n_trials", 20),
                            flat.get("run.label", ""), flat)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return build_config(parse_config(text, str(path)), overrides)
