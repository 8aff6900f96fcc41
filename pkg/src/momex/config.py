"""Sectioned key = value run configuration.

Grammar (one item per line, '#' starts a comment):

    [physics]            frequencies take Hz / kHz / MHz (bare numbers are Hz)
    kappa = 56 kHz
    [integrator]
    method = adaptive
    [run]
    experiment = fig2d
    [grid]               lists "a, b, c" or ranges "start : stop : step", with units
    detuning_grid = -400 kHz : 400 kHz : 10 kHz
    [options]            scalar experiment keywords (times take s / ms / us / ns)
    t_x = 25 us
    [sequence]           ordered events, one per line, for experiment = sequence
    bragg = 0.5 pi                       (add "phi=<rad>", "finite", "scan")
    free = 25 us
    dressing = 25 us scale=1

Values are stored in linear units (Hz, s) so serialize/parse round-trips
exactly; rad/s conversion happens once, in `RunConfig.params`.
"""
from __future__ import annotations

import difflib
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .integrate import IntegratorConfig
from .physics import TWO_PI, PhysicsParams, doppler_slope

FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6}
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "μs": 1e-6, "ns": 1e-9}

EXPERIMENTS = ("fig2a", "fig2d", "fig2e", "fig3a", "fig3c", "fig4a", "fig4e", "sequence")
MODELS = ("effective", "full_cavity", "pure_oat")


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


# kind, lower bound, strict lower bound
_PHYSICS = {
    "g0": ("freq", 0.0, False), "kappa": ("freq", 0.0, True), "kappa1": ("freq", 0.0, False),
    "delta_a": ("freq", 0.0, True), "delta_d": ("freq", None, False),
    "flux_d": ("float", 0.0, False), "omega_z": ("freq", 0.0, True),
    "n_atoms": ("float", 0.0, False), "sigma_in": ("freq", 0.0, False),
    "sigma_p": ("float", 0.0, False), "gamma_excited": ("freq", 0.0, False),
    "wavelength": ("float", 0.0, True), "mass": ("float", 0.0, True),
}
_INTEGRATOR = {
    "method": ("choice", ("adaptive", "rk4")), "rel_tol": ("float", 0.0, True),
    "abs_tol": ("float", 0.0, True), "dt": ("time", 0.0, True),
    "max_step": ("time", 0.0, True),
}
_RUN = {
    "experiment": ("choice", EXPERIMENTS), "model": ("choice", MODELS),
    "n_bins": ("int", 1, False), "superradiance": ("bool",),
    "output_dir": ("str",), "workers": ("int", 1, False),
    "pulse_mode": ("choice", ("instantaneous", "finite")), "name": ("str",),
}
_GRID = {
    "detuning_grid": "freq", "duration_grid": "time", "jz_fractions": "float",
    "delay_grid": "time", "tx_grid": "time", "ratios": "float", "delta_T_grid": "time",
}
_OPTIONS = {
    "t_d": ("time", 0.0, False), "t_x": ("time", 0.0, False), "T": ("time", 0.0, False),
    "T_star": ("time", 0.0, False), "extra_delay": ("time", 0.0, False),
    "ratio": ("float", 0.0, False), "early_delay": ("time", 0.0, False),
    "late_start": ("time", 0.0, False), "theta0": ("float", None, False),
    "placement": ("choice", ("after_first_pulse", "late", "none")),
}
SECTIONS = {"physics": _PHYSICS, "integrator": _INTEGRATOR, "run": _RUN, "grid": _GRID,
            "options": _OPTIONS, "sequence": None}


def physics_defaults():
    p = PhysicsParams()
    return {
        "g0": p.g0 / TWO_PI, "kappa": p.kappa / TWO_PI, "kappa1": p.kappa1 / TWO_PI,
        "delta_a": p.delta_a / TWO_PI, "delta_d": 400e3, "flux_d": p.flux_d,
        "omega_z": 200e3, "n_atoms": float(p.n_atoms), "sigma_in": 2e3,
        "gamma_excited": p.gamma_excited / TWO_PI, "wavelength": 780e-9, "mass": p.mass,
    }


RUN_DEFAULTS = {"experiment": "fig2d", "model": "effective", "n_bins": None,
                "superradiance": None, "output_dir": "momex_out", "workers": 1,
                "pulse_mode": "instantaneous", "name": ""}


@dataclass
class RunConfig:
    physics: dict
    integrator: dict
    run: dict
    grids: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    sequence: list | None = None
    defaults_applied: list = field(default_factory=list, compare=False)

    @property
    def params(self) -> PhysicsParams:
        """PhysicsParams in rad/s; the one place linear -> angular conversion happens."""
        ph = self.physics
        k = TWO_PI / ph["wavelength"]
        return PhysicsParams(
            g0=TWO_PI * ph["g0"], kappa=TWO_PI * ph["kappa"], kappa1=TWO_PI * ph["kappa1"],
            delta_a=TWO_PI * ph["delta_a"], delta_d=TWO_PI * ph["delta_d"],
            flux_d=ph["flux_d"], omega_z=TWO_PI * ph["omega_z"], n_atoms=ph["n_atoms"],
            sigma_p=TWO_PI * ph["sigma_in"] / doppler_slope(k, ph["mass"]),
            k_wavenumber=k, mass=ph["mass"], gamma_excited=TWO_PI * ph["gamma_excited"],
        )

    @property
    def integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig(**{k: v for k, v in self.integrator.items() if v is not None})

    def experiment_kwargs(self):
        """Grids and options converted to the experiment functions' SI arguments."""
        kw = {}
        for key, values in self.grids.items():
            scale = TWO_PI if _GRID[key] == "freq" else 1.0
            kw[key] = np.array(values) * scale
        kw.update(self.options)
        return kw


# -- value parsing -----------------------------------------------------------------

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_NUM_UNIT = re.compile(rf"^\s*({_NUM})\s*([A-Za-zμ]*)\s*$")


def _number_with_unit(text, kind, line):
    m = _NUM_UNIT.match(text)
    if not m:
        raise ConfigError(f"cannot parse number {text.strip()!r}", line)
    value, unit = float(m.group(1)), m.group(2)
    u = unit.lower() if unit != "μs" else unit
    if kind == "freq":
        if not unit:
            return value
        if u in FREQ_UNITS:
            return value * FREQ_UNITS[u]
        raise ConfigError(f"unit mismatch: expected Hz/kHz/MHz, got {unit!r}", line)
    if kind == "time":
        if not unit:
            return value
        if u in TIME_UNITS:
            return value * TIME_UNITS[u]
        raise ConfigError(f"unit mismatch: expected s/ms/us/ns, got {unit!r}", line)
    if unit:
        raise ConfigError(f"unit mismatch: {unit!r} given for a dimensionless value", line)
    return value


def _check_range(key, value, lo, strict, line):
    if lo is None:
        return
    if (strict and not value > lo) or (not strict and value < lo):
        rel = ">" if strict else ">="
        raise ConfigError(f"{key} = {value!r} out of range (must be {rel} {lo})", line)


def _parse_scalar(key, spec, text, line):
    kind = spec[0]
    text = text.strip()
    if kind == "choice":
        if text not in spec[1]:
            raise ConfigError(f"{key} must be one of {', '.join(spec[1])}, got {text!r}", line)
        return text
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{key} must be a boolean, got {text!r}", line)
    if kind == "str":
        return text
    if kind == "int":
        try:
            value = int(text)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {text!r}", line) from None
        _check_range(key, value, spec[1], spec[2], line)
        return value
    value = _number_with_unit(text, kind, line)
    _check_range(key, value, spec[1], spec[2], line)
    return value


def _parse_grid(key, kind, text, line):
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range for {key} must be start : stop : step", line)
        a, b, step = (_number_with_unit(p, kind, line) for p in parts)
        if step <= 0 or b < a:
            raise ConfigError(f"range for {key} needs step > 0 and stop >= start", line)
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        values = [a + i * step for i in range(n)]
    else:
        values = [_number_with_unit(p, kind, line) for p in text.split(",") if p.strip()]
    if not values:
        raise ConfigError(f"grid {key} is empty", line)
    return [float(v) for v in values]


_PI_ANGLE = re.compile(rf"^\s*({_NUM})?\s*\*?\s*pi\s*(?:/\s*({_NUM}))?\s*$")


def parse_angle(text, line=None):
    """'pi/2', '0.5 pi', '1.5707' -> radians."""
    m = _PI_ANGLE.match(text)
    if m:
        mult = float(m.group(1)) if m.group(1) else 1.0
        div = float(m.group(2)) if m.group(2) else 1.0
        return mult * math.pi / div
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse angle {text!r}", line) from None


def _parse_event(kind, text, line):
    tokens = text.split()
    if kind == "mark":
        return {"type": "mark", "label": text.strip()}
    if kind == "bragg":
        n_angle = next((i for i, t in enumerate(tokens)
                        if "=" in t or t in ("finite", "scan")), len(tokens))
        if n_angle == 0:
            raise ConfigError("bragg needs a pulse area", line)
        ev = {"type": "bragg", "theta": parse_angle(" ".join(tokens[:n_angle]), line),
              "phi": 0.0, "mode": "instantaneous", "scan": False}
        for tok in tokens[n_angle:]:
            if tok.startswith("phi="):
                ev["phi"] = parse_angle(tok[4:], line)
            elif tok == "finite":
                ev["mode"] = "finite"
            elif tok == "scan":
                ev["scan"] = True
            elif tok.startswith("rabi="):
                ev["rabi_hz"] = _number_with_unit(tok[5:], "freq", line)
            else:
                raise ConfigError(f"unknown bragg option {tok!r}", line)
        return ev
    if kind in ("free", "dressing"):
        dur_tokens = [t for t in tokens if not t.startswith("scale=")]
        dur = _number_with_unit(" ".join(dur_tokens), "time", line)
        _check_range(kind, dur, 0.0, False, line)
        ev = {"type": kind, "duration": dur}
        if kind == "dressing":
            scale = [t for t in tokens if t.startswith("scale=")]
            ev["flux_scale"] = float(scale[0][6:]) if scale else 1.0
            _check_range("scale", ev["flux_scale"], 0.0, False, line)
        return ev
    events = ("bragg", "free", "dressing", "mark")
    raise ConfigError(f"unknown event {kind!r}{_suggest(kind, events)}; "
                      f"expected one of {', '.join(events)}", line)


def _suggest(key, choices):
    near = difflib.get_close_matches(key, list(choices), n=1)
    return f"; did you mean {near[0]!r}?" if near else ""


def _unknown_msg(key, choices):
    return f"unknown key {key!r}{_suggest(key, choices)}"


def parse_config(text: str) -> RunConfig:
    physics, integrator, run = {}, {}, {}
    grids, options, sequence = {}, {}, []
    section = None
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip().lower()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]{_suggest(section, SECTIONS)}",
                                  lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if section is None:
            raise ConfigError("key outside of any [section]", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if section == "sequence":
            sequence.append(_parse_event(key, value, lineno))
            continue
        schema = SECTIONS[section]
        if key not in schema:
            raise ConfigError(_unknown_msg(key, schema), lineno)
        if (section, key) in seen:
            raise ConfigError(f"duplicate key {key!r} (first on line {seen[section, key]})", lineno)
        seen[section, key] = lineno
        if section == "grid":
            grids[key] = _parse_grid(key, schema[key], value, lineno)
        elif section == "physics":
            physics[key] = _parse_scalar(key, schema[key], value, lineno)
        elif section == "integrator":
            integrator[key] = _parse_scalar(key, schema[key], value, lineno)
        elif section == "run":
            run[key] = _parse_scalar(key, schema[key], value, lineno)
        else:
            options[key] = _parse_scalar(key, schema[key], value, lineno)
    return _resolve(physics, integrator, run, grids, options, sequence or None, seen)


def _resolve(physics, integrator, run, grids, options, sequence, seen):
    applied = []
    if "sigma_p" in physics:
        if "sigma_in" in physics:
            raise ConfigError("give sigma_in or sigma_p, not both", seen["physics", "sigma_p"])
        wl = physics.get("wavelength", 780e-9)
        mass = physics.get("mass", PhysicsParams().mass)
        physics["sigma_in"] = physics.pop("sigma_p") * doppler_slope(TWO_PI / wl, mass) / TWO_PI
    defaults = physics_defaults()
    for k, v in defaults.items():
        if k not in physics:
            if k == "kappa1":
                v = physics.get("kappa", defaults["kappa"]) / 2
            physics[k] = v
            applied.append(f"physics.{k}")
    for k, v in (("method", "adaptive"), ("rel_tol", 1e-10), ("abs_tol", 1e-12),
                 ("dt", None), ("max_step", math.inf)):
        if k not in integrator:
            integrator[k] = v
            applied.append(f"integrator.{k}")
    for k, v in RUN_DEFAULTS.items():
        if k not in run:
            run[k] = v
            applied.append(f"run.{k}")
    if run["experiment"] == "sequence" and not sequence:
        raise ConfigError("experiment = sequence needs a [sequence] section")
    if sequence and run["experiment"] != "sequence":
        raise ConfigError("a [sequence] section requires experiment = sequence")
    cfg = RunConfig(physics, integrator, run, grids, options, sequence, applied)
    try:
        cfg.params
        cfg.integrator_config
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


# -- serialization -----------------------------------------------------------------

def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _fmt_with_unit(v, kind):
    if kind == "freq":
        return f"{v!r} Hz"
    if kind == "time":
        return f"{v!r} s"
    return _fmt(v)


def serialize_config(cfg: RunConfig) -> str:
    """Fully explicit text form; parse(serialize(cfg)) == cfg."""
    out = ["[physics]"]
    for k, v in cfg.physics.items():
        out.append(f"{k} = {_fmt_with_unit(v, _PHYSICS[k][0])}")
    out.append("[integrator]")
    for k, v in cfg.integrator.items():
        if v is None:
            continue
        if k == "max_step" and math.isinf(v):
            continue
        out.append(f"{k} = {_fmt_with_unit(v, _INTEGRATOR[k][0])}")
    out.append("[run]")
    for k, v in cfg.run.items():
        if v is None or (k == "name" and v == ""):
            continue
        out.append(f"{k} = {_fmt(v)}")
    if cfg.grids:
        out.append("[grid]")
        for k, vals in cfg.grids.items():
            out.append(f"{k} = " + ", ".join(_fmt_with_unit(v, _GRID[k]) for v in vals))
    if cfg.options:
        out.append("[options]")
        for k, v in cfg.options.items():
            out.append(f"{k} = {_fmt_with_unit(v, _OPTIONS[k][0])}")
    if cfg.sequence:
        out.append("[sequence]")
        for ev in cfg.sequence:
            t = ev["type"]
            if t == "mark":
                out.append(f"mark = {ev['label']}")
            elif t == "bragg":
                s = f"bragg = {ev['theta']!r} phi={ev['phi']!r}"
                if ev["mode"] == "finite":
                    s += " finite"
                if "rabi_hz" in ev:
                    s += f" rabi={ev['rabi_hz']!r}Hz"
                if ev["scan"]:
                    s += " scan"
                out.append(s)
            elif t == "free":
                out.append(f"free = {ev['duration']!r} s")
            else:
                out.append(f"dressing = {ev['duration']!r} s scale={ev['flux_scale']!r}")
    return "\n".join(out) + "\n"


def config_to_dict(cfg: RunConfig):
    def clean(d):
        return {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in d.items()}
    return {"physics_linear_units": clean(cfg.physics), "integrator": clean(cfg.integrator),
            "run": dict(cfg.run), "grids": cfg.grids, "options": cfg.options,
            "sequence": cfg.sequence, "defaults_applied": cfg.defaults_applied}
