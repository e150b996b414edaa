"""Plain-text experiment configs: ``[section]`` headers with ``key = value`` lines.

Every key names exactly one parameter; keys are unique across sections so a
config can also be treated as one flat mapping (which is how command-line
overrides are merged in). Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .detail_layer import DetailParams
from .image_core import EnhanceParams
from .ogmm import OgmmConfig
from .optical_flow import FlowParams
from .patching import PatchSpec
from .pipeline import Diagnostics, PipelineConfig


class ConfigError(ValueError):
    pass


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _mu(v):
    if v is None or str(v).strip().lower() in ("auto", "analytic", "none"):
        return None
    return float(v)


def _opt_str(v):
    return None if v in (None, "", "-") else str(v)


# key -> (section, parser)
KEYS = {
    "iters": ("pipeline", int),
    "threads": ("pipeline", int),
    "seed": ("pipeline", int),
    "s1": ("patch", int),
    "s2": ("patch", int),
    "stride": ("patch", int),
    "em_iters": ("ogmm", int),
    "gd_iters": ("ogmm", int),
    "lambda": ("ogmm", float),
    "omega": ("ogmm", float),
    "mu": ("ogmm", _mu),
    "alpha": ("ogmm", float),
    "sigma_init": ("ogmm", float),
    "sigma_d": ("ogmm", float),
    "sigma_l": ("ogmm", float),
    "variance_floor": ("ogmm", float),
    "pyramid_levels": ("flow", int),
    "pyramid_scale": ("flow", float),
    "window_size": ("flow", int),
    "flow_iterations": ("flow", int),
    "poly_neighborhood": ("flow", int),
    "poly_sigma": ("flow", float),
    "detail": ("detail", _bool),
    "tau": ("detail", float),
    "eta": ("detail", float),
    "bf_sigma_d": ("detail", float),
    "bf_sigma_l": ("detail", float),
    "bf_radius": ("detail", int),
    "allow_out_of_range": ("detail", _bool),
    "enhance_gain": ("enhance", float),
    "enhance_bias": ("enhance", float),
    "enhance_gamma": ("enhance", float),
    "report_energy": ("diagnostics", _bool),
    "dump_intermediate": ("diagnostics", _opt_str),
    "dump_flow": ("diagnostics", _opt_str),
}

SECTIONS = sorted({sec for sec, _ in KEYS.values()})


def parse_values(raw: dict) -> dict:
    out = {}
    for key, val in raw.items():
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            out[key] = KEYS[key][1](val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {val!r} ({exc})") from exc
    return out


def read_config(text: str) -> dict:
    """Parse config text into a flat ``{key: typed value}`` mapping."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    raw = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        for key, val in cp[sec].items():
            if key not in KEYS:
                raise ConfigError(f"unknown config key {key!r} in [{sec}]")
            if KEYS[key][0] != sec:
                raise ConfigError(f"key {key!r} belongs in [{KEYS[key][0]}], not [{sec}]")
            raw[key] = val
    return parse_values(raw)


def load_config(path) -> dict:
    return read_config(Path(path).read_text())


def dump_config(values: dict) -> str:
    lines = []
    for sec in SECTIONS:
        keys = [k for k in KEYS if KEYS[k][0] == sec and k in values]
        if not keys:
            continue
        lines.append(f"[{sec}]")
        for k in keys:
            v = values[k]
            lines.append(f"{k} = {'auto' if v is None and k == 'mu' else v}")
        lines.append("")
    return "\n".join(lines)


def build_pipeline_config(values: dict) -> PipelineConfig:
    """Assemble a :class:`PipelineConfig` from flat values over the defaults."""
    v = dict(values)
    unknown = set(v) - set(KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    try:
        patch = PatchSpec(
            s1=v.get("s1", 3), s2=v.get("s2", 5), stride=v.get("stride", 1)
        )
        base = OgmmConfig()
        ogmm = OgmmConfig(
            omega=v.get("omega", base.omega),
            lam=v.get("lambda", base.lam),
            mu=v.get("mu", base.mu),
            alpha=v.get("alpha", base.alpha),
            gd_iterations=v.get("gd_iters", base.gd_iterations),
            em_iterations=v.get("em_iters", base.em_iterations),
            sigma_init=v.get("sigma_init", base.sigma_init),
            sigma_d=v.get("sigma_d", base.sigma_d),
            sigma_l=v.get("sigma_l", base.sigma_l),
            variance_floor=v.get("variance_floor", base.variance_floor),
        )
        fb = FlowParams()
        flow = FlowParams(
            pyramid_levels=v.get("pyramid_levels", fb.pyramid_levels),
            pyramid_scale=v.get("pyramid_scale", fb.pyramid_scale),
            window_size=v.get("window_size", fb.window_size),
            iterations_per_level=v.get("flow_iterations", fb.iterations_per_level),
            poly_neighborhood=v.get("poly_neighborhood", fb.poly_neighborhood),
            poly_sigma=v.get("poly_sigma", fb.poly_sigma),
        )
        detail = None
        if v.get("detail", True):
            db = DetailParams()
            detail = DetailParams(
                tau=v.get("tau", db.tau),
                eta=v.get("eta", db.eta),
                bf_sigma_d=v.get("bf_sigma_d", db.bf_sigma_d),
                bf_sigma_l=v.get("bf_sigma_l", db.bf_sigma_l),
                bf_radius=v.get("bf_radius", db.bf_radius),
                allow_out_of_range=v.get("allow_out_of_range", False),
            )
        enhance = None
        if any(k in v for k in ("enhance_gain", "enhance_bias", "enhance_gamma")):
            enhance = EnhanceParams(
                gain=v.get("enhance_gain", 1.0),
                bias=v.get("enhance_bias", 0.0),
                gamma=v.get("enhance_gamma", 1.0),
            )
        cfg = PipelineConfig(
            outer_iterations=v.get("iters", 2),
            patch=patch,
            ogmm=ogmm,
            flow=flow,
            detail=detail,
            enhance=enhance,
            diagnostics=Diagnostics(
                energy=v.get("report_energy", True),
                intermediate_dir=v.get("dump_intermediate"),
                flow_dir=v.get("dump_flow"),
            ),
            threads=v.get("threads", 1),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg
