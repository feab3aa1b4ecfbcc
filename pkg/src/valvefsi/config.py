"""Simulation configuration: YAML parsing with fail-closed validation.

An empty file yields the full default configuration (the physical and
numerical parameters of the reference setup: rho = 1e3 kg/m^3,
mu = 3.5e-3 kg/(m s), R = 1e4 kg/(m s), eps = 1e-3 m, beta = 2 1/s,
gamma = 0.2 N/m, dt = 2e-4 s, T = 0.4 s). Unknown keys are rejected with
their location.
"""

import os
from dataclasses import dataclass, field

import yaml


class ConfigError(ValueError):
    pass


_GEOMETRY_DEFAULTS = {
    "channel2d": {
        "channel_length": 0.03,
        "channel_height": 0.01,
        "nx": 60,
        "ny": 20,
        "hinge_x": 0.012,
        "sagitta_frac": 0.08,
        "theta_max_deg": 70.0,
        "n_segments": 48,
        "orifice_area_max": 3.0e-4,
    },
    "root3d": {
        "length": 0.06,
        "half_width": 0.016,
        "nx": 18,
        "ny": 10,
        "nz": 10,
        "valve_x": 0.02,
        "annulus_radius": 0.012,
        "bulge": 0.002,
        "orifice_area_max": 3.0e-4,
    },
    "none": {  # plain channel without an immersed valve
        "channel_length": 0.03,
        "channel_height": 0.01,
        "nx": 60,
        "ny": 20,
    },
}

_DEFAULTS = {
    "geometry": {"kind": "channel2d"},
    "fluid": {
        "rho": 1.0e3,
        "mu": 3.5e-3,
        "resistance": 1.0e4,
        "eps": 1.0e-3,
        "bdf_order": 1,
        "degree": 1,
        "c_r": None,
        "viscous_form": "full_gradient",
    },
    "valve": {
        "rho_gamma": None,  # default 2*eps*rho
        "beta": 2.0,
        "gamma": 0.2,
        "force_model": "full_stress",
        "force_scale": 1.0,
        "force_filter_tau": 1.0e-3,  # low-pass on the 0D forcing [s]; 0 = off
        "c0": 0.0,
        "cdot0": 0.0,
    },
    "time": {"dt": 2.0e-4, "t_end": 0.4},
    "boundary": {"waveform": "builtin", "csv": None},
    "ugamma_mode": "model",
    "levelset_degree": 2,
    "output": {"directory": "output", "snapshot_every": 0, "checkpoint_every": 0},
    "solver": {"tol": 1.0e-8, "max_iters": 2000},
    "probes": {"flux_plane_x": None},
}


@dataclass
class SimulationConfig:
    geometry: dict
    fluid: dict
    valve: dict
    time: dict
    boundary: dict
    ugamma_mode: str
    levelset_degree: int
    output: dict
    solver: dict
    probes: dict
    source_path: str = None

    @property
    def dt(self) -> float:
        return self.time["dt"]

    @property
    def t_end(self) -> float:
        return self.time["t_end"]

    def mesh_h(self):
        g = self.geometry
        if g["kind"] in ("channel2d", "none"):
            return max(g["channel_length"] / g["nx"], g["channel_height"] / g["ny"])
        return max(
            g["length"] / g["nx"], 2 * g["half_width"] / g["ny"],
            2 * g["half_width"] / g["nz"],
        )

    def rho_gamma(self) -> float:
        if self.valve["rho_gamma"] is not None:
            return self.valve["rho_gamma"]
        return 2.0 * self.fluid["eps"] * self.fluid["rho"]


def _merge(defaults, user, path):
    out = dict(defaults)
    for key, val in (user or {}).items():
        if key not in defaults:
            raise ConfigError(
                f"unknown key {'.'.join(path + [str(key)])!r} "
                f"(valid here: {sorted(defaults)})"
            )
        if isinstance(defaults[key], dict) and defaults[key]:
            if val is not None and not isinstance(val, dict):
                raise ConfigError(
                    f"{'.'.join(path + [str(key)])} must be a mapping"
                )
            out[key] = _merge(defaults[key], val, path + [str(key)])
        else:
            out[key] = val
    return out


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def parse_config(path) -> SimulationConfig:
    """Load, default-fill and validate a YAML configuration file."""
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: invalid YAML: {err}") from err
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")

    # geometry defaults depend on the selected kind
    kind = (raw.get("geometry") or {}).get("kind", _DEFAULTS["geometry"]["kind"])
    _require(kind in _GEOMETRY_DEFAULTS,
             f"geometry.kind must be one of {sorted(_GEOMETRY_DEFAULTS)}, got {kind!r}")
    defaults = dict(_DEFAULTS)
    defaults["geometry"] = {"kind": kind, **_GEOMETRY_DEFAULTS[kind]}

    merged = _merge(defaults, raw, [])
    cfg = SimulationConfig(**merged, source_path=str(path))
    validate_config(cfg)
    return cfg


def validate_config(cfg: SimulationConfig):
    t = cfg.time
    _require(t["dt"] > 0, f"time.dt must be positive, got {t['dt']}")
    _require(t["t_end"] >= t["dt"],
             f"time.t_end = {t['t_end']} must be at least one step dt = {t['dt']}")
    f = cfg.fluid
    for key in ("rho", "mu", "resistance", "eps"):
        _require(f[key] > 0, f"fluid.{key} must be positive, got {f[key]}")
    _require(f["bdf_order"] in (1, 2), "fluid.bdf_order must be 1 or 2")
    _require(f["viscous_form"] in ("full_gradient", "symmetric_gradient"),
             f"fluid.viscous_form invalid: {f['viscous_form']!r}")
    _require(cfg.levelset_degree >= 2,
             f"levelset_degree must be >= 2 (curvature needs Hessians), "
             f"got {cfg.levelset_degree}")
    _require(cfg.ugamma_mode in ("model", "zero", "phidiff"),
             f"ugamma_mode must be model|zero|phidiff, got {cfg.ugamma_mode!r}")
    v = cfg.valve
    if v["rho_gamma"] is not None:
        _require(v["rho_gamma"] > 0, "valve.rho_gamma must be positive")
    _require(v["beta"] >= 0 and v["gamma"] >= 0,
             "valve.beta and valve.gamma must be non-negative")
    _require(v["force_model"] in ("full_stress", "pressure_only"),
             f"valve.force_model invalid: {v['force_model']!r}")
    _require(v["force_filter_tau"] >= 0, "valve.force_filter_tau must be >= 0")

    if cfg.geometry["kind"] != "none":
        h = cfg.mesh_h()
        _require(
            f["eps"] >= 1.5 * h - 1e-15,
            f"fluid.eps = {f['eps']:.4e} m violates the band-resolution rule: "
            f"it must be at least 1.5 x the mesh size h = {h:.4e} m "
            f"(1.5 h = {1.5 * h:.4e} m)",
        )

    b = cfg.boundary
    _require(b["waveform"] in ("builtin", "csv"),
             f"boundary.waveform must be builtin|csv, got {b['waveform']!r}")
    if b["waveform"] == "csv":
        _require(b["csv"], "boundary.csv path required when waveform = csv")
        _require(os.path.exists(b["csv"]),
                 f"boundary.csv file does not exist: {b['csv']}")
    o = cfg.output
    _require(o["snapshot_every"] >= 0 and o["checkpoint_every"] >= 0,
             "output cadences must be non-negative")
    s = cfg.solver
    _require(s["tol"] > 0 and s["max_iters"] > 0, "solver.tol and max_iters positive")
