"""Scenario configuration: TOML loading, validation and channel construction.

Every key is optional; omitted keys take the defaults below. Unknown keys
and malformed values raise :class:`~rissec.errors.ConfigError`. Powers and
noise levels may be given in dB/dBm at this boundary; everything
downstream is linear. Distances are meters, spacings are in wavelengths.
"""
import copy
import sys
from dataclasses import dataclass

import numpy as np

from .channel import (ChannelStats, PhaseVector, SystemDims, build_geometry, exp_correlation,
                      geometry_path_losses, los_channel, path_loss, ris_correlation)
from .errors import ConfigError, RissecError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["DEFAULTS", "Scenario", "load_scenario", "build_stats", "Built"]

# Section -> key -> default. ``None`` marks "not set".
DEFAULTS = {
    "seed": 1,
    "system": {
        "M": 128, "N": 256, "K": 8, "M_E": 4,
        "snr_db": 5.0, "power_w": None, "power_dbm": None,
        # "cluster": SNR is received over the direct link at the cluster
        # center; "transmit": SNR = P / sigma^2
        "snr_reference": "cluster",
        "noise_dbm": -60.0,
        "eve_noise_dbm": None,  # None is the worst case sigma_E^2 = 0
    },
    "geometry": {
        "wavelength": 0.1, "bs_ris_distance": 20.0,
        "ris_grid": None, "ris_spacing": [0.25, 0.25],
        "bs_grid": None, "bs_spacing": ["auto", "auto"],
        "ris_rotation": 0.0,
        "cluster_bs": 60.0, "cluster_ris": 50.0, "cluster_radius": 3.0,
        "require_full_rank": False,
    },
    "correlation": {
        "bs": "exponential",   # or "identity"
        "ris": "sinc",         # or "identity"
        "rho": 0.4, "rho_eve": None,
    },
    "pathloss": {
        "C0_db": -20.0, "D0": 1.0,
        "exp_bs_ris": 2.0, "exp_ris_side": 2.2, "exp_direct": 3.0,
    },
    "optimize": {
        "xi": "optimize",      # "optimize", "equal" (0.5) or a number in [0, 1]
        "phases": "fixed",     # "fixed" (all pi/2), "random" or "optimize"
        "epsilon": 1e-4, "max_outer": 50, "max_inner": 500, "starts": 1,
    },
    "montecarlo": {
        "trials": 1000, "tau": 0.0, "precoder": "mrt",
        "normalization": "statistical", "block": 100,
    },
    "sweep": {"axis": None, "values": []},
    "report": {"users": "all", "aggregate": "none"},
}

_CHOICES = {
    ("system", "snr_reference"): ("cluster", "transmit"),
    ("correlation", "bs"): ("exponential", "identity"),
    ("correlation", "ris"): ("sinc", "identity"),
    ("optimize", "phases"): ("fixed", "random", "optimize"),
    ("montecarlo", "precoder"): ("mrt", "zf"),
    ("montecarlo", "normalization"): ("statistical", "per_realization"),
    ("report", "aggregate"): ("none", "min", "mean"),
}


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be a table")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def _db(x):
    return 10.0 ** (x / 10.0)


@dataclass(frozen=True)
class Scenario:
    """Fully resolved configuration (a nested dict with accessors)."""

    config: dict

    def __getitem__(self, section):
        return self.config[section]

    @property
    def seed(self):
        return self.config["seed"]

    def config_value(self, dotted):
        node = self.config
        for part in dotted.split("."):
            node = node[part]
        return node

    def with_value(self, dotted, value):
        """Copy with one ``section.key`` value replaced, re-validated."""
        return Scenario.from_dict(_merge(self.config, _nest(dotted, value)))

    @classmethod
    def from_dict(cls, raw):
        cfg = _merge(DEFAULTS, raw)
        _validate(cfg)
        return cls(cfg)

    # resolved physical quantities -------------------------------------

    @property
    def noise_w(self):
        return _db(self.config["system"]["noise_dbm"] - 30.0)

    @property
    def eve_noise_w(self):
        v = self.config["system"]["eve_noise_dbm"]
        return 0.0 if v is None else _db(v - 30.0)

    def reference_gain(self):
        s = self.config["system"]
        if s["snr_reference"] == "transmit":
            return 1.0
        pl = self.config["pathloss"]
        g = self.config["geometry"]
        return path_loss(g["cluster_bs"], pl["exp_direct"], _db(pl["C0_db"]), pl["D0"])

    @property
    def power_w(self):
        s = self.config["system"]
        if s["power_w"] is not None:
            return float(s["power_w"])
        if s["power_dbm"] is not None:
            return _db(s["power_dbm"] - 30.0)
        return _db(s["snr_db"]) * self.noise_w / self.reference_gain()

    def xi_mode(self):
        v = self.config["optimize"]["xi"]
        if v == "optimize":
            return "optimize", None
        if v == "equal":
            return "fixed", 0.5
        return "fixed", float(v)

    def users(self):
        K = self.config["system"]["K"]
        u = self.config["report"]["users"]
        return list(range(K)) if u == "all" else list(u)


def _validate(cfg):
    s = cfg["system"]
    for key in ("M", "N", "K", "M_E"):
        v = s[key]
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError(f"system.{key} must be a positive integer, got {v!r}")
    if not s["M"] > s["K"] + s["M_E"]:
        raise ConfigError("system: need M > K + M_E")
    given = [k for k in ("snr_db", "power_w", "power_dbm") if s[k] is not None]
    if len(given) != 1:
        raise ConfigError(f"system: give exactly one of snr_db, power_w, power_dbm (got {given})")
    if s["power_w"] is not None and not s["power_w"] > 0:
        raise ConfigError("system.power_w must be positive")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool) or cfg["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")
    for (sec, key), allowed in _CHOICES.items():
        if cfg[sec][key] not in allowed:
            raise ConfigError(f"{sec}.{key} must be one of {allowed}, got {cfg[sec][key]!r}")
    c = cfg["correlation"]
    for key in ("rho", "rho_eve"):
        v = c[key]
        if v is not None and not (isinstance(v, (int, float)) and 0 <= v < 1):
            raise ConfigError(f"correlation.{key} must lie in [0, 1), got {v!r}")
    g = cfg["geometry"]
    for key in ("ris_spacing", "bs_spacing"):
        if not (isinstance(g[key], list) and len(g[key]) == 2):
            raise ConfigError(f"geometry.{key} must be a two-element list")
    for v in g["ris_spacing"]:
        if not (isinstance(v, (int, float)) and v > 0):
            raise ConfigError("geometry.ris_spacing entries must be positive")
    for v in g["bs_spacing"]:
        if v != "auto" and not (isinstance(v, (int, float)) and v > 0):
            raise ConfigError("geometry.bs_spacing entries must be positive or 'auto'")
    for key in ("ris_grid", "bs_grid"):
        v = g[key]
        if v is not None and not (isinstance(v, list) and len(v) == 2 and all(isinstance(x, int) for x in v)):
            raise ConfigError(f"geometry.{key} must be a pair of integers")
    if g["ris_grid"] is not None and g["ris_grid"][0] * g["ris_grid"][1] != s["N"]:
        raise ConfigError("geometry.ris_grid does not multiply to system.N")
    if g["bs_grid"] is not None and g["bs_grid"][0] * g["bs_grid"][1] != s["M"]:
        raise ConfigError("geometry.bs_grid does not multiply to system.M")
    o = cfg["optimize"]
    if not (o["xi"] in ("optimize", "equal") or (isinstance(o["xi"], (int, float))
                                                 and not isinstance(o["xi"], bool) and 0 <= o["xi"] <= 1)):
        raise ConfigError(f"optimize.xi must be 'optimize', 'equal' or a number in [0, 1], got {o['xi']!r}")
    if not o["epsilon"] > 0:
        raise ConfigError("optimize.epsilon must be positive")
    for key in ("max_outer", "max_inner", "starts"):
        if not isinstance(o[key], int) or o[key] < 1:
            raise ConfigError(f"optimize.{key} must be a positive integer")
    m = cfg["montecarlo"]
    if not isinstance(m["trials"], int) or m["trials"] < 2:
        raise ConfigError("montecarlo.trials must be an integer >= 2")
    if not isinstance(m["block"], int) or m["block"] < 1:
        raise ConfigError("montecarlo.block must be a positive integer")
    if not (isinstance(m["tau"], (int, float)) and 0 <= m["tau"] <= 1):
        raise ConfigError("montecarlo.tau must lie in [0, 1]")
    r = cfg["report"]
    if r["users"] != "all":
        if not (isinstance(r["users"], list) and r["users"]
                and all(isinstance(u, int) and 0 <= u < s["K"] for u in r["users"])):
            raise ConfigError("report.users must be 'all' or a list of user indices")
    sw = cfg["sweep"]
    if sw["axis"] is not None:
        parts = sw["axis"].split(".")
        node = DEFAULTS
        for p in parts:
            if not isinstance(node, dict) or p not in node:
                raise ConfigError(f"sweep.axis names no config field: {sw['axis']!r}")
            node = node[p]
        if isinstance(node, dict) or parts[0] == "sweep":
            raise ConfigError(f"sweep.axis must name a scalar field: {sw['axis']!r}")
        if not isinstance(sw["values"], list) or not sw["values"]:
            raise ConfigError("sweep.values must be a non-empty list")


def load_scenario(path=None, overrides=None):
    """Read a TOML scenario (or only defaults when ``path`` is None)."""
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    for dotted, value in (overrides or {}).items():
        raw = _merge_lenient(raw, _nest(dotted, value))
    return Scenario.from_dict(raw)


def _nest(dotted, value):
    for part in reversed(dotted.split(".")):
        value = {part: value}
    return value


def _merge_lenient(base, over):
    """Deep-merge two raw dicts; key checking is left to :func:`_merge`."""
    out = dict(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge_lenient(out[key], val)
        else:
            out[key] = val
    return out


@dataclass(frozen=True)
class Built:
    """Channel statistics plus the geometry and the seed streams they came from."""

    stats: ChannelStats
    geometry: object
    phase_seed: np.random.SeedSequence
    mc_seed: int
    start_seed: int


def build_stats(scenario):
    """Construct :class:`ChannelStats` for a scenario.

    Child 0 of ``SeedSequence(seed)`` places users and Eve, child 1 draws
    random phases, and children 2 and 3 seed Monte Carlo and multi-start.
    """
    cfg = scenario.config
    s, g, c, pl = cfg["system"], cfg["geometry"], cfg["correlation"], cfg["pathloss"]
    M, N, K, M_E = s["M"], s["N"], s["K"], s["M_E"]
    ss = np.random.SeedSequence(cfg["seed"])
    geo_ss, phase_ss, mc_ss, start_ss = ss.spawn(4)
    try:
        geo = build_geometry(
            M, N, K, np.random.default_rng(geo_ss), wavelength=g["wavelength"],
            bs_ris_distance=g["bs_ris_distance"], ris_grid=g["ris_grid"],
            ris_spacing=tuple(g["ris_spacing"]), bs_grid=g["bs_grid"],
            bs_spacing=tuple(g["bs_spacing"]), ris_rotation=g["ris_rotation"],
            cluster_bs=g["cluster_bs"], cluster_ris=g["cluster_ris"],
            cluster_radius=g["cluster_radius"])
        gains = geometry_path_losses(geo, g["bs_ris_distance"], _db(pl["C0_db"]), pl["D0"],
                                     pl["exp_bs_ris"], pl["exp_ris_side"], pl["exp_direct"])
        H1 = los_channel(geo, gains.beta1, min_rank=min(M, N) if g["require_full_rank"] else None)
    except RissecError as exc:
        raise ConfigError(f"geometry: {exc}") from None

    if c["bs"] == "exponential":
        R_B = exp_correlation(M, c["rho"])
        R_BE = exp_correlation(M, c["rho"] if c["rho_eve"] is None else c["rho_eve"])
    else:
        R_B = R_BE = np.eye(M)
    if c["ris"] == "sinc":
        d_h, d_v = geo.ris_spacing
        R_I = ris_correlation(geo.ris_grid, d_h, d_v, geo.wavelength)
    else:
        R_I = np.eye(N)

    dims = SystemDims(M, N, K, M_E, scenario.power_w, scenario.noise_w, scenario.eve_noise_w)
    stats = ChannelStats(R_B, R_I, R_BE, R_I, H1, gains, dims)
    return Built(stats, geo, phase_ss,
                 int(mc_ss.generate_state(1)[0]), int(start_ss.generate_state(1)[0]))


def initial_phases(scenario, built):
    """Phases for the ``fixed`` / ``random`` modes (``optimize`` starts from fixed)."""
    N = scenario["system"]["N"]
    if scenario["optimize"]["phases"] == "random":
        return PhaseVector.random(N, np.random.default_rng(built.phase_seed))
    return PhaseVector.constant(N)


def describe(scenario):
    """Flat ``section.key -> value`` view used to echo the config in outputs."""
    out = {"seed": scenario.seed}
    for sec, vals in scenario.config.items():
        if isinstance(vals, dict):
            for k, v in vals.items():
                out[f"{sec}.{k}"] = v
    return out
