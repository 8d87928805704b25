"""Key=value scenario configs, preset defaults, and sweep specs.

Format: one `key = value` per line, `#` starts a comment, dotted keys select
subsections (params.chi, solver.dt, grid.cells). Unknown keys, type errors,
and preset-constraint violations are reported with the offending key and line
number. Presets fill every key a file leaves unset; explicit keys override
preset defaults but still face the preset's constraints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dynamics import InitialSpec, ModelParams, SolverConfig
from .elliptic import EllipticConfig
from .grid import Grid, build_grid

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "SweepSpec",
    "PRESETS",
    "parse_config",
    "parse_sweep",
    "scenario_with_overrides",
]


class ConfigError(ValueError):
    pass


PRESETS = (
    "C1_no_mitosis",
    "C2_logistic",
    "chi_zero_corollary",
    "R3_theta_gt1",
    "heat_oracle",
    "custom",
)

# preset -> key -> default (string form, same parser as file values)
_BASE_DEFAULTS = {
    "seed": "0",
    "out": "out",
    "grid.dim": "1",
    "grid.lengths": "1.0",
    "grid.cells": "128",
    "params.chi": "0.5",
    "params.xi1": "1.0",
    "params.xi2": "1.0",
    "params.d": "1.0",
    "params.a": "0.0",
    "params.mu": "0.0",
    "params.theta": "1.0",
    "solver.dt": "0.005",
    "solver.t_end": "10.0",
    "solver.cfl_safety": "0.5",
    "solver.flux_scheme": "upwind",
    "solver.blowup_threshold": "1e6",
    "solver.record_every": "10",
    "solver.elliptic_tolerance": "1e-10",
    "solver.elliptic_max_iterations": "auto",
    "init.profile": "cosine_bump",
    "init.base": "1.0",
    "init.amplitude": "0.2",
    "init.v_profile": "same",
    "init.v_base": "same",
    "init.v_amplitude": "same",
    "fit.column": "l2_u_dev",
    "fit.window_start": "auto",
    "fit.window_end": "auto",
}

_PRESET_OVERRIDES = {
    "C1_no_mitosis": {
        "params.chi": "0.5", "params.xi1": "1.0", "params.xi2": "1.0",
        "params.d": "2.0", "params.a": "0.0", "params.mu": "0.0",
        "solver.dt": "0.005", "solver.t_end": "30.0",
        "init.v_profile": "constant", "init.v_base": "0.5", "init.v_amplitude": "0.0",
    },
    "C2_logistic": {
        "params.chi": "0.5", "params.xi1": "0.5", "params.xi2": "0.5",
        "params.d": "1.0", "params.a": "1.0", "params.mu": "1.0",
        "solver.dt": "0.002", "solver.t_end": "30.0",
        "init.v_profile": "cosine_bump", "init.v_base": "1.0", "init.v_amplitude": "0.1",
    },
    "chi_zero_corollary": {
        "params.chi": "0.0", "params.xi1": "1.0", "params.xi2": "1.0",
        "params.d": "1.0", "params.a": "0.0", "params.mu": "0.0",
        "solver.dt": "0.005", "solver.t_end": "50.0",
        "init.v_profile": "constant", "init.v_base": "0.5", "init.v_amplitude": "0.0",
    },
    # chi large enough that the xi1-dominance condition fails: the run is
    # covered by the theta>1 mitosis branch alone
    "R3_theta_gt1": {
        "params.chi": "1.0", "params.xi1": "0.5", "params.xi2": "0.5",
        "params.d": "1.0", "params.a": "1.0", "params.mu": "1.0", "params.theta": "2.0",
        "solver.dt": "0.002", "solver.t_end": "30.0",
        "init.v_profile": "cosine_bump", "init.v_base": "1.0", "init.v_amplitude": "0.1",
    },
    "heat_oracle": {
        "params.chi": "0.0", "params.xi1": "0.0", "params.xi2": "0.0",
        "params.d": "1.0", "params.a": "0.0", "params.mu": "0.0",
        "grid.cells": "256", "solver.dt": "0.0001", "solver.t_end": "1.0",
        "init.amplitude": "0.1", "init.v_profile": "constant",
        "init.v_base": "1.0", "init.v_amplitude": "0.0",
    },
    "custom": {},
}

_SWEEP_DEFAULTS = {"sweep.max_parallel": "1", "sweep.max_points": "256"}

_KNOWN_KEYS = {"preset", *_BASE_DEFAULTS}

# keys a sweep may vary (numeric scenario knobs)
_SWEEPABLE_PREFIXES = ("params.", "solver.", "init.")


@dataclass(frozen=True)
class ScenarioConfig:
    preset: str
    seed: int
    out_dir: str
    grid: Grid
    params: ModelParams
    solver: SolverConfig
    initial: InitialSpec
    fit_column: str = "l2_u_dev"
    fit_window: tuple[float, float] | None = None


@dataclass(frozen=True)
class SweepSpec:
    base: ScenarioConfig
    axes: tuple[tuple[str, tuple[float, ...]], ...]
    max_parallel: int = 1
    max_points: int = 256
    base_keys: dict = field(default_factory=dict, compare=False)


def _read_kv(path):
    """File -> {key: (raw value, line number)}; duplicate keys rejected."""
    table = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for ln, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{ln}: expected 'key = value', got {body!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if not key or not raw:
            raise ConfigError(f"{path}:{ln}: empty key or value")
        if key in table:
            raise ConfigError(f"{path}:{ln}: duplicate key {key!r}")
        table[key] = (raw, ln)
    return table


def _want_float(kv, key, positive=False, nonnegative=False):
    raw, ln = kv[key]
    try:
        val = float(raw)
    except ValueError:
        raise ConfigError(f"line {ln}: {key} = {raw!r} is not a number") from None
    if positive and val <= 0:
        raise ConfigError(f"line {ln}: {key} must be > 0, got {raw}")
    if nonnegative and val < 0:
        raise ConfigError(f"line {ln}: {key} must be >= 0, got {raw}")
    return val


def _want_int(kv, key, minimum=None):
    raw, ln = kv[key]
    try:
        val = int(raw)
    except ValueError:
        raise ConfigError(f"line {ln}: {key} = {raw!r} is not an integer") from None
    if minimum is not None and val < minimum:
        raise ConfigError(f"line {ln}: {key} must be >= {minimum}, got {raw}")
    return val


def _want_list(kv, key, cast):
    raw, ln = kv[key]
    try:
        return [cast(tok.strip()) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"line {ln}: {key} = {raw!r} is not a comma list") from None


def _build_scenario(kv, path) -> ScenarioConfig:
    if "preset" not in kv:
        raise ConfigError(f"{path}: missing required key 'preset' (one of {PRESETS})")
    preset, preset_ln = kv["preset"]
    if preset not in PRESETS:
        raise ConfigError(
            f"line {preset_ln}: unknown preset {preset!r}; choose from {PRESETS}"
        )

    for key, (_raw, ln) in kv.items():
        if key != "preset" and key not in _KNOWN_KEYS:
            raise ConfigError(f"line {ln}: unknown key {key!r}")

    merged = dict(_BASE_DEFAULTS)
    merged.update(_PRESET_OVERRIDES[preset])
    filled = {k: (v, 0) for k, v in merged.items()}
    filled.update(kv)
    kv = filled

    dim = _want_int(kv, "grid.dim", minimum=1)
    if dim not in (1, 2):
        raise ConfigError(f"line {kv['grid.dim'][1]}: grid.dim must be 1 or 2")
    lengths = _want_list(kv, "grid.lengths", float)
    cells = _want_list(kv, "grid.cells", int)
    try:
        grid = build_grid(dim, lengths, cells)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None

    try:
        params = ModelParams(
            chi=_want_float(kv, "params.chi", nonnegative=True),
            xi1=_want_float(kv, "params.xi1", nonnegative=True),
            xi2=_want_float(kv, "params.xi2", nonnegative=True),
            d=_want_float(kv, "params.d", positive=True),
            a=_want_float(kv, "params.a", nonnegative=True),
            mu=_want_float(kv, "params.mu", nonnegative=True),
            theta=_want_float(kv, "params.theta"),
            n_dim=dim,
        )
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from None

    raw_iter, _ = kv["solver.elliptic_max_iterations"]
    max_iter = None if raw_iter == "auto" else _want_int(kv, "solver.elliptic_max_iterations", minimum=1)
    scheme, scheme_ln = kv["solver.flux_scheme"]
    try:
        solver = SolverConfig(
            dt=_want_float(kv, "solver.dt", positive=True),
            t_end=_want_float(kv, "solver.t_end", positive=True),
            cfl_safety=_want_float(kv, "solver.cfl_safety", positive=True),
            flux_scheme=scheme,
            blowup_threshold=_want_float(kv, "solver.blowup_threshold", positive=True),
            record_every=_want_int(kv, "solver.record_every", minimum=1),
            elliptic=EllipticConfig(
                tolerance=_want_float(kv, "solver.elliptic_tolerance", positive=True),
                max_iterations=max_iter,
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"solver (near line {scheme_ln}): {exc}") from None

    seed = _want_int(kv, "seed", minimum=0)

    try:
        initial = InitialSpec(
            profile=kv["init.profile"][0],
            base=_want_float(kv, "init.base"),
            amplitude=_want_float(kv, "init.amplitude"),
            seed=seed,
            v_profile=(None if kv["init.v_profile"][0] == "same" else kv["init.v_profile"][0]),
            v_base=(None if kv["init.v_base"][0] == "same" else _want_float(kv, "init.v_base")),
            v_amplitude=(None if kv["init.v_amplitude"][0] == "same" else _want_float(kv, "init.v_amplitude")),
        )
    except ValueError as exc:
        raise ConfigError(f"init: {exc}") from None

    ws_raw = kv["fit.window_start"][0]
    we_raw = kv["fit.window_end"][0]
    if (ws_raw == "auto") != (we_raw == "auto"):
        raise ConfigError("fit.window_start and fit.window_end must be set together")
    fit_window = None
    if ws_raw != "auto":
        fit_window = (
            _want_float(kv, "fit.window_start"),
            _want_float(kv, "fit.window_end"),
        )
        if not fit_window[0] < fit_window[1]:
            raise ConfigError(f"fit window must satisfy start < end, got {fit_window}")

    cfg = ScenarioConfig(
        preset=preset,
        seed=seed,
        out_dir=kv["out"][0],
        grid=grid,
        params=params,
        solver=solver,
        initial=initial,
        fit_column=kv["fit.column"][0],
        fit_window=fit_window,
    )
    _check_preset_constraints(cfg)
    return cfg


def _check_preset_constraints(cfg: ScenarioConfig) -> None:
    p = cfg.params
    preset = cfg.preset
    if preset == "C1_no_mitosis" and (p.a != 0.0 or p.mu != 0.0):
        raise ConfigError(
            "preset C1_no_mitosis requires params.a = 0 and params.mu = 0 "
            "(growth-free convergence scenario)"
        )
    if preset == "C2_logistic":
        if p.a <= 0.0:
            raise ConfigError(
                "preset C2_logistic requires params.a > 0: the carrying state "
                "b = (a/mu)^(1/theta) degenerates to 0 at a = 0"
            )
        if p.mu <= 0.0:
            raise ConfigError("preset C2_logistic requires params.mu > 0")
        if p.theta < 1.0:
            raise ConfigError("preset C2_logistic requires params.theta >= 1")
    if preset == "chi_zero_corollary" and p.chi != 0.0:
        raise ConfigError("preset chi_zero_corollary requires params.chi = 0")
    if preset == "R3_theta_gt1":
        if p.theta <= 1.0:
            raise ConfigError("preset R3_theta_gt1 requires params.theta > 1")
        if p.mu <= 0.0:
            raise ConfigError("preset R3_theta_gt1 requires params.mu > 0")
    if preset == "heat_oracle" and (p.chi or p.xi1 or p.xi2 or p.a or p.mu):
        raise ConfigError(
            "preset heat_oracle requires chi = xi1 = xi2 = a = mu = 0 "
            "(pure diffusion oracle)"
        )


def parse_config(path) -> ScenarioConfig:
    """Parse a scenario file. Files with sweep.* keys need the sweep command."""
    kv = _read_kv(path)
    sweep_keys = [k for k in kv if k.startswith("sweep.")]
    if sweep_keys:
        raise ConfigError(
            f"{path}: sweep keys {sweep_keys} present; use the 'sweep' subcommand"
        )
    return _build_scenario(kv, path)


def parse_sweep(path) -> SweepSpec:
    """Parse a sweep file: a scenario plus sweep.<param> = v1, v2, ... axes."""
    kv = _read_kv(path)
    axes = []
    max_parallel = int(_SWEEP_DEFAULTS["sweep.max_parallel"])
    max_points = int(_SWEEP_DEFAULTS["sweep.max_points"])
    scenario_kv = {}
    for key, (raw, ln) in kv.items():
        if not key.startswith("sweep."):
            scenario_kv[key] = (raw, ln)
            continue
        target = key[len("sweep."):]
        if target == "max_parallel":
            max_parallel = _want_int(kv, key, minimum=1)
        elif target == "max_points":
            max_points = _want_int(kv, key, minimum=1)
        elif target.startswith(_SWEEPABLE_PREFIXES) and target in _KNOWN_KEYS:
            values = _want_list(kv, key, float)
            if not values:
                raise ConfigError(f"line {ln}: empty sweep axis {key}")
            axes.append((target, tuple(values)))
        else:
            raise ConfigError(f"line {ln}: {target!r} is not a sweepable key")
    if not axes:
        raise ConfigError(f"{path}: no sweep axes (add e.g. sweep.params.chi = 0.1, 0.5)")
    n_points = math.prod(len(vals) for _, vals in axes)
    if n_points > max_points:
        raise ConfigError(
            f"{path}: sweep has {n_points} points, above the cap {max_points}"
        )
    base = _build_scenario(dict(scenario_kv), path)
    return SweepSpec(base, tuple(axes), max_parallel, max_points, dict(scenario_kv))


def scenario_with_overrides(base_keys: dict, overrides: dict[str, float], path="<sweep>") -> ScenarioConfig:
    """Rebuild a scenario with swept values substituted (full revalidation)."""
    kv = dict(base_keys)
    for key, value in overrides.items():
        kv[key] = (repr(float(value)), 0)
    return _build_scenario(kv, path)
