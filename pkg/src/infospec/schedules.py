"""Gamma and split-point schedules over block-length grids."""
from __future__ import annotations

import numpy as np

from .errors import ScheduleError


def resolve_gamma_schedule(spec, n_grid) -> np.ndarray:
    """Materialize a schedule spec on a grid.

    Accepted forms: "inv_sqrt", {"constant": g}, {"power": p} for n**p,
    {"values": [...]}, or an explicit sequence matching the grid.
    """
    ns = np.asarray(list(n_grid), dtype=float)
    if isinstance(spec, str):
        if spec == "inv_sqrt":
            return ns ** -0.5
        raise ScheduleError(f"unknown schedule preset {spec!r}")
    if isinstance(spec, dict):
        if "constant" in spec:
            return np.full(ns.size, float(spec["constant"]))
        if "power" in spec:
            return ns ** float(spec["power"])
        if "values" in spec:
            spec = spec["values"]
        else:
            raise ScheduleError(f"unintelligible schedule spec {spec!r}")
    values = np.asarray(list(spec), dtype=float)
    if values.size != ns.size:
        raise ScheduleError(
            f"schedule-invalid: {values.size} values for a grid of {ns.size} points"
        )
    return values


def validate_gamma_schedule(n_grid, gammas, sweep: bool = True) -> None:
    """Numeric check of the limit requirements on the supplied grid.

    A sweep schedule must be positive, trend to zero, while n*gamma_n grows.
    Single evaluations only need positivity.
    """
    ns = np.asarray(list(n_grid), dtype=float)
    g = np.asarray(list(gammas), dtype=float)
    if np.any(g <= 0):
        raise ScheduleError("schedule-invalid: gamma_n must be positive")
    if not sweep or ns.size < 2:
        return
    if np.any(np.diff(ns) <= 0):
        raise ScheduleError("schedule-invalid: n-grid must be strictly increasing")
    slope_g = np.polyfit(ns, g, 1)[0]
    if not (g[-1] < g[0] and slope_g < 0):
        raise ScheduleError("schedule-invalid: gamma_n does not trend to zero on this grid")
    ng = ns * g
    slope_ng = np.polyfit(ns, ng, 1)[0]
    if not (ng[-1] > ng[0] and slope_ng > 0):
        raise ScheduleError("schedule-invalid: n * gamma_n does not diverge on this grid")


def resolve_c_schedule(spec, n_grid, midpoint=None) -> np.ndarray:
    """Split-point schedule; None falls back to the supplied midpoint value."""
    ns = np.asarray(list(n_grid), dtype=float)
    if spec is None or spec == "midpoint":
        if midpoint is None:
            raise ScheduleError("schedule-invalid: no c_n given and no midpoint available")
        return np.full(ns.size, float(midpoint))
    if isinstance(spec, dict):
        if "constant" in spec:
            return np.full(ns.size, float(spec["constant"]))
        if "values" in spec:
            spec = spec["values"]
        else:
            raise ScheduleError(f"unintelligible c schedule {spec!r}")
    if isinstance(spec, (int, float)):
        return np.full(ns.size, float(spec))
    values = np.asarray(list(spec), dtype=float)
    if values.size != ns.size:
        raise ScheduleError("schedule-invalid: c schedule length mismatch")
    return values
