"""Per-dimension parameter schedule (bandwidths, radii, count cutoffs)."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

SPHERE_6_VOLUME = 16 * math.pi**3 / 15


class InvalidDims(ValueError):
    pass


class InconsistentOverride(ValueError):
    pass


def _per_dim(value, d: int) -> float:
    """Read a per-dimension constant given as a scalar, a sequence or a mapping."""
    if isinstance(value, dict):
        if d in value:
            return float(value[d])
        if str(d) in value:
            return float(value[str(d)])
        # dimensions past the last given entry reuse it
        keys = sorted(int(k) for k in value)
        below = [k for k in keys if k <= d]
        k = below[-1] if below else keys[0]
        return float(value[k] if k in value else value[str(k)])
    if isinstance(value, (list, tuple)):
        return float(value[min(d, len(value)) - 1])
    return float(value)


@dataclass(frozen=True)
class ModelConstants:
    """Model and tuning constants entering the bandwidth formula.

    ``upsilon``, ``zeta`` and ``r_factor`` may be per-dimension (sequence
    indexed from d=1 or mapping ``{d: value}``); a scalar applies to every
    dimension. ``r_factor`` is r_d / h_d, 1 in the analysis.
    """

    kappa_max: float = 1.0
    a_min: float = 1.0
    a_max: float = 1.0
    nu_max: float = SPHERE_6_VOLUME
    alpha_min: float = 0.5
    gamma: float = 1.0
    upsilon: object = 1.0
    sigma: float = 3.0
    zeta: object = 1.0
    q: float = 1.0
    r_factor: object = 1.0

    def __post_init__(self):
        for name in ("kappa_max", "a_min", "a_max", "nu_max", "gamma", "sigma", "q"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.alpha_min <= 1:
            raise ValueError("alpha_min must lie in (0, 1]")
        if self.a_min > self.a_max:
            raise ValueError("a_min must not exceed a_max")

    def upsilon_at(self, d: int) -> float:
        return _per_dim(self.upsilon, d)

    def zeta_at(self, d: int) -> float:
        return _per_dim(self.zeta, d)

    def r_factor_at(self, d: int) -> float:
        return _per_dim(self.r_factor, d)

    def check_model_faithful(self):
        if self.nu_max < SPHERE_6_VOLUME:
            raise ValueError(f"nu_max must be at least 16 pi^3 / 15 = {SPHERE_6_VOLUME:.4f}")


# Desk-scale constants. The d = 1 bandwidth keeps the raw formula with
# upsilon * gamma / a_min = 1; for d >= 2 the leading factor 48 d (1 + 1/d) is
# far too large for a few thousand points, hence the smaller upsilon there.
# The candidate tuple count grows like r^(2d), so for d >= 2 the tuple radius
# is a third of the slab width, which still leaves many tuples per point.
DESK_CONSTANTS = ModelConstants(
    kappa_max=1.0, a_min=1.0, gamma=1.0, upsilon={1: 1.0, 2: 0.003}, sigma=3.0, zeta=1.0,
    r_factor={1: 1.0, 2: 1 / 3},
)

SCHEDULE_FIELDS = ("h_par", "h_perp", "r", "n_min", "delta", "kappa")


@dataclass(frozen=True)
class ParamSchedule:
    """Per-dimension parameters; entry ``k`` of each tuple is dimension ``k + 1``."""

    d_max: int
    h_par: tuple
    h_perp: tuple
    r: tuple
    n_min: tuple
    delta: tuple
    kappa: tuple
    constants: ModelConstants | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.d_max < 1:
            raise InvalidDims(f"d_max must be at least 1, got {self.d_max}")
        for name in SCHEDULE_FIELDS:
            vals = tuple(getattr(self, name))
            if len(vals) != self.d_max:
                raise ValueError(f"{name} needs {self.d_max} entries, got {len(vals)}")
            object.__setattr__(self, name, vals)
        for d in range(1, self.d_max + 1):
            p = self.at(d)
            if not (p["h_par"] > 0 and p["r"] > 0 and p["delta"] > 0 and p["kappa"] > 0):
                raise ValueError(f"non-positive parameter at d={d}: {p}")
            if p["n_min"] < 2 or int(p["n_min"]) != p["n_min"]:
                raise ValueError(f"n_min must be an integer >= 2 at d={d}, got {p['n_min']}")
            if not math.isclose(p["h_perp"], p["kappa"] * p["h_par"] ** 2, rel_tol=1e-9):
                raise InconsistentOverride(f"h_perp != kappa * h_par^2 at d={d}")

    def at(self, d: int) -> dict:
        if not 1 <= d <= self.d_max:
            raise InvalidDims(f"dimension {d} outside 1..{self.d_max}")
        return {name: getattr(self, name)[d - 1] for name in SCHEDULE_FIELDS}

    def check_ambient(self, D: int):
        if self.d_max > D - 1:
            raise InvalidDims(f"d_max={self.d_max} exceeds D-1={D - 1}")

    def to_dict(self) -> dict:
        out = {"d_max": self.d_max}
        for name in SCHEDULE_FIELDS:
            out[name] = list(getattr(self, name))
        if self.constants is not None:
            out["constants"] = constants_to_dict(self.constants)
        return out


def constants_to_dict(c: ModelConstants) -> dict:
    out = asdict(c)
    for name in ("upsilon", "zeta", "r_factor"):
        if isinstance(out[name], dict):
            out[name] = {str(k): v for k, v in out[name].items()}
    return out


def constants_from_dict(data: dict) -> ModelConstants:
    known = {k: v for k, v in data.items() if k in ModelConstants.__dataclass_fields__}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown constant(s): {sorted(unknown)}")
    for name in ("upsilon", "zeta", "r_factor"):
        if isinstance(known.get(name), dict):
            known[name] = {int(k): float(v) for k, v in known[name].items()}
    return ModelConstants(**known)


def bandwidth(n: int, d: int, c: ModelConstants) -> float:
    """h_d = 48 d (1 + 1/d) / kappa_max * (upsilon gamma log n / (a_min n))^(1/d)."""
    scale = c.upsilon_at(d) * c.gamma * math.log(n) / (c.a_min * n)
    return 48 * d * (1 + 1 / d) / c.kappa_max * scale ** (1 / d)


def count_cutoff(n: int, c: ModelConstants) -> int:
    return max(2, math.ceil(c.sigma * c.gamma * math.log(n)))


def default_schedule(n: int, D: int, c: ModelConstants, d_max: int | None = None) -> ParamSchedule:
    """Schedule with r_d = r_factor_d h_d, kappa_d = kappa_max, n_d = sigma gamma log n and
    delta_d = zeta_d kappa_max h_d^2 (natural logarithm)."""
    if n < 3:
        raise ValueError("need at least 3 points to set a schedule")
    d_max = D - 1 if d_max is None else d_max
    if not 1 <= d_max <= D - 1:
        raise InvalidDims(f"d_max must lie in [1, {D - 1}], got {d_max}")
    h = [bandwidth(n, d, c) for d in range(1, d_max + 1)]
    n_min = count_cutoff(n, c)
    return ParamSchedule(
        d_max=d_max,
        h_par=h,
        h_perp=[c.kappa_max * hd**2 for hd in h],
        r=[c.r_factor_at(d) * h[d - 1] for d in range(1, d_max + 1)],
        n_min=[n_min] * d_max,
        delta=[c.zeta_at(d) * c.kappa_max * h[d - 1] ** 2 for d in range(1, d_max + 1)],
        kappa=[c.kappa_max] * d_max,
        constants=c,
    )


def _override_value(value, d: int):
    if isinstance(value, dict):
        if d in value:
            return value[d]
        return value.get(str(d))
    if isinstance(value, (list, tuple)):
        return value[d - 1] if d <= len(value) else None
    return value


def practical_schedule(
    n: int,
    D: int,
    overrides: dict | None = None,
    d_max: int | None = None,
    constants: ModelConstants = DESK_CONSTANTS,
) -> ParamSchedule:
    """Desk-scale schedule, with per-dimension ``overrides`` applied verbatim.

    ``overrides`` maps schedule field names to a scalar (every dimension), a
    list indexed from d=1, or a mapping ``{d: value}``. Besides the schedule
    fields, ``r_factor`` rescales r_d relative to the (possibly overridden)
    h_d; it defaults to the constants' own. When h_par or kappa are overridden but h_perp is not, h_perp is
    recomputed as kappa * h_par^2; delta likewise follows zeta_d kappa h_d^2.
    """
    overrides = dict(overrides or {})
    d_max = overrides.pop("d_max", d_max)
    unknown = set(overrides) - set(SCHEDULE_FIELDS) - {"r_factor"}
    if unknown:
        raise ValueError(f"unknown override(s): {sorted(unknown)}")
    base = default_schedule(n, D, constants, d_max)
    cols = {name: list(getattr(base, name)) for name in SCHEDULE_FIELDS}
    for d in range(1, base.d_max + 1):
        i = d - 1
        get = {name: _override_value(overrides.get(name), d) for name in overrides}
        for name in ("h_par", "kappa", "n_min"):
            if get.get(name) is not None:
                cols[name][i] = get[name]
        if get.get("n_min") is not None and get["n_min"] < 2:
            raise InconsistentOverride("n_min must be at least 2: co-detection needs the tuple itself")
        expected_perp = cols["kappa"][i] * cols["h_par"][i] ** 2
        if get.get("h_perp") is not None:
            if (get.get("h_par") is not None and get.get("kappa") is not None
                    and not math.isclose(get["h_perp"], expected_perp, rel_tol=1e-9)):
                raise InconsistentOverride(f"h_perp != kappa * h_par^2 at d={d}")
            cols["h_perp"][i] = get["h_perp"]
            if get.get("kappa") is None:
                cols["kappa"][i] = get["h_perp"] / cols["h_par"][i] ** 2
            elif get.get("h_par") is None:
                cols["h_par"][i] = math.sqrt(get["h_perp"] / cols["kappa"][i])
        else:
            cols["h_perp"][i] = expected_perp
        if get.get("r") is not None:
            cols["r"][i] = get["r"]
        else:
            factor = get.get("r_factor") or constants.r_factor_at(d)
            cols["r"][i] = cols["h_par"][i] * factor
        if get.get("delta") is not None:
            cols["delta"][i] = get["delta"]
        else:
            cols["delta"][i] = constants.zeta_at(d) * cols["kappa"][i] * cols["h_par"][i] ** 2
    for name in ("h_par", "h_perp", "r", "delta", "kappa"):
        if any(not (v >= 0 and math.isfinite(v)) for v in cols[name]):
            raise InconsistentOverride(f"{name} overrides must be positive")
    cols["n_min"] = [int(v) for v in cols["n_min"]]
    return ParamSchedule(d_max=base.d_max, constants=constants, **cols)


def theory_constants(
    D: int, alpha_min: float, q: float = 1.0, upsilon: float = 1.0, **kw
) -> ModelConstants:
    """Constants meeting the sufficient conditions of the consistency analysis.

    gamma = max(600 D^2 log D, 56 q / 3) / alpha_min, sigma = 4 D and
    zeta_d = 1 / (256 d^2 (1 + 1/(8d))^2). upsilon must be supplied: only its
    existence is established.
    """
    gamma = max(600 * D**2 * math.log(D), 56 * q / 3) / alpha_min
    zeta = {d: 1 / (256 * d**2 * (1 + 1 / (8 * d)) ** 2) for d in range(1, D)}
    c = ModelConstants(alpha_min=alpha_min, q=q, gamma=gamma, sigma=4 * D, zeta=zeta, upsilon=upsilon, **kw)
    c.check_model_faithful()
    return c


def schedule_from_dict(data: dict, n: int | None = None, D: int | None = None) -> ParamSchedule:
    """Parse a schedule configuration.

    Either a full explicit schedule (all of h_par, h_perp, r, n_min, delta,
    kappa and d_max), or ``{"mode": "practical" | "default", "d_max": ...,
    "overrides": {...}, "constants": {...}}`` which needs ``n`` and ``D``.
    """
    if all(name in data for name in SCHEDULE_FIELDS):
        if "d_max" not in data:
            raise ValueError("explicit schedule needs d_max")
        consts = constants_from_dict(data["constants"]) if "constants" in data else None
        return ParamSchedule(
            d_max=int(data["d_max"]),
            constants=consts,
            **{name: list(data[name]) for name in SCHEDULE_FIELDS},
        )
    unknown = set(data) - {"mode", "d_max", "overrides", "constants"}
    if unknown:
        raise ValueError(f"unknown schedule key(s): {sorted(unknown)}")
    if n is None or D is None:
        raise ValueError("a practical schedule needs the sample size and ambient dimension")
    d_max = data.get("d_max")
    if d_max is not None and (int(d_max) < 1 or int(d_max) > D - 1):
        raise InvalidDims(f"d_max must lie in [1, {D - 1}], got {d_max}")
    mode = data.get("mode", "practical")
    consts = constants_from_dict(data["constants"]) if "constants" in data else DESK_CONSTANTS
    if mode == "default":
        return default_schedule(n, D, consts, d_max)
    if mode != "practical":
        raise ValueError(f"unknown schedule mode {mode!r}")
    return practical_schedule(n, D, data.get("overrides"), d_max=d_max, constants=consts)


def load_schedule(path, n: int | None = None, D: int | None = None) -> ParamSchedule:
    with open(Path(path)) as f:
        return schedule_from_dict(json.load(f), n=n, D=D)


def save_schedule(sched: ParamSchedule, path):
    with open(Path(path), "w") as f:
        json.dump(sched.to_dict(), f, indent=2)
        f.write("\n")


def with_overrides(sched: ParamSchedule, **fields) -> ParamSchedule:
    return replace(sched, **fields)
