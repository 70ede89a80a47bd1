"""Unit-commitment instances, schedules, feasibility checks and synthetic data."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

FEAS_TOL = 1e-6

GEN_FIELDS = (
    "no_load_cost",
    "marginal_cost",
    "startup_cost",
    "p_min",
    "p_max",
    "ramp_up",
    "ramp_down",
    "startup_ramp",
    "shutdown_ramp",
    "min_up",
    "min_down",
    "initial_on",
    "initial_power",
)


@dataclass(frozen=True)
class GeneratorSpec:
    no_load_cost: float
    marginal_cost: float
    startup_cost: float
    p_min: float
    p_max: float
    ramp_up: float
    ramp_down: float
    startup_ramp: float
    shutdown_ramp: float
    min_up: int
    min_down: int
    initial_on: bool = True
    initial_power: float = 0.0

    def __post_init__(self):
        problems = self.invariant_violations()
        if problems:
            raise ValueError("invalid GeneratorSpec: " + "; ".join(problems))

    def invariant_violations(self) -> list[str]:
        out = []
        if not 0 < self.p_min <= self.p_max:
            out.append("need 0 < p_min <= p_max")
        if self.startup_ramp < self.p_min or self.shutdown_ramp < self.p_min:
            out.append("startup/shutdown ramp below p_min")
        if min(self.no_load_cost, self.marginal_cost, self.startup_cost) < 0:
            out.append("negative cost")
        if min(self.ramp_up, self.ramp_down) < 0:
            out.append("negative ramp")
        if int(self.min_up) != self.min_up or int(self.min_down) != self.min_down:
            out.append("min up/down must be integers")
        if self.min_up < 1 or self.min_down < 1:
            out.append("min up/down must be >= 1")
        if not self.initial_on and self.initial_power != 0:
            out.append("initially off generator with nonzero power")
        if self.initial_on and not self.p_min <= self.initial_power <= self.p_max:
            out.append("initial power outside [p_min, p_max]")
        return out

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in GEN_FIELDS}


@dataclass(frozen=True)
class DemandProfile:
    demand: np.ndarray
    reserve: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.demand, dtype=float)
        r = np.asarray(self.reserve, dtype=float)
        if d.shape != r.shape or d.ndim != 1:
            raise ValueError("demand and reserve must be 1-d arrays of equal length")
        if np.any(d < 0) or np.any(r < 0) or not (np.all(np.isfinite(d)) and np.all(np.isfinite(r))):
            raise ValueError("demand/reserve entries must be finite and >= 0")
        d.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "demand", d)
        object.__setattr__(self, "reserve", r)


@dataclass(frozen=True)
class UcInstance:
    generators: tuple
    profile: DemandProfile
    n_T: int
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        if len(self.generators) < 1:
            raise ValueError("instance needs at least one generator")
        if len(self.profile.demand) != self.n_T:
            raise ValueError("profile length does not match n_T")

    @property
    def n_G(self) -> int:
        return len(self.generators)

    @property
    def demand(self) -> np.ndarray:
        return self.profile.demand

    @property
    def reserve(self) -> np.ndarray:
        return self.profile.reserve

    @property
    def capacity(self) -> float:
        return float(sum(g.p_max for g in self.generators))

    def capacity_ok(self) -> bool:
        return bool(np.all(self.demand + self.reserve <= self.capacity + FEAS_TOL))

    def linking_rhs(self) -> np.ndarray:
        """Right-hand side of the linking rows: load rows then reserve rows."""
        return np.concatenate([self.demand, self.reserve])


@dataclass
class Schedule:
    on: np.ndarray
    startup: np.ndarray
    shutdown: np.ndarray
    power: np.ndarray

    @classmethod
    def from_commitment(cls, on, power, initial_on: bool) -> "Schedule":
        on = np.asarray(on, dtype=float).round()
        prev = np.concatenate([[1.0 if initial_on else 0.0], on[:-1]])
        diff = on - prev
        return cls(on, np.maximum(diff, 0.0), np.maximum(-diff, 0.0), np.asarray(power, dtype=float))

    @classmethod
    def all_off(cls, n_T: int, initial_on: bool) -> "Schedule":
        return cls.from_commitment(np.zeros(n_T), np.zeros(n_T), initial_on)

    def key(self) -> bytes:
        """Hashable identity used for column deduplication."""
        return self.on.astype(np.int8).tobytes() + np.round(self.power, 9).tobytes()


@dataclass
class UcSolution:
    schedules: list
    total_cost: float


@dataclass(frozen=True)
class Violation:
    family: str
    period: int  # 1-based, 0 for instance-wide
    residual: float
    generator: int | None = None


def linking_contribution(gen: GeneratorSpec, sched: Schedule) -> tuple[np.ndarray, np.ndarray]:
    """Load-row and reserve-row contribution of one generator schedule."""
    return sched.power.copy(), gen.p_max * sched.on - sched.power


def schedule_cost(gen: GeneratorSpec, sched: Schedule) -> float:
    return float(
        gen.no_load_cost * sched.on.sum()
        + gen.marginal_cost * sched.power.sum()
        + gen.startup_cost * sched.startup.sum()
    )


def validate_schedule(gen: GeneratorSpec, sched: Schedule, n_T: int, tol: float = FEAS_TOL) -> list[Violation]:
    arrays = (sched.on, sched.startup, sched.shutdown, sched.power)
    if any(len(a) != n_T for a in arrays):
        raise ValueError("schedule arrays must have length n_T")
    a, up, dn, p = (np.asarray(x, dtype=float) for x in arrays)
    out: list[Violation] = []

    def flag(family, t, res):
        if res > tol:
            out.append(Violation(family, t + 1, float(res)))

    for t in range(n_T):
        for name, v in (("on", a[t]), ("startup", up[t]), ("shutdown", dn[t])):
            flag(f"binary_{name}", t, min(abs(v), abs(v - 1.0)))
        a_prev = (1.0 if gen.initial_on else 0.0) if t == 0 else a[t - 1]
        flag("switching", t, abs(a[t] - a_prev - up[t] + dn[t]))
        flag("switching_exclusive", t, up[t] + dn[t] - 1.0)
        flag("power_min", t, gen.p_min * a[t] - p[t])
        flag("power_max", t, p[t] - gen.p_max * a[t])
        flag("power_nonneg", t, -p[t])
        if t >= 1:
            flag("ramp_up", t, p[t] - p[t - 1] - gen.ramp_up * a[t - 1] - gen.startup_ramp * up[t])
            flag("ramp_down", t, p[t - 1] - p[t] - gen.ramp_down * a[t] - gen.shutdown_ramp * dn[t])
        lo_u = max(t - gen.min_up + 1, 0)
        flag("min_up", t, up[lo_u : t + 1].sum() - a[t])
        lo_d = max(t - gen.min_down + 1, 0)
        flag("min_down", t, dn[lo_d : t + 1].sum() - (1.0 - a[t]))
    return out


def _check_shapes(instance: UcInstance, solution: UcSolution):
    if len(solution.schedules) != instance.n_G:
        raise ValueError("need exactly one schedule per generator")
    for s in solution.schedules:
        if len(s.on) != instance.n_T or len(s.power) != instance.n_T:
            raise ValueError("schedule length does not match instance horizon")


def check_system_feasibility(instance: UcInstance, solution: UcSolution, tol: float = FEAS_TOL) -> list[Violation]:
    _check_shapes(instance, solution)
    out = []
    for g, (gen, sched) in enumerate(zip(instance.generators, solution.schedules)):
        for v in validate_schedule(gen, sched, instance.n_T, tol):
            out.append(Violation(v.family, v.period, v.residual, g))
    supply = sum(s.power for s in solution.schedules)
    spare = sum(gen.p_max * s.on - s.power for gen, s in zip(instance.generators, solution.schedules))
    for t in range(instance.n_T):
        if instance.demand[t] - supply[t] > tol:
            out.append(Violation("load_balance", t + 1, float(instance.demand[t] - supply[t])))
        if instance.reserve[t] - spare[t] > tol:
            out.append(Violation("reserve", t + 1, float(instance.reserve[t] - spare[t])))
    return out


def evaluate_cost(instance: UcInstance, solution: UcSolution) -> float:
    _check_shapes(instance, solution)
    return float(sum(schedule_cost(g, s) for g, s in zip(instance.generators, solution.schedules)))


# --- synthetic data -------------------------------------------------------


def generate_fleet(n_generators: int, seed: int, initial_on: bool = True) -> list[GeneratorSpec]:
    """Seeded heterogeneous thermal fleet.

    Units start on at p_min with no residual min-up/down obligation unless
    ``initial_on`` is False.
    """
    if n_generators < 1:
        raise ValueError("need at least one generator")
    rng = np.random.default_rng(seed)
    fleet = []
    for _ in range(n_generators):
        p_max = float(math.exp(rng.uniform(math.log(50.0), math.log(600.0))))
        p_min = float(rng.uniform(0.25, 0.5) * p_max)
        c_mr = float(rng.uniform(10.0, 50.0))
        c_nl = float(rng.uniform(0.1, 0.3) * c_mr * p_max)
        c_up = float(rng.uniform(1.0, 10.0) * c_nl)
        ramp = float(rng.uniform(0.2, 0.5) * p_max)
        su = float(p_min + rng.uniform(0.0, 1.0) * (p_max - p_min) * 0.5)
        t_u = int(rng.integers(1, 9))
        t_d = int(rng.integers(1, 9))
        fleet.append(
            GeneratorSpec(
                no_load_cost=c_nl,
                marginal_cost=c_mr,
                startup_cost=c_up,
                p_min=p_min,
                p_max=p_max,
                ramp_up=ramp,
                ramp_down=ramp,
                startup_ramp=su,
                shutdown_ramp=su,
                min_up=t_u,
                min_down=t_d,
                initial_on=initial_on,
                initial_power=p_min if initial_on else 0.0,
            )
        )
    return fleet


def _daily_shape(rng: np.random.Generator) -> np.ndarray:
    h = np.arange(24)
    morning = rng.uniform(7.0, 9.5)
    evening = rng.uniform(17.0, 19.5)
    shape = (
        0.62
        + rng.uniform(0.18, 0.28) * np.exp(-0.5 * ((h - morning) / rng.uniform(1.5, 2.5)) ** 2)
        + rng.uniform(0.28, 0.40) * np.exp(-0.5 * ((h - evening) / rng.uniform(1.8, 3.0)) ** 2)
        + 0.12 * np.exp(-0.5 * ((h - 13.0) / 3.5) ** 2)
        - 0.10 * np.exp(-0.5 * ((h - 3.5) / 2.0) ** 2)
    )
    return shape


def generate_demand(
    fleet: list[GeneratorSpec],
    n_T: int,
    n_days_pool: int,
    seed: int,
    reserve_fraction: float = 0.10,
) -> list[DemandProfile]:
    """Pool of diurnal demand profiles scaled to the fleet capacity.

    The pool is scaled so that the median daily peak equals half the total
    capacity; entries are then clipped so demand plus reserve fits the fleet.
    """
    if not fleet:
        raise ValueError("empty fleet")
    if n_T % 24 or n_T <= 0:
        raise ValueError("n_T must be a positive multiple of 24")
    if n_days_pool < 1:
        raise ValueError("need at least one profile")
    rng = np.random.default_rng(seed)
    n_days = n_T // 24
    raw = []
    for _ in range(n_days_pool):
        # seasonal level persists over the days of one profile
        level = rng.uniform(0.7, 1.3)
        days = []
        for _ in range(n_days):
            day = _daily_shape(rng) * level * rng.uniform(0.93, 1.07)
            noise = np.convolve(rng.normal(0.0, 0.02, 24 + 4), np.ones(5) / 5, mode="valid")
            days.append(day * (1.0 + noise))
            level *= rng.uniform(0.97, 1.03)
        raw.append(np.concatenate(days))
    raw = np.array(raw)
    capacity = sum(g.p_max for g in fleet)
    daily_peaks = raw.reshape(n_days_pool, n_days, 24).max(axis=2)
    scaling = 0.5 * capacity / float(np.median(daily_peaks))
    demand = np.clip(raw * scaling, 0.0, capacity / (1.0 + reserve_fraction))
    return [DemandProfile(d, reserve_fraction * d) for d in demand]


def make_instances(n_generators: int, n_T: int, n_instances: int, fleet_seed: int, demand_seed: int,
                   reserve_fraction: float = 0.10) -> list[UcInstance]:
    fleet = generate_fleet(n_generators, fleet_seed)
    profiles = generate_demand(fleet, n_T, n_instances, demand_seed, reserve_fraction)
    return [
        UcInstance(fleet, prof, n_T, meta={"seed": demand_seed, "index": i, "fleet_seed": fleet_seed})
        for i, prof in enumerate(profiles)
    ]


# --- JSON I/O ---------------------------------------------------------------


def _encode(obj) -> str:
    # canonical JSON with 17-significant-digit floats
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError("non-finite float in JSON output")
        return format(x, ".17g") if x != int(x) or abs(x) >= 1e16 else format(x, ".1f")
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if obj is None:
        return "null"
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def canonical_json(obj) -> str:
    return _encode(obj)


def instance_to_dict(instance: UcInstance) -> dict:
    meta = {"seed": int(instance.meta.get("seed", 0)), "scaling": float(instance.meta.get("scaling", 1.0))}
    for k, v in instance.meta.items():
        meta.setdefault(k, v)
    return {
        "n_T": instance.n_T,
        "generators": [g.to_dict() for g in instance.generators],
        "demand": list(instance.demand),
        "reserve": list(instance.reserve),
        "meta": meta,
    }


def instance_to_json(instance: UcInstance) -> str:
    return canonical_json(instance_to_dict(instance)) + "\n"


def instance_from_dict(d: dict) -> UcInstance:
    gens = []
    for g in d["generators"]:
        kw = {f.name: g[f.name] for f in fields(GeneratorSpec)}
        kw["min_up"] = int(kw["min_up"])
        kw["min_down"] = int(kw["min_down"])
        kw["initial_on"] = bool(kw["initial_on"])
        gens.append(GeneratorSpec(**kw))
    prof = DemandProfile(np.array(d["demand"], dtype=float), np.array(d["reserve"], dtype=float))
    return UcInstance(gens, prof, int(d["n_T"]), meta=dict(d.get("meta", {})))


def save_instance(instance: UcInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(instance_to_json(instance))


def load_instance(path) -> UcInstance:
    with open(path, encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))


def fleet_fingerprint(fleet) -> int:
    """64-bit hash of the generator specs, used to bind trained models to a fleet."""
    text = canonical_json([g.to_dict() for g in fleet])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")
