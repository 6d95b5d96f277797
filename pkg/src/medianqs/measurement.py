"""Pointer-model simultaneous measurement of two observables on the sphere.

The pointer momenta stay at eps and the pointer positions integrate F_i
along the sphere trajectory, so the measured outputs are time averages

    F'_i(w) = (1/T) int_0^T F_i(g_{eps t} w) dt,

and only the sphere flow of H = F1 + F2 is integrated. Everything is done in
the rescaled time s = eps t on [0, tau], tau = eps T.

Two integrators are provided. ``direct`` takes uniform RK4 steps over the
whole window. ``periodic`` uses per-point steps sized by the local turning
rate of the orbit and, since every non-critical orbit on the sphere is
closed, detects the first return to the start point; the window integral is
then (whole periods) x (one-period integral) + (remainder integral). Its cost
does not grow with tau.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import __version__
from .dynamics import FlowSpec, _normalize, as_field, flow, hamiltonian_vector_field, rk4_step, turning_rate
from .errors import BoundViolationError, PiTooSmallError
from .expr import Expression, as_expression, evaluate, lambdify
from .mesh import build_icosphere, oscillation, sample

TOL_BOUND = 0.03
SCHEMA_VERSION = 1
_GOLDEN = math.pi * (3.0 - math.sqrt(5.0))


# ---------------------------------------------------------------- initial points


@dataclass(frozen=True)
class PointGrid:
    """Initial points: a Fibonacci spiral plus optional bands around great circles.

    A band around the circle orthogonal to ``axis`` has its offsets from the
    circle spread geometrically between ``band_min`` and ``band_max``, with
    golden-angle longitudes, so slow orbits next to a circle of fixed points
    are sampled at every scale.
    """

    n_fibonacci: int = 2000
    n_band: int = 0
    band_axes: tuple = ()
    band_min: float = 1e-6
    band_max: float = 0.1
    mesh_subdiv: int | None = None

    @property
    def size(self) -> int:
        n = self.n_fibonacci + self.n_band * len(self.band_axes)
        if self.mesh_subdiv is not None:
            n += build_icosphere(self.mesh_subdiv).n_vertices
        return n

    def points(self) -> np.ndarray:
        parts = [fibonacci_sphere(self.n_fibonacci)]
        for axis in self.band_axes:
            parts.append(_band(self.n_band, np.asarray(axis, dtype=float), self.band_min, self.band_max))
        if self.mesh_subdiv is not None:
            parts.append(build_icosphere(self.mesh_subdiv).vertices)
        return np.concatenate(parts)

    def describe(self) -> dict:
        d = asdict(self)
        d["band_axes"] = [list(map(float, a)) for a in self.band_axes]
        d["size"] = self.size
        return d


def fibonacci_sphere(n: int) -> np.ndarray:
    if n <= 0:
        return np.empty((0, 3))
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(1.0 - z * z)
    phi = i * _GOLDEN
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _band(n: int, axis: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if n <= 0:
        return np.empty((0, 3))
    axis = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    j = np.arange(n)
    h = lo * (hi / lo) ** (j / max(n - 1, 1))
    h = np.where(j % 2 == 0, h, -h)
    phi = j * _GOLDEN
    r = np.sqrt(1.0 - h * h)
    return (r * np.cos(phi))[:, None] * e1 + (r * np.sin(phi))[:, None] * e2 + h[:, None] * axis


def fixed_circle_axes(h, n: int = 64, tol: float = 1e-9) -> tuple:
    """Coordinate axes whose equator consists of fixed points of the flow of ``h``."""
    axes = []
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    for axis in np.eye(3):
        e1, e2 = np.roll(axis, 1), np.roll(axis, 2)
        circle = np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2
        if np.max(np.linalg.norm(hamiltonian_vector_field(h, circle), axis=1)) < tol:
            axes.append(tuple(float(a) for a in axis))
    return tuple(axes)


def default_grid(f1, f2, size: int = 2000) -> PointGrid:
    """Fibonacci grid of ``size`` points; half of the budget goes to bands when
    the Hamiltonian F1 + F2 has a coordinate circle of fixed points."""
    h = as_expression(f1) + as_expression(f2)
    axes = fixed_circle_axes(h)
    if not axes:
        return PointGrid(n_fibonacci=size)
    n_band = size // (2 * len(axes))
    return PointGrid(n_fibonacci=size - n_band * len(axes), n_band=n_band, band_axes=axes)


# ---------------------------------------------------------------- time averages


def _values(g, v):
    with np.errstate(all="ignore"):
        return np.broadcast_to(g(v[:, 0], v[:, 1], v[:, 2]), (len(v),)).astype(float)


def _adaptive_integrals(field, g1, g2, w, stops, steps_per_radian, detect_return):
    """Trapezoid integrals of g1, g2 along the orbits started at ``w``.

    ``stops`` has shape (N, K) and is nondecreasing along each row; the
    integrals over [0, stops[i, k]] are returned with shape (N, K, 2). With
    ``detect_return`` the integration of a point ends at its first return to
    the start; stops beyond the return are left as NaN and the period and
    one-period integrals are returned alongside.
    """
    n, n_stops = stops.shape
    out = np.full((n, n_stops, 2), np.nan)
    v = w.copy()
    s = np.zeros(n)
    acc = np.zeros((n, 2))
    cur = np.stack([_values(g1, w), _values(g2, w)], axis=1)
    vel0 = field(w)
    speed0 = np.linalg.norm(vel0, axis=1)
    fixed = speed0 < 1e-14
    tangent = np.zeros_like(w)
    tangent[~fixed] = vel0[~fixed] / speed0[~fixed, None]
    period = np.full(n, np.inf)
    per_int = np.zeros((n, 2))
    steps = np.zeros(n, dtype=np.int64)
    k = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)

    def record(idx):
        # store every stop already reached by the points in ``idx``
        while len(idx):
            kk = k[idx]
            ok = kk < n_stops
            idx, kk = idx[ok], kk[ok]
            reached = stops[idx, kk] <= s[idx]
            idx, kk = idx[reached], kk[reached]
            out[idx, kk] = acc[idx]
            k[idx] += 1

    fx = np.flatnonzero(fixed)
    out[fx] = stops[fx, :, None] * cur[fx, None, :]
    k[fx] = n_stops
    record(rows[~fixed])
    active = k < n_stops
    while active.any():
        idx = np.flatnonzero(active)
        vi = v[idx]
        vel = field(vi)
        speed = np.linalg.norm(vel, axis=1)
        rate = turning_rate(field, vi, vel)
        target = stops[idx, k[idx]]
        remaining = target - s[idx]
        with np.errstate(divide="ignore"):
            dt = np.minimum(1.0 / (steps_per_radian * rate), remaining)
        last = dt >= remaining
        vn = rk4_step(field, vi, dt)
        nxt = np.stack([_values(g1, vn), _values(g2, vn)], axis=1)
        prev = cur[idx]
        hit = np.zeros(len(idx), dtype=bool)
        if detect_return:
            wi = w[idx]
            sp = np.einsum("ij,ij->i", vi - wi, tangent[idx])
            sn = np.einsum("ij,ij->i", vn - wi, tangent[idx])
            cross = (sp < 0) & (sn >= 0) & (steps[idx] >= 2)
            if cross.any():
                theta = np.zeros(len(idx))
                theta[cross] = sp[cross] / (sp[cross] - sn[cross])
                vc = vi + theta[:, None] * (vn - vi)
                chord = np.linalg.norm(vn - vi, axis=1)
                hit = cross & (np.linalg.norm(vc - wi, axis=1) <= 0.5 * chord + 1e-12)
                if hit.any():
                    j = idx[hit]
                    th = theta[hit]
                    part = th * dt[hit]
                    mid = prev[hit] + th[:, None] * (nxt[hit] - prev[hit])
                    period[j] = s[j] + part
                    per_int[j] = acc[j] + 0.5 * part[:, None] * (prev[hit] + mid)
        acc[idx] += 0.5 * dt[:, None] * (prev + nxt)
        s[idx] = np.where(last, target, s[idx] + dt)
        v[idx] = vn
        cur[idx] = nxt
        steps[idx] += 1
        record(idx[last & ~hit])
        active[idx[hit]] = False
        active &= k < n_stops
    return out, period, per_int, steps


def _window_integrals(field, g1, g2, w, taus, steps_per_radian):
    """Integrals over [0, tau] for every tau in ``taus``; shape (N, K, 2)."""
    n = len(w)
    stops = np.broadcast_to(np.asarray(taus, dtype=float), (n, len(taus))).copy()
    out, period, per_int, steps = _adaptive_integrals(field, g1, g2, w, stops, steps_per_radian, True)
    missing = np.isnan(out[:, :, 0])
    todo = np.flatnonzero(missing.any(axis=1))
    closed = 0
    if len(todo):
        p = period[todo, None]
        whole = np.where(missing[todo], np.floor(stops[todo] / p), 0.0)
        rem = np.where(missing[todo], stops[todo] - whole * p, 0.0)
        order = np.argsort(rem, axis=1, kind="stable")
        rem_sorted = np.take_along_axis(rem, order, axis=1)
        part, _, _, steps2 = _adaptive_integrals(field, g1, g2, w[todo], rem_sorted, steps_per_radian, False)
        unsorted = np.empty_like(part)
        np.put_along_axis(unsorted, order[:, :, None], part, axis=1)
        full = whole[:, :, None] * per_int[todo, None, :] + unsorted
        sub = out[todo]
        sub[missing[todo]] = full[missing[todo]]
        out[todo] = sub
        steps[todo] += steps2
        closed = len(todo)
    info = {"closedOrbits": int(np.isfinite(period).sum()), "periodShortcut": closed,
            "maxSteps": int(steps.max()) if n else 0}
    return out, info


def orbit_averages_schedule(
    f1, f2, taus, w: np.ndarray, steps_per_radian: float = 30.0
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Measured outputs for every rescaled duration in ``taus``; arrays of shape (K, N)."""
    f1, f2 = as_expression(f1), as_expression(f2)
    taus = np.asarray(taus, dtype=float)
    if np.any(taus <= 0) or np.any(np.diff(taus) < 0):
        raise ValueError("durations must be positive and nondecreasing")
    w = np.atleast_2d(np.asarray(w, dtype=float))
    field = as_field(f1 + f2)
    out, info = _window_integrals(field, lambdify(f1), lambdify(f2), w, taus, steps_per_radian)
    info = {"method": "periodic", "stepsPerRadian": steps_per_radian, **info}
    avg = out / taus[None, :, None]
    return avg[:, :, 0].T, avg[:, :, 1].T, info


def orbit_averages(
    f1, f2, tau: float, w: np.ndarray, steps_per_radian: float = 30.0, method: str = "periodic"
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Measured outputs (F'_1, F'_2) at initial points ``w`` for rescaled duration tau."""
    f1, f2 = as_expression(f1), as_expression(f2)
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if method == "direct":
        h = as_field(f1 + f2)
        rate = np.max(np.linalg.norm(h(w), axis=1))
        n_steps = max(int(math.ceil(steps_per_radian * rate * tau)), 1)
        m1, m2 = _direct_averages(f1 + f2, f1, f2, w, tau, n_steps)
        return m1, m2, {"method": "direct", "steps": n_steps, "stepsPerRadian": steps_per_radian}
    if method != "periodic":
        raise ValueError(f"unknown method {method!r}")
    m1, m2, info = orbit_averages_schedule(f1, f2, [tau], w, steps_per_radian)
    return m1[0], m2[0], info


def _direct_averages(h, f1, f2, w, tau, n_steps):
    spec = FlowSpec(h, 1.0, tau, n_steps, w)
    traj = flow(spec)
    dt = spec.dt
    out = []
    for f in (f1, f2):
        vals = evaluate(f, traj) * np.ones(traj.shape[:-1])
        out.append(dt * (vals.sum(axis=0) - 0.5 * (vals[0] + vals[-1])) / tau)
    return out[0], out[1]


def measured_output(f1, f2, T: float, epsilon: float, w, steps: int) -> tuple[float, float]:
    """F'_1(w), F'_2(w) from ``steps`` uniform RK4 steps and the trapezoid rule."""
    f1, f2 = as_expression(f1), as_expression(f2)
    w = np.asarray(w, dtype=float)
    if epsilon == 0:
        return evaluate(f1, w), evaluate(f2, w)
    if T <= 0 or epsilon < 0:
        raise ValueError("T and epsilon must be positive")
    traj = flow(FlowSpec(f1 + f2, epsilon, T, steps, w))
    dt = T / steps
    res = []
    for f in (f1, f2):
        vals = evaluate(f, traj)
        res.append(float(dt * (vals.sum() - 0.5 * (vals[0] + vals[-1])) / T))
    return res[0], res[1]


# ---------------------------------------------------------------- records


@lru_cache(maxsize=512)
def _zeta_cached(e: Expression, subdiv: int) -> float:
    from .quasistate import zeta

    return zeta(e, build_icosphere(subdiv))


def pi_value(f1, f2, subdiv: int = 6) -> float:
    f1, f2 = as_expression(f1), as_expression(f2)
    return abs(_zeta_cached(f1 + f2, subdiv) - _zeta_cached(f1, subdiv) - _zeta_cached(f2, subdiv))


def osc_value(f1, f2, subdiv: int = 6) -> float:
    m = build_icosphere(subdiv)
    return oscillation(sample(f1, m), sample(f2, m))


def bound_rhs(pi: float, osc: float, tau: float) -> float:
    return 0.5 * pi - math.sqrt(2.0 * osc / tau)


@dataclass
class MeasurementRecord:
    f1: str
    f2: str
    T: float
    epsilon: float
    grid: dict
    delta: float
    delta_per_observable: tuple
    bound_rhs: float
    pi: float
    osc: float
    integrator: dict
    worst_point: list
    verified: bool = False
    tol_bound: float = TOL_BOUND
    errors: np.ndarray | None = field(default=None, repr=False)

    @property
    def tau(self) -> float:
        return self.T * self.epsilon

    def to_dict(self) -> dict:
        return {
            "schemaVersion": SCHEMA_VERSION,
            "toolVersion": __version__,
            "F1": self.f1,
            "F2": self.f2,
            "T": self.T,
            "epsilon": self.epsilon,
            "tau": self.tau,
            "grid": self.grid,
            "delta": self.delta,
            "deltaPerObservable": list(self.delta_per_observable),
            "boundRhs": self.bound_rhs,
            "pi": self.pi,
            "osc": self.osc,
            "integrator": self.integrator,
            "worstPoint": self.worst_point,
            "verified": self.verified,
            "tolBound": self.tol_bound,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def delta(
    f1,
    f2,
    T: float,
    epsilon: float,
    grid: PointGrid | None = None,
    steps_per_radian: float = 30.0,
    method: str = "periodic",
    subdiv: int = 6,
) -> MeasurementRecord:
    """Measurement error sup_w |F'_1(w) - F_1(w)| over the grid."""
    f1, f2 = as_expression(f1), as_expression(f2)
    if not (T > 0 and epsilon > 0):
        raise ValueError("T and epsilon must be positive")
    grid = grid or default_grid(f1, f2)
    w = grid.points()
    if len(w) == 0:
        raise ValueError("empty grid")
    tau = T * epsilon
    m1, m2, info = orbit_averages(f1, f2, tau, w, steps_per_radian, method)
    e1 = np.abs(m1 - evaluate(f1, w))
    e2 = np.abs(m2 - evaluate(f2, w))
    k = int(np.argmax(e1))
    p = pi_value(f1, f2, subdiv)
    o = osc_value(f1, f2, subdiv)
    info["zetaSubdiv"] = subdiv
    return MeasurementRecord(
        f1=str(f1),
        f2=str(f2),
        T=float(T),
        epsilon=float(epsilon),
        grid=grid.describe(),
        delta=float(e1[k]),
        delta_per_observable=(float(e1.max()), float(e2.max())),
        bound_rhs=bound_rhs(p, o, tau),
        pi=p,
        osc=o,
        integrator=info,
        worst_point=[float(c) for c in w[k]],
        errors=e1,
    )


def verify_bound(f1, f2, T, epsilon, grid=None, steps_per_radian=30.0, tol_bound=TOL_BOUND, **kw):
    """Compute the error and check it against the lower bound 1/2 Pi - sqrt(2 osc / (T eps))."""
    rec = delta(f1, f2, T, epsilon, grid, steps_per_radian, **kw)
    rec.tol_bound = tol_bound
    if rec.delta < rec.bound_rhs - tol_bound:
        raise BoundViolationError(
            f"delta={rec.delta:.6f} < bound {rec.bound_rhs:.6f} - {tol_bound} for ({rec.f1}, {rec.f2}) at tau={rec.tau}"
        )
    rec.verified = True
    return rec


@dataclass
class AsymptoticResult:
    f1: str
    f2: str
    schedule: list
    series: list
    delta_infinity: float
    pi: float
    e_ratio: float | None
    grid: dict

    def to_dict(self) -> dict:
        d = {
            "schemaVersion": SCHEMA_VERSION,
            "F1": self.f1,
            "F2": self.f2,
            "tauSchedule": self.schedule,
            "deltaSeries": self.series,
            "deltaInfinity": self.delta_infinity,
            "pi": self.pi,
            "grid": self.grid,
        }
        if self.e_ratio is not None:
            d["eRatio"] = self.e_ratio
        return d


def asymptotic_delta(
    f1, f2, schedule=(50, 100, 200, 400, 800), grid: PointGrid | None = None, steps_per_radian: float = 30.0,
    subdiv: int = 6,
) -> AsymptoticResult:
    """liminf estimate of the error as T grows: min of Delta(tau) over the tail half of ``schedule``."""
    schedule = [float(t) for t in schedule]
    if len(schedule) < 4 or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be increasing with at least 4 entries")
    f1, f2 = as_expression(f1), as_expression(f2)
    grid = grid or default_grid(f1, f2)
    w = grid.points()
    v1 = evaluate(f1, w)
    m1, _, _ = orbit_averages_schedule(f1, f2, schedule, w, steps_per_radian)
    series = [float(d) for d in np.max(np.abs(m1 - v1[None, :]), axis=1)]
    tail = series[len(series) // 2:]
    d_inf = min(tail)
    p = pi_value(f1, f2, subdiv)
    ratio = 2.0 * d_inf / p if p > 0.05 else None
    return AsymptoticResult(str(f1), str(f2), schedule, series, d_inf, p, ratio, grid.describe())


def e_ratio(f1, f2, schedule=(50, 100, 200, 400, 800), grid=None, steps_per_radian=30.0, subdiv=6) -> float:
    """2 Delta_inf / Pi, an upper-bound witness for the optimal constant."""
    p = pi_value(f1, f2, subdiv)
    if p <= 0.05:
        raise PiTooSmallError(f"Pi = {p:.4g} is too small for a stable ratio")
    res = asymptotic_delta(f1, f2, schedule, grid, steps_per_radian, subdiv)
    return 2.0 * res.delta_infinity / p


# ---------------------------------------------------------------- independent oracle


def arc_average_error(phi0, alpha):
    """|mean of cos^2 over [phi0, phi0 + alpha] - cos^2(phi0)| in closed form."""
    phi0 = np.asarray(phi0, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    avg = 0.5 + (np.sin(2.0 * (phi0 + alpha)) - np.sin(2.0 * phi0)) / (4.0 * alpha)
    return np.abs(avg - np.cos(phi0) ** 2)


def latitude_oracle(n_phi: int = 2001, n_alpha: int = 30001, alpha_max: float = 30.0) -> tuple[float, float, float]:
    """Asymptotic error for F1 = x^2, F2 = y^2 without any ODE solving.

    The flow of x^2 + y^2 rotates each latitude circle rigidly, so F'_1 is a
    cos^2 average over an arc whose length grows with tau; as tau grows the
    slow orbits next to the equator realise every arc length, giving
    sup over (phi0, alpha) of :func:`arc_average_error`. Returns
    (value, phi0, alpha) from a dense scan refined by a local search.
    """
    from scipy.optimize import minimize

    phi = np.linspace(0.0, np.pi, n_phi)[None, :]
    alpha = np.linspace(alpha_max / n_alpha, alpha_max, n_alpha)[:, None]
    err = arc_average_error(phi, alpha)
    i, j = np.unravel_index(np.argmax(err), err.shape)
    x0 = np.array([phi[0, j], alpha[i, 0]])
    res = minimize(lambda p: -arc_average_error(p[0], p[1]), x0, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14})
    best = max(float(err[i, j]), float(-res.fun))
    return best, float(res.x[0]), float(res.x[1])


# ---------------------------------------------------------------- randomized battery


@dataclass(frozen=True)
class BatteryConfig:
    seed: int = 20240607
    pairs: int = 50
    taus: tuple = (20.0, 100.0)
    schedule: tuple = (50.0, 100.0, 200.0, 400.0, 800.0)
    family_taus: tuple = (10.0, 30.0, 100.0, 300.0)
    grid_size: int = 2000
    subdiv: int = 6
    steps_per_radian: float = 30.0
    tol_bound: float = TOL_BOUND


@dataclass
class BatteryRow:
    f1: str
    f2: str
    tau: float
    delta: float
    bound_rhs: float
    pi: float
    osc: float
    tol_bound: float = TOL_BOUND

    @property
    def margin(self) -> float:
        return self.delta - (self.bound_rhs - self.tol_bound)

    @property
    def verified(self) -> bool:
        return self.margin >= 0


@dataclass
class AsymptoticRow:
    f1: str
    f2: str
    series: list
    delta_infinity: float
    pi: float
    tol_bound: float = TOL_BOUND

    @property
    def margin(self) -> float:
        return self.delta_infinity - (0.5 * self.pi - self.tol_bound)


@dataclass
class BatteryResult:
    config: BatteryConfig
    bound_rows: list
    asymptotic_rows: list

    def to_csv(self) -> str:
        lines = ["F1,F2,tau,delta,boundRhs,verified"]
        for r in self.bound_rows:
            lines.append(f'"{r.f1}","{r.f2}",{r.tau!r},{r.delta!r},{r.bound_rhs!r},{str(r.verified).lower()}')
        return "\n".join(lines) + "\n"


def random_pairs(seed: int, n: int) -> list:
    from .quasistate import random_polynomial

    rng = np.random.default_rng(seed)
    return [(random_polynomial(rng), random_polynomial(rng)) for _ in range(n)]


def run_battery(config: BatteryConfig | None = None, log=None) -> BatteryResult:
    """Inequality (4) at the battery durations and the tail-min check at the
    long schedule, for random quadratic pairs plus the (x^2, y^2) family."""
    from .expr import parse

    cfg = config or BatteryConfig()
    bound_rows, asym_rows = [], []
    x2, y2 = parse("x^2"), parse("y^2")
    pairs = [(p, cfg.taus) for p in random_pairs(cfg.seed, cfg.pairs)] + [((x2, y2), cfg.family_taus)]
    for i, ((f1, f2), taus) in enumerate(pairs):
        grid = default_grid(f1, f2, cfg.grid_size)
        w = grid.points()
        all_taus = sorted(set(taus) | set(cfg.schedule))
        m1, _, _ = orbit_averages_schedule(f1, f2, all_taus, w, cfg.steps_per_radian)
        errs = np.max(np.abs(m1 - evaluate(f1, w)[None, :]), axis=1)
        by_tau = dict(zip(all_taus, errs.tolist()))
        p = pi_value(f1, f2, cfg.subdiv)
        o = osc_value(f1, f2, cfg.subdiv)
        for tau in taus:
            bound_rows.append(BatteryRow(str(f1), str(f2), tau, by_tau[tau], bound_rhs(p, o, tau), p, o, cfg.tol_bound))
        series = [by_tau[t] for t in cfg.schedule]
        tail = series[len(series) // 2:]
        asym_rows.append(AsymptoticRow(str(f1), str(f2), series, min(tail), p, cfg.tol_bound))
        if log is not None:
            log(f"pair {i}: ({f1}, {f2}) pi={p:.4f} min margin (4) "
                f"{min(r.margin for r in bound_rows[-len(taus):]):+.4f} (5) {asym_rows[-1].margin:+.4f}")
    return BatteryResult(cfg, bound_rows, asym_rows)


def check_properties(config: BatteryConfig | None = None, log=None):
    """Measurement invariants: both inequalities on the battery, i-independence,
    time-rescaling and grid monotonicity."""
    from .expr import parse
    from .quasistate import PropertyReport

    cfg = config or BatteryConfig()
    report = PropertyReport("measurement", cfg.seed, cfg.tol_bound, settings=asdict(cfg))
    battery = run_battery(cfg, log)
    report.add("inequality_4", [r.margin for r in battery.bound_rows])
    report.add("inequality_5", [r.margin for r in battery.asymptotic_rows])

    pairs = random_pairs(cfg.seed + 1, 5) + [(parse("x^2"), parse("y^2"))]
    indep, scaling = [], []
    for f1, f2 in pairs:
        grid = PointGrid(n_fibonacci=400)
        rec = delta(f1, f2, 100.0, 1.0, grid, cfg.steps_per_radian, subdiv=cfg.subdiv)
        d1, d2 = rec.delta_per_observable
        indep.append(1e-4 - abs(d1 - d2))
        for eps in (0.1, 0.37):
            other = delta(f1, f2, 100.0 / eps, eps, grid, cfg.steps_per_radian, subdiv=cfg.subdiv)
            scaling.append(1e-8 - abs(other.delta - rec.delta))
    report.add("i_independence", indep)
    report.add("scaling", scaling)

    mono = []
    for f1, f2 in pairs:
        grids = [
            PointGrid(n_fibonacci=300),
            PointGrid(n_fibonacci=300, n_band=100, band_axes=((0.0, 0.0, 1.0),)),
            PointGrid(n_fibonacci=300, n_band=100, band_axes=((0.0, 0.0, 1.0),), mesh_subdiv=2),
        ]
        ds = [delta(f1, f2, 50.0, 1.0, g, cfg.steps_per_radian, subdiv=cfg.subdiv).delta for g in grids]
        mono += [b - a for a, b in zip(ds, ds[1:])]
    report.add("grid_monotonicity", mono)
    return report
