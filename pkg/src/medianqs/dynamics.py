"""Hamiltonian flows on the unit sphere with the area form normalised to total 1.

Convention: the symplectic form is w(a, b) = v . (a x b) / (4 pi) and the
Hamiltonian vector field satisfies i_{V_H} w = dH, which gives

    V_H(v) = -4 pi  v x grad H(v).

With this sign {x, y} = 4 pi z. Flow integration is classical RK4 followed
by projection back onto the sphere after every step.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NotDifferentiableError, StepSizeTooLargeError
from .expr import Expression, as_expression, evaluate, gradient, lambdify

FOUR_PI = 4.0 * np.pi
SIGN_CONVENTION = "iota_{V_H} omega = dH, V_H = -4*pi * (v x grad H)"
MAX_STEP_ANGLE = 0.5


@lru_cache(maxsize=256)
def _gradient(h: Expression) -> tuple:
    return gradient(h)


class HamiltonianField:
    """V_H with the gradient compiled once; reuse it in inner loops."""

    def __init__(self, h):
        self.hamiltonian = as_expression(h)
        self._grad = tuple(lambdify(g) for g in _gradient(self.hamiltonian))

    def grad(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        x, y, z = v[..., 0], v[..., 1], v[..., 2]
        with np.errstate(all="ignore"):
            parts = [np.broadcast_to(g(x, y, z), x.shape) for g in self._grad]
        return np.stack(parts, axis=-1)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        g = self.grad(v)
        x, y, z = v[..., 0], v[..., 1], v[..., 2]
        gx, gy, gz = g[..., 0], g[..., 1], g[..., 2]
        return -FOUR_PI * np.stack([y * gz - z * gy, z * gx - x * gz, x * gy - y * gx], axis=-1)


@lru_cache(maxsize=256)
def _field(h: Expression) -> HamiltonianField:
    return HamiltonianField(h)


def as_field(h) -> HamiltonianField:
    if isinstance(h, HamiltonianField):
        return h
    return _field(as_expression(h))


def grad(h, v: np.ndarray) -> np.ndarray:
    """Ambient gradient of ``h`` at points ``v`` (shape (..., 3))."""
    return as_field(h).grad(v)


def hamiltonian_vector_field(h, v) -> np.ndarray:
    return as_field(h)(v)


def poisson_bracket(f, g, v) -> np.ndarray | float:
    """{F, G}(v) = dF(V_G) under the convention in the module docstring.

    Evaluated as the triple product -4 pi v . (grad G x grad F), which is
    exactly antisymmetric in floating point and exactly zero for F = G.
    """
    v = np.asarray(v, dtype=float)
    out = -FOUR_PI * np.einsum("...i,...i->...", v, np.cross(grad(g, v), grad(f, v)))
    return float(out) if out.ndim == 0 else out


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def turning_rate(h, v: np.ndarray, vel: np.ndarray | None = None) -> np.ndarray:
    """Angular rate (rad per unit time) at which the orbit through ``v`` turns.

    This is |V| for motion along a great circle and |V|/r on a circle of
    radius r, so it stays positive next to elliptic fixed points where |V|
    itself vanishes. Estimated by a finite difference of V along the orbit.
    """
    field = as_field(h)
    v = np.atleast_2d(v)
    vel = field(v) if vel is None else vel
    speed = np.linalg.norm(vel, axis=-1)
    moving = speed > 0
    dirn = np.zeros_like(vel)
    dirn[moving] = vel[moving] / speed[moving, None]
    delta = 1e-5
    dv = np.linalg.norm(field(_normalize(v + delta * dirn)) - vel, axis=-1) / delta
    return np.maximum(dv, speed)


def rk4_step(h, v: np.ndarray, ds) -> np.ndarray:
    """One RK4 step of dv/ds = V_H(v) with per-point step ``ds``, then projection."""
    ds = np.asarray(ds, dtype=float)[..., None] if np.ndim(ds) else ds
    field = as_field(h)
    k1 = field(v)
    k2 = field(v + 0.5 * ds * k1)
    k3 = field(v + 0.5 * ds * k2)
    k4 = field(v + ds * k3)
    return _normalize(v + ds / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


@dataclass(frozen=True)
class FlowSpec:
    hamiltonian: Expression
    epsilon: float
    duration: float
    step_count: int
    initial: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "hamiltonian", as_expression(self.hamiltonian))
        w = np.asarray(self.initial, dtype=float)
        if self.step_count < 1:
            raise ValueError("step_count must be at least 1")
        if not (self.epsilon > 0 and self.duration > 0):
            raise ValueError("epsilon and duration must be positive")
        if np.any(np.abs(np.linalg.norm(w, axis=-1) - 1.0) > 1e-12):
            raise ValueError("initial points must be unit vectors")
        object.__setattr__(self, "initial", w)

    @property
    def dt(self) -> float:
        return self.duration / self.step_count


def flow(spec: FlowSpec) -> np.ndarray:
    """Trajectory v(t) = g_{eps t} w at the ``step_count + 1`` uniform times in [0, T].

    Accepts one initial point (result shape (steps+1, 3)) or a batch
    (result shape (steps+1, N, 3)).
    """
    h = spec.hamiltonian
    if not _differentiable(h):
        raise NotDifferentiableError(f"{h} has no Hamiltonian vector field")
    h = as_field(h)
    ds = spec.epsilon * spec.dt
    v = spec.initial.copy()
    out = np.empty((spec.step_count + 1,) + v.shape)
    out[0] = v
    for i in range(spec.step_count):
        speed = np.linalg.norm(h(v), axis=-1)
        angle = float(np.max(speed)) * ds
        if angle > MAX_STEP_ANGLE:
            raise StepSizeTooLargeError(
                f"step {i} rotates by {angle:.3f} rad (> {MAX_STEP_ANGLE}); increase step_count"
            )
        v = rk4_step(h, v, ds)
        out[i + 1] = v
    return out


def _differentiable(h) -> bool:
    try:
        _gradient(as_expression(h))
    except NotDifferentiableError:
        return False
    return True


def trajectory_csv(spec: FlowSpec) -> str:
    """CSV dump (t, x, y, z, H) of a single-point trajectory."""
    traj = flow(spec)
    if traj.ndim != 2:
        raise ValueError("CSV dump needs a single initial point")
    t = np.linspace(0.0, spec.duration, spec.step_count + 1)
    hv = evaluate(spec.hamiltonian, traj)
    rows = ["t,x,y,z,H"]
    rows += [f"{a!r},{b!r},{c!r},{d!r},{e!r}" for a, (b, c, d), e in zip(t.tolist(), traj.tolist(), hv.tolist())]
    return "\n".join(rows) + "\n"


def rigid_rotation_errors(step_counts=(25, 50, 100, 200, 400)) -> tuple[np.ndarray, np.ndarray]:
    """Endpoint errors of the flow of H = z over one full turn, against the exact rotation."""
    w = np.array([1.0, 0.0, 0.0])
    dts, errs = [], []
    for n in step_counts:
        spec = FlowSpec(as_expression("z"), 1.0, 0.5, int(n), w)
        dts.append(spec.dt)
        errs.append(float(np.linalg.norm(flow(spec)[-1] - w)))
    return np.array(dts), np.array(errs)


def convergence_order(step_counts=(25, 50, 100, 200, 400)) -> float:
    """Least-squares slope of log(error) against log(dt)."""
    dts, errs = rigid_rotation_errors(step_counts)
    return float(np.polyfit(np.log(dts), np.log(errs), 1)[0])


def _random_points(rng, n):
    return _normalize(rng.normal(size=(n, 3)))


def check_properties(seed: int = 20240607, trials: int = 200, log=None):
    """Tangency, conservation, norm preservation, convergence order and bracket identities."""
    from .quasistate import PropertyReport, random_polynomial

    rng = np.random.default_rng(seed)
    report = PropertyReport("dynamics", seed, 1e-6, settings={"trials": trials, "convention": SIGN_CONVENTION})
    hs = [random_polynomial(rng) for _ in range(trials)]
    pts = _random_points(rng, trials)

    tangency = []
    for h, v in zip(hs, pts):
        vel = hamiltonian_vector_field(h, v)
        tangency.append(1e-12 * max(1.0, float(np.linalg.norm(vel))) - abs(float(v @ vel)))
    report.add("tangency", tangency)

    energy, norm = [], []
    for h in hs[:20]:
        w = _random_points(rng, 8)
        rate = float(np.max(turning_rate(h, w)))
        duration = 100.0 / max(rate, 1e-9)
        spec = FlowSpec(h, 1.0, duration, 2000, w)
        traj = flow(spec)
        hv = evaluate(h, traj)
        scale = max(1.0, float(np.max(np.abs(hv))))
        energy.append(1e-6 - float(np.max(np.abs(hv - hv[0]))) / scale)
        norm.append(1e-12 - float(np.max(np.abs(np.linalg.norm(traj, axis=-1) - 1.0))))
    report.add("energy_conservation", energy)
    report.add("norm_preservation", norm)

    report.add("convergence_order", [convergence_order() - 3.8], detail="slope of log error vs log dt, expected 4")

    anti, leibniz = [], []
    for k in range(trials):
        f, g, h = hs[k], hs[(k + 1) % trials], hs[(k + 2) % trials]
        v = pts[k]
        anti.append(1e-9 - abs(poisson_bracket(f, g, v) + poisson_bracket(g, f, v)))
        lhs = poisson_bracket(f, g * h, v)
        rhs = poisson_bracket(f, g, v) * evaluate(h, v) + evaluate(g, v) * poisson_bracket(f, h, v)
        leibniz.append(1e-8 - abs(lhs - rhs))
    report.add("antisymmetry", anti)
    report.add("leibniz", leibniz)
    if log is not None:
        for r in report.results:
            log(f"{r.property}: worst margin {r.worst_margin:+.3g}")
    return report
