"""The median of a measured contour tree and the resulting quasi-state zeta."""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import MalformedTreeError
from .expr import Expression, as_expression
from .mesh import SphereMesh, build_icosphere, sample
from .reeb import ReebTree, TreePoint, build_reeb

HALF_EPS = 1e-12


@dataclass(frozen=True)
class MedianResult:
    median: TreePoint
    zeta: float
    component_masses: tuple
    tol_mass: float = 0.0

    @property
    def max_component(self) -> float:
        return max(self.component_masses, default=0.0)

    def to_dict(self) -> dict:
        return {
            "zeta": self.zeta,
            "medianLocation": self.median.to_dict(),
            "componentMasses": list(self.component_masses),
        }


class _Masses:
    """Subtree masses of a tree rooted at node 0, for O(1) branch queries."""

    def __init__(self, tree: ReebTree):
        k = tree.n_nodes
        self.tree = tree
        self.parent_arc = np.full(k, -1)
        self.parent = np.full(k, -1)
        order = [0]
        seen = np.zeros(k, dtype=bool)
        seen[0] = True
        i = 0
        while i < len(order):
            n = order[i]
            i += 1
            for a, m in tree.incident[n]:
                if not seen[m]:
                    seen[m] = True
                    self.parent[m] = n
                    self.parent_arc[m] = a
                    order.append(m)
        if len(order) != k:
            raise MalformedTreeError("tree is not connected")
        self.total = tree.total_mass
        sub = tree.node_atom.astype(float).copy()
        for n in reversed(order[1:]):
            sub[self.parent[n]] += sub[n] + tree.arc_mass[self.parent_arc[n]]
        self.sub = sub
        self.order = order

    def branch(self, n: int, a: int, m: int) -> float:
        """Mass of the component reached from node ``n`` through arc ``a``."""
        if self.parent[m] == n and self.parent_arc[m] == a:
            return self.tree.arc_mass[a] + self.sub[m]
        return self.total - self.sub[n]

    def side(self, a: int, end: int) -> float:
        """Mass on the ``end`` side of arc ``a``, excluding the arc's own mass."""
        lo, hi = self.tree.arc_lower[a], self.tree.arc_upper[a]
        child = lo if self.parent[lo] == hi and self.parent_arc[lo] == a else hi
        if end == child:
            return self.sub[child]
        return self.total - self.sub[child] - self.tree.arc_mass[a]

    def node_components(self, n: int) -> list:
        return [self.branch(n, a, m) for a, m in self.tree.incident[n]]

    def breakpoint_components(self, a: int, k: int) -> list:
        atoms = self.tree.arc_atoms[a]
        below = self.side(a, self.tree.arc_lower[a]) + float(atoms[:k].sum())
        above = self.side(a, self.tree.arc_upper[a]) + float(atoms[k + 1:].sum())
        return [below, above]


def _point(tree: ReebTree, cand) -> TreePoint:
    if cand[0] == "node":
        return TreePoint(level=float(tree.node_level[cand[1]]), node=int(cand[1]))
    _, a, k = cand
    return TreePoint(level=float(tree.arc_levels[a][k]), arc=int(a), breakpoint=int(k))


def median(tree: ReebTree) -> MedianResult:
    """Point of the tree whose removal leaves components of mass at most 1/2.

    Starting at node 0 the walk moves into the unique heavy branch until no
    branch exceeds half the mass, stopping early inside an arc at the first
    breakpoint where the far side has become light. With an atomic measure
    the qualifying set can be a segment; its point of smallest level is
    returned (node before breakpoint on equal levels).
    """
    if tree.n_nodes < 1 or tree.n_nodes - tree.n_arcs != 1:
        raise MalformedTreeError("not a tree")
    masses = _Masses(tree)
    half = 0.5 * masses.total + HALF_EPS

    n = 0
    start = None
    visited = 0
    while start is None:
        visited += 1
        if visited > tree.n_nodes:
            raise MalformedTreeError("median walk did not terminate")
        heavy = None
        for a, m in tree.incident[n]:
            if masses.branch(n, a, m) > half:
                heavy = (a, m)
                break
        if heavy is None:
            start = ("node", n)
            break
        a, m = heavy
        atoms = tree.arc_atoms[a]
        upward = tree.arc_lower[a] == n
        walk = atoms if upward else atoms[::-1]
        far = masses.sub[m] + walk.sum() - np.cumsum(walk)
        hits = np.flatnonzero(far <= half)
        if len(hits):
            k = int(hits[0])
            start = ("bp", a, k if upward else len(atoms) - 1 - k)
        else:
            n = m

    def comps(c):
        if c[0] == "node":
            return masses.node_components(c[1])
        return masses.breakpoint_components(c[1], c[2])

    def neighbours(c):
        if c[0] == "node":
            for a, m in tree.incident[c[1]]:
                nb = len(tree.arc_atoms[a])
                if nb == 0:
                    yield ("node", m)
                elif tree.arc_lower[a] == c[1]:
                    yield ("bp", a, 0)
                else:
                    yield ("bp", a, nb - 1)
        else:
            _, a, k = c
            last = len(tree.arc_atoms[a]) - 1
            yield ("bp", a, k - 1) if k > 0 else ("node", int(tree.arc_lower[a]))
            yield ("bp", a, k + 1) if k < last else ("node", int(tree.arc_upper[a]))

    def key(c):
        p = _point(tree, c)
        return (p.level, 0 if c[0] == "node" else 1, c[1:])

    best = start
    seen = {start}
    queue = deque([start])
    while queue:
        c = queue.popleft()
        for nb in neighbours(c):
            if nb in seen:
                continue
            seen.add(nb)
            if max(comps(nb), default=0.0) <= half:
                queue.append(nb)
                if key(nb) < key(best):
                    best = nb
    point = _point(tree, best)
    return MedianResult(median=point, zeta=point.level, component_masses=tuple(float(x) for x in comps(best)))


def median_of_field(f) -> MedianResult:
    result = median(build_reeb(f))
    return MedianResult(
        result.median, result.zeta, result.component_masses, tol_mass=2.0 * f.mesh.max_dual_area
    )


def _mesh(m) -> SphereMesh:
    if m is None:
        return build_icosphere(6)
    if isinstance(m, SphereMesh):
        return m
    return build_icosphere(int(m))


def zeta(e, m: SphereMesh | int | None = None) -> float:
    """Median quasi-state of the observable ``e`` on the mesh ``m`` (default subdiv 6)."""
    return median_of_field(sample(as_expression(e), _mesh(m))).zeta


def pi(e1, e2, m: SphereMesh | int | None = None) -> float:
    """Non-additivity |zeta(F1 + F2) - zeta(F1) - zeta(F2)|."""
    m = _mesh(m)
    e1, e2 = as_expression(e1), as_expression(e2)
    return abs(zeta(e1 + e2, m) - zeta(e1, m) - zeta(e2, m))


# ---------------------------------------------------------------- property battery


@dataclass
class PropertyResult:
    property: str
    trials: int
    worst_margin: float
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        d = {
            "property": self.property,
            "trials": self.trials,
            "worstMargin": self.worst_margin,
            "pass": self.passed,
        }
        if self.detail:
            d["detail"] = self.detail
        return d


@dataclass
class PropertyReport:
    suite: str
    seed: int
    tol: float
    results: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def add(self, name: str, margins, detail: str = "") -> PropertyResult:
        """Record a property from its per-trial margins (a margin < 0 is a failure)."""
        margins = np.atleast_1d(np.asarray(margins, dtype=float))
        r = PropertyResult(name, len(margins), float(margins.min()), bool(np.all(margins >= 0)), detail)
        self.results.append(r)
        return r

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "seed": self.seed,
            "tol": self.tol,
            "settings": self.settings,
            "pass": self.passed,
            "results": [r.to_dict() for r in self.results],
        }


@dataclass(frozen=True)
class SuiteConfig:
    seed: int = 20240607
    subdiv: int = 6
    trials: int = 200
    tol: float = 0.02


def random_polynomial(rng: np.random.Generator, degree: int = 2, scale: float = 1.0) -> Expression:
    """Random polynomial of the given total degree (at most 2) in x, y, z."""
    from .expr import Const, Var

    x, y, z = Var("x"), Var("y"), Var("z")
    monomials = [x, y, z]
    if degree >= 2:
        monomials += [x * x, y * y, z * z, x * y, x * z, y * z]
    coeffs = rng.uniform(-scale, scale, size=len(monomials) + 1)
    e: Expression = Const(float(round(coeffs[0], 6)))
    for c, mono in zip(coeffs[1:], monomials):
        e = e + Const(float(round(c, 6))) * mono
    return e


def random_observable(rng: np.random.Generator) -> Expression:
    """A smooth test observable: a quadratic polynomial or a low-degree trig polynomial."""
    from .expr import Const, Func

    if rng.random() < 0.5:
        return random_polynomial(rng)
    lin = random_polynomial(rng, degree=1, scale=1.5)
    lin2 = random_polynomial(rng, degree=1, scale=1.5)
    a, b = rng.uniform(-1, 1, size=2)
    return Const(float(round(a, 6))) * Func("sin", lin) + Const(float(round(b, 6))) * Func("cos", lin2)


# reparametrisations u, written in the variable x
_REPARAMETRISATIONS = ["x^3", "x^2", "2*x + 1", "-x", "exp(x/2)", "sin(x)", "abs(x - 0.3)", "x - x^3/10"]


def lipschitz_on(u: Expression, lo: float, hi: float, n: int = 4001) -> float:
    """Lipschitz constant of ``u`` on [lo, hi], from a dense chord scan."""
    s = np.linspace(lo, hi, n)
    vals = np.asarray(u(s, 0.0, 0.0), dtype=float) * np.ones_like(s)
    return float(np.max(np.abs(np.diff(vals)) / np.diff(s)))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def check_properties(config: SuiteConfig | None = None, log=None) -> PropertyReport:
    """Randomised battery of the quasi-state axioms and identities.

    Every trial yields a margin (tolerance minus observed defect); a
    property passes when no margin is negative.
    """
    from .expr import Const, Var, compose, parse, rotate
    from .mesh import uniform_norm

    cfg = config or SuiteConfig()
    m = build_icosphere(cfg.subdiv)
    tol = cfg.tol
    rng = np.random.default_rng(cfg.seed)
    report = PropertyReport(
        "quasistate", cfg.seed, tol, settings={"subdiv": cfg.subdiv, "trials": cfg.trials}
    )
    t0 = time.perf_counter()

    def z(e):
        return zeta(e, m)

    def done(name):
        if log is not None:
            r = report.results[-1]
            log(f"{name}: worst margin {r.worst_margin:+.4f} ({time.perf_counter() - t0:.0f}s)")

    n = cfg.trials
    x, y = Var("x"), Var("y")

    report.add("normalization", [tol - abs(z("1") - 1.0)] + [0.0 if z(c) == c else -1.0 for c in (-2.5, 0.0, 3.0)])
    done("normalization")

    margins = []
    for _ in range(n):
        f = random_observable(rng)
        vals = sample(f, m).values
        g = f - Const(float(vals.min())) + Const(float(rng.uniform(0, 0.1)))
        margins.append(z(g) + tol)
    report.add("positivity", margins)
    done("positivity")

    margins = []
    for _ in range(n):
        f = random_observable(rng)
        noise = random_polynomial(rng)
        g = f + Const(float(rng.uniform(0, 0.5))) * noise * noise + Const(float(rng.uniform(0, 0.2)))
        margins.append(z(g) + tol - z(f))
    report.add("monotonicity", margins)
    done("monotonicity")

    margins = []
    for _ in range(n):
        f = random_observable(rng)
        g = f + Const(float(rng.uniform(0.05, 0.5))) * random_observable(rng)
        dist = uniform_norm(sample(f - g, m))
        margins.append(dist + tol - abs(z(f) - z(g)))
    report.add("lipschitz", margins)
    done("lipschitz")

    margins = []
    for _ in range(n):
        f = random_observable(rng)
        u = _REPARAMETRISATIONS[rng.integers(len(_REPARAMETRISATIONS))]
        g = compose(parse(u), f)
        margins.append(tol - abs(z(f + g) - z(f) - z(g)))
    report.add("quasi_linearity", margins)
    done("quasi_linearity")

    margins = []
    for _ in range(n):
        f = random_observable(rng)
        a = float(round(rng.uniform(-3, 3), 6))
        b = float(round(rng.uniform(-2, 2), 6))
        margins.append(tol - abs(z(Const(a) * f + Const(b)) - (a * z(f) + b)))
    report.add("homogeneity", margins)
    done("homogeneity")

    margins = []
    for _ in range(n):
        f = random_observable(rng)
        u = parse(_REPARAMETRISATIONS[rng.integers(len(_REPARAMETRISATIONS))])
        vals = sample(f, m).values
        lip = max(lipschitz_on(u, float(vals.min()), float(vals.max())), 1.0)
        zf = z(f)
        expected = float(u(zf, 0.0, 0.0))
        margins.append(lip * tol - abs(z(compose(u, f)) - expected))
    report.add("composition", margins)
    done("composition")

    margins = []
    for _ in range(n):
        f = random_observable(rng)
        margins.append(tol - abs(z(f * f) - z(f) ** 2))
    margins.append(tol - abs(z(x * x) - z(x) ** 2))
    report.add("dispersion_free", margins)
    done("dispersion_free")

    margins = []
    base = parse("2*z^2+x+0.1*y*z")
    zb = z(base)
    for _ in range(n):
        f = base if rng.random() < 0.1 else random_observable(rng)
        zf = zb if f is base else z(f)
        margins.append(tol - abs(z(rotate(f, random_rotation(rng))) - zf))
    report.add("rotation_invariance", margins)
    done("rotation_invariance")

    witness = z(x * x + y * y) - z(x * x) - z(y * y)
    report.add("nonlinearity_witness", [tol - abs(witness - 1.0)], detail=f"defect={witness:.6f}")
    done("nonlinearity_witness")

    report.settings["seconds"] = round(time.perf_counter() - t0, 2)
    return report
