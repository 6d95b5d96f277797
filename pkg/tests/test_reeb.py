import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medianqs.errors import NonFiniteFieldError
from medianqs.mesh import ScalarField, build_icosphere, sample
from medianqs.quasistate import random_observable
from medianqs.reeb import build_reeb, components_at_level, contour_components, export_dot

TRIPOD = "2*z^2+x+0.1*y*z"


def test_height_is_a_segment():
    tree = build_reeb(sample("z", build_icosphere(4)))
    assert (tree.n_nodes, tree.n_arcs) == (2, 1)
    assert tree.node_level.tolist() == [-1.0, 1.0]
    assert tree.node_kind == ("min", "max")
    tree.validate()


def test_height_profile_is_uniform():
    tree = build_reeb(sample("z", build_icosphere(5)))
    levels, cum = tree.arc_profile(0)
    below = cum + tree.node_atom[0]
    for t in np.linspace(-0.9, 0.9, 19):
        k = np.searchsorted(levels, t, side="right")
        mass = below[k - 1] if k else tree.node_atom[0]
        assert mass == pytest.approx((t + 1) / 2, abs=0.01)


@pytest.mark.parametrize("k", [3, 4, 5, 6])
def test_tripod(k):
    tree = build_reeb(sample(TRIPOD, build_icosphere(k)))
    assert (tree.n_nodes, tree.n_arcs) == (4, 3)
    assert sorted(tree.node_kind) == ["max", "max", "min", "saddle"]
    assert sorted(tree.degrees.tolist()) == [1, 1, 1, 3]
    tree.validate()


def test_tripod_levels_stable_under_refinement():
    a = build_reeb(sample(TRIPOD, build_icosphere(5))).node_level
    b = build_reeb(sample(TRIPOD, build_icosphere(6))).node_level
    assert np.max(np.abs(a - b)) < 1e-2


def test_components_at_level_examples():
    m = build_icosphere(4)
    z = sample("z", m)
    assert len(components_at_level(z, 0.0)) == 1
    assert len(components_at_level(z, 2.0)) == 0
    assert len(components_at_level(sample(TRIPOD, m), 1.8)) == 2
    assert len(contour_components(sample(TRIPOD, m), 1.8)) == 2


def test_dot_export():
    seg = export_dot(build_reeb(sample("z", build_icosphere(3))))
    assert seg.count("[label=") == 3 and seg.count(" -- ") == 1
    tree = build_reeb(sample(TRIPOD, build_icosphere(4)))
    dot = export_dot(tree)
    assert dot.count(" -- ") == 3
    assert dot.count("[label=") == 7
    edge_mass = sum(float(line.split('label="')[1].split('"')[0]) for line in dot.splitlines() if " -- " in line)
    assert edge_mass + tree.node_atom.sum() == pytest.approx(1.0, abs=1e-9)


def test_json_export():
    tree = build_reeb(sample(TRIPOD, build_icosphere(3)))
    d = json.loads(tree.to_json())
    levels = [n["level"] for n in d["nodes"]]
    assert levels == sorted(levels)
    total = sum(a["mass"] for a in d["arcs"]) + sum(n["mass"] for n in d["nodes"])
    assert total == pytest.approx(1.0, abs=1e-9)
    for a in d["arcs"]:
        cum = [c for _, c in a["profile"]]
        assert all(q >= p for p, q in zip(cum, cum[1:]))
        assert (cum[-1] if cum else 0.0) == pytest.approx(a["mass"])


def test_non_finite_field():
    m = build_icosphere(1)
    values = np.zeros(m.n_vertices)
    values[3] = np.nan
    with pytest.raises(NonFiniteFieldError):
        build_reeb(ScalarField(m, values))


def test_arc_counts_match_brute_force_contours():
    # exact piecewise-linear tree against the crossing-edge component count
    rng = np.random.default_rng(7)
    for k in (1, 2, 3):
        m = build_icosphere(k)
        for _ in range(6):
            f = sample(random_observable(rng), m)
            tree = build_reeb(f, prune_unresolved=False)
            lo, hi = f.values.min(), f.values.max()
            for t in rng.uniform(lo - 0.05, hi + 0.05, size=50):
                assert tree.arcs_crossing(t) == len(contour_components(f, t))


@pytest.mark.parametrize("seed", range(8))
def test_generic_fields_give_morse_trees(seed):
    rng = np.random.default_rng(seed)
    f = sample(random_observable(rng), build_icosphere(5))
    tree = build_reeb(f)
    tree.validate()
    deg = tree.degrees
    assert set(deg.tolist()) <= {1, 3}
    assert np.count_nonzero(deg == 1) == np.count_nonzero(deg == 3) + 2


def test_pruning_only_removes_empty_branches():
    f = sample(TRIPOD, build_icosphere(5))
    raw = build_reeb(f, prune_unresolved=False)
    pruned = build_reeb(f)
    assert pruned.n_nodes <= raw.n_nodes
    assert pruned.total_mass == pytest.approx(raw.total_mass, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=6, max_size=6))
def test_tree_invariants_on_random_quadrics(c):
    text = f"{c[0]}*x + {c[1]}*y + {c[2]}*z + {c[3]}*x*y + {c[4]}*y*z + {c[5]}*z^2"
    tree = build_reeb(sample(text, build_icosphere(3)))
    tree.validate()
    assert tree.n_nodes - tree.n_arcs == 1
