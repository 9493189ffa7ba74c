"""The twelve acceptance criteria, one test each.

Each test records a short detail string; the conftest prints one PASS/FAIL line
per criterion in the terminal summary.  Expensive quantities (bound totals,
Gaussian ratio tables) are computed once and shared between criteria.
"""

import functools
import itertools
import math

import numpy as np
import pytest

from chaosmoments import montecarlo as mc
from chaosmoments.fixtures import (ensemble, make_fixture, symmetric_ensemble,
                                   tetrahedral_parts)
from chaosmoments.harness import (MCConfig, dumps, run_decouple, run_gaussian_remark, run_tail,
                                  run_two_sided)
from chaosmoments.norms import exponential_closed_form, partition_norm, waterfill_sup
from chaosmoments.oracle import brute_force_sup
from chaosmoments.partitions import Partition, enumerate_partitions
from chaosmoments.rng import stream
from chaosmoments.tails import DistributionMatrix, exponential, gaussian, gaussian_scale

pytestmark = pytest.mark.slow

SEED = 0
LAWS = {"exp": exponential(), "gauss": gaussian()}
P_GRID = (2.0, 4.0, 8.0)
REMARK_GRID = tuple(float(p) for p in range(2, 17))


def config():
    return MCConfig(seed=SEED)


def iid(law, shape):
    return DistributionMatrix.iid(law, shape)


def detail(record_property, text):
    record_property("detail", text)


@functools.cache
def two_sided(d, law, sizes=None):
    """run_two_sided reports over the order-d ensemble, keyed by fixture name."""
    return {f.name: run_two_sided(f.tensor, iid(LAWS[law], f.tensor.dims), P_GRID, config())
            for f in ensemble(d, sizes)}


@functools.cache
def remark(d):
    return {f.name: run_gaussian_remark(f.tensor, REMARK_GRID) for f in ensemble(d)}


def norm_table(d, law):
    """(fixture, partition text, p) -> partition norm value from the shared runs."""
    out = {}
    if law == "exp":
        for name, rep in two_sided(d, "exp").items():
            for p, cell in rep.norms.items():
                for J, nv in cell.items():
                    out[name, J, float(p)] = nv["value"]
    else:
        for name, rep in remark(d).items():
            for row in rep.rows:
                out[name, row["partition"], row["p"]] = row["norm"]
    return out


@pytest.mark.criterion(1, "water-filling matches brute force")
def test_waterfill_exactness(record_property):
    rng = stream(SEED, mc.SHARD, 101)
    worst_diff = worst_gap = 0.0
    for case in range(50):
        n = int(rng.integers(1, 5))
        law = LAWS[("exp", "gauss")[case % 2]]
        p = float(P_GRID[case % 3])
        c = np.abs(rng.standard_normal(n))
        nv = waterfill_sup(c, [law] * n, p)
        orc = brute_force_sup(c, Partition.of([1]), p, iid(law, (n,)), seed=case)
        worst_diff = max(worst_diff, abs(nv.value - orc.value))
        worst_gap = max(worst_gap, nv.dual_gap)
    detail(record_property, f"max |solver - oracle| = {worst_diff:.2e}, max relative gap = {worst_gap:.1e}")
    assert worst_diff <= 1e-2
    assert worst_gap <= 1e-8


@pytest.mark.criterion(2, "d=1 exponential closed form and two-sided bounds")
def test_d1_exponential(record_property):
    worst_identity = 0.0
    ratios = []
    for f in ensemble(1):
        a = f.tensor.array
        for p in P_GRID:
            cf = exponential_closed_form(a, Partition.of([1]), p).value
            expect = math.sqrt(p) * np.linalg.norm(a) + p * np.abs(a).max()
            worst_identity = max(worst_identity, abs(cf - expect) / expect)
        rep = two_sided(1, "exp")[f.name]
        assert rep.passed, f.name
        for p, m in zip(rep.p_grid, rep.moments):
            cf = exponential_closed_form(a, Partition.of([1]), p).value
            ratios += [m["estimate"] / rep.totals[rep.p_grid.index(p)], m["estimate"] / cf]
    detail(record_property, f"identity error {worst_identity:.1e}, ratios in [{min(ratios):.3f}, {max(ratios):.3f}]")
    assert worst_identity <= 1e-12
    assert 1 / 8 <= min(ratios) and max(ratios) <= 8


@pytest.mark.criterion(3, "known fourth moments")
def test_known_moments(record_property):
    e = mc.estimate_moment(mc.ChaosSpec(np.ones(1), iid(exponential(), (1,))), 4, seed=SEED)
    g = mc.estimate_moment(mc.ChaosSpec(np.ones(1), iid(gaussian(), (1,))), 4, seed=SEED)
    ge = gaussian_scale() * 3 ** 0.25
    detail(record_property, f"exp {e.estimate:.4f} +- {e.halfwidth:.4f} vs {24 ** 0.25:.4f}; "
                            f"gauss {g.estimate:.4f} +- {g.halfwidth:.4f} vs {ge:.4f}")
    assert e.contains(24 ** 0.25) and e.relative_halfwidth <= 0.02
    assert g.contains(ge) and g.relative_halfwidth <= 0.02


@pytest.mark.criterion(4, "two-sided moment bounds, d=2 and d=3")
def test_two_sided_d2_d3(record_property):
    summary = []
    failures = []
    for d, L in ((2, 32.0), (3, 64.0)):
        for law in LAWS:
            reps = two_sided(d, law)
            rs = [r for rep in reps.values() for r in rep.ratios]
            summary.append(f"d={d} {law} [{min(rs):.3f}, {max(rs):.3f}]")
            for name, rep in reps.items():
                if not (rep.passed and all(1 / L <= r <= L for r in rep.ratios)):
                    failures.append((name, law, rep.ratios))
    detail(record_property, ", ".join(summary))
    assert not failures


@pytest.mark.criterion(5, "exponential two-sided bounds, d=4")
def test_exponential_d4(record_property):
    reps = {f.name: run_two_sided(f.tensor, iid(exponential(), f.tensor.dims), (2.0, 4.0), config())
            for f in ensemble(4, sizes=(4,))}
    rs = [r for rep in reps.values() for r in rep.ratios]
    detail(record_property, f"ratios in [{min(rs):.3f}, {max(rs):.3f}] over {len(reps)} fixtures")
    assert all(rep.regime == "exponential-any-d" and rep.passed for rep in reps.values())
    assert all(1 / 128 <= r <= 128 for r in rs)


@pytest.mark.criterion(6, "exponential closed form comparable with partition norms")
def test_closed_form_comparability(record_property):
    ratios = []
    for d in (1, 2, 3):
        table = norm_table(d, "exp")
        tensors = {f.name: f.tensor.array for f in ensemble(d)}
        for (name, J, p), value in table.items():
            cf = exponential_closed_form(tensors[name], Partition.parse(J), p).value
            if value == 0 and cf == 0:
                continue
            ratios.append(cf / value)
    detail(record_property, f"{len(ratios)} cells, ratios in [{min(ratios):.3f}, {max(ratios):.3f}]")
    assert 1 / 32 <= min(ratios) and max(ratios) <= 32


@pytest.mark.criterion(7, "Gaussian norms track p^(k/2) times injective norms")
def test_gaussian_ratio(record_property):
    ratios = [row["ratio"] for d in (1, 2, 3) for rep in remark(d).values() for row in rep.rows]
    detail(record_property, f"{len(ratios)} cells, ratios in [{min(ratios):.3f}, {max(ratios):.3f}]")
    assert all(rep.passed for d in (1, 2, 3) for rep in remark(d).values())
    assert 1 / 16 <= min(ratios) and max(ratios) <= 16


@pytest.mark.criterion(8, "scaling in p bounded by t^k")
def test_scaling(record_property):
    checked = 0
    worst = 0.0
    tables = [norm_table(d, law) for d in (1, 2, 3) for law in LAWS]
    d4 = {}
    for f in ensemble(4, sizes=(4,)):
        D = iid(exponential(), f.tensor.dims)
        for J in enumerate_partitions(4):
            for p in (2.0, 4.0, 8.0):
                d4[f.name, str(J), p] = partition_norm(f.tensor.array, J, p, D).value
    tables.append(d4)
    for table in tables:
        for (name, J, p), value in table.items():
            k = Partition.parse(J).k
            for t in (2, 4):
                big = table.get((name, J, t * p))
                if big is None:
                    continue
                checked += 1
                if value > 0:
                    worst = max(worst, big / (t ** k * value))
                assert big <= t ** k * value * (1 + 1e-8), (name, J, p, t)
    detail(record_property, f"{checked} pairs, max norm(tp) / (t^k norm(p)) = {worst:.4f}")
    assert checked > 0


@pytest.mark.criterion(9, "decoupling")
def test_decoupling(record_property):
    ratios = []
    for d in (2, 3):
        for f in symmetric_ensemble(d):
            rep = run_decouple(f.tensor, iid(exponential(), f.tensor.dims), (2.0, 4.0), config())
            assert rep.passed, f.name
            ratios += [r["ratio"] for r in rep.rows]
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    hand = mc.decouple_compare(a, iid(exponential(), a.shape), 2, seed=SEED)
    detail(record_property, f"ratios in [{min(ratios):.3f}, {max(ratios):.3f}]; "
                            f"hand case {hand.ratio:.4f} +- {hand.ratio_halfwidth:.4f} vs {math.sqrt(2):.4f}")
    assert 1 / 20 <= min(ratios) and max(ratios) <= 20
    assert abs(hand.ratio - math.sqrt(2)) <= hand.ratio_halfwidth


@pytest.mark.criterion(10, "tail bounds at the norm thresholds")
def test_tails(record_property):
    fits, excluded, cells = [], 0, 0
    for d in (1, 2, 3):
        for f in ensemble(d):
            for law in LAWS.values():
                rep = run_tail(f.tensor, iid(law, f.tensor.dims), (2.0, 3.0, 4.0), config())
                excluded += sum(rep.insufficient)
                cells += len(rep.insufficient)
                assert rep.passed, (f.name, law.kind, rep.L_fit)
                if rep.L_fit is not None:
                    fits.append(rep.L_fit)
    detail(record_property, f"max fitted L = {max(fits):.3f}; {excluded} of {cells} cells insufficient")
    assert max(fits) <= 16


@pytest.mark.criterion(11, "parts of tetrahedral polynomials")
def test_tetrahedral(record_property):
    ratios = []
    for deg, n, index in itertools.product((1, 2, 3), (4, 6), (0, 1)):
        parts = tetrahedral_parts(deg, n, index)
        for law, p in itertools.product(LAWS.values(), (2.0, 4.0)):
            ratios.append(mc.tetrahedral_eval_and_split(parts, law, p, seed=SEED).ratio)
    detail(record_property, f"{len(ratios)} cells, max sum_j ||S_j|| / ||S|| = {max(ratios):.3f}")
    assert max(ratios) <= 10


@pytest.mark.criterion(12, "byte-identical reports for a fixed seed")
def test_determinism(record_property):
    f3 = make_fixture("gaussian-sym", 3, 4)
    sym = symmetric_ensemble(2)[0]
    D3 = iid(gaussian(), f3.tensor.dims)
    runs = {
        "two-sided": lambda w: run_two_sided(f3.tensor, D3, P_GRID, MCConfig(seed=SEED, workers=w)).dumps(),
        "tail": lambda w: run_tail(f3.tensor, D3, (2.0, 3.0, 4.0), MCConfig(seed=SEED, workers=w)).dumps(),
        "remark": lambda w: run_gaussian_remark(f3.tensor, (2.0, 5.0, 16.0)).dumps(),
        "decouple": lambda w: run_decouple(sym.tensor, iid(exponential(), sym.tensor.dims), (2.0, 4.0),
                                           MCConfig(seed=SEED, workers=w)).dumps(),
        "tetrahedral": lambda w: dumps(mc.tetrahedral_eval_and_split(
            tetrahedral_parts(3, 4), exponential(), 4.0, seed=SEED, workers=w).to_dict()),
    }
    same = {name: run(1) == run(1) == run(3) for name, run in runs.items()}
    detail(record_property, ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
    assert all(same.values())
