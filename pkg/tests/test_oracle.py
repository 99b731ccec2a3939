import numpy as np
import pytest

from bandsim.allocation import SimState, run_to_convergence
from bandsim.interference import (ActivityState, Assignment,
                                  aggregate_interference, all_band_one,
                                  uniform_random_assignment)
from bandsim.oracle import (BoundReport, OracleCapacityError,
                            alternating_assignment, asymptotic_lower_bound,
                            bound_report, brute_force_optimal,
                            canonical_relabel, lattice_reuse_assignment,
                            riemann_zeta)
from bandsim.topology import (make_rectangular_lattice,
                              make_uniform_linear_array,
                              topology_from_positions)

mpmath = pytest.importorskip("mpmath")


def test_zeta_against_mpmath():
    for eta in (2.0, 2.5, 3.0, 4.0, 6.0):
        assert riemann_zeta(eta) == pytest.approx(
            float(mpmath.zeta(eta)), abs=1e-12)


def test_zeta_known_values():
    assert riemann_zeta(2.0) == pytest.approx(np.pi ** 2 / 6.0, abs=1e-12)
    assert riemann_zeta(4.0) == pytest.approx(np.pi ** 4 / 90.0, abs=1e-12)


def test_zeta_rejects_divergent_argument():
    with pytest.raises(ValueError):
        riemann_zeta(1.0)
    with pytest.raises(ValueError):
        riemann_zeta(0.5)


def test_alternating_assignment_pattern():
    asg = alternating_assignment(7, 3)
    assert list(asg.bands) == [1, 2, 3, 1, 2, 3, 1]
    assert asg.r == 3
    with pytest.raises(ValueError):
        alternating_assignment(0, 2)
    with pytest.raises(ValueError):
        alternating_assignment(5, 0)


def test_lattice_reuse_patterns():
    cb = lattice_reuse_assignment(2, 3, 2)
    assert list(cb.bands) == [1, 2, 1, 2, 1, 2]
    blocks = lattice_reuse_assignment(2, 2, 4)
    assert sorted(blocks.bands) == [1, 2, 3, 4]
    # 2x2 blocks: no two neighbours share a band on a 4x4 grid
    asg = lattice_reuse_assignment(4, 4, 4)
    grid = asg.bands.reshape(4, 4)
    assert not (grid[:, 1:] == grid[:, :-1]).any()
    assert not (grid[1:, :] == grid[:-1, :]).any()
    with pytest.raises(ValueError):
        lattice_reuse_assignment(4, 4, 3)
    with pytest.raises(ValueError):
        lattice_reuse_assignment(0, 4, 2)


def test_canonical_relabel():
    asg = Assignment(np.array([3, 3, 1, 2, 1]), 3)
    out = canonical_relabel(asg)
    assert list(out.bands) == [1, 1, 2, 3, 2]
    # idempotent and aggregate-preserving
    top = make_uniform_linear_array(5, 1.0)
    assert aggregate_interference(top, out) == pytest.approx(
        aggregate_interference(top, asg))
    assert list(canonical_relabel(out).bands) == list(out.bands)


def test_brute_force_small_line():
    # 5 clusters, unit spacing, r=2: optimum is the alternating pattern,
    # value 2*(2*1/4 + 1/16 + 3/16 + 2/16) = 1.625
    top = make_uniform_linear_array(5, 1.0)
    asg, value = brute_force_optimal(top, None, 2)
    assert value == pytest.approx(1.625, rel=1e-12)
    assert list(canonical_relabel(asg).bands) == [1, 2, 1, 2, 1]


def test_brute_force_matches_exhaustive_python():
    top = topology_from_positions([[0.0, 0.0], [1.0, 0.0], [1.0, 1.3],
                                   [2.1, 0.4]])
    _, value = brute_force_optimal(top, None, 2)
    best = min(aggregate_interference(
        top, Assignment(np.array(code), 2))
        for code in np.ndindex(2, 2, 2, 2)
        for code in [np.array(code) + 1])
    assert value == pytest.approx(best, rel=1e-12)


def test_brute_force_pins_inactive_to_band_one():
    top = make_uniform_linear_array(4, 1.0)
    act = ActivityState(np.array([True, False, True, False]))
    asg, value = brute_force_optimal(top, act, 2)
    assert asg.bands[1] == 1
    assert asg.bands[3] == 1
    # actives at distance 2 split bands to reach zero
    assert value == 0.0


def test_brute_force_guard():
    top = make_uniform_linear_array(30, 1.0)
    with pytest.raises(OracleCapacityError):
        brute_force_optimal(top, None, 2, max_states=2 ** 20)


def test_brute_force_never_above_converged_runs():
    # the exhaustive optimum lower-bounds every best-response fixed point
    rng = np.random.default_rng(8)
    for _ in range(10):
        n = int(rng.integers(4, 11))
        r = int(rng.integers(2, 4))
        for eta in (2.0, 3.0):
            top = make_uniform_linear_array(n, 1.0, eta=eta)
            _, opt = brute_force_optimal(top, None, r)
            state = SimState(top, uniform_random_assignment(n, r, rng),
                             rng=np.random.default_rng(int(rng.integers(1 << 30))))
            state, _ = run_to_convergence(state)
            assert opt <= state.aggregate() + 1e-12


def test_asymptotic_lower_bound_values():
    # r=2, eta=2, p0=1, d=1: 2*zeta(2)/4 = pi^2/12
    assert asymptotic_lower_bound(2, 2.0) == pytest.approx(
        np.pi ** 2 / 12.0, abs=1e-12)
    assert asymptotic_lower_bound(2, 3.0) == pytest.approx(
        0.30051422578989856, rel=1e-12)
    # scaling in p0 and d
    assert asymptotic_lower_bound(2, 2.0, p0=3.0, d=2.0) == pytest.approx(
        3.0 / 4.0 * np.pi ** 2 / 12.0)
    with pytest.raises(ValueError):
        asymptotic_lower_bound(0, 2.0)
    with pytest.raises(ValueError):
        asymptotic_lower_bound(2, 2.0, d=0.0)


def test_normalized_optimum_approaches_asymptote():
    # N-normalized exhaustive optima approach 2*zeta(eta)/r^eta from below
    floor = asymptotic_lower_bound(2, 2.0)
    values = []
    for n in (6, 8, 10, 12):
        top = make_uniform_linear_array(n, 1.0)
        _, opt = brute_force_optimal(top, None, 2)
        values.append(opt / n)
        assert opt / n < floor
    assert values == sorted(values)


def test_bound_report_oracle_branch():
    top = make_uniform_linear_array(8, 1.0)
    state = SimState(top, all_band_one(8, 2), rng=np.random.default_rng(4))
    state, _ = run_to_convergence(state)
    rep = bound_report(top, None, state.assignment(), 2, d_ref=1.0)
    assert rep.i_o_kind == "oracle"
    assert rep.n == 8 and rep.n_active == 8 and rep.r == 2
    assert rep.upper_bound_ok
    assert rep.ordering_ok
    assert rep.ratio_cap_ok
    assert rep.ratio_aw == pytest.approx(rep.i_a / rep.i_w)
    assert rep.ratio_ao >= 1.0
    assert rep.gap_convention == "adjacent"
    assert rep.analytic_lower == pytest.approx(np.pi ** 2 / 12.0, abs=1e-12)
    d = rep.to_dict()
    assert d["i_a"] == rep.i_a and d["upper_bound_ok"] is True


def test_bound_report_reference_branch():
    # 40 clusters: 2^40 exceeds the oracle cap, alternating fallback kicks in
    top = make_uniform_linear_array(40, 1.0)
    state = SimState(top, all_band_one(40, 2), rng=np.random.default_rng(4))
    state, _ = run_to_convergence(state)
    rep = bound_report(top, None, state.assignment(), 2, d_ref=1.0)
    assert rep.i_o_kind == "reference"
    assert rep.i_o == pytest.approx(aggregate_interference(
        top, alternating_assignment(40, 2)))
    assert rep.ordering_ok is None
    assert rep.upper_bound_ok


def test_bound_report_supplied_reference():
    top = make_rectangular_lattice(5, 5, 1.0)
    state = SimState(top, all_band_one(25, 2), rng=np.random.default_rng(4))
    state, _ = run_to_convergence(state)
    ref = lattice_reuse_assignment(5, 5, 2)
    rep = bound_report(top, None, state.assignment(), 2, d_ref=1.0,
                       reference=ref, oracle_cap=2 ** 10)
    assert rep.i_o_kind == "reference"
    assert rep.gap_convention.startswith("none")
    assert rep.analytic_ratio_cap == pytest.approx(2.0)
    assert rep.analytic_lower is None


def test_bound_report_worst_case_upper_bound():
    # an r-band fixed point sits at or below I_w / r
    rng = np.random.default_rng(21)
    for _ in range(10):
        n = int(rng.integers(5, 12))
        r = int(rng.integers(2, 5))
        top = make_uniform_linear_array(n, 1.0)
        state = SimState(top, uniform_random_assignment(n, r, rng),
                         rng=np.random.default_rng(int(rng.integers(1 << 30))))
        state, _ = run_to_convergence(state)
        rep = bound_report(top, None, state.assignment(), r, d_ref=1.0)
        assert rep.upper_bound_ok
        assert rep.i_a <= rep.i_w / r + 1e-9


def test_bound_report_is_pure_reporting():
    # a deliberately bad assignment flips flags instead of raising
    top = make_uniform_linear_array(6, 1.0)
    rep = bound_report(top, None, all_band_one(6, 2), 2, d_ref=1.0)
    assert not rep.upper_bound_ok
    assert isinstance(rep, BoundReport)
