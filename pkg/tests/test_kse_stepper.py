"""
Tests for the IMEX stepper, the sample-and-hold controller and the V1 history term
"""

import math

import numpy as np
import pytest
import scipy.sparse as sps
from scipy.sparse.linalg import ArpackNoConvergence, spsolve

from models.errors import ConfigurationError, PreconditionError
from models.field import Field, Grid2D, Partition
from models.schemas import SimConfig
from utils.field_ops import l2_sq, measure
from utils.kse_stepper import (
    FactorizedOperator,
    KseStepper,
    SimState,
    apply_control,
    energy_norm_sq,
    initial_field,
    run_steps,
    sample_and_hold,
    smallest_eigenvalue,
)
from tests.helpers import constant, sinsin


def small_config(**overrides) -> SimConfig:
    base = dict(m=16, dt=1e-3, horizon=0.05, h=0.01, output_stride=10)
    base.update(overrides)
    return SimConfig(**base)


def test_zero_state_is_an_equilibrium():
    cfg = small_config(ic="zero")
    stepper = KseStepper(cfg)
    state = run_steps(stepper, stepper.initial_state(initial_field(cfg)), 20)
    assert state.step_index == 20
    assert not np.any(state.z.values)
    assert not np.any(state.held_u)


def test_open_loop_decays():
    cfg = small_config(control_mode="continuous", mu=0.0)
    stepper = KseStepper(cfg)
    state = stepper.initial_state(initial_field(cfg))
    v0 = l2_sq(state.z)
    state = run_steps(stepper, state, 10)
    assert 0.0 < l2_sq(state.z) < v0


def test_initial_fields_are_clamped():
    for ic in ("sinsin", "bump", "zero"):
        z0 = initial_field(small_config(ic=ic))
        assert z0.clamped
    bump = initial_field(small_config(ic="bump", amplitude=0.5))
    assert bump.array[8, 8] == pytest.approx(0.5)


class TestSampleAndHold:
    def _state(self, z: Field, step_index: int = 0) -> SimState:
        return SimState(z=z, held_u=np.zeros(16), step_index=step_index)

    def test_zero_field(self):
        cfg = small_config()
        u = sample_and_hold(self._state(Field.zeros(Grid2D(m=16))), Partition.build(0.25), cfg)
        assert u.shape == (16,)
        assert not np.any(u)

    def test_constant_field(self):
        cfg = small_config()
        u = sample_and_hold(self._state(constant(Grid2D(m=16), 0.4)), Partition.build(0.25), cfg)
        np.testing.assert_allclose(u, -0.95 * 0.4, rtol=1e-12)

    def test_point_measurement(self):
        cfg = small_config(meas_mode="point")
        u = sample_and_hold(self._state(sinsin(Grid2D(m=16), 0.236)), Partition.build(0.25), cfg)
        assert u[0] == pytest.approx(-0.95 * 0.236 * math.sin(math.pi / 8) ** 2, rel=1e-12)

    def test_only_at_sampling_instants(self):
        cfg = small_config()
        with pytest.raises(PreconditionError):
            sample_and_hold(self._state(Field.zeros(Grid2D(m=16)), step_index=3), Partition.build(0.25), cfg)


def test_apply_control_fills_indicators():
    grid, part = Grid2D(m=16), Partition.build(0.25)
    held = np.arange(16, dtype=float)
    out = apply_control(np.zeros(grid.shape), part, grid, held)
    assert np.array_equal(out, part.owner_map(grid).astype(float))
    with pytest.raises(PreconditionError):
        apply_control(np.zeros(grid.shape), part, grid, np.zeros(4))


def test_held_control_changes_only_at_sampling_instants():
    cfg = small_config()
    stepper = KseStepper(cfg)
    state = stepper.initial_state(initial_field(cfg))
    previous = state.held_u.copy()
    for _ in range(25):
        state = stepper.step(state)
        if state.step_index % 10 == 0:
            expected = [-cfg.mu * measure(state.z, s, stepper.partition, "averaged")
                        for s in stepper.partition.subdomains]
            np.testing.assert_allclose(state.held_u, expected, rtol=1e-12, atol=0)
            assert state.last_sample_t == pytest.approx(state.t)
        else:
            assert np.array_equal(state.held_u, previous)
        previous = state.held_u.copy()


def test_replay_is_deterministic():
    cfg = small_config()
    runs = []
    for _ in range(2):
        stepper = KseStepper(cfg)
        runs.append(run_steps(stepper, stepper.initial_state(initial_field(cfg)), 20))
    assert np.array_equal(runs[0].z.values, runs[1].z.values)
    assert np.array_equal(runs[0].held_u, runs[1].held_u)


def _final_field(dt: float) -> np.ndarray:
    cfg = SimConfig(m=16, dt=dt, horizon=0.002, control_mode="continuous", ic="bump")
    stepper = KseStepper(cfg)
    state = run_steps(stepper, stepper.initial_state(initial_field(cfg)), cfg.n_steps)
    return state.z.values


def test_time_stepping_is_first_order():
    a, b, c = (_final_field(dt) for dt in (5e-5, 2.5e-5, 1.25e-5))
    ratio = np.max(np.abs(a - b)) / np.max(np.abs(b - c))
    assert 1.7 <= ratio <= 2.3


def test_blowup_is_flagged(monkeypatch):
    monkeypatch.setattr("utils.kse_stepper.BLOWUP_C0", 1e-3)
    cfg = small_config()
    stepper = KseStepper(cfg)
    state = run_steps(stepper, stepper.initial_state(initial_field(cfg)), 20)
    assert state.blowup
    assert state.step_index == 1
    row = stepper.monitors(state)
    assert row.blowup and math.isinf(row.V)


def test_history_term_resets_at_sampling_instants():
    cfg = small_config(r=1.0)
    stepper = KseStepper(cfg)
    state = run_steps(stepper, stepper.initial_state(initial_field(cfg)), 5)
    assert len(state.zt_history) == 6
    assert stepper.history_term(state) > 0.0
    state = run_steps(stepper, state, 5)
    assert len(state.zt_history) == 1
    assert state.zt_history[0][0] == state.t == state.last_sample_t
    assert stepper.history_term(state) == 0.0


def test_history_integral_starts_at_the_sampling_instant():
    cfg = small_config(r=1.0)
    stepper = KseStepper(cfg)
    state = run_steps(stepper, stepper.initial_state(initial_field(cfg)), 10)
    for n in range(1, 4):
        state = stepper.step(state)
        times = [s for s, _ in state.zt_history]
        assert times[0] == pytest.approx(state.last_sample_t, abs=1e-15)
        assert times[-1] == pytest.approx(state.t, abs=1e-15)
        assert len(times) == n + 1


def test_v1_monitor_combines_energy_and_history():
    cfg = small_config(r=1.0)
    stepper = KseStepper(cfg)
    state = run_steps(stepper, stepper.initial_state(initial_field(cfg)), 4)
    row = stepper.monitors(state)
    expected = energy_norm_sq(state.z, cfg.p1, cfg.p2) + stepper.history_term(state)
    assert row.V1 == pytest.approx(expected, rel=1e-12)


def test_energy_norm_converges_for_reference_initial_condition():
    p1, p2, a = 80.6354, 5.145, 0.236
    exact = p1 * a ** 2 / 4.0 + p2 * math.pi ** 4 * a ** 2
    values = [energy_norm_sq(sinsin(Grid2D(m=m), a), p1, p2) for m in (32, 64, 128)]
    assert values == pytest.approx([exact] * 3, rel=2e-3)
    assert abs(values[2] - exact) < abs(values[0] - exact)


def test_mismatched_initial_field_rejected():
    stepper = KseStepper(small_config())
    with pytest.raises(ConfigurationError):
        stepper.initial_state(Field.zeros(Grid2D(m=32)))


class TestFactorizedOperator:
    def test_negative_definite_rejected(self):
        with pytest.raises(ConfigurationError):
            FactorizedOperator(-sps.identity(5, format="csc"))

    def test_solve_matches_direct_solver(self):
        n = 10
        a = sps.diags([-1.0, 4.0, -1.0], [-1, 0, 1], shape=(n, n), format="csc")
        rhs = np.linspace(-1.0, 1.0, n)
        np.testing.assert_allclose(FactorizedOperator(a).solve(rhs), spsolve(a, rhs), rtol=1e-12)


class TestSmallestEigenvalue:
    @staticmethod
    def _stalled(*args, **kwargs):
        raise ArpackNoConvergence("no convergence", np.array([]), np.array([]))

    def test_dense_fallback_when_arpack_stalls(self, monkeypatch):
        monkeypatch.setattr("utils.kse_stepper.eigsh", self._stalled)
        a = sps.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(10, 10), format="csr")
        assert smallest_eigenvalue(a) == pytest.approx(2.0 - 2.0 * math.cos(math.pi / 11), rel=1e-12)

    def test_large_system_raises_when_arpack_stalls(self, monkeypatch):
        monkeypatch.setattr("utils.kse_stepper.eigsh", self._stalled)
        monkeypatch.setattr("utils.kse_stepper.DENSE_EIG_LIMIT", 5)
        with pytest.raises(ConfigurationError):
            smallest_eigenvalue(sps.identity(10, format="csr"))

    def test_matches_dense_spectrum(self):
        a = sps.diags([-1.0, 4.0, -1.0], [-1, 0, 1], shape=(30, 30), format="csr")
        assert smallest_eigenvalue(a) == pytest.approx(np.linalg.eigvalsh(a.toarray())[0], rel=1e-8)
