"""
Tests for the Oseen fixed point, continuation sweeps and Kovasznay convergence
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from errors import InvalidArgumentError
from models import FlowField, IterationConfig, KovasznayFlow, SolveStatus, SteadySolution
from Solver.services.assembly_service import AssemblyService
from Solver.services.oseen_service import OseenService
from Solver.services.problem_service import ProblemService
from helpers import small_channel, small_kovasznay

STRICT = IterationConfig(tol=1e-10, max_iter=60)


def test_steady_solve_converges(channel):
    """The fixed point converges and the converged field satisfies the nonlinear system"""
    solution = OseenService.solve_steady(channel, 0.1, cfg=STRICT)
    assert solution.status == SolveStatus.CONVERGED
    assert solution.converged
    assert solution.history[-1] < 1e-10
    assert solution.iterations == len(solution.history) == len(solution.iteration_times)
    assert solution.field.nu == 0.1
    assert OseenService.steady_residual(channel, solution.field, 0.1) < 1e-7
    assert OseenService.divergence_residual(channel, solution.field) < 1e-10


def test_not_converged_is_reported_not_raised(channel):
    """Hitting max_iter returns a NOT_CONVERGED solution"""
    solution = OseenService.solve_steady(channel, 0.1, cfg=IterationConfig(max_iter=1))
    assert solution.status == SolveStatus.NOT_CONVERGED
    assert solution.iterations == 1


def test_non_positive_viscosity_rejected(channel):
    """nu must be positive"""
    with pytest.raises(InvalidArgumentError):
        OseenService.solve_steady(channel, -0.1)


def test_under_relaxation_reaches_same_solution(channel):
    """Relaxed iterations converge to the same steady state"""
    plain = OseenService.solve_steady(channel, 0.1, cfg=IterationConfig(tol=1e-10, max_iter=60, acceleration_depth=0))
    relaxed = OseenService.solve_steady(
        channel, 0.1, cfg=IterationConfig(tol=1e-10, max_iter=200, under_relaxation=0.7, acceleration_depth=0)
    )
    assert relaxed.converged
    assert relaxed.iterations > plain.iterations
    disc = channel.discretization
    assert AssemblyService.h1_relative_change(disc, plain.field, relaxed.field) < 1e-8


def test_symmetric_inflow_gives_symmetric_flow(channel):
    """A centred window at low Reynolds number leaves u_x mirror-symmetric"""
    solution = OseenService.solve_steady(channel, 0.1, cfg=STRICT)
    assert OseenService.asymmetry_indicator(channel, solution.field) < 1e-8


def test_perturbed_inflow_breaks_symmetry():
    """The one-sided tilt produces a measurably asymmetric flow"""
    perturbed = small_channel(perturbation=0.1)
    solution = OseenService.solve_steady(perturbed, 0.1, cfg=STRICT)
    assert OseenService.asymmetry_indicator(perturbed, solution.field) > 1e-4


def test_intermediate_continuation_steps():
    """Moves larger than the step are split evenly"""
    steps = OseenService._intermediate(0.1, 0.05, 0.02)
    assert np.allclose(steps, [0.1 - 0.05 / 3, 0.1 - 0.1 / 3])
    assert OseenService._intermediate(0.1, 0.09, 0.02) == []
    assert OseenService._intermediate(0.1, 0.05, None) == []


def test_continuation_sweep(channel):
    """Every parameter converges and becomes a snapshot"""
    results, snapshots = OseenService.continuation_sweep(
        channel, [0.2, 0.1, 0.05], IterationConfig(tol=1e-9, continuation_step=0.04)
    )
    assert [r.nu for r in results] == [0.2, 0.1, 0.05]
    assert all(r.status == SolveStatus.CONVERGED for r in results)
    assert snapshots.count == 3
    assert snapshots.parameters == [0.2, 0.1, 0.05]
    assert snapshots.fingerprint == channel.discretization.fingerprint
    assert np.isclose(results[2].reynolds, 5.0)
    assert results[0].fom_time_s > 0.0


def test_continuation_requires_descending_parameters(channel):
    """Unsorted or repeated parameters are rejected"""
    with pytest.raises(InvalidArgumentError):
        OseenService.continuation_sweep(channel, [0.05, 0.1])
    with pytest.raises(InvalidArgumentError):
        OseenService.continuation_sweep(channel, [0.1, 0.1])


def test_continuation_halts_on_failure(channel):
    """The sweep stops at the first non-converged parameter and keeps earlier snapshots"""
    results, snapshots = OseenService.continuation_sweep(channel, [0.2, 0.1], IterationConfig(max_iter=1))
    assert len(results) == 1
    assert results[0].status == SolveStatus.NOT_CONVERGED
    assert snapshots.count == 0


def test_cold_start_matches_continuation(channel):
    """On a unique branch the starting guess does not matter"""
    cfg = IterationConfig(tol=1e-10, max_iter=60)
    warm, _ = OseenService.continuation_sweep(channel, [0.2, 0.1], cfg)
    cold, snapshots = OseenService.cold_start_sweep(channel, [0.1, 0.2], cfg, threads=2)
    assert [r.nu for r in cold] == [0.2, 0.1]
    assert snapshots.count == 2
    disc = channel.discretization
    for a, b in zip(warm, cold):
        assert AssemblyService.h1_relative_change(disc, a.solution.field, b.solution.field) < 1e-8

def test_warm_start_needs_no_more_iterations_than_cold(channel):
    """Continuation seeds save iterations over starting from rest"""
    cfg = IterationConfig(tol=1e-10, max_iter=80)
    warm, _ = OseenService.continuation_sweep(channel, [0.2, 0.15, 0.1], cfg)
    cold, _ = OseenService.cold_start_sweep(channel, [0.2, 0.15, 0.1], cfg, threads=1)
    for w, c in zip(warm[1:], cold[1:]):
        assert w.status == c.status == SolveStatus.CONVERGED
        assert w.iterations <= c.iterations


def reachable_within(reach, visited):
    """Stand-in steady solve that converges only for moves no longer than reach"""

    def solve(problem, nu, initial=None, cfg=None, threads=1):
        visited.append(nu)
        ok = initial is None or abs(initial.nu - nu) <= reach + 1e-12
        field = FlowField.zeros(problem.discretization).model_copy(update={"nu": nu})
        status = SolveStatus.CONVERGED if ok else SolveStatus.NOT_CONVERGED
        return SteadySolution(field=field, nu=nu, status=status, iterations=1, history=[0.0], iteration_times=[0.0])

    return solve


def test_failed_move_is_bisected(channel, monkeypatch):
    """A move that does not converge is retried through midpoints until the target is reached"""
    visited = []
    monkeypatch.setattr(OseenService, "solve_steady", staticmethod(reachable_within(0.03, visited)))
    start = FlowField.zeros(channel.discretization).model_copy(update={"nu": 0.2})
    solution = OseenService._advance(channel, start, 0.2, 0.1, IterationConfig(max_step_halvings=6))
    assert solution.converged
    assert solution.nu == 0.1
    assert np.allclose(visited, [0.1, 0.15, 0.175, 0.15, 0.1, 0.125, 0.1])


def test_bisection_gives_up_after_max_halvings(channel, monkeypatch):
    visited = []
    monkeypatch.setattr(OseenService, "solve_steady", staticmethod(reachable_within(0.03, visited)))
    start = FlowField.zeros(channel.discretization).model_copy(update={"nu": 0.2})
    solution = OseenService._advance(channel, start, 0.2, 0.1, IterationConfig(max_step_halvings=1))
    assert not solution.converged
    assert solution.nu == 0.1
    assert np.allclose(visited, [0.1, 0.15])



def test_kovasznay_error_decreases_with_order():
    """Exponential p-convergence against the closed-form solution"""
    errors = []
    for order in (4, 6, 8):
        problem, flow = small_kovasznay(order)
        solution = OseenService.solve_steady(problem, flow.nu, cfg=IterationConfig(tol=1e-10, max_iter=100))
        assert solution.converged
        error, relative = ProblemService.exact_h1_error(problem.discretization, solution.field, flow)
        assert 0.0 < relative < 1.0
        errors.append(error)
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 0.1 * errors[0]


def test_kovasznay_flow_is_divergence_free():
    """The closed-form velocity has zero divergence"""
    flow = KovasznayFlow(reynolds=40.0)
    x = np.linspace(-0.5, 1.0, 7)
    y = np.linspace(-0.5, 1.5, 7)
    dudx, _, _, dvdy = flow.gradient(x, y)
    assert np.allclose(dudx + dvdy, 0.0)
    assert flow.lam < 0


if __name__ == "__main__":
    pytest.main([__file__])
