"""Incremental BFGS for finite sums, with the DC, smoothing and convexification variants.

Each component keeps its own curvature matrix B_i, its last evaluation point z_i and the
gradient v_i it produced there. The iterate minimizes the sum of the component models,

    omega = (sum_i B_i)^{-1} (sum_i B_i z_i - sum_i v_i),

and only the chosen component's state changes per iteration, so the aggregates u, g and the
inverse of sum_i B_i are maintained incrementally in O(n^2).
"""
import time
from dataclasses import dataclass
from typing import Callable, Optional

import logfire
import numpy as np

from . import linalg
from .errors import DegenerateDenominatorError, InvariantViolationError, NonFiniteIterateError
from .finite_sum import FiniteSum
from .models import (
    Dataset, IndexRule, IterationRecord, ModelPoint, ObjectiveConfig, RunTrace, SolverConfig, StepKind,
    StepPolicy, Variant,
)
from .objective import TSVMFiniteSum, TSVMObjective

_AUDIT_RTOL = 1e-8


@dataclass
class ComponentState:
    z: np.ndarray
    v: np.ndarray
    B: np.ndarray
    mu: float
    # Subgradient of the concave part at z, kept for nonconvex components in the DC variant.
    h: Optional[np.ndarray] = None


@dataclass
class AggregateState:
    Binv: np.ndarray
    u: np.ndarray
    g: np.ndarray


@dataclass
class UpdatePair:
    """What a callback sees after every iteration.

    ``components`` and ``aggregate`` are the live solver state; copy whatever you keep.
    """
    iteration: int
    index: int
    s: np.ndarray
    y: np.ndarray
    accepted: bool
    nonconvex: bool
    components: list[ComponentState]
    aggregate: AggregateState


UpdateCallback = Callable[[UpdatePair], None]


def choose_index(rule: IndexRule, k: int, m: int, rng: Optional[np.random.Generator] = None) -> int:
    if m < 1:
        raise ValueError(f'need at least one component, got m={m}')
    if rule == IndexRule.CYCLIC:
        return k % m
    if rng is None:
        raise ValueError('uniform_random index rule needs a random generator')
    return int(rng.integers(m))


def skip_test(s: np.ndarray, y: np.ndarray, c: float) -> bool:
    """True when the pair (s, y) is safe to use in a BFGS update."""
    if s.shape != y.shape:
        raise ValueError(f'mismatched displacement shapes {s.shape} and {y.shape}')
    s_norm = np.linalg.norm(s)
    y_norm = np.linalg.norm(y)
    return bool(s @ y > c * s_norm * y_norm and s_norm > c and y_norm > c)


def step_length(
        policy: StepPolicy, omega: np.ndarray, d: np.ndarray, objective: Callable[[np.ndarray], float]) -> float:
    """Step along ``d`` from ``omega``. Backtracking never rejects: it falls back to its smallest trial."""
    if policy.kind == StepKind.UNIT:
        return 1.0
    if policy.kind == StepKind.FIXED:
        return policy.alpha
    current = objective(omega)
    alpha = policy.tau
    for _ in range(policy.max_tries):
        if objective(omega + alpha * d) < current:
            return alpha
        alpha *= policy.shrink
    return alpha / policy.shrink


class IncrementalBFGS:

    def __init__(self, cfg: SolverConfig):
        self._cfg = cfg

    @property
    def cfg(self) -> SolverConfig:
        return self._cfg

    def _smoothed(self) -> bool:
        return self._cfg.variant.smoothed

    def _dc(self, problem: FiniteSum, index: int) -> bool:
        return self._cfg.variant == Variant.DC and problem.is_nonconvex(index)

    def _initial_state(
            self, problem: FiniteSum, omega: np.ndarray) -> tuple[list[ComponentState], AggregateState]:
        m, dim = problem.num_components, problem.dim
        mu0 = self._cfg.mu0
        components = []
        for i in range(m):
            h = None
            if self._dc(problem, i):
                g_sub, h = problem.dc_subgradients(i, omega)
                v = g_sub - h
            else:
                v = problem.gradient(i, omega, mu0 if self._smoothed() else None)
            components.append(ComponentState(z=omega.copy(), v=v, B=np.eye(dim), mu=mu0, h=h))
        aggregate = AggregateState(
            Binv=np.eye(dim) / m,
            u=m * omega,
            g=np.sum([c.v for c in components], axis=0),
        )
        return components, aggregate

    def _governing(self, problem: FiniteSum, mu: np.ndarray) -> Callable[[np.ndarray], float]:
        if self._smoothed():
            return lambda omega: problem.value(omega, mu)
        return problem.value

    def _refresh(
            self, problem: FiniteSum, index: int, state: ComponentState, omega: np.ndarray,
    ) -> tuple[np.ndarray, np.ndarray, float, Optional[np.ndarray], int]:
        """New gradient data for component ``index`` at ``omega``.

        Returns (y, v to store, new mu, new h, gradient evaluations used).
        """
        cfg = self._cfg
        if self._dc(problem, index):
            g_sub, h_new = problem.dc_subgradients(index, omega)
            # The displacement mixes the new convex part with the stored concave part.
            y = (g_sub - state.h) - state.v
            return y, g_sub - h_new, state.mu, h_new, 1
        if not self._smoothed():
            v = problem.gradient(index, omega)
            return v - state.v, v, state.mu, None, 1

        mu = state.mu
        v = problem.gradient(index, omega, mu)
        evaluations = 1
        if np.linalg.norm(v) < cfg.kappa * mu and mu > cfg.mu_floor:
            mu = max(mu * cfg.sigma, cfg.mu_floor)
            v = problem.gradient(index, omega, mu)
            evaluations += 1
        y = v - state.v
        curvature = problem.anchor_curvature(index, mu)
        if curvature is not None:
            y = y + curvature * (omega - state.z)
        return y, v, mu, None, evaluations

    def _audit(self, components: list[ComponentState], aggregate: AggregateState, k: int) -> None:
        for i, c in enumerate(components):
            if not linalg.is_positive_definite(c.B):
                raise InvariantViolationError(f'B of component {i} is not positive definite at iteration {k}')
        terms = [c.B @ c.z for c in components]
        for name, actual, parts in (('u', aggregate.u, terms), ('g', aggregate.g, [c.v for c in components])):
            expected = np.sum(parts, axis=0)
            scale = 1.0 + sum(np.linalg.norm(p) for p in parts)
            error = np.linalg.norm(actual - expected)
            if error > _AUDIT_RTOL * scale:
                raise InvariantViolationError(
                    f'{name} drifted from its definition at iteration {k}: error {error:.3e}, scale {scale:.3e}')
        logfire.debug('audit passed at iteration {k}', k=k)

    def run(self, problem: FiniteSum, callback: Optional[UpdateCallback] = None) -> RunTrace:
        cfg = self._cfg
        m, dim = problem.num_components, problem.dim
        policy = cfg.resolved_step_policy()
        rng = np.random.default_rng(cfg.seed)
        omega = rng.uniform(-cfg.init_box, cfg.init_box, size=dim)

        trace = RunTrace(variant=cfg.variant.value)
        started = time.perf_counter()
        with logfire.span(
                'incremental BFGS run {variant}', variant=cfg.variant.value, m=m, dim=dim,
                max_iters=cfg.max_iters, seed=cfg.seed):
            components, aggregate = self._initial_state(problem, omega)
            trace.gradient_evaluations = m
            mu = np.full(m, cfg.mu0)

            for k in range(cfg.max_iters):
                target = linalg.solve_apply(aggregate.Binv, aggregate.u - aggregate.g)
                d = target - omega
                alpha = step_length(policy, omega, d, self._governing(problem, mu))
                omega_next = omega + alpha * d if alpha != 1.0 else target
                if not np.all(np.isfinite(omega_next)):
                    trace.final = ModelPoint.from_vector(omega)
                    trace.wall_time = time.perf_counter() - started
                    raise NonFiniteIterateError(f'iterate {k + 1} has non-finite entries', trace=trace)
                omega = omega_next

                index = choose_index(cfg.index_rule, k, m, rng)
                state = components[index]
                s = omega - state.z
                y, v_new, mu_new, h_new, evaluations = self._refresh(problem, index, state, omega)
                trace.gradient_evaluations += evaluations

                accepted = skip_test(s, y, cfg.c)
                B_new = state.B
                if accepted:
                    try:
                        B_new = linalg.bfgs_update(state.B, s, y, cfg.eps_denominator)
                    except DegenerateDenominatorError:
                        accepted = False
                if accepted:
                    try:
                        aggregate.Binv = linalg.aggregate_inverse_update(
                            aggregate.Binv, state.B, s, y, cfg.eps_denominator)
                    except DegenerateDenominatorError as exc:
                        others = [c.B for j, c in enumerate(components) if j != index]
                        aggregate.Binv = linalg.dense_sum_invert(others + [B_new])
                        trace.fallback_inversions += 1
                        logfire.warn('falling back to dense inversion at iteration {k}: {reason}', k=k, reason=str(exc))
                else:
                    trace.skipped_updates += 1

                aggregate.u = aggregate.u + B_new @ omega - state.B @ state.z
                aggregate.g = aggregate.g + v_new - state.v
                components[index] = ComponentState(z=omega.copy(), v=v_new, B=B_new, mu=mu_new, h=h_new)
                mu[index] = mu_new

                if callback is not None:
                    callback(UpdatePair(
                        iteration=k, index=index, s=s, y=y, accepted=accepted,
                        nonconvex=problem.is_nonconvex(index), components=components, aggregate=aggregate))
                if cfg.debug and (k + 1) % cfg.audit_interval == 0:
                    self._audit(components, aggregate, k + 1)

                trace.records.append(IterationRecord(
                    iter=k + 1,
                    governing_obj=self._governing(problem, mu)(omega),
                    eq2_obj=problem.true_value(omega),
                    step=alpha,
                    skipped=not accepted,
                    index=index,
                    mu_min=float(mu.min()),
                    mu_max=float(mu.max()),
                ))

            trace.final = ModelPoint.from_vector(omega)
            trace.wall_time = time.perf_counter() - started
            logfire.info(
                '{variant} finished: objective {objective}, {skipped} skipped updates',
                variant=cfg.variant.value, objective=trace.final_objective, skipped=trace.skipped_updates,
                fallbacks=trace.fallback_inversions, wall_time=trace.wall_time)
        return trace


def solve_tsvm(
        data: Dataset, cfg: SolverConfig, obj_cfg: ObjectiveConfig,
        callback: Optional[UpdateCallback] = None) -> RunTrace:
    """Trains a TSVM with the variant named in ``cfg``."""
    problem = TSVMFiniteSum(
        TSVMObjective(obj_cfg, data), cfg.variant, tie_rule=cfg.tie_rule,
        rho_factor=cfg.rho_factor, sc_rho_factor=cfg.sc_rho_factor)
    return IncrementalBFGS(cfg).run(problem, callback)
