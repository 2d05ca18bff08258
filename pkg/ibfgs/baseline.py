"""Cyclic incremental subgradient descent, the comparator for the BFGS variants."""
import time

import logfire
import numpy as np

from .errors import NonFiniteIterateError
from .finite_sum import FiniteSum
from .models import SUBGRADIENT, BaselineConfig, Dataset, IterationRecord, ModelPoint, ObjectiveConfig, RunTrace, Variant
from .objective import TSVMFiniteSum, TSVMObjective


class IncrementalSubgradient:

    def __init__(self, cfg: BaselineConfig):
        self._cfg = cfg

    def run(self, problem: FiniteSum, omega0: np.ndarray | None = None) -> RunTrace:
        """Runs omega <- omega - alpha_k v with v a subgradient of component k mod m.

        ``omega0`` overrides the seeded random start.
        """
        cfg = self._cfg
        m, dim = problem.num_components, problem.dim
        if omega0 is None:
            omega = np.random.default_rng(cfg.seed).uniform(-cfg.init_box, cfg.init_box, size=dim)
        else:
            omega = np.array(omega0, dtype=float)

        trace = RunTrace(variant=SUBGRADIENT)
        started = time.perf_counter()
        with logfire.span('incremental subgradient run', m=m, dim=dim, max_iters=cfg.max_iters, seed=cfg.seed):
            for k in range(cfg.max_iters):
                index = k % m
                alpha = cfg.step_rule.at(k)
                omega_next = omega - alpha * problem.gradient(index, omega)
                trace.gradient_evaluations += 1
                if not np.all(np.isfinite(omega_next)):
                    trace.final = ModelPoint.from_vector(omega)
                    trace.wall_time = time.perf_counter() - started
                    raise NonFiniteIterateError(f'iterate {k + 1} has non-finite entries', trace=trace)
                omega = omega_next
                value = problem.value(omega)
                trace.records.append(IterationRecord(
                    iter=k + 1, governing_obj=value, eq2_obj=problem.true_value(omega), step=alpha,
                    skipped=False, index=index, mu_min=0.0, mu_max=0.0))
            trace.final = ModelPoint.from_vector(omega)
            trace.wall_time = time.perf_counter() - started
            logfire.info('subgradient finished: objective {objective}', objective=trace.final_objective,
                         wall_time=trace.wall_time)
        return trace


def run_subgradient(data: Dataset, obj_cfg: ObjectiveConfig, cfg: BaselineConfig) -> RunTrace:
    problem = TSVMFiniteSum(TSVMObjective(obj_cfg, data), Variant.RAW, tie_rule=cfg.tie_rule)
    return IncrementalSubgradient(cfg).run(problem)
