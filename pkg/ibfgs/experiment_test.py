import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from ibfgs import experiment
from ibfgs.errors import ConfigurationError, ExperimentError
from ibfgs.models import (
    C2Rule, HoldoutKind, IterationRecord, ModelPoint, RunTrace, SmoothingFlavor, StepKind, SummaryRow,
)

TINY = {
    'DATASETS': 'tiny=gaussian:3:40:4:0',
    'HOLDOUT': 'fixed_split:30',
    'LABELED_FRACTION': '0.2',
    'VARIANTS': 'smooth,subgradient',
    'C1_EXPONENTS': '0',
    'C2_EXPONENTS': '1',
    'MAX_ITERS': '50',
}


class ConfigTest(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def _write(self, text):
        path = Path(self.tmp.name) / 'experiment.env'
        path.write_text(text, encoding='utf-8')
        return path

    def test_load_file(self):
        path = self._write(
            'DATASETS=a.txt;b=data/b.txt;g=gaussian:5:100:2.5:3\n'
            'HOLDOUT=fixed_split:80\n'
            'SEED=7\n'
            'STEP_POLICY=backtracking:0.5\n'
            'C2_RULE=power\n'
            'SCALE_FEATURES=yes\n'
            'MU0=0.2\n'
            'MU_FLOOR=0.005\n')
        cfg = experiment.load_config(path)
        self.assertEqual([d.name for d in cfg.datasets], ['a', 'b', 'g'])
        self.assertEqual(cfg.datasets[1].path, 'data/b.txt')
        self.assertEqual(cfg.datasets[2].generator.count, 100)
        self.assertEqual(cfg.datasets[2].generator.seed, 3)
        self.assertEqual(cfg.split.holdout, HoldoutKind.FIXED_SPLIT)
        self.assertEqual(cfg.split.train_count, 80)
        self.assertEqual((cfg.split.seed, cfg.solver.seed, cfg.baseline.seed), (7, 7, 7))
        self.assertEqual(cfg.solver.step_policy.kind, StepKind.BACKTRACKING)
        self.assertEqual(cfg.solver.step_policy.tau, 0.5)
        self.assertEqual(cfg.c2_rule, C2Rule.POWER)
        self.assertTrue(cfg.scale_features)
        self.assertEqual((cfg.solver.mu0, cfg.solver.mu_floor), (0.2, 0.005))

    def test_overrides_take_precedence(self):
        path = self._write('DATASETS=a.txt\nMAX_ITERS=100\nSMOOTHING_FLAVOR=piecewise\n')
        cfg = experiment.load_config(path, {'MAX_ITERS': '5', 'SMOOTHING_FLAVOR': None})
        self.assertEqual(cfg.solver.max_iters, 5)
        self.assertEqual(cfg.baseline.max_iters, 5)
        self.assertEqual(cfg.smoothing_flavor, SmoothingFlavor.PIECEWISE)

    def test_defaults(self):
        cfg = experiment.config_from_values({'DATASETS': 'a.txt'})
        self.assertEqual(cfg.split.fold_count, 10)
        self.assertEqual(cfg.split.labeled_fraction, 0.1)
        self.assertEqual(len(cfg.c_pairs()), 12)
        self.assertEqual(len(cfg.variants), 6)

    def test_rejected_configurations(self):
        for values in (
                {},
                {'DATASETS': 'a.txt', 'FOO': '1'},
                {'DATASETS': 'a.txt', 'VARIANTS': 'newton'},
                {'DATASETS': 'a.txt', 'MAX_ITERS': 'many'},
                {'DATASETS': 'a.txt', 'HOLDOUT': 'fixed_split'},
                {'DATASETS': 'g=gaussian:3:10'},
                {'DATASETS': 'a.txt', 'C1_EXPONENTS': ','},
                {'DATASETS': 'a.txt', 'SCALE_FEATURES': 'maybe'},
        ):
            with self.subTest(values=values), self.assertRaises(ConfigurationError):
                experiment.config_from_values(values)

    def test_missing_file(self):
        with self.assertRaises(ConfigurationError):
            experiment.load_config(Path(self.tmp.name) / 'missing.env')

    def test_c_pair_rules(self):
        base = {'DATASETS': 'a.txt', 'C1_EXPONENTS': '1', 'C2_EXPONENTS': '0,2'}
        scaled = experiment.config_from_values(base).c_pairs()
        power = experiment.config_from_values({**base, 'C2_RULE': 'power'}).c_pairs()
        absolute = experiment.config_from_values({**base, 'C2_RULE': 'absolute'}).c_pairs()
        for pairs, expected in ((scaled, [(10.0, 10.0), (10.0, 0.1)]),
                                (power, [(10.0, 1.0), (10.0, 0.01)]),
                                (absolute, [(10.0, 1.0), (10.0, 0.01)])):
            for (c1, c2), (e1, e2) in zip(pairs, expected):
                self.assertAlmostEqual(c1, e1)
                self.assertAlmostEqual(c2, e2)


class TestErrorTest(unittest.TestCase):

    def test_counts_mistakes(self):
        model = ModelPoint(w=[1.0, 0.0], b=0.0)
        features = np.array([[1.0, 5.0], [-2.0, 0.0], [3.0, 1.0], [-1.0, 1.0]])
        labels = np.array([1.0, -1.0, -1.0, 1.0])
        self.assertEqual(experiment.test_error(model, features, labels), 0.5)

    def test_zero_margin_predicts_positive(self):
        model = ModelPoint(w=[0.0], b=0.0)
        self.assertEqual(experiment.test_error(model, np.array([[3.0]]), np.array([1.0])), 0.0)
        self.assertEqual(experiment.test_error(model, np.array([[3.0]]), np.array([-1.0])), 1.0)

    def test_empty_test_set(self):
        with self.assertRaises(ValueError):
            experiment.test_error(ModelPoint(w=[1.0], b=0.0), np.zeros((0, 1)), np.zeros(0))


class TraceTest(unittest.TestCase):

    def _trace(self, count):
        records = [
            IterationRecord(iter=k + 1, governing_obj=1.0 / (k + 3), eq2_obj=0.1 + 1e-17 * k, step=0.5 ** k,
                            skipped=k % 2 == 1, index=k % 3, mu_min=0.1 * 0.9 ** k, mu_max=0.1)
            for k in range(count)
        ]
        return RunTrace(variant='smooth', records=records)

    def test_header_only(self):
        text = experiment.serialize_trace(self._trace(0))
        self.assertEqual(text, ','.join(experiment.TRACE_COLUMNS) + '\n')
        self.assertEqual(experiment.parse_trace(text), [])

    def test_one_line_per_record(self):
        trace = self._trace(7)
        text = experiment.serialize_trace(trace)
        self.assertEqual(len(text.splitlines()), 8)
        self.assertEqual(experiment.parse_trace(text), trace.records)

    def test_rejects_foreign_columns(self):
        with self.assertRaises(ValueError):
            experiment.parse_trace('a,b\n1,2\n')


class ProfileTest(unittest.TestCase):

    def test_ratios_and_curves(self):
        table = experiment.performance_profile({'p1': {'a': 1.0, 'b': 2.0, 'c': 3.0}}, taus=[1.0, 1.5, 2.0])
        self.assertEqual(table.ratios['p1'], {'a': 1.0, 'b': 1.5, 'c': 2.0})
        self.assertEqual(table.curves['a'], [1.0, 1.0, 1.0])
        self.assertEqual(table.curves['b'], [0.0, 1.0, 1.0])
        self.assertEqual(table.curves['c'], [0.0, 0.0, 1.0])

    def test_curves_are_monotone_fractions(self):
        rng = np.random.default_rng(0)
        values = {f'p{k}': {s: float(rng.uniform()) for s in 'abcd'} for k in range(30)}
        table = experiment.performance_profile(values)
        for curve in table.curves.values():
            self.assertTrue(all(0.0 <= x <= 1.0 for x in curve))
            self.assertTrue(all(x <= y for x, y in zip(curve, curve[1:])))
            self.assertEqual(curve[-1], 1.0)

    def test_degenerate_problem(self):
        table = experiment.performance_profile({'p': {'a': 2.0, 'b': 2.0}})
        self.assertEqual(table.ratios['p'], {'a': 1.0, 'b': 1.0})
        self.assertEqual(table.degenerate_problems, ['p'])

    def test_needs_two_solvers(self):
        with self.assertRaises(ValueError):
            experiment.performance_profile({'p': {'a': 1.0, 'b': float('nan')}})

    def test_profile_summary_drops_single_solver_problems(self):
        rows = [
            SummaryRow(dataset='d', fold=0, C1=1.0, C2=0.1, variant='smooth', final_objective=1.0, test_error=0.1,
                       iterations=5, skipped=0, gradient_evaluations=9),
            SummaryRow(dataset='d', fold=0, C1=1.0, C2=0.1, variant='raw', final_objective=3.0, test_error=0.2,
                       iterations=5, skipped=1, gradient_evaluations=9),
            SummaryRow(dataset='d', fold=1, C1=1.0, C2=0.1, variant='raw', final_objective=3.0, test_error=0.2,
                       iterations=5, skipped=1, gradient_evaluations=9),
        ]
        table = experiment.profile_summary(pd.DataFrame([r.model_dump() for r in rows]))
        self.assertEqual(len(table.ratios), 1)
        [ratios] = table.ratios.values()
        self.assertEqual(ratios, {'smooth': 1.0, 'raw': 2.0})
        with self.assertRaises(ValueError):
            experiment.profile_summary(pd.DataFrame([rows[2].model_dump()]))


class RunExperimentTest(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def _run(self, name, **overrides):
        output_dir = Path(self.tmp.name) / name
        cfg = experiment.config_from_values({**TINY, 'OUTPUT_DIR': str(output_dir), **overrides})
        return experiment.run_experiment(cfg), output_dir

    def test_tiny_grid(self):
        report, output_dir = self._run('first')
        self.assertTrue(report.ok)
        summary = pd.read_csv(output_dir / 'summary.csv')
        self.assertEqual(list(summary.columns), experiment.SUMMARY_COLUMNS)
        self.assertEqual(sorted(summary['variant']), ['smooth', 'subgradient'])
        self.assertTrue((summary['iterations'] == 50).all())
        self.assertTrue(summary['test_error'].between(0.0, 1.0).all())
        traces = sorted((output_dir / 'traces').glob('*.csv'))
        self.assertEqual(len(traces), 2)
        for path in traces:
            self.assertEqual(len(experiment.parse_trace(path.read_text(encoding='utf-8'))), 50)
        selected = pd.read_csv(output_dir / 'selected.csv')
        self.assertEqual(len(selected), 2)
        self.assertTrue((output_dir / 'timings.csv').is_file())
        self.assertFalse((output_dir / 'errors.csv').exists())

    def test_rerun_is_bit_identical(self):
        _, first = self._run('first')
        _, second = self._run('second')
        self.assertEqual((first / 'summary.csv').read_bytes(), (second / 'summary.csv').read_bytes())
        for path in (first / 'traces').glob('*.csv'):
            self.assertEqual(path.read_bytes(), (second / 'traces' / path.name).read_bytes())

    def test_workers_do_not_change_results(self):
        _, serial = self._run('serial')
        _, parallel = self._run('parallel', WORKERS='2')
        self.assertEqual((serial / 'summary.csv').read_bytes(), (parallel / 'summary.csv').read_bytes())

    def test_failing_cell_is_reported(self):
        report, output_dir = self._run('failing', VARIANTS='smooth,convexified', SMOOTHING_FLAVOR='sqrt')
        self.assertFalse(report.ok)
        self.assertEqual([row.variant for row in report.summary], ['smooth'])
        errors = pd.read_csv(output_dir / 'errors.csv')
        self.assertEqual(errors['variant'].tolist(), ['convexified'])
        self.assertIn('UnsupportedFlavorError', errors['message'][0])

    def test_unreadable_dataset(self):
        with self.assertRaises(ExperimentError) as ctx:
            self._run('missing', DATASETS=f'gone={Path(self.tmp.name) / "gone.txt"}')
        self.assertEqual(ctx.exception.dataset, 'gone')

    def test_kfold_with_scaling(self):
        report, _ = self._run('kfold', HOLDOUT='kfold', FOLDS='3', SCALE_FEATURES='true', VARIANTS='subgradient')
        self.assertEqual(sorted(row.fold for row in report.summary), [0, 1, 2])


if __name__ == '__main__':
    unittest.main()
