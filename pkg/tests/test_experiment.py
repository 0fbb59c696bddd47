import filecmp
import json
import os
import shutil
import tempfile
import unittest
from unittest.mock import patch

import numpy as np
import pandas as pd

from src.analysis.metrics import overlap_report
from src.config import RunConfig
from src.data_collection.corpus import write_corpus
from src.data_collection.sample_data_generator import gen_synthetic
from src.errors import ConfigError, DataError, DivergenceError
from src.pipeline.experiment import (
    embeddings_frame, evaluate_checkpoint, load_datasets, read_embeddings, run_experiment, run_training,
    sweep_c, write_run_artifacts, write_sweep,
)


class ExperimentTestCase(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.test_dir = tempfile.mkdtemp()
        ds = gen_synthetic(n_minority=15, imbalance_ratio=3, overlap=0.3, vocab_size=150,
                           doc_len=12, seed=0, feat_dim=64)
        cls.corpus_path = write_corpus(ds, os.path.join(cls.test_dir, 'corpus.jsonl'))

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.test_dir)

    def config(self, name, **changes):
        values = dict(train_path=self.corpus_path, feat_dim=64, emb_dim=8, epochs=1, k=3,
                      hidden_grid=(4, 8), cv_folds=2, clf_epochs=5, clf_batch=16,
                      output_dir=os.path.join(self.test_dir, name))
        values.update(changes)
        return RunConfig(**values)


class TestRunExperiment(ExperimentTestCase):
    def test_load_datasets_splits_training_corpus(self):
        train, test = load_datasets(self.config('split'))
        self.assertEqual(len(train) + len(test), 60)
        self.assertEqual(test.class_counts, {0: 9, 1: 3})

    def test_missing_train_path(self):
        with self.assertRaises(ConfigError) as ctx:
            load_datasets(self.config('none', train_path=None))
        self.assertEqual(ctx.exception.stage, 'load_data')

    def test_report_contents(self):
        cfg = self.config('report')
        report, artifacts = run_experiment(cfg)
        data = report.to_dict()
        self.assertNotIn('wall_clock_seconds', data)
        self.assertGreater(report.wall_clock_seconds, 0.0)
        self.assertEqual(data['config']['c'], 0.5)
        self.assertEqual(len(data['epoch_losses']), 1)
        self.assertEqual(data['final_losses'], data['epoch_losses'][-1])
        for key in ('precision', 'recall', 'f1'):
            self.assertTrue(0.0 <= data['metrics'][key] <= 1.0)
        self.assertEqual(sum(data['metrics']['confusion'].values()), 12)
        self.assertIn(data['cv']['chosen_width'], (4, 8))

        expected = overlap_report(artifacts.test_embeddings, artifacts.test_labels, 3)
        self.assertEqual(data['overlap'], expected.to_dict())

    def test_artifacts_and_determinism(self):
        first_cfg, second_cfg = self.config('det_a'), self.config('det_b')
        paths_a = write_run_artifacts(*run_experiment(first_cfg), first_cfg.output_dir)
        paths_b = write_run_artifacts(*run_experiment(second_cfg), second_cfg.output_dir)

        for name in ('training_log', 'embeddings_train', 'embeddings_test', 'projection'):
            self.assertTrue(filecmp.cmp(paths_a[name], paths_b[name], shallow=False), name)

        with open(paths_a['run_report'], encoding='utf-8') as f:
            report_a = json.load(f)
        with open(paths_b['run_report'], encoding='utf-8') as f:
            report_b = json.load(f)
        report_a['config'].pop('output_dir')
        report_b['config'].pop('output_dir')
        self.assertEqual(report_a, report_b)

        log = pd.read_csv(paths_a['training_log'], float_precision='round_trip')
        self.assertEqual(list(log.columns), ['step', 'epoch', 'c', 'carol', 'recon', 'total'])
        np.testing.assert_allclose(log['total'], log['c'] * log['carol'] + (1 - log['c']) * log['recon'],
                                   rtol=1e-12, atol=1e-12)
        projection = pd.read_csv(paths_a['projection'])
        self.assertEqual(list(projection.columns), ['x', 'y', 'label'])

    def test_training_then_checkpoint_evaluation(self):
        cfg = self.config('ckpt')
        report, artifacts = run_training(cfg)
        self.assertEqual(report.metrics, {})
        paths = write_run_artifacts(report, artifacts, cfg.output_dir, checkpoint=True)
        self.assertTrue(os.path.exists(paths['checkpoint']))

        evaluated, eval_artifacts = evaluate_checkpoint(cfg, paths['checkpoint'])
        self.assertEqual(evaluated.epoch_losses, [])
        direct, direct_artifacts = run_experiment(cfg)
        np.testing.assert_array_equal(eval_artifacts.test_embeddings, direct_artifacts.test_embeddings)
        self.assertEqual(evaluated.metrics, direct.metrics)


class TestEmbeddingsFiles(ExperimentTestCase):
    def test_round_trip(self):
        embeddings = np.array([[0.1, -0.2], [1.0 / 3.0, 2.0]])
        path = os.path.join(self.test_dir, 'emb.csv')
        embeddings_frame(embeddings, [1, 0]).to_csv(path, index=False, float_format='%.17g')
        values, labels = read_embeddings(path)
        np.testing.assert_array_equal(values, embeddings)
        np.testing.assert_array_equal(labels, [1, 0])

    def test_malformed_files(self):
        path = os.path.join(self.test_dir, 'bad.csv')
        with open(path, 'w', encoding='utf-8') as f:
            f.write('label,e0\n0,1.5\n1,abc\n')
        with self.assertRaises(DataError) as ctx:
            read_embeddings(path)
        self.assertIn('line 3', str(ctx.exception))

        with open(path, 'w', encoding='utf-8') as f:
            f.write('e0,e1\n0.1,0.2\n')
        with self.assertRaises(DataError):
            read_embeddings(path)
        with self.assertRaises(DataError):
            read_embeddings(os.path.join(self.test_dir, 'missing.csv'))


class TestSweep(ExperimentTestCase):
    def test_table_shape_and_order(self):
        result = sweep_c(self.config('sweep'), [1.0, 0.0], [2, 1])
        self.assertEqual(len(result.table), 4)
        self.assertEqual(list(zip(result.table['c'], result.table['seed'])),
                         [(0.0, 1), (0.0, 2), (1.0, 1), (1.0, 2)])
        self.assertEqual(list(result.means['c']), [0.0, 1.0])
        self.assertIn(result.best_c, (0.0, 1.0))

        paths = write_sweep(result, self.config('sweep').output_dir)
        means = pd.read_csv(paths['sweep_means'])
        self.assertEqual(int(means['optimized'].sum()), 1)
        self.assertEqual(set(means['selection']), {'oracle-test-f1'})

    def test_singleton_sweep_matches_run(self):
        cfg = self.config('single', c=0.5, seed=2)
        result = sweep_c(cfg, [0.5], [2])
        report, _ = run_experiment(cfg)
        row = result.table.iloc[0]
        self.assertEqual(row['f1'], report.metrics['f1'])
        self.assertEqual(row['kdn'], report.overlap['kdn'])
        self.assertEqual(row['final_recon'], report.final_losses['recon'])

    def test_failed_cell_is_recorded(self):
        original = run_experiment

        def flaky(cfg):
            if cfg.c == 1.0:
                raise DivergenceError('boom', component='carol', stage='train_encoder')
            return original(cfg)

        with patch('src.pipeline.experiment.run_experiment', side_effect=flaky):
            result = sweep_c(self.config('flaky'), [0.0, 1.0], [0])
        self.assertEqual(list(result.table['status']), ['ok', 'failed'])
        self.assertIn('train_encoder', result.table['error'][1])
        self.assertEqual(list(result.means['c']), [0.0])
        self.assertEqual(result.best_c, 0.0)

    def test_unexpected_errors_are_recorded(self):
        original = run_experiment

        def broken(cfg):
            if cfg.seed == 1:
                raise FloatingPointError('overflow in matmul')
            return original(cfg)

        with patch('src.pipeline.experiment.run_experiment', side_effect=broken):
            result = sweep_c(self.config('unexpected'), [0.0], [0, 1])
        self.assertEqual(list(result.table['status']), ['ok', 'failed'])
        self.assertEqual(result.table['error'][1], 'FloatingPointError[unknown]: overflow in matmul')
        self.assertTrue(np.isnan(result.table['f1'][1]))

    def test_distance_axis(self):
        result = sweep_c(self.config('distances'), [0.0, 1.0], [0], distances=['euclidean', 'cosine'])
        self.assertEqual(list(zip(result.table['distance'], result.table['c'])),
                         [('cosine', 0.0), ('cosine', 1.0), ('euclidean', 0.0), ('euclidean', 1.0)])
        self.assertEqual(list(result.means.columns[:2]), ['distance', 'c'])
        self.assertEqual(set(result.best_by_distance), {'cosine', 'euclidean'})
        self.assertEqual(result.best_by_distance[result.best_distance], result.best_c)

        # c=0 cells ignore the contrastive distance entirely
        recon = result.table.set_index(['distance', 'c'])['final_recon']
        self.assertEqual(recon[('cosine', 0.0)], recon[('euclidean', 0.0)])

        paths = write_sweep(result, self.config('distances').output_dir)
        means = pd.read_csv(paths['sweep_means'])
        self.assertEqual(means.groupby('distance')['optimized'].sum().to_dict(), {'cosine': 1, 'euclidean': 1})

    def test_invalid_values(self):
        with self.assertRaises(ConfigError):
            sweep_c(self.config('bad'), [0.5, 1.2], [0])
        with self.assertRaises(ConfigError):
            sweep_c(self.config('bad'), [0.5], [])
        with self.assertRaises(ConfigError) as ctx:
            sweep_c(self.config('bad'), [0.5], [0], distances=['manhattan'])
        self.assertEqual(ctx.exception.stage, 'config')


if __name__ == '__main__':
    unittest.main()
