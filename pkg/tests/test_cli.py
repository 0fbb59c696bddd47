import contextlib
import io
import json
import os
import shutil
import tempfile
import unittest

import pandas as pd

from src.analysis.metrics import overlap_report
from src.cli import main
from src.pipeline.experiment import read_embeddings

SMALL_RUN = ['--feat-dim', '64', '--emb-dim', '8', '--epochs', '1', '--k', '3', '--hidden-grid', '4,8',
             '--cv-folds', '2', '--clf-epochs', '5', '--clf-batch', '16']


def run_cli(*argv):
    stdout, stderr = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
        code = main(['--log-level', 'WARNING', *argv])
    return code, stdout.getvalue(), stderr.getvalue()


def printed_values(output):
    values = {}
    for line in output.splitlines():
        key, sep, value = line.partition('=')
        if sep and ' ' not in key:
            values.setdefault(key, value)
    return values


class TestCli(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.test_dir = tempfile.mkdtemp()
        cls.data_dir = os.path.join(cls.test_dir, 'ds')
        code, _, _ = run_cli('gen-synth', '--n-minority', '15', '--imbalance-ratio', '3', '--overlap', '0.3',
                             '--vocab-size', '150', '--doc-len', '12', '--feat-dim', '64', '--seed', '1',
                             '-o', cls.data_dir)
        assert code == 0
        cls.corpus = os.path.join(cls.data_dir, 'corpus.jsonl')

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.test_dir)

    def out(self, name):
        return os.path.join(self.test_dir, name)

    def test_gen_synth(self):
        first, second = self.out('gen_a'), self.out('gen_b')
        args = ['--n-minority', '100', '--imbalance-ratio', '9', '--overlap', '0.5', '--seed', '7',
                '--vocab-size', '300', '--doc-len', '10']
        code, stdout, _ = run_cli('gen-synth', *args, '-o', first)
        self.assertEqual(code, 0)
        values = printed_values(stdout)
        self.assertEqual(values['size'], '1000')
        self.assertEqual(values['imbalance_ratio'], '9.0')
        self.assertTrue(stdout.startswith('n_minority=100'))

        run_cli('gen-synth', *args, '-o', second)
        for name in ('corpus.jsonl', 'corpus.meta.json'):
            with open(os.path.join(first, name), 'rb') as a, open(os.path.join(second, name), 'rb') as b:
                self.assertEqual(a.read(), b.read())

    def test_train_is_replayable(self):
        output = self.out('train')
        args = ['train', '--train-path', self.corpus, '--c', '0', *SMALL_RUN, '--output-dir', output]
        code, stdout, _ = run_cli(*args)
        self.assertEqual(code, 0)
        self.assertTrue(stdout.startswith('c=0.0\n'))
        for name in ('encoder.joblib', 'training_log.csv', 'run_report.json'):
            self.assertTrue(os.path.exists(os.path.join(output, name)), name)
        with open(os.path.join(output, 'run_report.json'), 'rb') as f:
            first = f.read()

        run_cli(*args)
        with open(os.path.join(output, 'run_report.json'), 'rb') as f:
            self.assertEqual(f.read(), first)

    def test_evaluate_overlap_project(self):
        output = self.out('evaluate')
        code, stdout, _ = run_cli('evaluate', '--train-path', self.corpus, *SMALL_RUN, '--output-dir', output)
        self.assertEqual(code, 0)
        self.assertIn('f1', printed_values(stdout))
        with open(os.path.join(output, 'run_report.json'), encoding='utf-8') as f:
            report = json.load(f)
        self.assertEqual(report['config']['train_path'], self.corpus)

        embeddings_path = os.path.join(output, 'embeddings_test.csv')
        code, stdout, _ = run_cli('overlap', '--embeddings', embeddings_path, '--k', '5',
                                  '--output-dir', self.out('overlap'))
        self.assertEqual(code, 0)
        values = printed_values(stdout)
        embeddings, labels = read_embeddings(embeddings_path)
        expected = overlap_report(embeddings, labels, 5)
        self.assertEqual(values['si'], f"{expected.si:.6f}")
        self.assertEqual(values['kdn'], f"{expected.kdn:.6f}")
        self.assertTrue(os.path.exists(self.out(os.path.join('overlap', 'overlap.csv'))))

        code, _, _ = run_cli('project', '--embeddings', embeddings_path, '--dims', '2', '--plot',
                             '--output-dir', self.out('project'))
        self.assertEqual(code, 0)
        projection = pd.read_csv(self.out(os.path.join('project', 'projection.csv')))
        self.assertEqual(list(projection.columns), ['x', 'y', 'label'])
        self.assertTrue(os.path.exists(self.out(os.path.join('project', 'projection.png'))))

    def test_sweep(self):
        output = self.out('sweep')
        code, stdout, _ = run_cli('sweep-c', '--c', '0,0.5,1', '--seeds', '1,2,3', '--train-path', self.corpus,
                                  *SMALL_RUN, '--output-dir', output)
        self.assertEqual(code, 0)
        table = pd.read_csv(os.path.join(output, 'sweep_table.csv'))
        means = pd.read_csv(os.path.join(output, 'sweep_means.csv'))
        self.assertEqual(len(table), 9)
        self.assertEqual(list(means['c']), [0.0, 0.5, 1.0])
        self.assertIn('selection=oracle-test-f1', stdout)
        # the list of c values never reaches the template config
        self.assertEqual(printed_values(stdout)['c'], '0.5')
        self.assertEqual(printed_values(stdout)['sweep_c'], '0,0.5,1')

    def test_sweep_over_distances(self):
        output = self.out('sweep_distances')
        code, stdout, stderr = run_cli('sweep-c', '--c', '0,1', '--seeds', '1', '--distances', 'euclidean,cosine',
                                       '--train-path', self.corpus, *SMALL_RUN, '--output-dir', output)
        self.assertEqual(code, 0, stderr)
        table = pd.read_csv(os.path.join(output, 'sweep_table.csv'))
        self.assertEqual(list(zip(table['distance'], table['c'])),
                         [('cosine', 0.0), ('cosine', 1.0), ('euclidean', 0.0), ('euclidean', 1.0)])
        means = pd.read_csv(os.path.join(output, 'sweep_means.csv'))
        self.assertEqual(means.groupby('distance')['optimized'].sum().to_dict(), {'cosine': 1, 'euclidean': 1})
        self.assertIn('best_c[cosine]=', stdout)
        self.assertIn('best_c[euclidean]=', stdout)

    def test_sweep_rejects_unknown_distance(self):
        code, _, stderr = run_cli('sweep-c', '--c', '0', '--seeds', '1', '--distances', 'hamming',
                                  '--train-path', self.corpus, '--output-dir', self.out('sweep_bad'))
        self.assertEqual(code, 2)
        self.assertIn('stage=config type=ConfigError', stderr)

    def test_error_exit_codes(self):
        bad_corpus = self.out('bad.jsonl')
        with open(bad_corpus, 'w', encoding='utf-8') as f:
            f.write('{"text": "fine", "label": 0}\n{"text": "broken", "label": 5}\n')
        code, _, stderr = run_cli('train', '--train-path', bad_corpus, '--output-dir', self.out('bad'))
        self.assertEqual(code, 3)
        self.assertIn('stage=load_data type=DataError', stderr)
        self.assertIn(':2:', stderr)

        tokenless = self.out('tokenless.jsonl')
        with open(self.corpus, encoding='utf-8') as source, open(tokenless, 'w', encoding='utf-8') as dst:
            lines = source.readlines()
            dst.writelines(lines)
            dst.write('{"text": "!!!", "label": 0}\n')
        code, _, stderr = run_cli('train', '--train-path', tokenless, *SMALL_RUN, '--output-dir', self.out('tl'))
        self.assertEqual(code, 3)
        self.assertIn('stage=load_data type=DataError', stderr)
        self.assertIn(f':{len(lines) + 1}:', stderr)

        code, _, stderr = run_cli('train', '--train-path', self.corpus, '--c', '1.5')
        self.assertEqual(code, 2)
        self.assertIn('type=ConfigError', stderr)

        code, _, _ = run_cli('overlap', '--embeddings', self.out('missing.csv'), '--output-dir', self.out('x'))
        self.assertEqual(code, 3)

    def test_unknown_flag_rejected(self):
        with self.assertRaises(SystemExit) as ctx:
            run_cli('train', '--no-such-flag', '1')
        self.assertEqual(ctx.exception.code, 2)


if __name__ == '__main__':
    unittest.main()
