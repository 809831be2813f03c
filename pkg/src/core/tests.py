import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import skipUnless

import numpy as np
import pandas as pd
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from data.daos import load_dataset
from evaluation.daos import RESULTS_FILE, SUMMARY_FILE, COMPARISON_TEXT_FILE
from protocol.daos import load_preset, load_protocol, save_protocol


#Test case class for the core application
class CoreAppTest(SimpleTestCase):
    #Checks if the application is in the test runtime
    def test_app_in_test_runtime(self):
        #Get the runtime environment
        runtime = settings.RUNTIME_ENVIRONMENT
        #Assert that the runtime environemnt is test
        self.assertEqual(runtime, 'test', 'Application should have been bootstrapped in test runtime')


#Test case class for the harbench management commands
class CommandTest(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name)

        #Write a small synthetic dataset and a short protocol to train on
        self.call('synth', '--subjects', '3', '--classes', '3', '--length', '640', '--window-length', '32',
                  '--out-dir', str(self.path / 'data'))
        self.protocol = save_protocol(
            load_preset('cv-baseline').replace(max_epoch=10, batch_size=32, early_stopping=False),
            self.path / 'quick.json')

    def tearDown(self):
        self.tmp.cleanup()

    def call(self, *args) -> str:
        out = StringIO()
        call_command(*args, stdout=out)
        return out.getvalue()

    def train_args(self, out_name: str) -> list[str]:
        return ['--dataset', str(self.path / 'data'), '--protocol', str(self.protocol), '--model', 'MCNN',
                '--out-dir', str(self.path / out_name)]

    #Checks that synth writes the on-disk dataset schema
    def test_synth(self):
        dataset = load_dataset(self.path / 'data')
        self.assertEqual(dataset.subjects(), [0, 1, 2])
        self.assertEqual(dataset.meta.window_length, 32)
        self.assertTrue((self.path / 'data' / 'subj_2.csv').is_file())

    #Checks that ingest converts a long-format csv into the dataset schema
    def test_ingest(self):
        rng = np.random.default_rng(0)
        channels = [f'imu_{index}' for index in range(77)]
        frame = pd.DataFrame(rng.normal(size=(4 * 60, 77)), columns=channels)
        frame.insert(0, 'person', np.repeat([1, 2, 3, 4], 60))
        frame['activity'] = rng.integers(0, 18, size=4 * 60)
        frame.loc[5, 'imu_0'] = np.nan
        frame.to_csv(self.path / 'oppo.csv', index=False)

        self.call('ingest', str(self.path / 'oppo.csv'), '--benchmark', 'OPPO', '--subject-column', 'person',
                  '--label-column', 'activity', '--out-dir', str(self.path / 'oppo'))
        dataset = load_dataset(self.path / 'oppo')
        self.assertEqual(dataset.subjects(), [1, 2, 3, 4])
        self.assertEqual(dataset.meta.n_channels, 77)
        self.assertFalse(np.isnan(dataset.recordings[1].values).any(), 'gaps should be interpolated')

    #Checks that ingest reports a missing source as bad input
    def test_ingest_missing_source(self):
        with self.assertRaises(CommandError) as context:
            self.call('ingest', str(self.path / 'absent.csv'), '--benchmark', 'OPPO')
        self.assertEqual(context.exception.returncode, 2)

    #Checks that an incomplete document is reported component by component
    def test_audit_incomplete(self):
        document = self.path / 'partial.json'
        document.write_text(json.dumps({'optimizer': 'ADAM', 'learning_rate': 0.001}))
        output = self.call('audit', str(document), '--out-dir', str(self.path / 'audit'))

        self.assertRegex(output, r'optimizer\s+MISSING', 'weight_decay is not declared')
        self.assertIn('completeness 0/10', output)
        self.assertIn('missing: dataset_description', output)
        report = json.loads((self.path / 'audit' / 'audit.json').read_text())
        self.assertEqual(report['completeness_score'], 0)

    #Checks that presets audit by name
    def test_audit_preset(self):
        self.assertIn('completeness 10/10', self.call('audit', 'new'))

    #Checks that an out of range factor aborts with exit status 2
    def test_run_rejects_bad_protocol(self):
        document = self.path / 'bad.json'
        document.write_text(json.dumps({**load_preset('cv-baseline').json(), 'learning_rate': 1.0}))

        with self.assertRaises(CommandError) as context:
            self.call('run', '--dataset', str(self.path / 'data'), '--protocol', str(document),
                      '--out-dir', str(self.path / 'bad'))
        self.assertEqual(context.exception.returncode, 2)
        self.assertEqual(json.loads(str(context.exception))['field'], 'learning_rate')

    #Checks that an unknown preset aborts before training
    def test_run_unknown_preset(self):
        with self.assertRaises(CommandError) as context:
            self.call('run', '--dataset', str(self.path / 'data'), '--protocol', 'fastest')
        self.assertEqual(context.exception.returncode, 2)

    #Checks that repeating a run of the cv-baseline preset with the same seed reproduces its trace
    def test_run_is_deterministic(self):
        preset_args = ['--dataset', str(self.path / 'data'), '--protocol', 'cv-baseline', '--model', 'MCNN',
                       '--seed', '0']
        first = self.call('run', *preset_args, '--out-dir', str(self.path / 'first'))
        second = self.call('run', *preset_args, '--out-dir', str(self.path / 'second'))

        self.assertIn('macro F1', first)
        self.assertEqual(first, second)
        self.assertEqual((self.path / 'first' / 'trace.csv').read_text(),
                         (self.path / 'second' / 'trace.csv').read_text())
        for name in ('protocol.json', 'checkpoint.npz', RESULTS_FILE):
            self.assertTrue((self.path / 'first' / name).is_file(), f'run should write {name}')

    #Checks that loso writes one row per seed and subject
    def test_loso(self):
        output = self.call('loso', *self.train_args('loso'), '--seeds', '0,1')
        results = pd.read_csv(self.path / 'loso' / RESULTS_FILE)
        self.assertEqual(len(results), 2 * 3)
        self.assertEqual(len(pd.read_csv(self.path / 'loso' / SUMMARY_FILE)), 1)
        self.assertIn('over 6 fold-runs', output)

    #Checks that sweep writes one family per value and the requested curves
    def test_sweep(self):
        output = self.call('sweep', *self.train_args('sweep'), '--factor', 'learning_rate',
                           '--values', '0.001,0.01', '--quantities', 'val_loss,lr')

        self.assertIn('learning_rate-0.001: final validation loss', output)
        self.assertIn('learning_rate-0.01: final validation loss', output)
        for name in ('MCNN-learning_rate_val_loss.svg', 'MCNN-learning_rate_lr.png',
                     'learning_rate-0.01/protocol.json'):
            self.assertTrue((self.path / 'sweep' / name).is_file(), f'sweep should write {name}')

    #Checks that a sweep over an unknown factor is rejected
    def test_sweep_unknown_factor(self):
        with self.assertRaises(CommandError) as context:
            self.call('sweep', *self.train_args('sweep'), '--factor', 'momentum', '--values', '0.9')
        self.assertEqual(context.exception.returncode, 2)

    #Checks that compare re-renders an existing results directory without training
    def test_compare_existing_results(self):
        out_dir = self.path / 'study'
        self.call('loso', *self.train_args('study'), '--seeds', '0')
        results = pd.read_csv(out_dir / RESULTS_FILE)
        renamed = results.assign(procedure='comm')
        pd.concat([renamed, results.assign(procedure='new', macro_f1=results['macro_f1'] + 0.01)]) \
            .to_csv(out_dir / RESULTS_FILE, index=False)

        output = self.call('compare', '--results', str(out_dir), '--out-dir', str(out_dir))
        self.assertIn('wins: comm 0, new 1', output)
        self.assertTrue((out_dir / COMPARISON_TEXT_FILE).is_file())

    #Checks that a run repeated from the protocol document it wrote reproduces its artifacts
    def test_rerun_from_written_protocol(self):
        self.call('run', *self.train_args('first'), '--seed', '3')
        first = self.path / 'first'
        written = load_protocol(first / 'protocol.json')
        self.assertEqual(written.procedure, 'quick')
        self.assertEqual(written.seed, 3)

        self.call('run', '--dataset', str(self.path / 'data'), '--protocol', str(first / 'protocol.json'),
                  '--model', 'MCNN', '--out-dir', str(self.path / 'second'))
        second = self.path / 'second'
        for name in (RESULTS_FILE, 'trace.csv', 'protocol.json'):
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), f'{name} should match')
        self.assertEqual(pd.read_csv(second / RESULTS_FILE)['procedure'].tolist(), ['quick'])

    #Checks that loso records its seeds and a rerun from the document uses them
    def test_loso_rerun_uses_recorded_seeds(self):
        self.call('loso', *self.train_args('loso'), '--seeds', '1,2')
        written = load_protocol(self.path / 'loso' / 'protocol.json')
        self.assertEqual(written.seed_list(), [1, 2])

        self.call('loso', '--dataset', str(self.path / 'data'), '--protocol', str(self.path / 'loso' / 'protocol.json'),
                  '--model', 'MCNN', '--out-dir', str(self.path / 'again'))
        self.assertEqual((self.path / 'loso' / RESULTS_FILE).read_bytes(),
                         (self.path / 'again' / RESULTS_FILE).read_bytes())
        self.assertEqual(sorted(set(pd.read_csv(self.path / 'again' / RESULTS_FILE)['seed'])), [1, 2])

    #Checks that compare trains both procedures and that its documents reproduce the study
    def test_compare_trains_both_procedures(self):
        save_protocol(load_protocol(self.protocol).replace(optimizer='SGD', learning_rate=0.01),
                      self.path / 'quick-sgd.json')
        args = ['--dataset', str(self.path / 'data'), '--models', 'MCNN']
        output = self.call('compare', *args, '--preset-a', str(self.protocol), '--preset-b',
                           str(self.path / 'quick-sgd.json'), '--seeds', '0', '--out-dir', str(self.path / 'study'))

        results = pd.read_csv(self.path / 'study' / RESULTS_FILE)
        self.assertEqual(sorted(set(results['procedure'])), ['quick', 'quick-sgd'])
        self.assertEqual(len(results), 2 * 3)
        self.assertIn('wins: quick', output)
        written = load_protocol(self.path / 'study' / 'protocol-quick-sgd.json')
        self.assertEqual((written.procedure, written.seed_list()), ('quick-sgd', [0]))

        self.call('compare', *args, '--preset-a', str(self.path / 'study' / 'protocol-quick.json'),
                  '--preset-b', str(self.path / 'study' / 'protocol-quick-sgd.json'),
                  '--out-dir', str(self.path / 'again'))
        self.assertEqual((self.path / 'study' / RESULTS_FILE).read_bytes(),
                         (self.path / 'again' / RESULTS_FILE).read_bytes())

    #Checks that an explicit --workers 0 is rejected rather than replaced by the default
    def test_zero_workers_rejected(self):
        with self.assertRaises(CommandError) as context:
            self.call('loso', *self.train_args('loso'), '--seeds', '0', '--workers', '0')
        self.assertEqual(context.exception.returncode, 2)
        self.assertIn('--workers must be at least 1', str(context.exception))


#Directional check of the two shipped procedures on the generated suite, minutes of training
@skipUnless(getattr(settings, 'HARBENCH_SLOW_TESTS', False), 'set HARBENCH_SLOW_TESTS=yes to run')
class ComparePresetTest(SimpleTestCase):

    def test_compare_presets_on_synthetic_suite(self):
        with tempfile.TemporaryDirectory() as tmp:
            output = StringIO()
            call_command('compare', '--preset-a', 'comm', '--preset-b', 'new', '--dataset', 'synth',
                         '--models', 'MCNN', '--seeds', '0', '--out-dir', tmp, stdout=output)
            results = pd.read_csv(Path(tmp) / RESULTS_FILE)
            self.assertEqual(sorted(set(results['procedure'])), ['comm', 'new'])
            self.assertEqual(len(results), 2 * 6, 'both procedures over the six synthetic subjects')
            self.assertFalse(results['macro_f1'].isna().any())
            self.assertIn('wins: comm', output.getvalue())
