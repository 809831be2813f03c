import json

from django.test import SimpleTestCase

from app.exceptions import (ValidationException, RangeError, InconsistencyError, ParseError, UnknownPreset,
                            BadRequestException)

from protocol.audit import audit, AUDIT_COMPONENTS, PRESENT, MISSING
from protocol.daos import load_preset, serialize, deserialize, resolve_protocol, PRESET_NAMES
from protocol.models import TrainingProtocol


def baseline_document(**changes) -> dict:
    document = {
        "optimizer": "ADAM",
        "learning_rate": 1e-3,
        "weight_decay": 0,
        "scheduler": "STEP",
        "batch_size": 64,
        "max_epoch": 60,
        "early_stopping": True,
        "early_stopping_base": "VAL_LOSS",
        "early_stopping_patience": 10,
        "model_selection_base": "VAL_LOSS",
    }
    document.update(changes)
    return document


class TrainingProtocolModelTest(SimpleTestCase):

    def test_accepts_adam_baseline(self):
        protocol = TrainingProtocol(baseline_document())
        self.assertEqual(protocol.optimizer, 'ADAM', 'optimizer should be kept')
        self.assertEqual(protocol.scheduler_step_size, 10, 'step size should default to 10')
        self.assertEqual(protocol.scheduler_gamma, 0.1, 'gamma should default to 0.1')
        self.assertEqual(protocol.loss, 'CROSS_ENTROPY', 'loss should default to cross entropy')
        self.assertEqual(protocol.seed, 0, 'seed should default to 0')

    def test_options_are_case_insensitive(self):
        protocol = TrainingProtocol(baseline_document(optimizer='adam', scheduler=' cos '))
        self.assertEqual(protocol.optimizer, 'ADAM')
        self.assertEqual(protocol.scheduler, 'COS')

    def test_learning_rate_out_of_range(self):
        try:
            TrainingProtocol(baseline_document(learning_rate=1.0))
            self.fail('should not hit this code block')
        except RangeError as e:
            self.assertEqual(e.field, 'learning_rate', 'should name the offending field')
            self.assertEqual(e.allowed, [1e-5, 1e-1], 'should carry the allowed range')
            self.assertEqual(e.exit_code(), 2, 'range errors are user errors')

    def test_batch_size_out_of_range(self):
        try:
            TrainingProtocol(baseline_document(batch_size=8))
            self.fail('should not hit this code block')
        except RangeError as e:
            self.assertEqual(e.field, 'batch_size')
            self.assertEqual(e.allowed, [16, 512])

    def test_range_bounds_are_inclusive(self):
        for field, value in (('learning_rate', 1e-5), ('learning_rate', 1e-1), ('batch_size', 16),
                             ('batch_size', 512), ('max_epoch', 10), ('max_epoch', 1500),
                             ('early_stopping_patience', 1), ('early_stopping_patience', 100)):
            protocol = TrainingProtocol(baseline_document(**{field: value}))
            self.assertEqual(getattr(protocol, field), value, f'{field}={value} should be accepted')

    def test_weight_decay_zero_or_in_range(self):
        self.assertEqual(TrainingProtocol(baseline_document(weight_decay=0)).weight_decay, 0)
        self.assertEqual(TrainingProtocol(baseline_document(weight_decay=1e-8)).weight_decay, 1e-8)
        with self.assertRaises(RangeError):
            TrainingProtocol(baseline_document(weight_decay=1e-9))
        with self.assertRaises(RangeError):
            TrainingProtocol(baseline_document(weight_decay=0.5))

    def test_gamma_must_be_within_open_unit_interval(self):
        for gamma in (0, 1, 1.5):
            with self.assertRaises(RangeError, msg=f'gamma {gamma} should be rejected'):
                TrainingProtocol(baseline_document(scheduler_gamma=gamma))

    def test_missing_required_field(self):
        document = baseline_document()
        del document['batch_size']
        try:
            TrainingProtocol(document)
            self.fail('should not hit this code block')
        except ValidationException as e:
            self.assertEqual(e.field, 'batch_size', 'should report the missing field')

    def test_unknown_option(self):
        try:
            TrainingProtocol(baseline_document(optimizer='LION'))
            self.fail('should not hit this code block')
        except ValidationException as e:
            self.assertEqual(e.field, 'optimizer')

    def test_early_stopping_without_patience(self):
        document = baseline_document()
        del document['early_stopping_patience']
        try:
            TrainingProtocol(document)
            self.fail('should not hit this code block')
        except InconsistencyError as e:
            self.assertEqual(e.field, 'early_stopping_patience')

    def test_disabled_early_stopping_needs_no_base(self):
        document = baseline_document(early_stopping=False, model_selection_base='LAST')
        del document['early_stopping_base']
        del document['early_stopping_patience']
        protocol = TrainingProtocol(document)
        self.assertFalse(protocol.early_stopping)
        self.assertIsNone(protocol.early_stopping_base)
        self.assertEqual(protocol.monitors(), set(), 'nothing reads the trace when stopping is off and LAST selects')

    def test_early_stopping_accepts_yes_no(self):
        self.assertTrue(TrainingProtocol(baseline_document(early_stopping='yes')).early_stopping)
        self.assertFalse(TrainingProtocol(baseline_document(early_stopping='no')).early_stopping)

    def test_unknown_keys_warn(self):
        with self.assertLogs(level='WARNING') as logs:
            protocol = TrainingProtocol(baseline_document(momentum=0.9))
        self.assertIn('momentum', logs.output[0], 'should name the ignored key')
        self.assertNotIn('momentum', protocol.json(), 'unknown keys are not carried')

    def test_recorded_procedure_and_seeds(self):
        protocol = TrainingProtocol(baseline_document(procedure='comm', seeds=[0, 2, 1]))
        self.assertEqual(protocol.procedure, 'comm')
        self.assertEqual(protocol.seeds, '0,2,1')
        self.assertEqual(protocol.seed_list(), [0, 2, 1])
        self.assertEqual(deserialize(serialize(protocol)), protocol)
        self.assertEqual(TrainingProtocol(baseline_document(seeds='3, 4')).seed_list(), [3, 4])
        self.assertIsNone(TrainingProtocol(baseline_document()).seed_list())

    def test_recorded_seeds_must_be_integers(self):
        for seeds in ('0,x', '1.5', [-1]):
            with self.assertRaises(ValidationException, msg=f'{seeds} should be rejected'):
                TrainingProtocol(baseline_document(seeds=seeds))

    def test_validate_is_idempotent(self):
        protocol = TrainingProtocol(baseline_document())
        before = protocol.json()
        protocol.validate()
        protocol.validate()
        self.assertEqual(protocol.json(), before, 'validating twice should change nothing')

    def test_replace_changes_one_field(self):
        protocol = TrainingProtocol(baseline_document())
        variant = protocol.replace(optimizer='SGD')
        self.assertEqual(variant.optimizer, 'SGD')
        self.assertEqual(protocol.optimizer, 'ADAM', 'replace should not mutate the original')
        changed = [key for key in protocol.json() if protocol.json()[key] != variant.json()[key]]
        self.assertEqual(changed, ['optimizer'])

    def test_replace_validates(self):
        protocol = TrainingProtocol(baseline_document())
        with self.assertRaises(RangeError):
            protocol.replace(learning_rate=1.0)
        with self.assertRaises(ValidationException):
            protocol.replace(momentum=0.9)

    def test_monitors(self):
        comm = load_preset('comm')
        self.assertEqual(comm.monitors(), {'VAL_LOSS'})
        new = load_preset('new')
        self.assertEqual(new.monitors(), {'VAL_METRIC'}, 'COS does not read its scheduler base')


class ProtocolDaoTest(SimpleTestCase):

    def test_load_new_preset(self):
        protocol = load_preset('new')
        self.assertEqual(protocol.optimizer, 'ADAM')
        self.assertEqual(protocol.learning_rate, 1e-3)
        self.assertEqual(protocol.weight_decay, 1e-4)
        self.assertEqual(protocol.scheduler, 'COS')
        self.assertEqual(protocol.batch_size, 16)
        self.assertTrue(protocol.early_stopping)
        self.assertEqual(protocol.early_stopping_base, 'VAL_METRIC')
        self.assertEqual(protocol.early_stopping_patience, 30)
        self.assertEqual(protocol.model_selection_base, 'VAL_METRIC')

    def test_load_comm_preset(self):
        protocol = load_preset('comm')
        self.assertEqual(protocol.weight_decay, 0)
        self.assertEqual(protocol.scheduler, 'LR_PLATEAU')
        self.assertEqual(protocol.scheduler_gamma, 0.1)
        self.assertEqual(protocol.scheduler_patience, 10)
        self.assertEqual(protocol.scheduler_base, 'VAL_LOSS')
        self.assertEqual(protocol.batch_size, 256)
        self.assertEqual(protocol.early_stopping_base, 'VAL_LOSS')
        self.assertEqual(protocol.early_stopping_patience, 30)
        self.assertEqual(protocol.model_selection_base, 'VAL_LOSS')

    def test_load_cv_baseline_preset(self):
        protocol = load_preset('cv-baseline')
        self.assertEqual(protocol.scheduler, 'STEP')
        self.assertEqual(protocol.scheduler_step_size, 10)
        self.assertEqual(protocol.batch_size, 64)
        self.assertEqual(protocol.max_epoch, 60)
        self.assertEqual(protocol.early_stopping_patience, 10)

    def test_unknown_preset(self):
        with self.assertRaises(UnknownPreset):
            load_preset('best')

    def test_round_trip(self):
        for name in PRESET_NAMES:
            protocol = load_preset(name)
            self.assertEqual(deserialize(serialize(protocol)), protocol, f'{name} should survive a round trip')

        protocol = TrainingProtocol(baseline_document(early_stopping=False, scheduler='COS_RESTART', seed=7))
        self.assertEqual(deserialize(serialize(protocol)), protocol)

    def test_malformed_document(self):
        for text in ('{"optimizer": ', '[1, 2]', 'optimizer = ADAM'):
            with self.assertRaises(ParseError, msg=f'{text!r} should not parse'):
                deserialize(text)

    def test_resolve_protocol(self):
        self.assertEqual(resolve_protocol(None), load_preset('cv-baseline'), 'default should be cv-baseline')
        self.assertEqual(resolve_protocol('new'), load_preset('new'))
        with self.assertRaises(BadRequestException):
            resolve_protocol('/nonexistent/protocol.json')


class AuditTest(SimpleTestCase):

    def test_presets_are_complete(self):
        for name in PRESET_NAMES:
            report = audit(serialize(load_preset(name)))
            self.assertEqual(report.completeness_score, 10, f'{name} should declare every component')
            self.assertEqual(report.missing(), [])

    def test_missing_batch_size(self):
        document = load_preset('new').json()
        del document['batch_size']
        report = audit(json.dumps(document))
        self.assertEqual(report.component_status['batch_size_and_max_epoch'], MISSING)
        self.assertEqual(report.completeness_score, 9)

    def test_empty_document(self):
        for document in ('', '{}', {}):
            report = audit(document)
            self.assertEqual(report.completeness_score, 0, 'nothing declared, nothing present')
            self.assertEqual(set(report.component_status.values()), {MISSING})

    def test_removing_any_group_costs_one_point(self):
        full = load_preset('comm').json()
        for component, keys in AUDIT_COMPONENTS.items():
            document = {key: value for key, value in full.items() if key not in keys}
            report = audit(document)
            self.assertEqual(report.completeness_score, 9, f'removing {component} should cost exactly one point')
            self.assertEqual(report.component_status[component], MISSING)

    def test_enabled_early_stopping_needs_base_and_patience(self):
        document = load_preset('comm').json()
        del document['early_stopping_patience']
        self.assertEqual(audit(document).component_status['early_stopping'], MISSING)

        document['early_stopping'] = False
        self.assertEqual(audit(document).component_status['early_stopping'], PRESENT,
                         'a disabled early stop is a complete declaration')

    def test_score_counts_present_components(self):
        report = audit({'optimizer': 'ADAM', 'learning_rate': 1e-3, 'weight_decay': 0, 'scheduler': 'COS'})
        present = [status for status in report.component_status.values() if status == PRESENT]
        self.assertEqual(report.completeness_score, len(present))
        self.assertEqual(report.completeness_score, 2)

    def test_unknown_keys_reported(self):
        with self.assertLogs(level='WARNING'):
            report = audit({'optimizer': 'ADAM', 'warmup': 5})
        self.assertEqual(report.unknown_keys, ['warmup'])
        self.assertEqual(report.json()['unknown_keys'], ['warmup'])

    def test_malformed_document(self):
        with self.assertRaises(ParseError):
            audit('{"batch_size": 16')
