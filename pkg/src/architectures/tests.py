import math
import tempfile
from pathlib import Path

import numpy as np
import torch
from django.test import SimpleTestCase

from app.exceptions import ValidationException, ShapeError, LabelError, NumericalError, BadRequestException, SchemaError

from architectures.daos import Checkpoint, save_checkpoint, load_checkpoint
from architectures.losses import cross_entropy, loss_and_grads
from architectures.models import ModelSpec, ARCH_OPTIONS
from architectures.networks import build_model, parameter_count


def tiny_spec(arch: str, **changes) -> ModelSpec:
    data = {'arch': arch, 'window_length': 8, 'n_channels': 2, 'n_classes': 3, 'filters': 4, 'kernel_size': 3,
            'hidden_size': 5, 'd_model': 8, 'n_heads': 2, 'ff_size': 8, 'encoder_blocks': 1, 'dropout': 0.0}
    data.update(changes)
    return ModelSpec(data)


class ModelSpecTest(SimpleTestCase):

    def test_defaults(self):
        spec = ModelSpec({'arch': 'mcnn', 'window_length': 128, 'n_channels': 6, 'n_classes': 12})
        self.assertEqual(spec.arch, 'MCNN')
        self.assertEqual(spec.conv_blocks, 3, 'MCNN defaults to three conv blocks')
        self.assertEqual(spec.filters, 64)
        self.assertEqual(spec.kernel_size, 5)
        self.assertEqual(spec.input_shape, (128, 6))
        self.assertEqual(ModelSpec({**spec.json(), 'arch': 'CNNLSTM', 'conv_blocks': None}).conv_blocks, 2)

    def test_non_positive_dimension(self):
        for field in ('window_length', 'n_channels', 'n_classes', 'filters'):
            try:
                tiny_spec('MCNN', **{field: 0})
                self.fail('should not hit this code block')
            except ShapeError as e:
                self.assertEqual(e.field, field, 'should name the offending dimension')

    def test_heads_must_divide_model_width(self):
        with self.assertRaises(ShapeError):
            tiny_spec('TRANSFORMER', d_model=10, n_heads=4)

    def test_unknown_arch(self):
        with self.assertRaises(ValidationException):
            tiny_spec('RESNET')

    def test_describe(self):
        for arch in ARCH_OPTIONS:
            self.assertTrue(tiny_spec(arch).describe().startswith(arch))


class NetworkTest(SimpleTestCase):

    def test_seeded_initialisation(self):
        spec = ModelSpec({'arch': 'MCNN', 'window_length': 128, 'n_channels': 6, 'n_classes': 12})
        first, second = build_model(spec, seed=0).state_dict(), build_model(spec, seed=0).state_dict()
        for name in first:
            self.assertTrue(torch.equal(first[name], second[name]), f'{name} should be identical under one seed')

        other = build_model(spec, seed=1).state_dict()
        self.assertFalse(all(torch.equal(first[name], other[name]) for name in first))

    def test_build_leaves_global_rng_alone(self):
        torch.manual_seed(5)
        expected = torch.rand(3)
        torch.manual_seed(5)
        build_model(tiny_spec('CNNLSTM'), seed=11)
        self.assertTrue(torch.equal(torch.rand(3), expected))

    def test_output_shape(self):
        x = torch.randn(16, 128, 6)
        for arch in ARCH_OPTIONS:
            model = build_model(ModelSpec({'arch': arch, 'window_length': 128, 'n_channels': 6, 'n_classes': 12}), 0)
            self.assertEqual(tuple(model(x).shape), (16, 12), f'{arch} should map windows to class scores')
            self.assertGreater(parameter_count(model), 0)

    def test_transformer_on_short_wide_windows(self):
        model = build_model(ModelSpec({'arch': 'TRANSFORMER', 'window_length': 30, 'n_channels': 77,
                                       'n_classes': 18}), seed=0)
        self.assertEqual(tuple(model(torch.randn(4, 30, 77)).shape), (4, 18))

    def test_eval_forward_is_deterministic(self):
        x = torch.randn(8, 8, 2)
        for arch in ARCH_OPTIONS:
            model = build_model(tiny_spec(arch, dropout=0.3), seed=0).eval()
            with torch.no_grad():
                self.assertTrue(torch.equal(model(x), model(x)), f'{arch} eval forward should repeat exactly')


class LossTest(SimpleTestCase):

    def test_uniform_scores(self):
        for n_classes in (2, 5, 12):
            value = cross_entropy(torch.zeros(7, n_classes), torch.zeros(7, dtype=torch.int64)).item()
            self.assertAlmostEqual(value, math.log(n_classes), places=6)

    def test_confident_correct_scores(self):
        scores = torch.full((4, 3), -50.0)
        labels = torch.tensor([0, 1, 2, 1])
        scores[torch.arange(4), labels] = 50.0
        self.assertLess(cross_entropy(scores, labels).item(), 1e-12)

    def test_zero_head_gives_uniform_loss(self):
        model = build_model(tiny_spec('MCNN'), seed=0)
        with torch.no_grad():
            model.head.weight.zero_()
            model.head.bias.zero_()
        value, grads = loss_and_grads(model, torch.randn(6, 8, 2), torch.tensor([0, 1, 2, 0, 1, 2]))
        self.assertAlmostEqual(value, math.log(3), places=6)
        self.assertEqual(len(grads), len(list(model.parameters())), 'one gradient per parameter')

    def test_gradients_match_finite_differences(self):
        generator = torch.Generator().manual_seed(0)
        x = torch.randn(5, 8, 2, generator=generator, dtype=torch.float64)
        y = torch.tensor([0, 1, 2, 1, 0])
        eps = 1e-6
        for arch in ARCH_OPTIONS:
            model = build_model(tiny_spec(arch, conv_blocks=1), seed=0).double().eval()
            _, grads = loss_and_grads(model, x, y)
            analytic = torch.cat([grad.reshape(-1) for grad in grads]).numpy().copy()

            numeric = []
            for param in model.parameters():
                flat = param.data.view(-1)
                for index in range(flat.numel()):
                    original = flat[index].item()
                    flat[index] = original + eps
                    plus = cross_entropy(model(x), y).item()
                    flat[index] = original - eps
                    minus = cross_entropy(model(x), y).item()
                    flat[index] = original
                    numeric.append((plus - minus) / (2 * eps))

            np.testing.assert_allclose(analytic, np.array(numeric), rtol=1e-4, atol=1e-7,
                                       err_msg=f'{arch} gradients should match central differences')

    def test_batch_order_does_not_matter(self):
        model = build_model(tiny_spec('CNNLSTM'), seed=0).double().eval()
        x = torch.randn(9, 8, 2, dtype=torch.float64)
        y = torch.tensor([0, 1, 2] * 3)
        permutation = torch.randperm(9)
        first, _ = loss_and_grads(model, x, y)
        second, _ = loss_and_grads(model, x[permutation], y[permutation])
        self.assertAlmostEqual(first, second, delta=1e-9)

    def test_label_out_of_range(self):
        model = build_model(tiny_spec('MCNN'), seed=0)
        with self.assertRaises(LabelError):
            loss_and_grads(model, torch.randn(2, 8, 2), torch.tensor([0, 3]))

    def test_non_finite_loss_surfaces(self):
        model = build_model(tiny_spec('MCNN'), seed=0)
        with torch.no_grad():
            model.head.bias.fill_(float('nan'))
        with self.assertRaises(NumericalError):
            loss_and_grads(model, torch.randn(2, 8, 2), torch.tensor([0, 1]))

    def test_mode_is_preserved(self):
        model = build_model(tiny_spec('TRANSFORMER'), seed=0).eval()
        loss_and_grads(model, torch.randn(2, 8, 2), torch.tensor([0, 1]))
        self.assertFalse(model.training)


class CheckpointDaoTest(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_save_and_load(self):
        x = torch.randn(3, 8, 2)
        for arch in ARCH_OPTIONS:
            model = build_model(tiny_spec(arch), seed=3).eval()
            path = save_checkpoint(Checkpoint.capture(model, epoch=7), self.path / f'{arch}.npz')

            checkpoint = load_checkpoint(path)
            self.assertEqual(checkpoint.epoch, 7)
            self.assertEqual(checkpoint.spec, model.spec)
            restored = checkpoint.build().eval()
            with torch.no_grad():
                self.assertTrue(torch.allclose(restored(x), model(x), atol=1e-6), f'{arch} should reload')

    def test_capture_is_detached(self):
        model = build_model(tiny_spec('MCNN'), seed=0)
        checkpoint = Checkpoint.capture(model, epoch=1)
        with torch.no_grad():
            model.head.bias.add_(1.0)
        self.assertFalse(torch.equal(checkpoint.state['head.bias'], model.head.bias))

        checkpoint.restore(model)
        self.assertTrue(torch.equal(checkpoint.state['head.bias'], model.head.bias))

    def test_missing_file(self):
        with self.assertRaises(BadRequestException):
            load_checkpoint(self.path / 'absent.npz')

    def test_foreign_archive(self):
        np.savez(self.path / 'foreign.npz', weights=np.zeros(3))
        with self.assertRaises(SchemaError):
            load_checkpoint(self.path / 'foreign.npz')
