import math

from django.conf import settings

from app.commands import HarbenchCommand
from app.str_tools import isBlank, split_list
from experiments.models import SweepSpec
from experiments.plots import emit_curves, CURVE_QUANTITIES
from experiments.sweeps import run_sweep
from protocol.daos import resolve_protocol


class Command(HarbenchCommand):
    help = 'varies one protocol field over values with every other field frozen, and plots the curves'

    def add_arguments(self, parser):
        self.add_dataset_arguments(parser)
        parser.add_argument('--model', default='CNNLSTM', help='MCNN, CNNLSTM or TRANSFORMER')
        parser.add_argument('--factor', required=True, help='protocol field to vary, e.g. optimizer')
        parser.add_argument('--values', required=True, help='comma separated values for the factor')
        parser.add_argument('--seeds', default=None, help='comma separated seeds, defaults to --seed alone')
        parser.add_argument('--full-loso', action='store_true', help='every subject instead of the first one')
        parser.add_argument('--quantities', default='val_loss',
                            help=f'comma separated curves to plot, options: {CURVE_QUANTITIES}')
        parser.add_argument('--workers', type=int, default=None, help='parallel fold-runs, defaults to HARBENCH_WORKERS')

    def handle(self, *args, **options):
        declared = resolve_protocol(options['protocol'])
        seed = self.seed(options, declared)
        dataset = self.dataset(options, seed)
        model_spec = self.model_spec(options['model'], dataset)
        baseline = self.resolved_protocol(declared, dataset, model_spec, options['val_policy']).replace(seed=seed)
        spec = SweepSpec(baseline, options['factor'], split_list(options['values']))
        seeds = [seed] if isBlank(options['seeds']) else self.seeds(options)

        out_dir = self.out_dir(options, f'sweep-{spec.factor}')
        result = run_sweep(spec, dataset, model_spec, seeds, full_loso=options['full_loso'],
                           val_policy=options['val_policy'], out_dir=out_dir, workers=self.workers(options),
                           torch_threads=settings.HARBENCH_TORCH_THREADS)

        for quantity in split_list(options['quantities']):
            emit_curves(result.trace_families(), quantity, out_dir, name=f'{model_spec.arch}-{spec.factor}',
                        title=f'{model_spec.arch} on {dataset.meta.name}: {spec.factor}')

        for label in result.labels():
            final = result.final_val_loss(label)
            final = 'inf' if math.isinf(final) else f'{final:.4f}'
            self.stdout.write(f'{label}: final validation loss {final}'
                              f'{", diverged" if result.diverged(label) else ""}')
