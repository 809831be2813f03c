from django.conf import settings

from app.commands import HarbenchCommand
from evaluation.daos import save_results
from evaluation.loso import run_loso
from protocol.daos import resolve_protocol, save_protocol


class Command(HarbenchCommand):
    help = 'leave-one-subject-out cross-validation of one model under one protocol, over several seeds'

    def add_arguments(self, parser):
        self.add_dataset_arguments(parser)
        parser.add_argument('--model', default='CNNLSTM', help='MCNN, CNNLSTM or TRANSFORMER')
        parser.add_argument('--seeds', default=None,
                            help='comma separated seeds, defaults to those the protocol recorded, then HARBENCH_SEEDS')
        parser.add_argument('--workers', type=int, default=None, help='parallel fold-runs, defaults to HARBENCH_WORKERS')

    def handle(self, *args, **options):
        declared = resolve_protocol(options['protocol'])
        seed = self.seed(options, declared)
        seeds = self.seeds(options, declared)
        procedure = self.procedure_name(options['protocol'], declared, 'cv-baseline')
        dataset = self.dataset(options, seed)
        model_spec = self.model_spec(options['model'], dataset)
        protocol = self.resolved_protocol(declared, dataset, model_spec, options['val_policy']) \
            .replace(seed=seed, procedure=procedure, seeds=seeds)

        out_dir = self.out_dir(options, 'loso')
        save_protocol(protocol, out_dir / 'protocol.json')
        table = run_loso(protocol, dataset, model_spec, seeds, procedure=procedure,
                         val_policy=options['val_policy'], out_dir=out_dir, workers=self.workers(options),
                         torch_threads=settings.HARBENCH_TORCH_THREADS)
        save_results(table, out_dir)

        for row in table.summary().itertuples():
            self.stdout.write(f'{row.model} {row.procedure} on {row.dataset}: macro F1 {row.mean:.4f} '
                              f'+- {row.std:.4f} over {row.runs} fold-runs ({row.diverged} diverged, {row.failed} failed)')
