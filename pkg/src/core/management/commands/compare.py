from pathlib import Path

from django.conf import settings

from app.commands import HarbenchCommand
from app.exceptions import BadRequestException
from app.str_tools import split_list
from architectures.models import ARCH_OPTIONS
from evaluation.compare import compare
from evaluation.daos import save_results, load_results, save_comparison
from evaluation.reference import ReferenceTable
from experiments.studies import run_study
from protocol.daos import resolve_protocol, save_protocol, PRESET_NAMES


class Command(HarbenchCommand):
    help = 'LOSO study of two procedures on every model, with the better mean flagged per model and dataset'

    def add_arguments(self, parser):
        self.add_dataset_arguments(parser)
        parser.add_argument('--preset-a', default='comm', help='first procedure, preset name or protocol file')
        parser.add_argument('--preset-b', default='new',
                            help='second procedure, preset name or protocol file; --protocol overrides it')
        parser.add_argument('--models', default=','.join(ARCH_OPTIONS), help='comma separated architectures')
        parser.add_argument('--seeds', default=None,
                            help='comma separated seeds, defaults to those the protocol recorded, then HARBENCH_SEEDS')
        parser.add_argument('--workers', type=int, default=None, help='parallel fold-runs, defaults to HARBENCH_WORKERS')
        parser.add_argument('--reference', action='store_true', help='show the published means alongside')
        parser.add_argument('--results', default=None,
                            help='compare an existing results directory instead of training')

    def handle(self, *args, **options):
        references = [options['preset_a'], options['protocol'] or options['preset_b']]
        if options['results']:
            # plain procedure names are accepted here, documents are read only when they exist
            declared = [resolve_protocol(reference) if reference in PRESET_NAMES or Path(reference).is_file() else None
                        for reference in references]
        else:
            declared = [resolve_protocol(reference) for reference in references]
        names = [self.procedure_name(reference, protocol, reference)
                 for reference, protocol in zip(references, declared)]
        if names[0] == names[1]:
            raise BadRequestException(f'both procedures are named {names[0]}')
        reference_table = ReferenceTable() if options['reference'] else None

        if options['results']:
            comparison = compare(names, load_results(options['results']), reference=reference_table)
            out_dir = self.out_dir(options, 'compare')
        else:
            seed = self.seed(options, declared[0])
            seeds = self.seeds(options, declared[0])
            dataset = self.dataset(options, seed)
            model_specs = [self.model_spec(arch, dataset) for arch in split_list(options['models'])]
            out_dir = self.out_dir(options, 'compare')

            procedures = {}
            for name, protocol in zip(names, declared):
                protocol = self.resolved_protocol(protocol, dataset, model_specs[0], options['val_policy'])
                procedures[name] = protocol.replace(model='; '.join(spec.describe() for spec in model_specs),
                                                    seed=seed, procedure=name, seeds=seeds)
                save_protocol(procedures[name], out_dir / f'protocol-{name}.json')

            table, comparison = run_study(procedures, dataset, model_specs, seeds,
                                          val_policy=options['val_policy'], out_dir=out_dir,
                                          workers=self.workers(options),
                                          torch_threads=settings.HARBENCH_TORCH_THREADS,
                                          reference=reference_table)
            save_results(table, out_dir)

        save_comparison(comparison, out_dir)
        self.stdout.write(comparison.text())
