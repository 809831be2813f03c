from app.commands import HarbenchCommand
from app.exceptions import HarbenchException
from data.folds import loso_subjects
from evaluation.daos import save_results
from evaluation.loso import run_fold
from evaluation.models import ResultTable
from protocol.daos import resolve_protocol, save_protocol


class Command(HarbenchCommand):
    help = 'trains one model on one held-out subject and writes trace, checkpoint and results'

    def add_arguments(self, parser):
        self.add_dataset_arguments(parser)
        parser.add_argument('--model', default='CNNLSTM', help='MCNN, CNNLSTM or TRANSFORMER')
        parser.add_argument('--subject', type=int, default=None, help='held-out subject, defaults to the first')

    def handle(self, *args, **options):
        declared = resolve_protocol(options['protocol'])
        seed = self.seed(options, declared)
        procedure = self.procedure_name(options['protocol'], declared, 'cv-baseline')
        dataset = self.dataset(options, seed)
        model_spec = self.model_spec(options['model'], dataset)
        protocol = self.resolved_protocol(declared, dataset, model_spec, options['val_policy']) \
            .replace(seed=seed, procedure=procedure)
        subject = options['subject'] if options['subject'] is not None else loso_subjects(dataset)[0]

        out_dir = self.out_dir(options, 'run')
        save_protocol(protocol, out_dir / 'protocol.json')
        result = run_fold(protocol, dataset, model_spec, seed, subject, procedure=procedure,
                          val_policy=options['val_policy'], fold_dir=out_dir)
        save_results(ResultTable([result]), out_dir)

        if result.failed:
            raise HarbenchException(f'subject {subject} failed: {result.error}')
        self.stdout.write(f'{model_spec.arch} {procedure} on {dataset.meta.name}, subject {subject}: '
                          f'macro F1 {result.macro_f1:.4f} (epoch {result.selected_epoch}, {result.stop_reason}'
                          f'{", diverged" if result.diverged else ""})')
