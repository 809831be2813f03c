from app.commands import HarbenchCommand, SYNTHETIC_DEFAULTS
from data.daos import write_dataset
from data.synthetic import generate_synthetic


class Command(HarbenchCommand):
    help = 'generates the synthetic sensor dataset and writes it in the on-disk dataset schema'
    uses_protocol = False

    def add_arguments(self, parser):
        parser.add_argument('--subjects', type=int, default=SYNTHETIC_DEFAULTS['n_subjects'])
        parser.add_argument('--channels', type=int, default=SYNTHETIC_DEFAULTS['n_channels'])
        parser.add_argument('--classes', type=int, default=SYNTHETIC_DEFAULTS['n_classes'])
        parser.add_argument('--length', type=int, default=SYNTHETIC_DEFAULTS['length'],
                            help='timesteps per subject')
        parser.add_argument('--freq', type=float, default=SYNTHETIC_DEFAULTS['freq'], help='sampling rate in Hz')
        parser.add_argument('--window-length', type=int, default=SYNTHETIC_DEFAULTS['window_length'])

    def handle(self, *args, **options):
        dataset = generate_synthetic(options['subjects'], options['channels'], options['classes'],
                                     options['length'], options['freq'], self.seed(options),
                                     window_length=options['window_length'])
        path = write_dataset(dataset, self.out_dir(options, 'synthetic'))
        self.stdout.write(f'{dataset.meta.describe()} written to {path}')
