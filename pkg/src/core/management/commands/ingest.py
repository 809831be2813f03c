from pathlib import Path

import pandas as pd

from app.commands import HarbenchCommand
from app.exceptions import BadRequestException
from app.str_tools import isBlank, split_list
from data.daos import convert_long_csv, write_dataset
from data.models import DatasetMeta


class Command(HarbenchCommand):
    help = 'converts a long-format csv of a registered benchmark into the on-disk dataset schema'
    uses_protocol = False

    def add_arguments(self, parser):
        parser.add_argument('source', help='csv with one row per timestep')
        parser.add_argument('--benchmark', required=True, help='DSADS, HAPT, OPPO, PAMAP2 or RWHAR (RW)')
        parser.add_argument('--subject-column', default='subject')
        parser.add_argument('--label-column', default='label')
        parser.add_argument('--timestep-column', default='timestep',
                            help='column that orders the rows of a subject, file order when the csv lacks it')
        parser.add_argument('--channels', default=None,
                            help='comma separated channel columns, defaults to every other column')

    def handle(self, *args, **options):
        if not Path(options['source']).is_file():
            raise BadRequestException(f"no such file {options['source']}")
        meta = DatasetMeta.for_benchmark(options['benchmark'])
        if isBlank(options['channels']):
            header = pd.read_csv(options['source'], nrows=0).columns.tolist()
            reserved = (options['subject_column'], options['label_column'], options['timestep_column'])
            channels = [column for column in header if column not in reserved]
        else:
            channels = split_list(options['channels'])

        dataset = convert_long_csv(options['source'], meta, options['subject_column'],
                                   options['label_column'], channels, timestep_column=options['timestep_column'])
        path = write_dataset(dataset, self.out_dir(options, meta.name.lower()))
        self.stdout.write(f'{len(dataset.recordings)} subjects of {meta.name} from '
                          f'{Path(options["source"]).name} written to {path}')
