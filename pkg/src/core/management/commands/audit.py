import json

from app.commands import HarbenchCommand
from app.exceptions import BadRequestException
from app.storage import atomic_write
from protocol.audit import audit, AUDIT_COMPONENTS
from protocol.daos import read_document, PRESET_DIR, PRESET_NAMES


class Command(HarbenchCommand):
    help = 'reports which reproducibility checklist components a protocol document declares'

    def add_arguments(self, parser):
        parser.add_argument('document', nargs='?', default=None, help='protocol json file or preset name')

    def handle(self, *args, **options):
        reference = options['document'] or options['protocol']
        if reference is None:
            raise BadRequestException('give a protocol file or preset name to audit')
        path = PRESET_DIR / f'{reference}.json' if reference in PRESET_NAMES else reference

        report = audit(read_document(path))
        for component, status in report.component_status.items():
            self.stdout.write(f'{component:<26} {status}')
        self.stdout.write(f'completeness {report.completeness_score}/{len(AUDIT_COMPONENTS)}')
        if report.missing():
            self.stdout.write(f'missing: {", ".join(report.missing())}')
        if report.unknown_keys:
            self.stdout.write(f'unknown keys: {", ".join(report.unknown_keys)}')

        if options['out_dir']:
            with atomic_write(self.out_dir(options, 'audit') / 'audit.json') as handle:
                json.dump(report.json(), handle, indent=2)
