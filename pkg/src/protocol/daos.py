import json
import logging
from pathlib import Path

from app.exceptions import ParseError, UnknownPreset, BadRequestException
from app.storage import atomic_write

from protocol.models import TrainingProtocol


PRESET_DIR = Path(__file__).resolve().parent / 'presets'
PRESET_NAMES = ['cv-baseline', 'comm', 'new']


def parse_document(text: str) -> dict:
    """ parses protocol document text into its flat key/value form """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f'protocol document is not valid json: {e.msg} (line {e.lineno})')

    if not isinstance(document, dict):
        raise ParseError('protocol document must be a json object')

    return document


def serialize(protocol: TrainingProtocol) -> str:
    return json.dumps(protocol.json(), indent=2) + '\n'


def deserialize(text: str) -> TrainingProtocol:
    return TrainingProtocol(parse_document(text))


def read_document(path: Path | str) -> str:
    path = Path(path)
    if not path.is_file():
        raise BadRequestException(f'no such protocol file {path}')
    return path.read_text(encoding='utf-8')


def load_protocol(path: Path | str) -> TrainingProtocol:
    return deserialize(read_document(path))


def save_protocol(protocol: TrainingProtocol, path: Path | str) -> Path:
    with atomic_write(path) as handle:
        handle.write(serialize(protocol))
    return Path(path)


def load_preset(name: str) -> TrainingProtocol:
    """ returns one of the shipped procedures: cv-baseline, comm or new """
    if name not in PRESET_NAMES:
        raise UnknownPreset(f'unknown preset {name}, options: {PRESET_NAMES}')
    return load_protocol(PRESET_DIR / f'{name}.json')


def resolve_protocol(reference: str | None, default_preset: str = 'cv-baseline') -> TrainingProtocol:
    """ accepts a preset name or a path to a protocol file """
    if reference is None:
        logging.info(f'no protocol given, using preset {default_preset}')
        return load_preset(default_preset)
    if reference in PRESET_NAMES:
        return load_preset(reference)
    return load_protocol(reference)
