import logging

from app.str_tools import isBlank, parse_bool

from protocol.daos import parse_document
from protocol.models import PROTOCOL_FIELDS


PRESENT = 'PRESENT'
MISSING = 'MISSING'

# checklist component -> document keys that must all be declared
AUDIT_COMPONENTS = {
    'dataset_description': ['dataset'],
    'model_parameters': ['model'],
    'preprocessing': ['preprocessing'],
    'batch_size_and_max_epoch': ['batch_size', 'max_epoch'],
    'optimizer': ['optimizer', 'learning_rate', 'weight_decay'],
    'learning_rate_strategy': ['scheduler'],
    'early_stopping': ['early_stopping'],
    'final_model_selection': ['model_selection_base'],
    'validation_test_setting': ['validation'],
    'additional_details': ['loss', 'seed'],
}


class AuditReport:
    """ completeness of a protocol document against the ten checklist components """
    def __init__(self, component_status: dict[str, str], unknown_keys: list[str] = None):
        self.component_status = component_status
        self.unknown_keys = unknown_keys or []
        self.completeness_score = sum(1 for status in component_status.values() if status == PRESENT)

    def missing(self) -> list[str]:
        return [component for component, status in self.component_status.items() if status == MISSING]

    def json(self) -> dict:
        return {
            'component_status': self.component_status,
            'completeness_score': self.completeness_score,
            'unknown_keys': self.unknown_keys,
        }


def _declared(document: dict, key: str) -> bool:
    return key in document and not isBlank(document[key])


def _early_stopping_declared(document: dict) -> bool:
    if not _declared(document, 'early_stopping'):
        return False
    try:
        enabled = parse_bool(document['early_stopping'])
    except ValueError:
        # present but unreadable still counts as declared; validate reports the value
        return True
    if not enabled:
        return True
    return _declared(document, 'early_stopping_base') and _declared(document, 'early_stopping_patience')


def audit_document(document: dict) -> AuditReport:
    status = {}
    for component, keys in AUDIT_COMPONENTS.items():
        if component == 'early_stopping':
            present = _early_stopping_declared(document)
        else:
            present = all(_declared(document, key) for key in keys)
        status[component] = PRESENT if present else MISSING

    unknown = sorted(key for key in document.keys() if key not in PROTOCOL_FIELDS)
    if unknown:
        logging.warning(f'protocol document declares unknown keys {unknown}')

    return AuditReport(status, unknown)


def audit(protocol_document: str | dict) -> AuditReport:
    """ audits structured protocol text (or an already parsed document); partial documents are expected """
    if isinstance(protocol_document, dict):
        document = protocol_document
    elif isBlank(protocol_document):
        document = {}
    else:
        document = parse_document(protocol_document)
    return audit_document(document)
