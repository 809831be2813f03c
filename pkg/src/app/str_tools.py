from typing import Any, Optional


def isBlank(data: Optional[Any]) -> bool:
    """ true for None, empty or whitespace-only values """
    if data is None:
        return True

    data_str = str(data)
    if len(data_str.strip()) == 0:
        return True

    return False


def split_list(data: Optional[str]) -> list[str]:
    """ splits a comma separated flag value, dropping blank entries """
    if isBlank(data):
        return []

    return [item.strip() for item in str(data).split(',') if not isBlank(item)]


def parse_bool(data: Any) -> Optional[bool]:
    """ accepts json booleans and the yes/no spelling used in protocol tables """
    if isinstance(data, bool):
        return data

    if isBlank(data):
        return None

    lowered = str(data).strip().lower()
    if lowered in ('yes', 'true', 'y', '1'):
        return True
    if lowered in ('no', 'false', 'n', '0'):
        return False

    raise ValueError(f'not a boolean: {data}')
