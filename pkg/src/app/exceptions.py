from abc import abstractmethod, ABC
from typing_extensions import override


class _HarbenchException(ABC):
    """ abstract class to define harbench exception functions """
    @abstractmethod
    def json(self) -> dict:
        """ return exception in json format """
        pass

    @abstractmethod
    def exit_code(self) -> int:
        """ return the process exit status a command should end with """
        pass


class HarbenchException(Exception, _HarbenchException):
    """ exception to raise for internal failures """

    def __init__(self, error: str):
        super().__init__(error)
        self.error = error

    @override
    def json(self): return {
        "error": self.error
    }

    @override
    def exit_code(self) -> int: return 1


class BadRequestException(HarbenchException):
    """ exception to raise for errors caused by bad user input (documents, datasets, flags) """
    def __init__(self, error: str): super().__init__(error)

    @override
    def exit_code(self) -> int: return 2


class ValidationException(BadRequestException):
    """ exception to raise for field validation errors """
    def __init__(self, field, error):
        self.field = field
        super().__init__(error)

    @override
    def json(self): return {
        "field": self.field,
        "error": self.error
    }

    def __str__(self): return f'{self.field}: {self.error}'


# protocol errors

class RangeError(ValidationException):
    """ a protocol field is outside its allowed range """
    def __init__(self, field: str, allowed):
        self.allowed = allowed
        super().__init__(field, f'must be within {allowed}')

    @override
    def json(self): return {
        "field": self.field,
        "error": self.error,
        "range": str(self.allowed),
    }


class InconsistencyError(ValidationException):
    """ fields are individually valid but contradict each other """
    pass


class ParseError(BadRequestException):
    """ a protocol document is not a json object """
    pass


class UnknownPreset(BadRequestException):
    pass


# data errors

class SchemaError(BadRequestException):
    """ a dataset file does not follow the canonical schema """
    pass


class LabelError(ValidationException):
    """ a class label is missing or outside [0, n_classes) """
    def __init__(self, error: str): super().__init__('label', error)


class WindowTooLong(ValidationException):
    def __init__(self, window_length: int, series_length: int):
        super().__init__('window_length', f'window of {window_length} samples exceeds series of {series_length}')


class UnknownSubject(ValidationException):
    def __init__(self, subject): super().__init__('fold_subject', f'unknown subject {subject}')


class EmptyClass(BadRequestException):
    """ some class has no training window in a fold """
    pass


# model and training errors

class ShapeError(ValidationException):
    pass


class ConfigError(BadRequestException):
    """ a protocol cannot be applied to a fold or model """
    pass


class NumericalError(HarbenchException):
    """ a loss evaluated to a non-finite value """
    pass


class NonFiniteUpdate(HarbenchException):
    """ an optimizer step produced non-finite parameters """
    pass


# evaluation errors

class EmptyMatrix(HarbenchException):
    """ macro F1 of a confusion matrix with no counts """
    pass
