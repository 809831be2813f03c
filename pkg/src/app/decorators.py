import json
import logging
from functools import wraps

from django.core.management.base import CommandError

from app.exceptions import HarbenchException


def command_exception_handler(f):
    """ decorator to catch and handle all exceptions raised by a command """
    @wraps(f)
    def decorated(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except HarbenchException as e:
            raise CommandError(json.dumps(e.json()), returncode=e.exit_code())
        except CommandError:
            raise
        except Exception as e:
            logging.error(f"encountered unexpected exception {e.__class__.__name__}: {str(e)}")
            raise CommandError("Unexpected harbench error, see log output above.", returncode=1)

    return decorated
