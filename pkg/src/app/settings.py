"""
Django settings for the harbench project.

The project has no web surface and no database; Django provides the
settings layers, logging configuration, management commands and the test runner.

For more information on this file, see
https://docs.djangoproject.com/en/5.0/topics/settings/
"""

# Step 1)
# required deps
import os
from pathlib import Path
from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent
PROJECT_DIR = BASE_DIR.parent

# Step 2)
# set default properties
load_dotenv(PROJECT_DIR / 'default.properties')

# Step 3)
# setup django for command line application
INSTALLED_APPS = [
    # harbench modules
    'core',
    'protocol',
    'data',
    'architectures',
    'engine',
    'evaluation',
    'experiments',
]

MIDDLEWARE = []

DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

SECRET_KEY = os.getenv('SECRET_KEY')

# Step 4)
# logging
HARBENCH_LOG_LEVEL = os.getenv('HARBENCH_LOG_LEVEL', 'INFO')

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": HARBENCH_LOG_LEVEL,
    },
}

# Step 5)
# harbench runtime
HARBENCH_WORKERS = int(os.getenv('HARBENCH_WORKERS', '1'))
HARBENCH_OUT_DIR = Path(os.getenv('HARBENCH_OUT_DIR', 'results'))
HARBENCH_SEEDS = [int(seed) for seed in os.getenv('HARBENCH_SEEDS', '0,1,2,3,4').split(',') if seed.strip()]
HARBENCH_TORCH_THREADS = int(os.getenv('HARBENCH_TORCH_THREADS', '1'))
