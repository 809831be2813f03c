# Batch / cluster run settings

from app.settings import *

# Add env specific settings
RUNTIME_ENVIRONMENT = "prod"
DEBUG = False

# cluster jobs write under a shared results volume unless overridden
HARBENCH_OUT_DIR = Path(os.getenv('HARBENCH_OUT_DIR', '/srv/harbench/results'))
