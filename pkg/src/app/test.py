import os
from pathlib import Path
from dotenv import load_dotenv

# Load test properties
load_dotenv(Path(__file__).resolve().parent.parent.parent / 'test.properties', override=True)
# Include all default settings
from app.settings import *
from app.str_tools import parse_bool

# Add env specific settings
RUNTIME_ENVIRONMENT = "test"
DEBUG = True
# directional studies take minutes, opt in with HARBENCH_SLOW_TESTS=yes
HARBENCH_SLOW_TESTS = bool(parse_bool(os.getenv('HARBENCH_SLOW_TESTS', 'no')))
