
# Default Deployment Settings

from pathlib import Path
from dotenv import load_dotenv

# load secrets to ENV
load_dotenv(Path(__file__).resolve().parent.parent.parent / 'secrets.properties')

# Include all default settings
from app.settings import *

# Add env specific settings
RUNTIME_ENVIRONMENT = "local"
DEBUG = False
