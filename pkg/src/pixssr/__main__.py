"""``python -m pixssr``."""
import sys

from .cli import main

sys.exit(main())
