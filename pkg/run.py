"""
Run script for the command-line toolkit
"""

import sys

from app.main import main

if __name__ == "__main__":
    sys.exit(main())
