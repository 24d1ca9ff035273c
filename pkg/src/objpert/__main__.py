import sys

from objpert.cli import main

sys.exit(main())
